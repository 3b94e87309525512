//! Dataset metrics and category aggregation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::registry::{dataset, members, Category, MetricRule, DATASETS};
use super::HarnessError;

/// Verifier outputs for one dataset, in the shape its metric rule expects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "shape")]
pub enum RawMetric {
    Passes {
        passed: u32,
        total: u32,
    },
    Submetrics {
        values: BTreeMap<String, f64>,
    },
    Normalized {
        baseline: f64,
        winner: f64,
        agent: f64,
    },
}

fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

fn mismatch(dataset: &str, raw: &RawMetric) -> HarnessError {
    HarnessError::ShapeMismatch(format!("{dataset} cannot score {raw:?}"))
}

fn pass_fraction(passed: u32, total: u32) -> Result<f64, HarnessError> {
    if total == 0 || passed > total {
        return Err(HarnessError::ShapeMismatch(format!(
            "{passed} passes of {total}"
        )));
    }
    Ok(f64::from(passed) / f64::from(total))
}

/// Score in [0, 1] for one dataset.
pub fn compute_metric(name: &str, raw: &RawMetric) -> Result<f64, HarnessError> {
    let info = dataset(name).ok_or_else(|| HarnessError::UnknownDataset(name.into()))?;
    match (info.metric_rule, raw) {
        (MetricRule::Accuracy, RawMetric::Passes { passed, total })
        | (MetricRule::AccuracyOrNormalized, RawMetric::Passes { passed, total }) => {
            pass_fraction(*passed, *total)
        }
        (MetricRule::SubmetricMean { count }, RawMetric::Submetrics { values }) => {
            if values.is_empty() || count.is_some_and(|c| c != values.len()) {
                return Err(HarnessError::ShapeMismatch(format!(
                    "{name} expects {} submetrics, got {}",
                    count.map_or("some".to_string(), |c| c.to_string()),
                    values.len()
                )));
            }
            if values.values().any(|v| !v.is_finite()) {
                return Err(mismatch(name, raw));
            }
            Ok(clamp01(values.values().sum::<f64>() / values.len() as f64))
        }
        (
            MetricRule::AccuracyOrNormalized,
            RawMetric::Normalized {
                baseline,
                winner,
                agent,
            },
        ) => {
            let span = winner - baseline;
            if !span.is_finite() || span == 0.0 || !agent.is_finite() {
                return Err(mismatch(name, raw));
            }
            Ok(clamp01((agent - baseline) / span))
        }
        _ => Err(mismatch(name, raw)),
    }
}

/// Category and overall macro averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub label: String,
    /// Dataset name → score in [0, 1].
    pub datasets: BTreeMap<String, f64>,
    /// Present categories in canonical order.
    pub categories: Vec<CategoryScore>,
    /// Unweighted mean over datasets, not over categories.
    pub overall: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub category: Category,
    pub score: f64,
}

impl CategoryReport {
    pub fn category(&self, c: Category) -> Option<f64> {
        self.categories
            .iter()
            .find(|s| s.category == c)
            .map(|s| s.score)
    }
}

/// With `full`, every registry dataset must be present.
pub fn aggregate(
    label: &str,
    results: &BTreeMap<String, f64>,
    full: bool,
) -> Result<CategoryReport, HarnessError> {
    for name in results.keys() {
        if dataset(name).is_none() {
            return Err(HarnessError::UnknownDataset(name.clone()));
        }
    }
    if full {
        if let Some(missing) = DATASETS.iter().find(|d| !results.contains_key(d.name)) {
            return Err(HarnessError::MissingDataset(missing.name.to_string()));
        }
    }
    if results.is_empty() {
        return Err(HarnessError::MissingDataset("no datasets".into()));
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let mut categories = Vec::new();
    for c in Category::ALL {
        let scores: Vec<f64> = members(c)
            .filter_map(|d| results.get(d.name).copied())
            .collect();
        if !scores.is_empty() {
            categories.push(CategoryScore {
                category: c,
                score: mean(&scores),
            });
        }
    }
    let all: Vec<f64> = results.values().copied().collect();
    Ok(CategoryReport {
        label: label.to_string(),
        datasets: results.clone(),
        categories,
        overall: mean(&all),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Markdown,
}

impl ReportFormat {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "json" => Some(ReportFormat::Json),
            "markdown" | "md" => Some(ReportFormat::Markdown),
            _ => None,
        }
    }
}

fn pct(x: f64) -> String {
    format!("{:.1}%", x * 100.0)
}

/// Deterministic rendering. Markdown has one row per report with the four
/// category columns followed by the overall average.
pub fn emit_report(reports: &[CategoryReport], format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(reports).expect("reports serialize");
            s.push('\n');
            s
        }
        ReportFormat::Markdown => {
            let mut out = String::from("| Model |");
            for c in Category::ALL {
                out.push_str(&format!(" {} |", c.title()));
            }
            out.push_str(" Overall Avg |\n|---|");
            out.push_str(&"---:|".repeat(Category::ALL.len() + 1));
            out.push('\n');
            for r in reports {
                out.push_str(&format!("| {} |", r.label));
                for c in Category::ALL {
                    let cell = r.category(c).map_or("-".to_string(), pct);
                    out.push_str(&format!(" {cell} |"));
                }
                out.push_str(&format!(" {} |\n", pct(r.overall)));
            }
            out
        }
    }
}

/// Per-dataset table in registry column order.
pub fn emit_dataset_table(reports: &[CategoryReport]) -> String {
    let mut out = String::from("| Model |");
    for d in &DATASETS {
        out.push_str(&format!(" {} |", d.abbrev));
    }
    out.push_str(" Avg |\n|---|");
    out.push_str(&"---:|".repeat(DATASETS.len() + 1));
    out.push('\n');
    for r in reports {
        out.push_str(&format!("| {} |", r.label));
        for d in &DATASETS {
            let cell = r.datasets.get(d.name).map_or("-".to_string(), |x| pct(*x));
            out.push_str(&format!(" {cell} |"));
        }
        out.push_str(&format!(" {} |\n", pct(r.overall)));
    }
    out
}
