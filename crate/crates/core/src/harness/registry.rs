//! The fifteen datasets: category, instance count and metric rule.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    CodeGenEditing,
    MultimodalCodeGen,
    DomainSpecific,
    GeneralSWE,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::CodeGenEditing,
        Category::MultimodalCodeGen,
        Category::DomainSpecific,
        Category::GeneralSWE,
    ];

    pub fn title(self) -> &'static str {
        match self {
            Category::CodeGenEditing => "Code Generation & Editing",
            Category::MultimodalCodeGen => "Multimodal Code Generation",
            Category::DomainSpecific => "Domain-Specific Code Generation",
            Category::GeneralSWE => "General SWE Tasks",
        }
    }
}

/// How a dataset's verifier outputs become a dataset score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum MetricRule {
    /// Fraction of passed instances.
    Accuracy,
    /// Mean of named submetrics; `count` pins how many must be present.
    SubmetricMean { count: Option<usize> },
    /// Multiple-choice accuracy or competition scores normalized between a
    /// baseline and the winner.
    AccuracyOrNormalized,
}

impl MetricRule {
    /// Binary-outcome rules require a perfect score to count as passed;
    /// continuous ones are report-only.
    pub fn pass_threshold(self) -> f64 {
        match self {
            MetricRule::Accuracy => 1.0,
            MetricRule::SubmetricMean { .. } | MetricRule::AccuracyOrNormalized => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DatasetInfo {
    pub name: &'static str,
    /// Column label in per-task tables.
    pub abbrev: &'static str,
    pub title: &'static str,
    pub category: Category,
    pub instance_count: u32,
    pub metric_rule: MetricRule,
}

const fn ds(
    name: &'static str,
    abbrev: &'static str,
    title: &'static str,
    category: Category,
    instance_count: u32,
    metric_rule: MetricRule,
) -> DatasetInfo {
    DatasetInfo {
        name,
        abbrev,
        title,
        category,
        instance_count,
        metric_rule,
    }
}

use Category::*;
use MetricRule::*;

/// In per-task table column order.
pub static DATASETS: [DatasetInfo; 15] = [
    ds(
        "humaneval",
        "HE",
        "HumanEval",
        CodeGenEditing,
        165,
        Accuracy,
    ),
    ds(
        "swebench",
        "SB",
        "SWE-bench",
        CodeGenEditing,
        2000,
        Accuracy,
    ),
    ds(
        "swebench-multilingual",
        "SJ",
        "SWE-Bench-Multilingual",
        CodeGenEditing,
        91,
        Accuracy,
    ),
    ds("resq", "RQ", "RES-Q", CodeGenEditing, 100, Accuracy),
    ds(
        "canitedit",
        "CI",
        "CanItEdit",
        CodeGenEditing,
        105,
        Accuracy,
    ),
    ds(
        "swtbench",
        "ST",
        "SWT-Bench",
        CodeGenEditing,
        276,
        SubmetricMean { count: Some(6) },
    ),
    ds(
        "design2code",
        "DC",
        "Design2Code",
        MultimodalCodeGen,
        485,
        SubmetricMean { count: None },
    ),
    ds(
        "chartmimic",
        "CM",
        "ChartMimic",
        MultimodalCodeGen,
        600,
        SubmetricMean { count: None },
    ),
    ds(
        "dsbench",
        "DS",
        "DSBench",
        MultimodalCodeGen,
        112,
        AccuracyOrNormalized,
    ),
    ds(
        "swebench-mm",
        "SM",
        "Swebench-MM",
        MultimodalCodeGen,
        510,
        Accuracy,
    ),
    ds(
        "intercode",
        "IC",
        "InterCode",
        DomainSpecific,
        100,
        Accuracy,
    ),
    ds("bird", "BD", "Bird", DomainSpecific, 500, Accuracy),
    ds("minictx", "MC", "Minictx", DomainSpecific, 381, Accuracy),
    ds("vscode", "VS", "VSCode", GeneralSWE, 20, Accuracy),
    ds("general-swe", "GS", "General SWE", GeneralSWE, 20, Accuracy),
];

pub fn dataset(name: &str) -> Option<&'static DatasetInfo> {
    DATASETS.iter().find(|d| d.name == name)
}

pub fn total_instances() -> u32 {
    DATASETS.iter().map(|d| d.instance_count).sum()
}

pub fn members(category: Category) -> impl Iterator<Item = &'static DatasetInfo> {
    DATASETS.iter().filter(move |d| d.category == category)
}

/// Canonical instance ids for a dataset whose upstream data is not shipped:
/// `<name>-0000` …
pub fn canonical_ids(info: &DatasetInfo) -> Vec<String> {
    (0..info.instance_count)
        .map(|i| format!("{}-{i:04}", info.name))
        .collect()
}
