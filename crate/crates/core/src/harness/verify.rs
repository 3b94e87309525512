//! Reward verification in an evaluation context the agent never sees.

use std::collections::BTreeMap;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{paths, sim_create, SimConfig, WORKSPACE_ROOT};

use super::registry::{dataset, MetricRule};
use super::task::{SuccessRule, TaskSpec};

/// Where verifier fixtures live inside the evaluation context.
pub const VERIFIER_ROOT: &str = "/verifier";

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum RewardError {
    #[error("verifier exceeded its {limit_s}s timeout")]
    VerifierTimeout { limit_s: u64 },
    #[error("verifier crashed (exit {exit_code}): {reason}")]
    VerifierCrashed { exit_code: i32, reason: String },
    #[error("evaluation unavailable: {0}")]
    Unavailable(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardReport {
    /// In [0, 1].
    pub score: f64,
    #[serde(default)]
    pub submetrics: BTreeMap<String, f64>,
    pub verifier_stdout: String,
    pub verifier_stderr: String,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<RewardError>,
}

impl RewardReport {
    /// Score 0 with an error flag.
    pub fn failed(msg: impl Into<String>) -> Self {
        Self::error(RewardError::Unavailable(msg.into()), String::new())
    }

    fn error(error: RewardError, stdout: String) -> Self {
        Self {
            score: 0.0,
            submetrics: BTreeMap::new(),
            verifier_stdout: stdout,
            verifier_stderr: String::new(),
            passed: false,
            error: Some(error),
        }
    }
}

fn parse_submetrics(stdout: &str) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for line in stdout.lines() {
        let mut parts = line.split_whitespace();
        if let (Some("submetric"), Some(name), Some(value), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        {
            if let Ok(v) = value.parse::<f64>() {
                if v.is_finite() {
                    out.insert(name.to_string(), v.clamp(0.0, 1.0));
                }
            }
        }
    }
    out
}

/// Runs the task's verifier over `files` (the final workspace, keyed by
/// workspace-relative path).
///
/// The evaluation context is a fresh simulated machine holding a read-only
/// copy of the workspace plus the fixtures under [`VERIFIER_ROOT`]; the
/// agent's session never contains them. Timeouts are measured on the
/// context's virtual clock. The simulated shell interleaves both output
/// streams, so `verifier_stdout` carries everything and `verifier_stderr` is
/// empty.
pub fn evaluate(files: &BTreeMap<String, Vec<u8>>, task: &TaskSpec) -> RewardReport {
    let fixtures = match task.fixture_files() {
        Ok(f) => f,
        Err(e) => return RewardReport::failed(e.to_string()),
    };
    let mut state = match sim_create(&SimConfig {
        seed_files: files.clone(),
        ..SimConfig::default()
    }) {
        Ok(s) => s,
        Err(e) => return RewardReport::failed(format!("evaluation context: {e}")),
    };
    for (rel, bytes) in fixtures {
        let abs = paths::resolve(VERIFIER_ROOT, &rel);
        if !paths::is_within(&abs, VERIFIER_ROOT) || abs == VERIFIER_ROOT {
            return RewardReport::failed(format!("fixture path {rel:?} escapes {VERIFIER_ROOT}"));
        }
        state.put_file(&abs, bytes);
    }
    state.read_only_prefix = Some(WORKSPACE_ROOT.to_string());

    let out = state.exec(&task.verifier.command);
    let stdout = out.output;
    if state.virtual_clock_ms > task.verifier.timeout_s.saturating_mul(1000) {
        return RewardReport::error(
            RewardError::VerifierTimeout {
                limit_s: task.verifier.timeout_s,
            },
            stdout,
        );
    }
    let crashed = |reason: &str| {
        RewardReport::error(
            RewardError::VerifierCrashed {
                exit_code: out.exit_code,
                reason: reason.to_string(),
            },
            stdout.clone(),
        )
    };
    let rule_score = match &task.verifier.success_rule {
        SuccessRule::ExitCode => match out.exit_code {
            0 => 1.0,
            1 => 0.0,
            _ => return crashed("unexpected exit status"),
        },
        SuccessRule::StdoutPattern(p) => {
            let Ok(re) = Regex::new(p) else {
                return crashed("invalid stdout pattern");
            };
            let value = re
                .captures_iter(&stdout)
                .last()
                .and_then(|c| c.get(1))
                .and_then(|m| m.as_str().trim().parse::<f64>().ok())
                .filter(|v| v.is_finite());
            match value {
                Some(v) => v.clamp(0.0, 1.0),
                None => return crashed("no score in verifier output"),
            }
        }
    };
    let submetrics = parse_submetrics(&stdout);
    let rule = dataset(&task.dataset).map_or(MetricRule::Accuracy, |d| d.metric_rule);
    let score = match rule {
        MetricRule::SubmetricMean { .. } if !submetrics.is_empty() => {
            submetrics.values().sum::<f64>() / submetrics.len() as f64
        }
        _ => rule_score,
    };
    RewardReport {
        score,
        submetrics,
        verifier_stdout: stdout,
        verifier_stderr: String::new(),
        passed: score >= rule.pass_threshold(),
        error: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::task::{load_taskspec, FileContent};

    fn toy() -> TaskSpec {
        load_taskspec(
            r#"{
            "task_id": "t", "dataset": "humaneval", "category": "CodeGenEditing",
            "seed_files": {"hello.txt": "hello\n"},
            "instruction": "say goodbye",
            "verifier": {"command": "runtests /verifier/tests.spec", "success_rule": "exitcode",
                         "timeout_s": 10,
                         "fixtures": {"tests.spec": "file_equals hello.txt \"goodbye\\n\"\n"}}
        }"#,
            None,
        )
        .unwrap()
    }

    fn files(content: &str) -> BTreeMap<String, Vec<u8>> {
        [("hello.txt".to_string(), content.as_bytes().to_vec())].into()
    }

    #[test]
    fn pass_and_sabotage() {
        let t = toy();
        let r = evaluate(&files("goodbye\n"), &t);
        assert_eq!((r.score, r.passed, r.error.clone()), (1.0, true, None));
        let r = evaluate(&files("hello\n"), &t);
        assert_eq!((r.score, r.passed), (0.0, false));
        assert!(r.error.is_none());
    }

    #[test]
    fn crash_and_timeout() {
        let mut t = toy();
        t.verifier.command = "python3 check.py".into();
        let r = evaluate(&files(""), &t);
        assert!(matches!(
            r.error,
            Some(RewardError::VerifierCrashed { exit_code: 127, .. })
        ));
        assert_eq!(r.score, 0.0);
        let mut t = toy();
        t.verifier.command = "sleep 11 && runtests /verifier/tests.spec".into();
        let r = evaluate(&files("goodbye\n"), &t);
        assert_eq!(r.error, Some(RewardError::VerifierTimeout { limit_s: 10 }));
        assert_eq!(r.score, 0.0);
    }

    #[test]
    fn verifier_cannot_modify_workspace() {
        let mut t = toy();
        t.verifier.command = "echo goodbye > hello.txt; runtests /verifier/tests.spec".into();
        assert_eq!(evaluate(&files("hello\n"), &t).score, 0.0);
    }

    #[test]
    fn stdout_pattern_and_submetric_mean() {
        let mut t = toy();
        t.verifier.success_rule = SuccessRule::StdoutPattern(r"score: ([0-9.]+)".into());
        t.verifier.fixtures.insert(
            "tests.spec".into(),
            FileContent::Text("file_exists hello.txt\nfile_contains hello.txt \"bye\"\n".into()),
        );
        let r = evaluate(&files("hello\n"), &t);
        assert_eq!((r.score, r.passed), (0.5, false));

        t.dataset = "chartmimic".into();
        t.verifier.fixtures.insert(
            "tests.spec".into(),
            FileContent::Text(
                "group text\nfile_exists hello.txt\ngroup color\nfile_contains hello.txt \"bye\"\nfile_exists hello.txt\n"
                    .into(),
            ),
        );
        let r = evaluate(&files("hello\n"), &t);
        // pass fraction is 2/3, submetric mean is (1 + 0.5) / 2
        assert_eq!(r.submetrics.len(), 2);
        assert_eq!(r.score, 0.75);
        assert!(r.passed);
    }
}
