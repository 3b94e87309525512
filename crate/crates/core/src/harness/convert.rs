//! Ingestion from upstream dataset formats. The produced tasks run their
//! verifiers with the upstream toolchains (Python, git), so they need the
//! container backend; the simulated shell reports them as crashed.

use std::collections::BTreeMap;

use serde::Deserialize;

use super::registry::dataset;
use super::task::{FileContent, SuccessRule, TaskSpec, VerifierSpec};
use super::HarnessError;

/// One line of the HumanEval JSONL release.
#[derive(Debug, Clone, Deserialize)]
pub struct HumanEvalRecord {
    pub task_id: String,
    pub prompt: String,
    pub test: String,
    pub entry_point: String,
}

pub fn from_humaneval(rec: &HumanEvalRecord) -> Result<TaskSpec, HarnessError> {
    let id = rec.task_id.replace('/', "-").to_lowercase();
    let check = format!(
        "import sys\nsys.path.insert(0, '/workspace')\nfrom solution import *\n\n{}\n\ncheck({})\n",
        rec.test, rec.entry_point
    );
    let spec = TaskSpec {
        task_id: id,
        dataset: "humaneval".into(),
        category: dataset("humaneval").expect("registered").category,
        setup: Vec::new(),
        seed_files: [(
            "solution.py".to_string(),
            FileContent::Text(rec.prompt.clone()),
        )]
        .into(),
        entry_file: Some("solution.py".into()),
        instruction: format!(
            "Complete the function `{}` in solution.py so that it satisfies its docstring.",
            rec.entry_point
        ),
        attachments: Vec::new(),
        verifier: VerifierSpec {
            command: "python3 /verifier/check.py".into(),
            success_rule: SuccessRule::ExitCode,
            timeout_s: 60,
            fixtures: [("check.py".to_string(), FileContent::Text(check))].into(),
        },
        resources: Default::default(),
        limits: None,
    };
    spec.validate()?;
    Ok(spec)
}

/// One record of the SWE-bench family releases. `FAIL_TO_PASS` and
/// `PASS_TO_PASS` arrive as JSON-encoded string lists.
#[derive(Debug, Clone, Deserialize)]
#[allow(non_snake_case)]
pub struct SweBenchRecord {
    pub instance_id: String,
    pub repo: String,
    pub base_commit: String,
    pub problem_statement: String,
    pub test_patch: String,
    pub FAIL_TO_PASS: String,
    pub PASS_TO_PASS: String,
}

fn test_list(field: &str, raw: &str) -> Result<Vec<String>, HarnessError> {
    serde_json::from_str(raw).map_err(|e| HarnessError::Schema(format!("{field}: {e}")))
}

/// `dataset` is one of the SWE-bench family names.
pub fn from_swebench(rec: &SweBenchRecord, dataset_name: &str) -> Result<TaskSpec, HarnessError> {
    let info =
        dataset(dataset_name).ok_or_else(|| HarnessError::UnknownDataset(dataset_name.into()))?;
    let fail_to_pass = test_list("FAIL_TO_PASS", &rec.FAIL_TO_PASS)?;
    let pass_to_pass = test_list("PASS_TO_PASS", &rec.PASS_TO_PASS)?;
    let mut tests = fail_to_pass;
    tests.extend(pass_to_pass);
    let mut fixtures = BTreeMap::new();
    fixtures.insert(
        "test.patch".to_string(),
        FileContent::Text(rec.test_patch.clone()),
    );
    fixtures.insert(
        "tests.txt".to_string(),
        FileContent::Text(tests.join("\n") + "\n"),
    );
    let spec = TaskSpec {
        task_id: rec.instance_id.clone(),
        dataset: info.name.into(),
        category: info.category,
        setup: vec![
            format!("git clone --quiet https://github.com/{} .", rec.repo),
            format!("git checkout --quiet {}", rec.base_commit),
        ],
        seed_files: BTreeMap::new(),
        entry_file: None,
        instruction: rec.problem_statement.clone(),
        attachments: Vec::new(),
        verifier: VerifierSpec {
            command:
                "git apply /verifier/test.patch && python3 -m pytest -q $(cat /verifier/tests.txt)"
                    .into(),
            success_rule: SuccessRule::ExitCode,
            timeout_s: 1800,
            fixtures,
        },
        resources: Default::default(),
        limits: None,
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::evaluate;

    #[test]
    fn humaneval_record() {
        let rec: HumanEvalRecord = serde_json::from_str(
            r#"{"task_id": "HumanEval/0", "prompt": "def add(a, b):\n    \"\"\"Add.\"\"\"\n",
                "canonical_solution": "    return a + b\n",
                "test": "def check(f):\n    assert f(1, 2) == 3\n", "entry_point": "add"}"#,
        )
        .unwrap();
        let t = from_humaneval(&rec).unwrap();
        assert_eq!(t.task_id, "humaneval-0");
        assert!(t.fixture_files().unwrap()["check.py"]
            .windows(10)
            .any(|w| w == b"check(add)"));
        // No Python in the simulated shell: the verifier is reported as crashed.
        let r = evaluate(&t.initial_files().unwrap(), &t);
        assert!(r.error.is_some());
    }

    #[test]
    fn swebench_record() {
        let rec: SweBenchRecord = serde_json::from_str(
            r#"{"instance_id": "astropy__astropy-1", "repo": "astropy/astropy", "base_commit": "abc",
                "problem_statement": "Fix it.", "patch": "", "test_patch": "diff",
                "FAIL_TO_PASS": "[\"t::a\"]", "PASS_TO_PASS": "[\"t::b\"]"}"#,
        )
        .unwrap();
        let t = from_swebench(&rec, "swebench").unwrap();
        assert_eq!(t.setup.len(), 2);
        assert_eq!(t.fixture_files().unwrap()["tests.txt"], b"t::a\nt::b\n");
        assert!(from_swebench(&rec, "nope").is_err());
    }
}
