//! Task manifests.

use std::collections::BTreeMap;
use std::path::Path;

use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::agents::Image;
use crate::runtime::EpisodeLimits;

use super::registry::{dataset, Category};
use super::HarnessError;

/// File contents in a manifest: inline text, base64 bytes, or a path relative
/// to the manifest's directory. Loading from disk resolves every `ref`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FileContent {
    Text(String),
    Base64 {
        base64: String,
    },
    Ref {
        #[serde(rename = "ref")]
        reference: String,
    },
}

impl FileContent {
    pub fn bytes(&self) -> Result<Vec<u8>, HarnessError> {
        match self {
            FileContent::Text(t) => Ok(t.clone().into_bytes()),
            FileContent::Base64 { base64 } => base64::engine::general_purpose::STANDARD
                .decode(base64)
                .map_err(|e| HarnessError::Schema(format!("bad base64 content: {e}"))),
            FileContent::Ref { reference } => Err(HarnessError::Schema(format!(
                "unresolved file reference {reference:?}"
            ))),
        }
    }

    fn resolve(&mut self, base: &Path) -> Result<(), HarnessError> {
        if let FileContent::Ref { reference } = self {
            let path = base.join(&*reference);
            let bytes = std::fs::read(&path)
                .map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
            *self = match String::from_utf8(bytes) {
                Ok(text) => FileContent::Text(text),
                Err(e) => FileContent::Base64 {
                    base64: base64::engine::general_purpose::STANDARD.encode(e.into_bytes()),
                },
            };
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attachment {
    /// Workspace-relative destination.
    pub path: String,
    pub media_type: String,
    pub content: FileContent,
}

/// How the verifier's output becomes a score.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuccessRule {
    /// Exit 0 scores 1, exit 1 scores 0, anything else is a crash.
    #[serde(rename = "exitcode")]
    ExitCode,
    /// Regex with one capture group, parsed as a decimal score.
    StdoutPattern(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifierSpec {
    pub command: String,
    pub success_rule: SuccessRule,
    pub timeout_s: u64,
    /// Verifier-private files, mounted under `/verifier` in the evaluation
    /// context only.
    #[serde(default)]
    pub fixtures: BTreeMap<String, FileContent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Resources {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cpu: Option<f64>,
    /// Bytes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mem: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub task_id: String,
    pub dataset: String,
    pub category: Category,
    #[serde(default)]
    pub setup: Vec<String>,
    #[serde(default)]
    pub seed_files: BTreeMap<String, FileContent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry_file: Option<String>,
    pub instruction: String,
    #[serde(default)]
    pub attachments: Vec<Attachment>,
    pub verifier: VerifierSpec,
    #[serde(default)]
    pub resources: Resources,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<EpisodeLimits>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Parses and validates a manifest. `base` resolves `ref` contents; without it
/// a `ref` is a schema error.
pub fn load_taskspec(doc: &str, base: Option<&Path>) -> Result<TaskSpec, HarnessError> {
    let mut spec: TaskSpec =
        serde_json::from_str(doc).map_err(|e| HarnessError::Schema(e.to_string()))?;
    if let Some(base) = base {
        for c in spec.seed_files.values_mut() {
            c.resolve(base)?;
        }
        for a in &mut spec.attachments {
            a.content.resolve(base)?;
        }
        for c in spec.verifier.fixtures.values_mut() {
            c.resolve(base)?;
        }
    }
    spec.validate()?;
    Ok(spec)
}

/// Loads `dir/manifest.json`, or `dir` itself when it names a file.
pub fn load_taskspec_path(path: &Path) -> Result<TaskSpec, HarnessError> {
    let file = if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    };
    let doc = std::fs::read_to_string(&file)
        .map_err(|e| HarnessError::Io(format!("{}: {e}", file.display())))?;
    load_taskspec(&doc, file.parent())
}

/// Every manifest under `root` (recursively), sorted by task id.
pub fn load_dir(root: &Path) -> Result<Vec<TaskSpec>, HarnessError> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let entries = std::fs::read_dir(&dir)
            .map_err(|e| HarnessError::Io(format!("{}: {e}", dir.display())))?;
        for entry in entries {
            let p = entry.map_err(|e| HarnessError::Io(e.to_string()))?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n == MANIFEST_FILE) {
                out.push(load_taskspec_path(&p)?);
            }
        }
    }
    out.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    Ok(out)
}

impl TaskSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let schema = |m: String| Err(HarnessError::Schema(m));
        if self.task_id.trim().is_empty() {
            return schema("task_id is empty".into());
        }
        if self.instruction.trim().is_empty() {
            return schema("instruction is empty".into());
        }
        let info = dataset(&self.dataset)
            .ok_or_else(|| HarnessError::UnknownDataset(self.dataset.clone()))?;
        if info.category != self.category {
            return schema(format!(
                "dataset {} belongs to {:?}, manifest says {:?}",
                self.dataset, info.category, self.category
            ));
        }
        if self.verifier.command.trim().is_empty() {
            return schema("verifier command is empty".into());
        }
        if self.verifier.timeout_s == 0 {
            return schema("verifier timeout must be positive".into());
        }
        if let SuccessRule::StdoutPattern(p) = &self.verifier.success_rule {
            match regex::Regex::new(p) {
                Ok(re) if re.captures_len() == 2 => {}
                Ok(_) => return schema("stdout_pattern needs exactly one capture group".into()),
                Err(e) => return schema(format!("stdout_pattern: {e}")),
            }
        }
        if let Some(l) = &self.limits {
            l.validate().map_err(HarnessError::Schema)?;
        }
        // The verifier must not leak into what the agent can see.
        for (path, content) in &self.seed_files {
            if let Ok(bytes) = content.bytes() {
                if contains(&bytes, self.verifier.command.as_bytes()) {
                    return schema(format!("seed file {path} contains the verifier command"));
                }
            }
        }
        for fixture in self.verifier.fixtures.keys() {
            if self.seed_files.contains_key(fixture) {
                return schema(format!("fixture {fixture} is also seeded"));
            }
        }
        Ok(())
    }

    /// Seed files plus attachments, as bytes keyed by workspace-relative path.
    pub fn initial_files(&self) -> Result<BTreeMap<String, Vec<u8>>, HarnessError> {
        let mut files = BTreeMap::new();
        for (p, c) in &self.seed_files {
            files.insert(p.clone(), c.bytes()?);
        }
        for a in &self.attachments {
            files.insert(a.path.clone(), a.content.bytes()?);
        }
        Ok(files)
    }

    /// Attachments the model should see as images.
    pub fn attachment_images(&self) -> Result<Vec<Image>, HarnessError> {
        self.attachments
            .iter()
            .filter(|a| a.media_type.starts_with("image/"))
            .map(|a| Ok(Image::new(a.media_type.clone(), a.content.bytes()?)))
            .collect()
    }

    pub fn fixture_files(&self) -> Result<BTreeMap<String, Vec<u8>>, HarnessError> {
        self.verifier
            .fixtures
            .iter()
            .map(|(p, c)| Ok((p.clone(), c.bytes()?)))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("task specs serialize")
    }
}

fn contains(hay: &[u8], needle: &[u8]) -> bool {
    !needle.is_empty() && hay.windows(needle.len()).any(|w| w == needle)
}
