//! The pluggable sandbox interface shared by the simulated and container backends.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::ActionSequence;
use crate::geometry::ScreenGeometry;
use crate::observation::{DomTree, Screenshot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Sim,
    Real,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "error", content = "detail", rename_all = "snake_case")]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("action rejected: {0}")]
    Rejected(String),
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("path outside workspace: {0}")]
    OutsideWorkspace(String),
    #[error("unsupported by backend: {0}")]
    Unsupported(String),
    #[error("protocol error: {0}")]
    Protocol(String),
}

/// Result of applying one action sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ApplyOutcome {
    /// At least one action hit no target and was ignored.
    pub ignored: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShellOutput {
    /// Interleaved stdout and stderr.
    pub output: String,
    pub exit_code: i32,
}

/// Serialized backend state used for checkpoints.
///
/// For the simulated backend `document` is the full state; for container backends
/// it is a filesystem snapshot plus a state descriptor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointPayload {
    pub kind: BackendKind,
    pub document: serde_json::Value,
}

/// One live sandbox. Paths are workspace-relative (`src/main.py`) or absolute
/// under the workspace root.
pub trait Backend: Send {
    fn kind(&self) -> BackendKind;

    fn geometry(&self) -> ScreenGeometry;

    fn apply(&mut self, seq: &ActionSequence) -> Result<ApplyOutcome, BackendError>;

    fn screenshot(&mut self) -> Result<Screenshot, BackendError>;

    fn dom(&mut self) -> Result<DomTree, BackendError>;

    fn exec(&mut self, cmd: &str) -> Result<ShellOutput, BackendError>;

    fn read_file(&self, path: &str) -> Result<Vec<u8>, BackendError>;

    fn write_file(&mut self, path: &str, bytes: &[u8]) -> Result<(), BackendError>;

    /// Open `path` in an editor tab (used for a task's entry file).
    fn open_editor(&mut self, path: &str) -> Result<(), BackendError>;

    /// Every workspace file, keyed by workspace-relative path.
    fn export_files(&self) -> Result<BTreeMap<String, Vec<u8>>, BackendError>;

    fn snapshot(&self) -> Result<CheckpointPayload, BackendError>;

    /// Digest covering all state that actions can change.
    fn state_digest(&self) -> Result<String, BackendError>;
}
