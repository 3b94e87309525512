//! Versioned checkpoint documents with a content-addressed file map.
//!
//! ```json
//! {"format": "idegym.sim-checkpoint", "version": 1,
//!  "objects": {"<sha256>": "<base64 bytes>"},
//!  "files": {"/workspace/a.py": "<sha256>"},
//!  "state": { ...everything except file contents... }}
//! ```
//!
//! `serde_json` maps are ordered, so serializing a document is canonical and the
//! state digest is the SHA-256 of those bytes.

use std::collections::{BTreeMap, HashMap};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::backend::{BackendKind, CheckpointPayload};
use crate::digest::sha256_hex;

use super::SimState;

pub const CHECKPOINT_FORMAT: &str = "idegym.sim-checkpoint";
pub const CHECKPOINT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CheckpointError {
    #[error("unknown checkpoint id {0}")]
    UnknownCheckpointId(String),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub checkpoint_id: String,
    pub payload: CheckpointPayload,
    pub created_at_step: u32,
}

pub(crate) fn encode_document(state: &SimState) -> Value {
    let mut objects = BTreeMap::new();
    let mut files = BTreeMap::new();
    for (path, bytes) in &state.files {
        let hash = sha256_hex(bytes);
        objects
            .entry(hash.clone())
            .or_insert_with(|| STANDARD.encode(bytes));
        files.insert(path.clone(), hash);
    }
    json!({
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "objects": objects,
        "files": files,
        "state": serde_json::to_value(state).expect("sim state always serializes"),
    })
}

pub(crate) fn decode_document(doc: &Value) -> Result<SimState, CheckpointError> {
    let corrupt = |m: &str| CheckpointError::Corrupt(m.to_string());
    if doc.get("format").and_then(Value::as_str) != Some(CHECKPOINT_FORMAT) {
        return Err(corrupt("wrong format tag"));
    }
    let version = doc
        .get("version")
        .and_then(Value::as_u64)
        .ok_or_else(|| corrupt("missing version"))?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let objects: BTreeMap<String, String> =
        serde_json::from_value(doc.get("objects").cloned().unwrap_or(Value::Null))
            .map_err(|e| corrupt(&e.to_string()))?;
    let files: BTreeMap<String, String> =
        serde_json::from_value(doc.get("files").cloned().unwrap_or(Value::Null))
            .map_err(|e| corrupt(&e.to_string()))?;
    let mut state: SimState =
        serde_json::from_value(doc.get("state").cloned().unwrap_or(Value::Null))
            .map_err(|e| corrupt(&e.to_string()))?;
    for (path, hash) in files {
        let encoded = objects
            .get(&hash)
            .ok_or_else(|| corrupt(&format!("missing object {hash}")))?;
        let bytes = STANDARD
            .decode(encoded)
            .map_err(|e| corrupt(&e.to_string()))?;
        if sha256_hex(&bytes) != hash {
            return Err(corrupt(&format!("object {hash} does not match its hash")));
        }
        state.files.insert(path, bytes);
    }
    Ok(state)
}

pub(crate) fn state_digest(state: &SimState) -> String {
    sha256_hex(&serde_json::to_vec(&encode_document(state)).expect("json values serialize"))
}

/// Snapshot as a self-contained checkpoint; the id is the document's digest.
pub fn sim_snapshot(state: &SimState, step: u32) -> Checkpoint {
    let document = encode_document(state);
    let checkpoint_id = sha256_hex(&serde_json::to_vec(&document).expect("json values serialize"));
    Checkpoint {
        checkpoint_id,
        payload: CheckpointPayload {
            kind: BackendKind::Sim,
            document,
        },
        created_at_step: step,
    }
}

pub fn sim_restore(cp: &Checkpoint) -> Result<SimState, CheckpointError> {
    if cp.payload.kind != BackendKind::Sim {
        return Err(CheckpointError::Corrupt("not a sim checkpoint".into()));
    }
    decode_document(&cp.payload.document)
}

/// In-memory checkpoint table.
#[derive(Debug, Default)]
pub struct MemoryCheckpoints {
    by_id: HashMap<String, Checkpoint>,
}

impl MemoryCheckpoints {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn snapshot(&mut self, state: &SimState, step: u32) -> String {
        let cp = sim_snapshot(state, step);
        let id = cp.checkpoint_id.clone();
        self.by_id.insert(id.clone(), cp);
        id
    }

    pub fn restore(&self, id: &str) -> Result<SimState, CheckpointError> {
        let cp = self
            .by_id
            .get(id)
            .ok_or_else(|| CheckpointError::UnknownCheckpointId(id.to_string()))?;
        sim_restore(cp)
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::config;
    use super::super::{sim_apply, sim_create, sim_render};
    use super::*;
    use crate::action::parse_command;

    fn sample() -> SimState {
        let mut s = sim_create(&config(
            &[("a.py", "print(1)\n"), ("b/c.txt", "print(1)\n"), ("e", "")],
            Some("a.py"),
        ))
        .unwrap();
        s.exec("mkdir -p empty/dir && cd b");
        s
    }

    #[test]
    fn round_trip_is_exact() {
        let s = sample();
        let cp = sim_snapshot(&s, 3);
        assert_eq!(cp.created_at_step, 3);
        assert_eq!(sim_restore(&cp).unwrap(), s);
        // identical contents share one object
        assert_eq!(cp.payload.document["objects"].as_object().unwrap().len(), 2);
        let text = serde_json::to_string(&cp).unwrap();
        let back: Checkpoint = serde_json::from_str(&text).unwrap();
        assert_eq!(sim_restore(&back).unwrap(), s);
    }

    #[test]
    fn restore_undoes_later_actions() {
        let mut store = MemoryCheckpoints::new();
        let mut s = sample();
        s.focus = super::super::Focus::Editor;
        let before = sim_render(&s).digest();
        let id = store.snapshot(&s, 0);
        let s2 = sim_apply(&s, &parse_command("xdotool type 'x'").unwrap());
        assert_ne!(sim_render(&s2).digest(), before);
        let back = store.restore(&id).unwrap();
        assert_eq!(sim_render(&back).digest(), before);
    }

    #[test]
    fn unknown_and_corrupt() {
        let store = MemoryCheckpoints::new();
        assert_eq!(
            store.restore("deadbeef"),
            Err(CheckpointError::UnknownCheckpointId("deadbeef".into()))
        );
        let mut cp = sim_snapshot(&sample(), 0);
        cp.payload.document["version"] = json!(2);
        assert_eq!(
            sim_restore(&cp),
            Err(CheckpointError::UnsupportedVersion(2))
        );
        let mut cp = sim_snapshot(&sample(), 0);
        let files = cp.payload.document["files"].as_object_mut().unwrap();
        files.insert("/workspace/x".into(), json!("0000"));
        assert!(matches!(sim_restore(&cp), Err(CheckpointError::Corrupt(_))));
    }

    #[test]
    fn digest_tracks_state() {
        let s = sample();
        let mut t = s.clone();
        assert_eq!(s.digest(), t.digest());
        t.exec("echo x > a.py");
        assert_ne!(s.digest(), t.digest());
    }
}
