//! Deterministic simulated IDE.
//!
//! The state is a plain value: an in-memory filesystem, an explorer, editor tabs
//! with text buffers, a terminal backed by a built-in shell, and a settings search
//! field. Actions, rendering and DOM extraction are pure functions of that value.
//!
//! Screen layout (pixels, geometry `W x H`):
//!
//! ```text
//! +----+-----------+----------------------------+
//! | 48 | explorer  | tab bar (16)               |
//! |    |   200     | buffer                     |
//! |    |           +----------------------------+
//! |    |           | terminal (H/4)             |
//! +----+-----------+----------------------------+
//! ```

mod apply;
mod checkpoint;
mod layout;
pub mod paths;
mod render;
pub mod shell;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::ActionSequence;
use crate::backend::{
    ApplyOutcome, Backend, BackendError, BackendKind, CheckpointPayload, ShellOutput,
};
use crate::geometry::ScreenGeometry;
use crate::observation::{DomTree, Screenshot};
use crate::raster::Canvas;

pub use checkpoint::{
    sim_restore, sim_snapshot, Checkpoint, CheckpointError, MemoryCheckpoints, CHECKPOINT_FORMAT,
    CHECKPOINT_VERSION,
};
pub use layout::{
    Layout, Target, ACTIVITY_WIDTH, CELL_HEIGHT, CELL_WIDTH, EXPLORER_WIDTH, TAB_BAR_HEIGHT,
};
pub use paths::WORKSPACE_ROOT;

/// Terminal history lines kept in state.
const HISTORY_LIMIT: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Focus {
    Explorer,
    Editor,
    Terminal,
    SettingsSearch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CursorPos {
    pub line: usize,
    /// Column in characters, `<= line length`.
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditorTab {
    /// Workspace-relative path.
    pub path: String,
    pub lines: Vec<String>,
    pub cursor: CursorPos,
    pub dirty: bool,
    pub scroll: usize,
}

impl EditorTab {
    fn open(path: &str, bytes: &[u8]) -> Self {
        Self {
            path: path.to_string(),
            lines: split_lines(bytes),
            cursor: CursorPos::default(),
            dirty: false,
            scroll: 0,
        }
    }

    pub fn content(&self) -> Vec<u8> {
        self.lines.join("\n").into_bytes()
    }
}

fn split_lines(bytes: &[u8]) -> Vec<String> {
    String::from_utf8_lossy(bytes)
        .split('\n')
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Terminal {
    pub history: Vec<String>,
    pub input: String,
    /// Absolute working directory.
    pub cwd: String,
}

impl Default for Terminal {
    fn default() -> Self {
        Self {
            history: Vec::new(),
            input: String::new(),
            cwd: WORKSPACE_ROOT.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimState {
    /// Absolute path → contents.
    #[serde(skip)]
    pub files: BTreeMap<String, Vec<u8>>,
    /// Absolute directories created explicitly or as parents of files.
    pub dirs: BTreeSet<String>,
    /// Workspace-relative path of the selected explorer item.
    pub selection: Option<String>,
    pub editors: Vec<EditorTab>,
    pub active_editor: Option<usize>,
    pub terminal: Terminal,
    pub settings_query: String,
    pub focus: Focus,
    pub pointer: (u32, u32),
    /// Bitmask of held mouse buttons (bit = code - 1).
    pub buttons_down: u8,
    pub press_origin: Option<(u32, u32)>,
    pub geometry: ScreenGeometry,
    pub rng_seed: u64,
    pub last_action_ignored: bool,
    /// Writes under this prefix are refused by the shell and file APIs.
    pub read_only_prefix: Option<String>,
    /// Virtual time consumed by `sleep`, in milliseconds.
    pub virtual_clock_ms: u64,
}

/// Initial-state description for [`sim_create`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SimConfig {
    pub geometry: ScreenGeometry,
    /// Workspace-relative path → contents.
    pub seed_files: BTreeMap<String, Vec<u8>>,
    pub entry_file: Option<String>,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("screen geometry must be positive, got {0}x{1}")]
    BadGeometry(u32, u32),
    #[error("bad seed file path {0:?}")]
    BadSeedFiles(String),
}

pub const DEFAULT_RNG_SEED: u64 = 0x5eed;

/// Builds the initial state: seeded workspace, focus on the explorer, and one
/// editor tab on the entry file when it was seeded.
pub fn sim_create(config: &SimConfig) -> Result<SimState, SimError> {
    let g = config.geometry;
    if !g.is_positive() {
        return Err(SimError::BadGeometry(g.width, g.height));
    }
    let mut state = SimState {
        files: BTreeMap::new(),
        dirs: BTreeSet::new(),
        selection: None,
        editors: Vec::new(),
        active_editor: None,
        terminal: Terminal::default(),
        settings_query: String::new(),
        focus: Focus::Explorer,
        pointer: (0, 0),
        buttons_down: 0,
        press_origin: None,
        geometry: g,
        rng_seed: config.rng_seed,
        last_action_ignored: false,
        read_only_prefix: None,
        virtual_clock_ms: 0,
    };
    for (path, bytes) in &config.seed_files {
        let abs = paths::workspace_path(path)
            .filter(|_| !path.ends_with('/'))
            .ok_or_else(|| SimError::BadSeedFiles(path.clone()))?;
        if state.is_dir(&abs) {
            return Err(SimError::BadSeedFiles(path.clone()));
        }
        state.put_file(&abs, bytes.clone());
    }
    // A path seeded both as file and as a directory prefix, e.g. `a` and `a/b`.
    for abs in state.files.keys() {
        if state.dirs.contains(abs) {
            return Err(SimError::BadSeedFiles(abs.clone()));
        }
    }
    if let Some(entry) = &config.entry_file {
        if let Some(abs) = paths::workspace_path(entry) {
            if state.files.contains_key(&abs) {
                state.open_editor(paths::relative(&abs).unwrap_or(entry));
            }
        }
    }
    Ok(state)
}

/// Applies `seq` to a copy of `state`. Total: unknown targets are no-ops that set
/// `last_action_ignored`.
pub fn sim_apply(state: &SimState, seq: &ActionSequence) -> SimState {
    let mut next = state.clone();
    next.apply(seq);
    next
}

/// Deterministic rasterization; equal states give byte-identical frames.
pub fn sim_render(state: &SimState) -> Canvas {
    render::render(state)
}

pub fn sim_dom(state: &SimState) -> DomTree {
    layout::Layout::of(state).dom(state)
}

/// Runs `cmd` in the built-in shell and returns the combined output, exit status
/// and successor state.
pub fn sim_exec_shell(state: &SimState, cmd: &str) -> (String, i32, SimState) {
    let mut next = state.clone();
    let out = next.exec(cmd);
    (out.output, out.exit_code, next)
}

impl SimState {
    pub fn apply(&mut self, seq: &ActionSequence) -> ApplyOutcome {
        self.last_action_ignored = false;
        for action in seq.iter() {
            apply::apply_one(self, action);
        }
        ApplyOutcome {
            ignored: self.last_action_ignored,
        }
    }

    /// Runs a shell command, echoing it and its output into the terminal history.
    pub fn exec(&mut self, cmd: &str) -> ShellOutput {
        let out = shell::run(self, cmd);
        self.push_history(format!("$ {cmd}"));
        for line in out.output.lines() {
            self.push_history(line.to_string());
        }
        self.sync_editors();
        out
    }

    fn push_history(&mut self, line: String) {
        self.terminal.history.push(line);
        if self.terminal.history.len() > HISTORY_LIMIT {
            let excess = self.terminal.history.len() - HISTORY_LIMIT;
            self.terminal.history.drain(..excess);
        }
    }

    /// Workspace files in explorer order (workspace-relative paths).
    pub fn explorer_items(&self) -> Vec<String> {
        self.files
            .keys()
            .filter_map(|p| paths::relative(p))
            .map(str::to_string)
            .collect()
    }

    pub fn is_dir(&self, abs: &str) -> bool {
        abs == "/"
            || abs == WORKSPACE_ROOT
            || self.dirs.contains(abs)
            || self
                .files
                .keys()
                .any(|f| paths::is_within(f, abs) && f != abs)
    }

    pub fn is_read_only(&self, abs: &str) -> bool {
        self.read_only_prefix
            .as_deref()
            .is_some_and(|p| paths::is_within(abs, p))
    }

    /// Inserts a file and registers its parent directories.
    pub(crate) fn put_file(&mut self, abs: &str, bytes: Vec<u8>) {
        let mut dir = paths::parent(abs);
        while dir != "/" {
            self.dirs.insert(dir.to_string());
            dir = paths::parent(dir);
        }
        self.files.insert(abs.to_string(), bytes);
    }

    pub fn active(&self) -> Option<&EditorTab> {
        self.active_editor.and_then(|i| self.editors.get(i))
    }

    pub(crate) fn active_mut(&mut self) -> Option<&mut EditorTab> {
        self.active_editor.and_then(|i| self.editors.get_mut(i))
    }

    /// Opens (or switches to) an editor on a workspace-relative path.
    pub(crate) fn open_editor(&mut self, rel: &str) -> bool {
        if let Some(i) = self.editors.iter().position(|e| e.path == rel) {
            self.active_editor = Some(i);
            return true;
        }
        let Some(bytes) = paths::workspace_path(rel).and_then(|abs| self.files.get(&abs)) else {
            return false;
        };
        self.editors.push(EditorTab::open(rel, bytes));
        self.active_editor = Some(self.editors.len() - 1);
        true
    }

    /// Reloads clean editors from disk; editors whose file vanished become dirty.
    pub(crate) fn sync_editors(&mut self) {
        for tab in &mut self.editors {
            if tab.dirty {
                continue;
            }
            let abs = paths::workspace_path(&tab.path).unwrap_or_default();
            match self.files.get(&abs) {
                Some(bytes) => {
                    let lines = split_lines(bytes);
                    if lines != tab.lines {
                        tab.lines = lines;
                        let last = tab.lines.len() - 1;
                        tab.cursor.line = tab.cursor.line.min(last);
                        tab.cursor.col = tab
                            .cursor
                            .col
                            .min(tab.lines[tab.cursor.line].chars().count());
                        tab.scroll = tab.scroll.min(last);
                    }
                }
                None => tab.dirty = true,
            }
        }
    }

    /// Write through the agent file API: confined to the workspace, refuses
    /// read-only paths, keeps clean editors in sync.
    pub fn write_workspace_file(&mut self, path: &str, bytes: &[u8]) -> Result<(), BackendError> {
        let abs = paths::workspace_path(path)
            .ok_or_else(|| BackendError::OutsideWorkspace(path.into()))?;
        if self.is_read_only(&abs) || self.is_dir(&abs) {
            return Err(BackendError::Rejected(format!("cannot write {path}")));
        }
        self.put_file(&abs, bytes.to_vec());
        self.sync_editors();
        Ok(())
    }

    pub fn read_workspace_file(&self, path: &str) -> Result<Vec<u8>, BackendError> {
        let abs = paths::workspace_path(path)
            .ok_or_else(|| BackendError::OutsideWorkspace(path.into()))?;
        self.files
            .get(&abs)
            .cloned()
            .ok_or_else(|| BackendError::FileNotFound(path.into()))
    }

    pub fn workspace_files(&self) -> BTreeMap<String, Vec<u8>> {
        self.files
            .iter()
            .filter_map(|(p, b)| paths::relative(p).map(|r| (r.to_string(), b.clone())))
            .collect()
    }

    /// Digest of the full state (filesystem included).
    pub fn digest(&self) -> String {
        checkpoint::state_digest(self)
    }
}

/// [`Backend`] over a [`SimState`].
#[derive(Debug, Clone)]
pub struct SimBackend {
    state: SimState,
}

impl SimBackend {
    pub fn new(config: &SimConfig) -> Result<Self, SimError> {
        Ok(Self {
            state: sim_create(config)?,
        })
    }

    pub fn from_state(state: SimState) -> Self {
        Self { state }
    }

    pub fn from_payload(payload: &CheckpointPayload) -> Result<Self, CheckpointError> {
        checkpoint::decode_document(&payload.document).map(Self::from_state)
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut SimState {
        &mut self.state
    }
}

impl Backend for SimBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Sim
    }

    fn geometry(&self) -> ScreenGeometry {
        self.state.geometry
    }

    fn apply(&mut self, seq: &ActionSequence) -> Result<ApplyOutcome, BackendError> {
        let violations = crate::action::validate(seq, self.state.geometry);
        if let Some(v) = violations.first() {
            return Err(BackendError::Rejected(format!("{v:?}")));
        }
        Ok(self.state.apply(seq))
    }

    fn screenshot(&mut self) -> Result<Screenshot, BackendError> {
        Ok(Screenshot::from_canvas(&sim_render(&self.state)))
    }

    fn dom(&mut self) -> Result<DomTree, BackendError> {
        Ok(sim_dom(&self.state))
    }

    fn exec(&mut self, cmd: &str) -> Result<ShellOutput, BackendError> {
        Ok(self.state.exec(cmd))
    }

    fn read_file(&self, path: &str) -> Result<Vec<u8>, BackendError> {
        self.state.read_workspace_file(path)
    }

    fn write_file(&mut self, path: &str, bytes: &[u8]) -> Result<(), BackendError> {
        self.state.write_workspace_file(path, bytes)
    }

    fn open_editor(&mut self, path: &str) -> Result<(), BackendError> {
        let rel = paths::workspace_path(path)
            .and_then(|abs| paths::relative(&abs).map(str::to_string))
            .ok_or_else(|| BackendError::OutsideWorkspace(path.into()))?;
        if self.state.open_editor(&rel) {
            Ok(())
        } else {
            Err(BackendError::FileNotFound(path.into()))
        }
    }

    fn export_files(&self) -> Result<BTreeMap<String, Vec<u8>>, BackendError> {
        Ok(self.state.workspace_files())
    }

    fn snapshot(&self) -> Result<CheckpointPayload, BackendError> {
        Ok(CheckpointPayload {
            kind: BackendKind::Sim,
            document: checkpoint::encode_document(&self.state),
        })
    }

    fn state_digest(&self) -> Result<String, BackendError> {
        Ok(self.state.digest())
    }
}
