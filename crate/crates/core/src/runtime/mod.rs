//! Sessions and the turn-based episode loop.

mod clock;
mod episode;
mod log;
mod stats;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::ActionSequence;
use crate::agents::tools::{dispatch_tool, ToolCall, ToolError, ToolRegistry, ToolResult};
use crate::backend::{Backend, BackendError, BackendKind};
use crate::harness::{evaluate, RewardReport, TaskSpec};
use crate::observation::{capture, CaptureError, Observation};
use crate::sim::WORKSPACE_ROOT;

pub use clock::{Clock, ManualClock, SystemClock};
pub use episode::{
    run_episode, EpisodeOptions, EpisodeResult, RecordedAction, StepRecord, Termination, Trajectory,
};
pub use log::{
    read_trajectory_log, strip_volatile, write_trajectory_log, LogHeader, LogRecord, LogTrailer,
};
pub use stats::{interaction_stats, InteractionStats, StatsError};

pub const DEFAULT_MAX_STEPS: u32 = 20;
pub const LONG_HORIZON_MAX_STEPS: u32 = 250;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeLimits {
    pub max_steps: u32,
    /// Seconds.
    pub wall_clock_timeout: f64,
    /// Seconds.
    pub per_step_timeout: f64,
}

impl Default for EpisodeLimits {
    fn default() -> Self {
        Self {
            max_steps: DEFAULT_MAX_STEPS,
            wall_clock_timeout: 3600.0,
            per_step_timeout: 300.0,
        }
    }
}

impl EpisodeLimits {
    /// Same timeouts, 250-step cap.
    pub fn long_horizon() -> Self {
        Self {
            max_steps: LONG_HORIZON_MAX_STEPS,
            ..Self::default()
        }
    }

    pub fn with_max_steps(max_steps: u32) -> Self {
        Self {
            max_steps,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.max_steps < 1 {
            return Err("max_steps must be at least 1".into());
        }
        let ok = |t: f64| t.is_finite() && t > 0.0;
        if !ok(self.wall_clock_timeout) || !ok(self.per_step_timeout) {
            return Err("timeouts must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Running,
    Paused,
    Terminated,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "error", content = "detail", rename_all = "snake_case")]
pub enum SessionError {
    #[error("step cap of {0} reached")]
    StepCapExceeded(u32),
    #[error("session is paused")]
    SessionPaused,
    #[error("session is terminated")]
    SessionTerminated,
    #[error("action rejected: {0}")]
    ActionRejected(String),
    #[error("invalid status transition from {from:?} to {to:?}")]
    InvalidStatusTransition {
        from: SessionStatus,
        to: SessionStatus,
    },
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("capture failed: {0}")]
    CaptureFailed(String),
    #[error("no task is attached to this session")]
    NoTask,
}

impl From<BackendError> for SessionError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::Unavailable(m) | BackendError::Protocol(m) => {
                SessionError::BackendUnavailable(m)
            }
            other => SessionError::ActionRejected(other.to_string()),
        }
    }
}

impl From<CaptureError> for SessionError {
    fn from(e: CaptureError) -> Self {
        SessionError::CaptureFailed(e.to_string())
    }
}

/// Result of one GUI step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub observation_digest: String,
    /// Some action hit no target.
    pub ignored: bool,
}

/// Errors seen by the episode loop through an [`Environment`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Tool(#[from] ToolError),
    #[error("transport: {0}")]
    Transport(String),
}

impl EnvError {
    /// Errors after which the episode cannot continue.
    pub fn is_fatal(&self) -> bool {
        match self {
            EnvError::Session(e) => matches!(
                e,
                SessionError::BackendUnavailable(_)
                    | SessionError::CaptureFailed(_)
                    | SessionError::SessionTerminated
                    | SessionError::StepCapExceeded(_)
            ),
            EnvError::Tool(ToolError::Session(e)) => matches!(
                e,
                SessionError::BackendUnavailable(_) | SessionError::SessionTerminated
            ),
            EnvError::Tool(_) => false,
            EnvError::Transport(_) => true,
        }
    }
}

/// The surface the episode loop drives: a local [`Session`], a session held by an
/// orchestrator, or a remote session behind the HTTP service.
pub trait Environment {
    fn session_id(&self) -> String;

    fn observe(&mut self, dom: bool, som: bool) -> Result<Observation, EnvError>;

    fn step(&mut self, seq: &ActionSequence) -> Result<StepOutcome, EnvError>;

    fn tool(&mut self, call: &ToolCall) -> Result<ToolResult, EnvError>;

    fn terminate(&mut self) -> Result<(), EnvError>;

    fn reward(&mut self) -> Result<RewardReport, EnvError>;
}

/// One live sandbox.
pub struct Session {
    pub session_id: String,
    backend: Box<dyn Backend>,
    pub steps_taken: u32,
    pub limits: EpisodeLimits,
    status: SessionStatus,
    pub workspace_root: String,
    pub task: Option<Arc<TaskSpec>>,
    tools: ToolRegistry,
    paused_total: Duration,
    paused_since: Option<Duration>,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("session_id", &self.session_id)
            .field("backend", &self.backend.kind())
            .field("steps_taken", &self.steps_taken)
            .field("status", &self.status)
            .finish()
    }
}

impl Session {
    pub fn new(
        session_id: String,
        backend: Box<dyn Backend>,
        limits: EpisodeLimits,
        task: Option<Arc<TaskSpec>>,
    ) -> Self {
        let tools = ToolRegistry::for_dataset(task.as_ref().map(|t| t.dataset.as_str()));
        Self {
            session_id,
            backend,
            steps_taken: 0,
            limits,
            status: SessionStatus::Running,
            workspace_root: WORKSPACE_ROOT.to_string(),
            task,
            tools,
            paused_total: Duration::ZERO,
            paused_since: None,
        }
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn backend_kind(&self) -> BackendKind {
        self.backend.kind()
    }

    pub fn backend(&self) -> &dyn Backend {
        self.backend.as_ref()
    }

    /// Direct backend access for setup and tool bindings.
    pub fn backend_mut(&mut self) -> &mut dyn Backend {
        self.backend.as_mut()
    }

    pub fn tools(&self) -> &ToolRegistry {
        &self.tools
    }

    fn check_can_act(&self) -> Result<(), SessionError> {
        match self.status {
            SessionStatus::Paused => Err(SessionError::SessionPaused),
            SessionStatus::Terminated => Err(SessionError::SessionTerminated),
            SessionStatus::Running if self.steps_taken >= self.limits.max_steps => {
                Err(SessionError::StepCapExceeded(self.limits.max_steps))
            }
            SessionStatus::Running => Ok(()),
        }
    }

    /// Counts one step against the cap. Fails without side effects when the
    /// session cannot act.
    pub(crate) fn consume_step(&mut self) -> Result<(), SessionError> {
        self.check_can_act()?;
        self.steps_taken += 1;
        Ok(())
    }

    /// Applies an action and returns the post-action observation. A backend
    /// rejection still consumes the step; the session stays Running.
    pub fn apply_action(&mut self, seq: &ActionSequence) -> Result<Observation, SessionError> {
        self.apply_action_outcome(seq).map(|(obs, _)| obs)
    }

    pub fn apply_action_outcome(
        &mut self,
        seq: &ActionSequence,
    ) -> Result<(Observation, bool), SessionError> {
        self.consume_step()?;
        let outcome = self.backend.apply(seq)?;
        let obs = capture(self.backend.as_mut(), self.steps_taken, true, false)?;
        Ok((obs, outcome.ignored))
    }

    /// Captures an observation without counting a step.
    pub fn observe(&mut self, dom: bool, som: bool) -> Result<Observation, SessionError> {
        if self.status == SessionStatus::Terminated {
            return Err(SessionError::SessionTerminated);
        }
        Ok(capture(self.backend.as_mut(), self.steps_taken, dom, som)?)
    }

    pub fn dispatch_tool(&mut self, call: &ToolCall) -> Result<ToolResult, ToolError> {
        let registry = self.tools.clone();
        dispatch_tool(&registry, call, self)
    }

    /// `now` is the caller's clock reading; paused time is excluded from
    /// [`Session::active_time`].
    pub fn pause(&mut self, now: Duration) -> Result<(), SessionError> {
        if self.status != SessionStatus::Running {
            return Err(SessionError::InvalidStatusTransition {
                from: self.status,
                to: SessionStatus::Paused,
            });
        }
        self.status = SessionStatus::Paused;
        self.paused_since = Some(now);
        Ok(())
    }

    pub fn resume(&mut self, now: Duration) -> Result<(), SessionError> {
        if self.status != SessionStatus::Paused {
            return Err(SessionError::InvalidStatusTransition {
                from: self.status,
                to: SessionStatus::Running,
            });
        }
        if let Some(since) = self.paused_since.take() {
            self.paused_total += now.saturating_sub(since);
        }
        self.status = SessionStatus::Running;
        Ok(())
    }

    /// Time since `started` minus time spent paused.
    pub fn active_time(&self, started: Duration, now: Duration) -> Duration {
        let paused_now = self
            .paused_since
            .map_or(Duration::ZERO, |s| now.saturating_sub(s));
        now.saturating_sub(started)
            .saturating_sub(self.paused_total + paused_now)
    }

    /// Idempotent.
    pub fn terminate(&mut self) {
        self.status = SessionStatus::Terminated;
        self.paused_since = None;
    }

    pub fn state_digest(&self) -> Result<String, SessionError> {
        Ok(self.backend.state_digest()?)
    }

    /// Runs the task verifier over the current workspace.
    pub fn reward(&self) -> Result<RewardReport, SessionError> {
        let task = self.task.as_ref().ok_or(SessionError::NoTask)?;
        let files = self.backend.export_files()?;
        Ok(evaluate(&files, task))
    }
}

impl Environment for Session {
    fn session_id(&self) -> String {
        self.session_id.clone()
    }

    fn observe(&mut self, dom: bool, som: bool) -> Result<Observation, EnvError> {
        Ok(Session::observe(self, dom, som)?)
    }

    fn step(&mut self, seq: &ActionSequence) -> Result<StepOutcome, EnvError> {
        let (obs, ignored) = self.apply_action_outcome(seq)?;
        Ok(StepOutcome {
            observation_digest: obs.digest(),
            ignored,
        })
    }

    fn tool(&mut self, call: &ToolCall) -> Result<ToolResult, EnvError> {
        Ok(self.dispatch_tool(call)?)
    }

    fn terminate(&mut self) -> Result<(), EnvError> {
        Session::terminate(self);
        Ok(())
    }

    fn reward(&mut self) -> Result<RewardReport, EnvError> {
        Ok(Session::reward(self)?)
    }
}
