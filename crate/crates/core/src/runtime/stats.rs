//! Share of turns spent on tool calls, GUI actions and screenshot requests.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{RecordedAction, Trajectory};

/// Fractions of trajectory steps. `other` covers stop turns and failed turns, so
/// the four fields always sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InteractionStats {
    pub tool: f64,
    pub gui: f64,
    pub screenshot: f64,
    pub other: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("trajectory has no steps")]
    EmptyTrajectory,
}

pub fn interaction_stats(trajectory: &Trajectory) -> Result<InteractionStats, StatsError> {
    let n = trajectory.records.len();
    if n == 0 {
        return Err(StatsError::EmptyTrajectory);
    }
    let (mut tool, mut gui, mut shot, mut other) = (0usize, 0usize, 0usize, 0usize);
    for r in &trajectory.records {
        match r.action {
            RecordedAction::Tool { .. } => tool += 1,
            RecordedAction::Gui { .. } => gui += 1,
            RecordedAction::Screenshot => shot += 1,
            RecordedAction::Stop { .. } | RecordedAction::Failed { .. } => other += 1,
        }
    }
    let frac = |k: usize| k as f64 / n as f64;
    Ok(InteractionStats {
        tool: frac(tool),
        gui: frac(gui),
        screenshot: frac(shot),
        other: frac(other),
        steps: n,
    })
}
