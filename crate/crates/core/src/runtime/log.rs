//! Trajectory logs: newline-delimited JSON with a header line, one line per
//! step and a trailer line.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::agents::AgentDesign;
use crate::harness::RewardReport;

use super::{EpisodeLimits, EpisodeResult, StepRecord, Termination};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub session_id: String,
    pub task_id: Option<String>,
    pub agent_design: AgentDesign,
    pub limits: EpisodeLimits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogTrailer {
    pub termination: Termination,
    pub error: Option<String>,
    pub reward: RewardReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogRecord {
    Header(LogHeader),
    Step(StepRecord),
    Trailer(LogTrailer),
}

pub fn write_trajectory_log(result: &EpisodeResult) -> String {
    let mut lines = vec![LogRecord::Header(LogHeader {
        session_id: result.session_id.clone(),
        task_id: result.task_id.clone(),
        agent_design: result.agent_design,
        limits: result.limits,
    })];
    lines.extend(
        result
            .trajectory
            .records
            .iter()
            .cloned()
            .map(LogRecord::Step),
    );
    lines.push(LogRecord::Trailer(LogTrailer {
        termination: result.termination(),
        error: result.trajectory.error.clone(),
        reward: result.reward.clone(),
    }));
    let mut out = String::new();
    for l in lines {
        out.push_str(&serde_json::to_string(&l).expect("log records serialize"));
        out.push('\n');
    }
    out
}

pub fn read_trajectory_log(text: &str) -> Result<Vec<LogRecord>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

/// Removes fields that legitimately differ between two runs of one episode:
/// `wall_time` (timing) and `session_id` (a fresh random token per session).
pub fn strip_volatile(log: &str) -> String {
    let mut out = String::new();
    for line in log.lines().filter(|l| !l.trim().is_empty()) {
        let mut v: Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(_) => {
                out.push_str(line);
                out.push('\n');
                continue;
            }
        };
        if let Some(obj) = v.as_object_mut() {
            obj.remove("wall_time");
            obj.remove("session_id");
        }
        out.push_str(&v.to_string());
        out.push('\n');
    }
    out
}
