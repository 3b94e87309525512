//! The turn loop: observe, ask the policy, execute, record.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::action::{parse_command, ActionSequence};
use crate::agents::tools::ToolCall;
use crate::agents::{AgentAction, AgentDesign, AgentPolicy, Image, ModelClient, TurnInput};
use crate::harness::RewardReport;
use crate::observation::Observation;

use super::{interaction_stats, Clock, EnvError, Environment, EpisodeLimits, InteractionStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    StopCommand,
    StepCap,
    Timeout,
    Error,
}

/// What the agent did on one turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RecordedAction {
    Gui {
        command: String,
        actions: ActionSequence,
    },
    Tool {
        name: String,
        args: serde_json::Value,
    },
    Screenshot,
    Stop {
        final_message: String,
    },
    /// Unparseable output or a GUI command that is not valid action text.
    Failed {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub index: u32,
    /// Digest of the observation captured for this turn, if one was.
    pub observation_digest: Option<String>,
    pub agent_output_text: String,
    pub action: RecordedAction,
    pub execution_result: String,
    /// Seconds spent on the turn.
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub records: Vec<StepRecord>,
    pub termination: Option<Termination>,
    /// Cause of an `Error` termination.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub session_id: String,
    pub task_id: Option<String>,
    pub agent_design: AgentDesign,
    pub limits: EpisodeLimits,
    pub trajectory: Trajectory,
    pub reward: RewardReport,
    /// `None` when the episode ended before its first turn.
    pub interaction_stats: Option<InteractionStats>,
}

impl EpisodeResult {
    pub fn termination(&self) -> Termination {
        self.trajectory.termination.unwrap_or(Termination::Error)
    }
}

pub struct EpisodeOptions {
    pub limits: EpisodeLimits,
    pub task_id: Option<String>,
    pub instruction: String,
    pub attachments: Vec<Image>,
    pub clock: Arc<dyn Clock>,
}

impl EpisodeOptions {
    pub fn new(
        limits: EpisodeLimits,
        instruction: impl Into<String>,
        clock: Arc<dyn Clock>,
    ) -> Self {
        Self {
            limits,
            task_id: None,
            instruction: instruction.into(),
            attachments: Vec::new(),
            clock,
        }
    }
}

const IGNORED_NOTE: &str = "ok (no element under the pointer; some input was ignored)";

/// Runs one episode to termination, then evaluates the final state.
///
/// Every model response is one turn and one record, including the stop turn,
/// failed parses and screenshot requests. The loop ends on a stop command, when
/// `limits.max_steps` turns have been recorded, when the wall-clock budget is
/// spent, or on an unrecoverable environment or model error. A turn that
/// overruns `per_step_timeout` is recorded as timed out and the loop continues.
pub fn run_episode(
    env: &mut dyn Environment,
    policy: &mut dyn AgentPolicy,
    model: &mut dyn ModelClient,
    opts: &EpisodeOptions,
) -> EpisodeResult {
    let clock = opts.clock.as_ref();
    let limits = opts.limits;
    let start = clock.now();
    let mut trajectory = Trajectory::default();
    let mut last_result: Option<String> = None;
    let mut pending: Option<Observation> = None;

    let termination = loop {
        if trajectory.records.len() as u32 >= limits.max_steps {
            break Termination::StepCap;
        }
        if (clock.now() - start).as_secs_f64() > limits.wall_clock_timeout {
            break Termination::Timeout;
        }
        let turn_start = clock.now();
        let index = trajectory.records.len() as u32;

        let observation = match policy.wants_observation() {
            Some(req) => match env.observe(req.dom, req.som) {
                Ok(o) => Some(o),
                Err(e) => {
                    trajectory.error = Some(e.to_string());
                    break Termination::Error;
                }
            },
            None => pending.take(),
        };
        let input = TurnInput {
            turn: index,
            max_steps: limits.max_steps,
            instruction: &opts.instruction,
            observation: observation.as_ref(),
            last_result: last_result.as_deref(),
            attachments: &opts.attachments,
        };
        let decision = match policy.decide(&input, model) {
            Ok(d) => d,
            Err(e) => {
                trajectory.error = Some(format!("model: {e}"));
                break Termination::Error;
            }
        };

        let mut fatal: Option<EnvError> = None;
        let mut stop = false;
        let (action, mut result) = match decision.action {
            Err(reason) => (
                RecordedAction::Failed {
                    reason: reason.clone(),
                },
                format!("error: could not parse response: {reason}"),
            ),
            Ok(AgentAction::GuiCommand { command }) => match parse_command(&command) {
                Err(e) => (
                    RecordedAction::Failed {
                        reason: format!("invalid command: {e}"),
                    },
                    format!("error: invalid command: {e}"),
                ),
                Ok(actions) => {
                    let result = match env.step(&actions) {
                        Ok(o) if o.ignored => IGNORED_NOTE.to_string(),
                        Ok(_) => "ok".to_string(),
                        Err(e) => {
                            let msg = format!("error: {e}");
                            if e.is_fatal() {
                                fatal = Some(e);
                            }
                            msg
                        }
                    };
                    (RecordedAction::Gui { command, actions }, result)
                }
            },
            Ok(AgentAction::ToolCall { name, args }) => {
                let call = ToolCall {
                    name: name.clone(),
                    args: args.clone(),
                };
                let result = if !policy.offers_tool(&name) {
                    format!("error: unknown tool {name}")
                } else {
                    match env.tool(&call) {
                        Ok(r) => {
                            if let Some(obs) = r.observation {
                                pending = Some(obs);
                            }
                            r.output
                        }
                        Err(e) => {
                            let msg = format!("error: {e}");
                            if e.is_fatal() {
                                fatal = Some(e);
                            }
                            msg
                        }
                    }
                };
                (RecordedAction::Tool { name, args }, result)
            }
            Ok(AgentAction::ScreenshotRequest) => {
                let result = match env.observe(false, false) {
                    Ok(obs) => {
                        pending = Some(obs);
                        "screenshot captured".to_string()
                    }
                    Err(e) => {
                        let msg = format!("error: {e}");
                        fatal = Some(e);
                        msg
                    }
                };
                (RecordedAction::Screenshot, result)
            }
            Ok(AgentAction::Stop { final_message }) => {
                stop = true;
                (
                    RecordedAction::Stop { final_message },
                    "stopped".to_string(),
                )
            }
        };

        let elapsed = clock.now() - turn_start;
        if elapsed.as_secs_f64() > limits.per_step_timeout {
            result = format!(
                "error: step timed out after {:.1}s (limit {}s); {result}",
                elapsed.as_secs_f64(),
                limits.per_step_timeout
            );
        }
        trajectory.records.push(StepRecord {
            index,
            observation_digest: observation.as_ref().map(Observation::digest),
            agent_output_text: decision.response_text,
            action,
            execution_result: result.clone(),
            wall_time: elapsed.as_secs_f64(),
        });
        last_result = Some(result);
        if let Some(e) = fatal {
            trajectory.error = Some(e.to_string());
            break Termination::Error;
        }
        if stop {
            break Termination::StopCommand;
        }
    };
    trajectory.termination = Some(termination);

    // Terminate before evaluating so nothing can change the final state.
    let _ = env.terminate();
    let reward = env
        .reward()
        .unwrap_or_else(|e| RewardReport::failed(format!("evaluation unavailable: {e}")));
    let interaction_stats = interaction_stats(&trajectory).ok();
    EpisodeResult {
        session_id: env.session_id(),
        task_id: opts.task_id.clone(),
        agent_design: policy.design(),
        limits,
        trajectory,
        reward,
        interaction_stats,
    }
}
