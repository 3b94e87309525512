//! The three agent designs.

use serde_json::json;

use crate::action::{parse_element_action, render_command, resolve_element_action};
use crate::observation::{ElementRegistry, Observation};

use super::model::{Message, MessageRole, ModelClient, ModelConfig, ModelError, ModelRequest};
use super::prompts;
use super::tools::{ToolRegistry, ToolSchema};
use super::{
    AgentAction, AgentDesign, AgentPolicy, Decision, Image, ObservationRequest, TurnInput,
};

const STOP_TOKEN: &str = "STOP";

/// Text after a line-initial `STOP` outside code fences.
fn find_stop(text: &str) -> Option<String> {
    let mut in_fence = false;
    for line in text.lines() {
        let t = line.trim_start();
        if t.starts_with("```") {
            in_fence = !in_fence;
            continue;
        }
        if in_fence {
            continue;
        }
        if let Some(rest) = t.strip_prefix(STOP_TOKEN) {
            if rest
                .chars()
                .next()
                .is_none_or(|c| !c.is_alphanumeric() && c != '_')
            {
                let rest = rest.trim_start_matches([':', '.', ',', '!', '-']);
                return Some(rest.trim().to_string());
            }
        }
    }
    None
}

/// Content of the first fenced code block.
fn first_block(text: &str) -> Option<String> {
    let mut lines = text.lines();
    while let Some(line) = lines.next() {
        if line.trim_start().starts_with("```") {
            let mut body = Vec::new();
            for l in lines.by_ref() {
                if l.trim_start().starts_with("```") {
                    return Some(body.join("\n"));
                }
                body.push(l);
            }
            // Unterminated fence: take the rest.
            return Some(body.join("\n"));
        }
    }
    None
}

/// `xdotool …` lines of a block joined into one command, or `None` when the
/// block is not made of xdotool lines.
fn xdotool_block(block: &str) -> Option<String> {
    let lines: Vec<&str> = block
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect();
    if lines.is_empty() || !lines.iter().all(|l| l.starts_with("xdotool")) {
        return None;
    }
    Some(lines.join(" && "))
}

/// Parsing rule for screen-driven designs: a line-initial `STOP` wins; otherwise
/// the first fenced block must hold an xdotool command or, when marks are
/// available, an element action.
pub fn parse_cua_response(
    text: &str,
    registry: Option<&ElementRegistry>,
) -> Result<AgentAction, String> {
    if let Some(final_message) = find_stop(text) {
        return Ok(AgentAction::Stop { final_message });
    }
    let Some(block) = first_block(text) else {
        return Err("no command block and no STOP line".into());
    };
    if let Some(command) = xdotool_block(&block) {
        return Ok(AgentAction::GuiCommand { command });
    }
    let Some(registry) = registry else {
        return Err("command block is not an xdotool command".into());
    };
    let ea = parse_element_action(block.trim())
        .map_err(|e| format!("command block is neither xdotool nor an element action: {e}"))?;
    let seq = resolve_element_action(&ea, registry).map_err(|e| e.to_string())?;
    Ok(AgentAction::GuiCommand {
        command: render_command(&seq),
    })
}

/// Message history. Images are sent with the turn that carries them and dropped
/// from the stored history afterwards.
#[derive(Debug, Clone)]
struct History {
    messages: Vec<Message>,
}

impl History {
    fn new(system: String) -> Self {
        Self {
            messages: vec![Message::new(MessageRole::System, system)],
        }
    }

    fn exchange(
        &mut self,
        user: Message,
        tools: &[ToolSchema],
        model: &mut dyn ModelClient,
    ) -> Result<(super::ModelResponse, usize), ModelError> {
        let images = user.images.len();
        let mut messages = self.messages.clone();
        messages.push(user.clone());
        let request = ModelRequest {
            messages,
            tools: tools.to_vec(),
            config: ModelConfig::default(),
        };
        let response = model.send(&request)?;
        self.messages.push(Message {
            images: Vec::new(),
            ..user
        });
        let mut said = response.text.clone();
        if let Some(call) = &response.tool_call {
            if !said.is_empty() {
                said.push('\n');
            }
            said.push_str(&format!("[tool call] {} {}", call.name, call.args));
        }
        self.messages
            .push(Message::new(MessageRole::Assistant, said));
        Ok((response, images))
    }
}

fn response_text(r: &super::ModelResponse) -> String {
    match &r.tool_call {
        None => r.text.clone(),
        Some(c) if r.text.is_empty() => format!("[tool call] {} {}", c.name, c.args),
        Some(c) => format!("{}\n[tool call] {} {}", r.text, c.name, c.args),
    }
}

/// Screenshot every turn; acts only through keyboard/mouse commands.
#[derive(Debug, Clone)]
pub struct PureCuaPolicy {
    som: bool,
    history: History,
}

impl PureCuaPolicy {
    pub fn new(som: bool) -> Self {
        Self {
            som,
            history: History::new(prompts::pure_cua_system(som)),
        }
    }
}

impl AgentPolicy for PureCuaPolicy {
    fn design(&self) -> AgentDesign {
        AgentDesign::PureCua
    }

    fn wants_observation(&self) -> Option<ObservationRequest> {
        Some(ObservationRequest {
            dom: self.som,
            som: self.som,
        })
    }

    fn offers_tool(&self, _name: &str) -> bool {
        false
    }

    fn decide(
        &mut self,
        input: &TurnInput<'_>,
        model: &mut dyn ModelClient,
    ) -> Result<Decision, ModelError> {
        let obs: Option<&Observation> = input.observation;
        let registry = obs.and_then(|o| o.som.as_ref()).map(|s| &s.registry);
        let marks =
            registry.map(|r| format!("Interactable elements:\n{}", prompts::render_registry(r)));
        let text = prompts::turn_text(
            input.turn,
            input.max_steps,
            input.instruction,
            input.last_result,
            marks.as_deref(),
        );
        let mut images = Vec::new();
        if input.turn == 0 {
            images.extend(input.attachments.iter().cloned());
        }
        if let Some(o) = obs {
            images.push(Image::from_screenshot(&o.screenshot));
            if let Some(som) = &o.som {
                images.push(Image::from_screenshot(&som.marked));
            }
        }
        let user = Message::new(MessageRole::User, text).with_images(images);
        let (response, images_sent) = self.history.exchange(user, &[], model)?;
        let action = if response.tool_call.is_some() {
            Err("this agent has no tools; reply with a command block".into())
        } else {
            parse_cua_response(&response.text, registry)
        };
        Ok(Decision {
            response_text: response_text(&response),
            action,
            images_sent,
        })
    }
}

fn finish_schema() -> ToolSchema {
    ToolSchema::new("finish", "End the episode.").param("message", "string", false, "Final summary")
}

/// Keyboard/mouse plus structured tools; screenshots only on request.
#[derive(Debug, Clone)]
pub struct ToolsCuaPolicy {
    registry: ToolRegistry,
    schemas: Vec<ToolSchema>,
    history: History,
}

impl ToolsCuaPolicy {
    pub fn new(registry: ToolRegistry) -> Self {
        let mut schemas = registry.schemas();
        schemas.push(finish_schema());
        Self {
            registry,
            schemas,
            history: History::new(prompts::tools_cua_system().to_string()),
        }
    }
}

impl AgentPolicy for ToolsCuaPolicy {
    fn design(&self) -> AgentDesign {
        AgentDesign::ToolsCua
    }

    fn wants_observation(&self) -> Option<ObservationRequest> {
        None
    }

    fn offers_tool(&self, name: &str) -> bool {
        self.registry.contains(name)
    }

    fn decide(
        &mut self,
        input: &TurnInput<'_>,
        model: &mut dyn ModelClient,
    ) -> Result<Decision, ModelError> {
        let text = prompts::turn_text(
            input.turn,
            input.max_steps,
            input.instruction,
            input.last_result,
            None,
        );
        let mut images = Vec::new();
        if input.turn == 0 {
            images.extend(input.attachments.iter().cloned());
        }
        if let Some(o) = input.observation {
            images.push(Image::from_screenshot(&o.screenshot));
        }
        let user = Message::new(MessageRole::User, text).with_images(images);
        let (response, images_sent) = self.history.exchange(user, &self.schemas, model)?;
        let action = match &response.tool_call {
            Some(call) if call.name == "screenshot" => Ok(AgentAction::ScreenshotRequest),
            Some(call) if call.name == "finish" => Ok(AgentAction::Stop {
                final_message: call
                    .args
                    .get("message")
                    .and_then(|m| m.as_str())
                    .unwrap_or("")
                    .to_string(),
            }),
            Some(call) => Ok(AgentAction::ToolCall {
                name: call.name.clone(),
                args: call.args.clone(),
            }),
            None => parse_cua_response(&response.text, None),
        };
        Ok(Decision {
            response_text: response_text(&response),
            action,
            images_sent,
        })
    }
}

/// Shell only. Image attachments are inlined in the first prompt.
#[derive(Debug, Clone)]
pub struct TextSwePolicy {
    schemas: Vec<ToolSchema>,
    history: History,
}

impl TextSwePolicy {
    pub fn new() -> Self {
        Self {
            schemas: vec![ToolRegistry::base()
                .schema("bash")
                .cloned()
                .expect("bash is a base tool")],
            history: History::new(prompts::text_swe_system().to_string()),
        }
    }
}

impl Default for TextSwePolicy {
    fn default() -> Self {
        Self::new()
    }
}

impl AgentPolicy for TextSwePolicy {
    fn design(&self) -> AgentDesign {
        AgentDesign::TextSwe
    }

    fn wants_observation(&self) -> Option<ObservationRequest> {
        None
    }

    fn offers_tool(&self, name: &str) -> bool {
        name == "bash"
    }

    fn decide(
        &mut self,
        input: &TurnInput<'_>,
        model: &mut dyn ModelClient,
    ) -> Result<Decision, ModelError> {
        let text = prompts::turn_text(
            input.turn,
            input.max_steps,
            input.instruction,
            input.last_result,
            None,
        );
        let images = if input.turn == 0 {
            input.attachments.to_vec()
        } else {
            Vec::new()
        };
        let user = Message::new(MessageRole::User, text).with_images(images);
        let (response, images_sent) = self.history.exchange(user, &self.schemas, model)?;
        let action = match &response.tool_call {
            Some(call) => Ok(AgentAction::ToolCall {
                name: call.name.clone(),
                args: call.args.clone(),
            }),
            None => parse_text_response(&response.text),
        };
        Ok(Decision {
            response_text: response_text(&response),
            action,
            images_sent,
        })
    }
}

fn parse_text_response(text: &str) -> Result<AgentAction, String> {
    if let Some(final_message) = find_stop(text) {
        return Ok(AgentAction::Stop { final_message });
    }
    let Some(block) = first_block(text) else {
        return Err("no bash block and no STOP line".into());
    };
    let cmd = block.trim();
    if cmd.is_empty() {
        return Err("empty bash block".into());
    }
    if cmd.starts_with("xdotool") {
        return Err("GUI commands are not available to this agent".into());
    }
    Ok(AgentAction::ToolCall {
        name: "bash".into(),
        args: json!({ "cmd": cmd }),
    })
}
