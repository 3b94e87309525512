//! Agent scaffolds: model clients, prompt templates, the three agent designs and
//! the tool registry.

pub mod model;
mod policies;
pub mod prompts;
pub mod tools;

use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;
use crate::observation::{Observation, Screenshot};

pub use model::{
    EchoModel, Message, MessageRole, ModelClient, ModelConfig, ModelError, ModelRequest,
    ModelResponse, RecordingModel, ReplayEntry, ReplayModel, ReplayScript,
};
pub use policies::{parse_cua_response, PureCuaPolicy, TextSwePolicy, ToolsCuaPolicy};
pub use tools::{ToolCall, ToolError, ToolRegistry, ToolResult, ToolSchema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentDesign {
    /// Screenshot every turn, keyboard/mouse only, optional Set-of-Marks.
    PureCua,
    /// Keyboard/mouse plus file and bash tools; screenshots on request.
    ToolsCua,
    /// Bash only, no screenshots.
    TextSwe,
}

impl AgentDesign {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentDesign::PureCua => "pure-cua",
            AgentDesign::ToolsCua => "tools-cua",
            AgentDesign::TextSwe => "text-swe",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pure-cua" => Some(AgentDesign::PureCua),
            "tools-cua" => Some(AgentDesign::ToolsCua),
            "text-swe" => Some(AgentDesign::TextSwe),
            _ => None,
        }
    }
}

/// What a policy decided on one turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentAction {
    GuiCommand {
        command: String,
    },
    ToolCall {
        name: String,
        args: serde_json::Value,
    },
    ScreenshotRequest,
    Stop {
        final_message: String,
    },
}

/// An image handed to the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Image {
    pub media_type: String,
    pub digest: String,
    #[serde(with = "crate::serde_b64")]
    pub bytes: Vec<u8>,
}

impl Image {
    pub fn new(media_type: impl Into<String>, bytes: Vec<u8>) -> Self {
        Self {
            media_type: media_type.into(),
            digest: sha256_hex(&bytes),
            bytes,
        }
    }

    pub fn from_screenshot(s: &Screenshot) -> Self {
        Self {
            media_type: "image/png".into(),
            digest: s.digest.clone(),
            bytes: s.png.clone(),
        }
    }
}

/// Everything the loop hands a policy for one turn.
#[derive(Debug, Clone, Copy)]
pub struct TurnInput<'a> {
    /// Zero-based.
    pub turn: u32,
    pub max_steps: u32,
    pub instruction: &'a str,
    /// Observation captured for this turn: every turn for screenshot-driven
    /// designs, after a screenshot request otherwise.
    pub observation: Option<&'a Observation>,
    /// Execution result of the previous turn.
    pub last_result: Option<&'a str>,
    /// Task attachments declared as images.
    pub attachments: &'a [Image],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObservationRequest {
    pub dom: bool,
    pub som: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub response_text: String,
    /// `Err` carries the reason the response could not be turned into an action.
    pub action: Result<AgentAction, String>,
    pub images_sent: usize,
}

pub trait AgentPolicy: Send {
    fn design(&self) -> AgentDesign;

    /// Observation to capture before every turn, if the design wants one.
    fn wants_observation(&self) -> Option<ObservationRequest>;

    /// Whether a tool of this name was offered to the model.
    fn offers_tool(&self, name: &str) -> bool;

    fn decide(
        &mut self,
        input: &TurnInput<'_>,
        model: &mut dyn ModelClient,
    ) -> Result<Decision, ModelError>;
}

/// Policy for a design. `assisted` adds the dataset's assisted tools for
/// tool-using designs; `som` enables Set-of-Marks for the pure design.
pub fn build_policy(
    design: AgentDesign,
    dataset: Option<&str>,
    assisted: bool,
    som: bool,
) -> Box<dyn AgentPolicy> {
    match design {
        AgentDesign::PureCua => Box::new(PureCuaPolicy::new(som)),
        AgentDesign::ToolsCua => {
            let registry = if assisted {
                ToolRegistry::for_dataset(dataset)
            } else {
                ToolRegistry::base()
            };
            Box::new(ToolsCuaPolicy::new(registry))
        }
        AgentDesign::TextSwe => Box::new(TextSwePolicy::new()),
    }
}
