//! Model clients: the request/response shapes, a deterministic replay client, a
//! recorder that fills in prompt digests, and an echo stub.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::DigestBuilder;

use super::tools::{ToolCall, ToolSchema};
use super::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageRole {
    System,
    User,
    Assistant,
}

impl MessageRole {
    fn as_str(self) -> &'static str {
        match self {
            MessageRole::System => "system",
            MessageRole::User => "user",
            MessageRole::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: MessageRole,
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<Image>,
}

impl Message {
    pub fn new(role: MessageRole, text: impl Into<String>) -> Self {
        Self {
            role,
            text: text.into(),
            images: Vec::new(),
        }
    }

    pub fn with_images(mut self, images: Vec<Image>) -> Self {
        self.images = images;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub temperature: f64,
    pub max_turn_tokens: u32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            temperature: 0.3,
            max_turn_tokens: 4096,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRequest {
    pub messages: Vec<Message>,
    pub tools: Vec<ToolSchema>,
    pub config: ModelConfig,
}

impl ModelRequest {
    /// Digest of everything the model would see. Images contribute their digests.
    pub fn digest(&self) -> String {
        let mut b = DigestBuilder::new()
            .str(super::prompts::TEMPLATE_VERSION)
            .part(&self.config.temperature.to_bits().to_be_bytes())
            .part(&self.config.max_turn_tokens.to_be_bytes());
        for m in &self.messages {
            b = b.str(m.role.as_str()).str(&m.text);
            for img in &m.images {
                b = b.str(&img.media_type).str(&img.digest);
            }
        }
        b.str(&serde_json::to_string(&self.tools).expect("tool schemas serialize"))
            .finish()
    }

    pub fn image_count(&self) -> usize {
        self.messages.iter().map(|m| m.images.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call: Option<ToolCall>,
}

impl ModelResponse {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            tool_call: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("replay script has no response for turn {turn}")]
    ScriptExhausted { turn: u32 },
    #[error("prompt digest mismatch at turn {turn}: expected {expected}, got {actual}")]
    PromptDigestMismatch {
        turn: u32,
        expected: String,
        actual: String,
    },
    #[error("model transport: {0}")]
    Transport(String),
}

pub trait ModelClient: Send {
    fn send(&mut self, request: &ModelRequest) -> Result<ModelResponse, ModelError>;
}

impl<M: ModelClient + ?Sized> ModelClient for Box<M> {
    fn send(&mut self, request: &ModelRequest) -> Result<ModelResponse, ModelError> {
        (**self).send(request)
    }
}

/// One scripted turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub turn: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_prompt_digest: Option<String>,
    pub response_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call: Option<ToolCall>,
}

impl ReplayEntry {
    pub fn text(turn: u32, response_text: impl Into<String>) -> Self {
        Self {
            turn,
            expected_prompt_digest: None,
            response_text: response_text.into(),
            tool_call: None,
        }
    }

    pub fn tool(turn: u32, name: &str, args: serde_json::Value) -> Self {
        Self {
            turn,
            expected_prompt_digest: None,
            response_text: String::new(),
            tool_call: Some(ToolCall {
                name: name.into(),
                args,
            }),
        }
    }
}

/// Replay tape: a JSON list of [`ReplayEntry`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReplayScript {
    pub entries: Vec<ReplayEntry>,
}

impl ReplayScript {
    pub fn new(entries: Vec<ReplayEntry>) -> Self {
        Self { entries }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("replay scripts serialize")
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    fn entry(&self, turn: u32) -> Option<&ReplayEntry> {
        self.entries.iter().find(|e| e.turn == turn)
    }
}

/// Returns scripted responses by turn index and checks prompt digests when the
/// script declares them.
#[derive(Debug, Clone)]
pub struct ReplayModel {
    script: ReplayScript,
    turn: u32,
}

impl ReplayModel {
    pub fn new(script: ReplayScript) -> Self {
        Self { script, turn: 0 }
    }
}

impl ModelClient for ReplayModel {
    fn send(&mut self, request: &ModelRequest) -> Result<ModelResponse, ModelError> {
        let turn = self.turn;
        let entry = self
            .script
            .entry(turn)
            .ok_or(ModelError::ScriptExhausted { turn })?;
        if let Some(expected) = &entry.expected_prompt_digest {
            let actual = request.digest();
            if &actual != expected {
                return Err(ModelError::PromptDigestMismatch {
                    turn,
                    expected: expected.clone(),
                    actual,
                });
            }
        }
        self.turn += 1;
        Ok(ModelResponse {
            text: entry.response_text.clone(),
            tool_call: entry.tool_call.clone(),
        })
    }
}

/// Wraps a client and records each turn with its prompt digest, producing a tape
/// that a [`ReplayModel`] can verify against.
#[derive(Debug)]
pub struct RecordingModel<M> {
    inner: M,
    recorded: Vec<ReplayEntry>,
    images_sent: usize,
}

impl<M: ModelClient> RecordingModel<M> {
    pub fn new(inner: M) -> Self {
        Self {
            inner,
            recorded: Vec::new(),
            images_sent: 0,
        }
    }

    pub fn script(&self) -> ReplayScript {
        ReplayScript::new(self.recorded.clone())
    }

    /// Images across all requests so far.
    pub fn images_sent(&self) -> usize {
        self.images_sent
    }

    pub fn requests(&self) -> usize {
        self.recorded.len()
    }
}

impl<M: ModelClient> ModelClient for RecordingModel<M> {
    fn send(&mut self, request: &ModelRequest) -> Result<ModelResponse, ModelError> {
        let response = self.inner.send(request)?;
        self.images_sent += request.image_count();
        self.recorded.push(ReplayEntry {
            turn: self.recorded.len() as u32,
            expected_prompt_digest: Some(request.digest()),
            response_text: response.text.clone(),
            tool_call: response.tool_call.clone(),
        });
        Ok(response)
    }
}

/// Stub that stops immediately, echoing the last user message.
#[derive(Debug, Clone, Default)]
pub struct EchoModel;

impl ModelClient for EchoModel {
    fn send(&mut self, request: &ModelRequest) -> Result<ModelResponse, ModelError> {
        let last = request
            .messages
            .iter()
            .rev()
            .find(|m| m.role == MessageRole::User)
            .map(|m| m.text.lines().next().unwrap_or(""))
            .unwrap_or("");
        Ok(ModelResponse::text(format!("STOP {last}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(text: &str) -> ModelRequest {
        ModelRequest {
            messages: vec![Message::new(MessageRole::User, text)],
            tools: Vec::new(),
            config: ModelConfig::default(),
        }
    }

    #[test]
    fn default_temperature() {
        assert_eq!(ModelConfig::default().temperature, 0.3);
    }

    #[test]
    fn replay_by_turn_with_digest_check() {
        let digest = request("a").digest();
        let script = ReplayScript::new(vec![
            ReplayEntry {
                expected_prompt_digest: Some(digest),
                ..ReplayEntry::text(0, "one")
            },
            ReplayEntry::text(1, "two"),
        ]);
        let mut m = ReplayModel::new(script.clone());
        assert_eq!(m.send(&request("a")).unwrap().text, "one");
        assert_eq!(m.send(&request("anything")).unwrap().text, "two");
        assert_eq!(
            m.send(&request("x")).unwrap_err(),
            ModelError::ScriptExhausted { turn: 2 }
        );
        let mut m = ReplayModel::new(script);
        assert!(matches!(
            m.send(&request("b")),
            Err(ModelError::PromptDigestMismatch { turn: 0, .. })
        ));
    }

    #[test]
    fn recording_fills_digests() {
        let mut rec = RecordingModel::new(EchoModel);
        rec.send(&request("hello there")).unwrap();
        let tape = rec.script();
        assert_eq!(tape.entries[0].response_text, "STOP hello there");
        let mut replay = ReplayModel::new(ReplayScript::from_json(&tape.to_json()).unwrap());
        assert!(replay.send(&request("hello there")).is_ok());
    }

    #[test]
    fn digest_covers_images_and_config() {
        let a = request("x");
        let mut b = a.clone();
        b.messages[0]
            .images
            .push(Image::new("image/png", vec![1, 2, 3]));
        assert_ne!(a.digest(), b.digest());
        let mut c = a.clone();
        c.config.temperature = 0.0;
        assert_ne!(a.digest(), c.digest());
    }
}
