//! Blocking HTTP client for the service, and an [`Environment`] over it.

use std::time::Duration;

use idegym_core::action::{render_command, ActionSequence};
use idegym_core::agents::tools::{ToolCall, ToolError, ToolResult};
use idegym_core::harness::RewardReport;
use idegym_core::observation::Observation;
use idegym_core::runtime::{EnvError, Environment, SessionError, StepOutcome};
use reqwest::blocking::{Client, RequestBuilder, Response};
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use thiserror::Error;

use crate::api::{
    ApiErrorBody, CreateSession, SessionInfo, TaskSummary, DIGEST_HEADER, IDEMPOTENCY_HEADER,
    REGISTRY_HEADER,
};

const LIFECYCLE_ATTEMPTS: usize = 3;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("service unreachable: {0}")]
    Transport(String),
    #[error("{status}: {}", body.message)]
    Api {
        status: StatusCode,
        body: ApiErrorBody,
    },
    #[error("unexpected response: {0}")]
    Decode(String),
}

impl ClientError {
    /// The error as the in-process environment would have reported it.
    pub fn into_env_error(self) -> EnvError {
        match self {
            ClientError::Api { body, .. } => {
                let tagged = json!({"error": body.error, "detail": body.detail});
                let decoded = match body.kind.as_str() {
                    "session" => serde_json::from_value::<SessionError>(tagged)
                        .ok()
                        .map(EnvError::Session),
                    "tool" => serde_json::from_value::<ToolError>(tagged)
                        .ok()
                        .map(EnvError::Tool),
                    _ => None,
                };
                decoded.unwrap_or(EnvError::Transport(body.message))
            }
            other => EnvError::Transport(other.to_string()),
        }
    }
}

/// PNG observation as served by `GET /sessions/{id}/observation`.
#[derive(Debug, Clone)]
pub struct PngObservation {
    pub png: Vec<u8>,
    pub digest: String,
    pub registry: Option<Value>,
}

#[derive(Debug, Clone)]
pub struct HttpClient {
    base: String,
    http: Client,
}

impl HttpClient {
    pub fn new(base: impl Into<String>) -> Self {
        let http = Client::builder()
            .timeout(Duration::from_secs(600))
            .build()
            .expect("http client builds");
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            http,
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    fn send(rb: RequestBuilder) -> Result<Response, ClientError> {
        let resp = rb
            .send()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let text = resp
            .text()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        let body = serde_json::from_str(&text).unwrap_or_else(|_| ApiErrorBody {
            kind: "api".into(),
            error: "unstructured".into(),
            detail: Value::Null,
            message: text,
        });
        Err(ClientError::Api { status, body })
    }

    fn json<T: DeserializeOwned>(rb: RequestBuilder) -> Result<T, ClientError> {
        Self::send(rb)?
            .json()
            .map_err(|e| ClientError::Decode(e.to_string()))
    }

    /// Lifecycle calls carry a fresh idempotency key and are retried on
    /// transport failures; the service answers repeats from its cache.
    fn lifecycle<T: DeserializeOwned>(
        &self,
        build: impl Fn() -> RequestBuilder,
    ) -> Result<T, ClientError> {
        let key = format!("{:032x}", rand::random::<u128>());
        let mut last = None;
        for _ in 0..LIFECYCLE_ATTEMPTS {
            match Self::json(build().header(IDEMPOTENCY_HEADER, &key)) {
                Err(ClientError::Transport(e)) => last = Some(ClientError::Transport(e)),
                other => return other,
            }
        }
        Err(last.expect("at least one attempt"))
    }

    pub fn health(&self) -> Result<Value, ClientError> {
        Self::json(self.http.get(self.url("/health")))
    }

    pub fn tasks(&self) -> Result<Vec<TaskSummary>, ClientError> {
        Self::json(self.http.get(self.url("/tasks")))
    }

    pub fn create(&self, req: &CreateSession) -> Result<SessionInfo, ClientError> {
        self.lifecycle(|| self.http.post(self.url("/sessions")).json(req))
    }

    pub fn session(&self, id: &str) -> Result<SessionInfo, ClientError> {
        Self::json(self.http.get(self.url(&format!("/sessions/{id}"))))
    }

    pub fn delete(&self, id: &str) -> Result<(), ClientError> {
        self.lifecycle::<Value>(|| self.http.delete(self.url(&format!("/sessions/{id}"))))
            .map(|_| ())
    }

    /// Not retried: a duplicated keystroke would corrupt the episode.
    pub fn step(&self, id: &str, command: &str) -> Result<StepOutcome, ClientError> {
        Self::json(
            self.http
                .post(self.url(&format!("/sessions/{id}/step")))
                .json(&json!({ "command": command })),
        )
    }

    pub fn tool(&self, id: &str, call: &ToolCall) -> Result<ToolResult, ClientError> {
        Self::json(
            self.http
                .post(self.url(&format!("/sessions/{id}/tool")))
                .json(call),
        )
    }

    pub fn observe(&self, id: &str, dom: bool, som: bool) -> Result<Observation, ClientError> {
        Self::json(
            self.http
                .get(self.url(&format!("/sessions/{id}/observation")))
                .query(&[("dom", dom), ("som", som)])
                .query(&[("format", "json")]),
        )
    }

    pub fn observe_png(
        &self,
        id: &str,
        dom: bool,
        som: bool,
    ) -> Result<PngObservation, ClientError> {
        let resp = Self::send(
            self.http
                .get(self.url(&format!("/sessions/{id}/observation")))
                .query(&[("dom", dom), ("som", som)]),
        )?;
        let header = |name: &str| {
            resp.headers()
                .get(name)
                .and_then(|v| v.to_str().ok())
                .map(str::to_string)
        };
        let digest = header(DIGEST_HEADER).unwrap_or_default();
        let registry = header(REGISTRY_HEADER)
            .map(|r| serde_json::from_str(&r).map_err(|e| ClientError::Decode(e.to_string())))
            .transpose()?;
        let png = resp
            .bytes()
            .map_err(|e| ClientError::Transport(e.to_string()))?
            .to_vec();
        Ok(PngObservation {
            png,
            digest,
            registry,
        })
    }

    pub fn pause(&self, id: &str) -> Result<SessionInfo, ClientError> {
        self.lifecycle(|| self.http.post(self.url(&format!("/sessions/{id}/pause"))))
    }

    pub fn resume(&self, id: &str) -> Result<SessionInfo, ClientError> {
        self.lifecycle(|| self.http.post(self.url(&format!("/sessions/{id}/resume"))))
    }

    pub fn terminate(&self, id: &str) -> Result<SessionInfo, ClientError> {
        self.lifecycle(|| {
            self.http
                .post(self.url(&format!("/sessions/{id}/terminate")))
        })
    }

    pub fn checkpoint(&self, id: &str) -> Result<String, ClientError> {
        let v: Value = self.lifecycle(|| {
            self.http
                .post(self.url(&format!("/sessions/{id}/checkpoint")))
        })?;
        v["checkpoint_id"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ClientError::Decode("missing checkpoint_id".into()))
    }

    pub fn restore(&self, checkpoint_id: &str) -> Result<SessionInfo, ClientError> {
        self.lifecycle(|| {
            self.http
                .post(self.url("/restore"))
                .json(&json!({ "checkpoint_id": checkpoint_id }))
        })
    }

    pub fn reward(&self, id: &str) -> Result<RewardReport, ClientError> {
        Self::json(self.http.post(self.url(&format!("/sessions/{id}/reward"))))
    }
}

/// A session behind the service, driven by the same episode loop as a local
/// one. Actions travel as rendered command text.
pub struct HttpEnv {
    client: HttpClient,
    id: String,
}

impl HttpEnv {
    pub fn new(client: HttpClient, session_id: String) -> Self {
        Self {
            client,
            id: session_id,
        }
    }

    pub fn client(&self) -> &HttpClient {
        &self.client
    }
}

impl Environment for HttpEnv {
    fn session_id(&self) -> String {
        self.id.clone()
    }

    fn observe(&mut self, dom: bool, som: bool) -> Result<Observation, EnvError> {
        self.client
            .observe(&self.id, dom, som)
            .map_err(ClientError::into_env_error)
    }

    fn step(&mut self, seq: &ActionSequence) -> Result<StepOutcome, EnvError> {
        self.client
            .step(&self.id, &render_command(seq))
            .map_err(ClientError::into_env_error)
    }

    fn tool(&mut self, call: &ToolCall) -> Result<ToolResult, EnvError> {
        self.client
            .tool(&self.id, call)
            .map_err(|e| match e.into_env_error() {
                EnvError::Session(s) => EnvError::Tool(ToolError::Session(s)),
                other => other,
            })
    }

    fn terminate(&mut self) -> Result<(), EnvError> {
        self.client
            .terminate(&self.id)
            .map(|_| ())
            .map_err(ClientError::into_env_error)
    }

    fn reward(&mut self) -> Result<RewardReport, EnvError> {
        self.client
            .reward(&self.id)
            .map_err(ClientError::into_env_error)
    }
}
