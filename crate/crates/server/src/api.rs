//! HTTP surface over an [`Orchestrator`].
//!
//! Every endpoint shares one listener. Bodies are JSON; observations come back
//! as PNG unless the client asks for JSON. Mutating requests that carry an
//! `Idempotency-Key` header are answered once and replayed verbatim for
//! repeats of the same key, method and path.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::{Arc, Mutex};

use axum::body::{to_bytes, Body, Bytes};
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use idegym_core::action::parse_command;
use idegym_core::agents::tools::{ToolCall, ToolError};
use idegym_core::harness::TaskSpec;
use idegym_core::orchestrator::{Orchestrator, OrchestratorError, SessionConfig};
use idegym_core::runtime::{Environment, SessionError};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";
pub const DIGEST_HEADER: &str = "x-observation-digest";
pub const SCREENSHOT_DIGEST_HEADER: &str = "x-screenshot-digest";
pub const STEP_HEADER: &str = "x-captured-at-step";
pub const REGISTRY_HEADER: &str = "x-som-registry";
const IDEMPOTENCY_CAPACITY: usize = 4096;
const MAX_BODY: usize = 64 << 20;

/// Error body: `kind` says which family `error`/`detail` decode as.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApiErrorBody {
    pub kind: String,
    pub error: String,
    #[serde(default)]
    pub detail: Value,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ApiErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, error: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ApiErrorBody {
                kind: "api".into(),
                error: error.into(),
                detail: Value::Null,
                message: message.into(),
            },
        }
    }

    fn tagged(status: StatusCode, kind: &str, tagged: Value, message: String) -> Self {
        Self {
            status,
            body: ApiErrorBody {
                kind: kind.into(),
                error: tagged["error"].as_str().unwrap_or("unknown").into(),
                detail: tagged.get("detail").cloned().unwrap_or(Value::Null),
                message,
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

fn session_status(e: &SessionError) -> StatusCode {
    match e {
        SessionError::StepCapExceeded(_)
        | SessionError::SessionPaused
        | SessionError::InvalidStatusTransition { .. } => StatusCode::CONFLICT,
        SessionError::SessionTerminated => StatusCode::GONE,
        SessionError::ActionRejected(_) | SessionError::NoTask => StatusCode::UNPROCESSABLE_ENTITY,
        SessionError::BackendUnavailable(_) | SessionError::CaptureFailed(_) => {
            StatusCode::SERVICE_UNAVAILABLE
        }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let v = serde_json::to_value(&e).expect("session errors serialize");
        ApiError::tagged(session_status(&e), "session", v, e.to_string())
    }
}

impl From<ToolError> for ApiError {
    fn from(e: ToolError) -> Self {
        let status = match &e {
            // Session failures keep their own code; the tool wrapper adds nothing.
            ToolError::Session(s) => return s.clone().into(),
            ToolError::UnknownTool(_) | ToolError::FileNotFound(_) => StatusCode::NOT_FOUND,
            ToolError::NotAvailableInBackend(_) => StatusCode::NOT_IMPLEMENTED,
            ToolError::AmbiguousReplace { .. } | ToolError::BadArguments(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
        };
        let v = serde_json::to_value(&e).expect("tool errors serialize");
        ApiError::tagged(status, "tool", v, e.to_string())
    }
}

impl From<OrchestratorError> for ApiError {
    fn from(e: OrchestratorError) -> Self {
        match e {
            OrchestratorError::Session(s) => s.into(),
            OrchestratorError::UnknownSession(_) => {
                ApiError::new(StatusCode::NOT_FOUND, "unknown_session", e.to_string())
            }
            OrchestratorError::UnknownCheckpointId(_) => ApiError::new(
                StatusCode::NOT_FOUND,
                "unknown_checkpoint_id",
                e.to_string(),
            ),
            OrchestratorError::BackendLaunchFailed(_) => ApiError::new(
                StatusCode::SERVICE_UNAVAILABLE,
                "backend_launch_failed",
                e.to_string(),
            ),
            OrchestratorError::Setup(_) => ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "setup_failed",
                e.to_string(),
            ),
            OrchestratorError::Store(_) => ApiError::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                "checkpoint_store",
                e.to_string(),
            ),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// JSON body extractor whose rejections are structured errors.
pub struct JsonBody<T>(pub T);

impl<S, T> axum::extract::FromRequest<S> for JsonBody<T>
where
    T: DeserializeOwned,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(JsonBody(v)),
            Err(e) => Err(bad_body(e)),
        }
    }
}

fn bad_body(e: JsonRejection) -> ApiError {
    ApiError::new(StatusCode::BAD_REQUEST, "malformed_body", e.body_text())
}

/// Tasks the service can materialize, by task id.
#[derive(Debug, Default, Clone)]
pub struct TaskIndex {
    tasks: BTreeMap<String, Arc<TaskSpec>>,
}

impl TaskIndex {
    pub fn new(tasks: Vec<TaskSpec>) -> Self {
        Self {
            tasks: tasks
                .into_iter()
                .map(|t| (t.task_id.clone(), Arc::new(t)))
                .collect(),
        }
    }

    pub fn get(&self, id: &str) -> Option<Arc<TaskSpec>> {
        self.tasks.get(id).cloned()
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }
}

#[derive(Clone)]
struct Cached {
    status: StatusCode,
    content_type: Option<HeaderValue>,
    body: Bytes,
}

/// Answers per idempotency key. Each key has its own async lock so a repeat
/// that arrives while the first request is in flight waits for its answer.
#[derive(Default)]
struct IdempotencyCache {
    slots: HashMap<String, Arc<tokio::sync::Mutex<Option<Cached>>>>,
    order: VecDeque<String>,
}

impl IdempotencyCache {
    fn slot(&mut self, key: &str) -> Arc<tokio::sync::Mutex<Option<Cached>>> {
        if let Some(s) = self.slots.get(key) {
            return s.clone();
        }
        if self.order.len() >= IDEMPOTENCY_CAPACITY {
            if let Some(old) = self.order.pop_front() {
                self.slots.remove(&old);
            }
        }
        let s = Arc::new(tokio::sync::Mutex::new(None));
        self.slots.insert(key.to_string(), s.clone());
        self.order.push_back(key.to_string());
        s
    }
}

#[derive(Clone)]
pub struct AppState {
    pub orch: Arc<Orchestrator>,
    pub tasks: Arc<TaskIndex>,
    idem: Arc<Mutex<IdempotencyCache>>,
}

impl AppState {
    pub fn new(orch: Arc<Orchestrator>, tasks: TaskIndex) -> Self {
        Self {
            orch,
            tasks: Arc::new(tasks),
            idem: Arc::default(),
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/tasks", get(list_tasks))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(session_info).delete(delete_session))
        .route("/sessions/{id}/step", post(step))
        .route("/sessions/{id}/tool", post(tool))
        .route("/sessions/{id}/observation", get(observation))
        .route("/sessions/{id}/pause", post(pause))
        .route("/sessions/{id}/resume", post(resume))
        .route("/sessions/{id}/terminate", post(terminate))
        .route("/sessions/{id}/checkpoint", post(checkpoint))
        .route("/sessions/{id}/reward", post(reward))
        .route("/restore", post(restore))
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .layer(middleware::from_fn_with_state(state.clone(), idempotency))
        .with_state(state)
}

async fn idempotency(State(st): State<AppState>, req: Request, next: Next) -> Response {
    let mutating = matches!(*req.method(), Method::POST | Method::DELETE);
    let key = req
        .headers()
        .get(IDEMPOTENCY_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::to_string);
    let (true, Some(key)) = (mutating, key) else {
        return next.run(req).await;
    };
    let slot_key = format!("{} {} {}", req.method(), req.uri().path(), key);
    let slot = st
        .idem
        .lock()
        .unwrap_or_else(|p| p.into_inner())
        .slot(&slot_key);
    let mut guard = slot.lock().await;
    if let Some(c) = guard.as_ref() {
        return replay(c);
    }
    let resp = next.run(req).await;
    let (parts, body) = resp.into_parts();
    let body = match to_bytes(body, MAX_BODY).await {
        Ok(b) => b,
        Err(e) => {
            return ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
                .into_response()
        }
    };
    let cached = Cached {
        status: parts.status,
        content_type: parts.headers.get(header::CONTENT_TYPE).cloned(),
        body,
    };
    // Server faults are not remembered, so a retry can still succeed.
    if !cached.status.is_server_error() {
        *guard = Some(cached.clone());
    }
    let mut resp = Response::from_parts(parts, Body::from(cached.body));
    resp.headers_mut().remove(header::CONTENT_LENGTH);
    resp
}

fn replay(c: &Cached) -> Response {
    let mut r = Response::new(Body::from(c.body.clone()));
    *r.status_mut() = c.status;
    if let Some(ct) = &c.content_type {
        r.headers_mut().insert(header::CONTENT_TYPE, ct.clone());
    }
    r.headers_mut()
        .insert("idempotent-replay", HeaderValue::from_static("true"));
    r
}

async fn not_found() -> ApiError {
    ApiError::new(
        StatusCode::NOT_FOUND,
        "unknown_endpoint",
        "no such endpoint",
    )
}

async fn method_not_allowed() -> ApiError {
    ApiError::new(
        StatusCode::METHOD_NOT_ALLOWED,
        "method_not_allowed",
        "method not allowed on this endpoint",
    )
}

/// Runs blocking orchestrator work off the async executor.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

fn with_session<T>(
    st: &AppState,
    id: &str,
    f: impl FnOnce(&mut idegym_core::runtime::Session) -> ApiResult<T>,
) -> ApiResult<T> {
    let handle = st.orch.session(id)?;
    let mut s = handle.lock().unwrap_or_else(|p| p.into_inner());
    f(&mut s)
}

async fn health(State(st): State<AppState>) -> Json<Value> {
    Json(json!({
        "status": "ok",
        "version": env!("CARGO_PKG_VERSION"),
        "sessions": st.orch.live(),
        "tasks": st.tasks.len(),
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskSummary {
    pub task_id: String,
    pub dataset: String,
    pub category: idegym_core::harness::Category,
    pub instruction: String,
}

async fn list_tasks(State(st): State<AppState>) -> Json<Vec<TaskSummary>> {
    Json(
        st.tasks
            .tasks
            .values()
            .map(|t| TaskSummary {
                task_id: t.task_id.clone(),
                dataset: t.dataset.clone(),
                category: t.category,
                instruction: t.instruction.clone(),
            })
            .collect(),
    )
}

/// `POST /sessions` body: a session config plus an optional task id.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CreateSession {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
    #[serde(flatten)]
    pub config: SessionConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session_id: String,
    pub status: idegym_core::runtime::SessionStatus,
    pub steps_taken: u32,
    pub limits: idegym_core::runtime::EpisodeLimits,
    pub backend_kind: idegym_core::backend::BackendKind,
    pub geometry: idegym_core::geometry::ScreenGeometry,
    pub task_id: Option<String>,
    pub instruction: Option<String>,
}

fn info(s: &idegym_core::runtime::Session) -> SessionInfo {
    SessionInfo {
        session_id: s.session_id.clone(),
        status: s.status(),
        steps_taken: s.steps_taken,
        limits: s.limits,
        backend_kind: s.backend_kind(),
        geometry: s.backend().geometry(),
        task_id: s.task.as_ref().map(|t| t.task_id.clone()),
        instruction: s.task.as_ref().map(|t| t.instruction.clone()),
    }
}

async fn create_session(
    State(st): State<AppState>,
    JsonBody(req): JsonBody<CreateSession>,
) -> ApiResult<(StatusCode, Json<SessionInfo>)> {
    let mut config = req.config;
    if let Some(id) = &req.task_id {
        let task = st.tasks.get(id).ok_or_else(|| {
            ApiError::new(
                StatusCode::NOT_FOUND,
                "unknown_task",
                format!("unknown task: {id}"),
            )
        })?;
        if config.resources == Default::default() {
            config.resources = task.resources;
        }
        config.task = Some(task);
    }
    if let Some(l) = &config.limits {
        l.validate()
            .map_err(|m| ApiError::new(StatusCode::BAD_REQUEST, "invalid_limits", m))?;
    }
    let created = blocking(move || {
        let id = st.orch.create(config)?;
        with_session(&st, &id, |s| Ok(info(s)))
    })
    .await?;
    tracing::info!(session = %created.session_id, task = ?created.task_id, "session created");
    Ok((StatusCode::CREATED, Json(created)))
}

async fn session_info(
    State(st): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<SessionInfo>> {
    blocking(move || with_session(&st, &id, |s| Ok(info(s))))
        .await
        .map(Json)
}

async fn delete_session(
    State(st): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<Value>> {
    blocking(move || {
        st.orch.destroy(&id)?;
        Ok(Json(json!({"session_id": id, "deleted": true})))
    })
    .await
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRequest {
    pub command: String,
}

async fn step(
    State(st): State<AppState>,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<StepRequest>,
) -> ApiResult<Json<Value>> {
    let seq = parse_command(&req.command)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "parse_error", e.to_string()))?;
    blocking(move || {
        with_session(&st, &id, |s| {
            let (obs, ignored) = s.apply_action_outcome(&seq)?;
            Ok(Json(json!({
                "observation_digest": obs.digest(),
                "ignored": ignored,
                "steps_taken": s.steps_taken,
            })))
        })
    })
    .await
}

async fn tool(
    State(st): State<AppState>,
    Path(id): Path<String>,
    JsonBody(call): JsonBody<ToolCall>,
) -> ApiResult<Json<idegym_core::agents::tools::ToolResult>> {
    blocking(move || with_session(&st, &id, |s| Ok(Json(s.dispatch_tool(&call)?)))).await
}

#[derive(Debug, Default, Deserialize)]
struct ObservationQuery {
    #[serde(default)]
    dom: Option<String>,
    #[serde(default)]
    som: Option<String>,
    #[serde(default)]
    format: Option<String>,
}

/// Query flags: present with no value, `true` or `1` mean on.
fn flag(v: &Option<String>) -> bool {
    matches!(v.as_deref(), Some("" | "true" | "1"))
}

async fn observation(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<ObservationQuery>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let (dom, som) = (flag(&q.dom), flag(&q.som));
    let wants_json = q.format.as_deref() == Some("json")
        || headers
            .get(header::ACCEPT)
            .and_then(|v| v.to_str().ok())
            .is_some_and(|a| a.contains("application/json"));
    let obs = blocking(move || with_session(&st, &id, |s| Ok(s.observe(dom, som)?))).await?;
    if wants_json {
        return Ok(Json(obs).into_response());
    }
    let digest = obs.digest();
    let (png, registry) = match &obs.som {
        Some(m) => (
            m.marked.png.clone(),
            Some(serde_json::to_string(&m.registry).expect("registry serializes")),
        ),
        None => (obs.screenshot.png.clone(), None),
    };
    let mut r = Response::new(Body::from(png));
    let h = r.headers_mut();
    h.insert(header::CONTENT_TYPE, HeaderValue::from_static("image/png"));
    let hv = |s: &str| HeaderValue::from_str(s).expect("ascii header");
    h.insert(DIGEST_HEADER, hv(&digest));
    h.insert(SCREENSHOT_DIGEST_HEADER, hv(&obs.screenshot.digest));
    h.insert(STEP_HEADER, hv(&obs.captured_at_step.to_string()));
    if let Some(reg) = registry {
        // JSON is ASCII-safe once non-ASCII names are escaped.
        let ascii: String = reg
            .chars()
            .map(|c| {
                if c.is_ascii() && !c.is_ascii_control() {
                    c.to_string()
                } else {
                    format!("\\u{:04x}", c as u32)
                }
            })
            .collect();
        h.insert(REGISTRY_HEADER, hv(&ascii));
    }
    Ok(r)
}

async fn pause(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionInfo>> {
    blocking(move || {
        st.orch.pause(&id)?;
        with_session(&st, &id, |s| Ok(Json(info(s))))
    })
    .await
}

async fn resume(
    State(st): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<SessionInfo>> {
    blocking(move || {
        st.orch.resume(&id)?;
        with_session(&st, &id, |s| Ok(Json(info(s))))
    })
    .await
}

async fn terminate(
    State(st): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<SessionInfo>> {
    blocking(move || {
        with_session(&st, &id, |s| {
            Environment::terminate(s).expect("local terminate is infallible");
            Ok(Json(info(s)))
        })
    })
    .await
}

async fn checkpoint(
    State(st): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let cp = blocking(move || Ok(st.orch.checkpoint(&id)?)).await?;
    Ok((StatusCode::CREATED, Json(json!({"checkpoint_id": cp}))))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RestoreRequest {
    pub checkpoint_id: String,
}

async fn restore(
    State(st): State<AppState>,
    JsonBody(req): JsonBody<RestoreRequest>,
) -> ApiResult<(StatusCode, Json<SessionInfo>)> {
    let created = blocking(move || {
        let id = st.orch.restore(&req.checkpoint_id)?;
        with_session(&st, &id, |s| Ok(info(s)))
    })
    .await?;
    Ok((StatusCode::CREATED, Json(created)))
}

async fn reward(
    State(st): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<idegym_core::harness::RewardReport>> {
    blocking(move || {
        with_session(&st, &id, |s| {
            Ok(Json(idegym_core::runtime::Session::reward(s)?))
        })
    })
    .await
}
