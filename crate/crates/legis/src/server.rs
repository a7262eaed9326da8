//! JSON HTTP API over sessions, pipeline runs, review and traces.
//!
//! | route | result |
//! |---|---|
//! | `POST /api/sessions` | `{session_id}` |
//! | `POST /api/sessions/:id/messages` `{text}` | turn outcome |
//! | `GET /api/sessions/:id/trace` | JSONL |
//! | `POST /api/runs` `{congress, no_review?, agent_checks?, threshold?, top_k?}` | `{run_id}`, runs in the background |
//! | `GET /api/runs/:id` | run document |
//! | `GET /api/runs/:id/clusters` | cluster reports |
//! | `PATCH /api/runs/:id/clusters/:name` `{threshold?, bill_overrides?}` | `{cluster_report, result}` |
//! | `POST /api/runs/:id/finalize` | gridlock result |
//! | `GET /api/runs/:id/trace?format=jsonl\|html` | trace export |
//! | `GET /api/gridlock?from=&to=` | `[{congress, score}]` |
//!
//! Errors are `{"error": {"code", "message", "field"?}}` with status 400
//! (validation), 404, 409 (state), 502 (provider) or 504 (provider timeout).
//! POST and PATCH honour an `Idempotency-Key` header: a repeated key replays
//! the first response without repeating the side effect.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::Router;
use legis_core::agent::{run_turn, ChatProvider, Conversation, OutcomeKind, TurnOutcome};
use legis_core::pipeline::{RunOptions, RunState};
use legis_core::report::ReviewOverride;
use legis_core::BillId;
use serde::Deserialize;
use serde_json::{json, Map, Value};
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::app::App;
use crate::pipeline::PipelineError;

pub struct ServerState {
    pub app: Arc<App>,
    /// Longest a chat turn may take before the request gets 504.
    pub turn_timeout: Duration,
    sessions: Mutex<HashMap<String, Arc<Session>>>,
    idempotency: Mutex<HashMap<String, Arc<tokio::sync::Mutex<Option<(StatusCode, Value)>>>>>,
}

struct Session {
    conversation: Mutex<Conversation>,
    provider: Result<Arc<dyn ChatProvider>, String>,
}

impl ServerState {
    pub fn new(app: Arc<App>) -> Self {
        let turn_timeout = app.config.timeout * 4;
        ServerState {
            app,
            turn_timeout,
            sessions: Mutex::new(HashMap::new()),
            idempotency: Mutex::new(HashMap::new()),
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    field: Option<&'static str>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            field: None,
        }
    }

    fn invalid(field: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            field: Some(field),
            ..ApiError::new(StatusCode::BAD_REQUEST, "validation", format!("{field}: {}", message.into()))
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    fn body(&self) -> Value {
        let mut e = json!({"code": self.code, "message": scrub(&self.message)});
        if let Some(f) = self.field {
            e["field"] = json!(f);
        }
        json!({ "error": e })
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        match &e {
            PipelineError::NotFound { .. } => ApiError::not_found(e.to_string()),
            PipelineError::Invalid { field, message } => ApiError::invalid(field, message.clone()),
            PipelineError::Conflict(_) | PipelineError::Busy(_) => ApiError::new(StatusCode::CONFLICT, "conflict", e.to_string()),
            PipelineError::Provider(_) => ApiError::new(StatusCode::BAD_GATEWAY, "provider", e.to_string()),
            PipelineError::Trace(_) | PipelineError::Storage { .. } => ApiError::internal(e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        json_response(self.status, &self.body())
    }
}

/// Removes any credential value that might have leaked into a message.
fn scrub(text: &str) -> String {
    let mut out = text.to_string();
    for var in [
        crate::providers::PROVIDER_TOKEN_VAR,
        crate::apis::CONGRESS_KEY_VAR,
        crate::apis::ARCHIVE_KEY_VAR,
    ] {
        if let Ok(secret) = std::env::var(var) {
            if secret.len() >= 4 {
                out = out.replace(&secret, "[redacted]");
            }
        }
    }
    out
}

fn json_response(status: StatusCode, body: &Value) -> Response {
    let text = scrub(&body.to_string());
    (status, [(header::CONTENT_TYPE, "application/json")], text).into_response()
}

type ApiResult = Result<(StatusCode, Value), ApiError>;

fn finish(r: ApiResult) -> Response {
    match r {
        Ok((status, body)) => json_response(status, &body),
        Err(e) => e.into_response(),
    }
}

/// Runs `f` once per idempotency key; later requests with the key get the
/// stored response.
async fn idempotent<F, Fut>(state: &ServerState, headers: &HeaderMap, scope: String, f: F) -> Response
where
    F: FnOnce() -> Fut,
    Fut: std::future::Future<Output = ApiResult>,
{
    let Some(key) = headers.get("idempotency-key").and_then(|v| v.to_str().ok()) else {
        return finish(f().await);
    };
    let slot = state
        .idempotency
        .lock()
        .unwrap_or_else(|p| p.into_inner())
        .entry(format!("{scope}\n{key}"))
        .or_default()
        .clone();
    let mut guard = slot.lock().await;
    if let Some((status, body)) = guard.as_ref() {
        return json_response(*status, body);
    }
    let result = f().await;
    let (status, body) = match &result {
        Ok((s, b)) => (*s, b.clone()),
        Err(e) => (e.status, e.body()),
    };
    // Server faults are not cached, so a retry can succeed.
    if !status.is_server_error() {
        *guard = Some((status, body.clone()));
    }
    json_response(status, &body)
}

fn parse_body(body: &Bytes) -> Result<Map<String, Value>, ApiError> {
    if body.is_empty() {
        return Ok(Map::new());
    }
    match serde_json::from_slice::<Value>(body) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(ApiError::invalid("body", "expected a JSON object")),
        Err(e) => Err(ApiError::invalid("body", format!("invalid JSON: {e}"))),
    }
}

fn check_fields(m: &Map<String, Value>, allowed: &[&str]) -> Result<(), ApiError> {
    match m.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(_) => Err(ApiError::invalid("body", format!("unknown field; allowed fields are {}", allowed.join(", ")))),
        None => Ok(()),
    }
}

fn opt_bool(m: &Map<String, Value>, field: &'static str) -> Result<Option<bool>, ApiError> {
    match m.get(field) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Bool(b)) => Ok(Some(*b)),
        Some(_) => Err(ApiError::invalid(field, "must be a boolean")),
    }
}

fn opt_threshold(m: &Map<String, Value>) -> Result<Option<f64>, ApiError> {
    match m.get("threshold") {
        None | Some(Value::Null) => Ok(None),
        Some(v) => match v.as_f64() {
            Some(t) if (-1.0..=1.0).contains(&t) => Ok(Some(t)),
            Some(t) => Err(ApiError::invalid("threshold", format!("{t} is outside [-1, 1]"))),
            None => Err(ApiError::invalid("threshold", "must be a number")),
        },
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))
}

async fn create_session(State(s): State<Arc<ServerState>>, headers: HeaderMap) -> Response {
    let state = s.clone();
    idempotent(&s, &headers, "POST /api/sessions".into(), || async move {
        let id = uuid::Uuid::new_v4().to_string();
        state.app.trace.create_scope(&id).map_err(|e| ApiError::internal(e.to_string()))?;
        let session = Session {
            conversation: Mutex::new(Conversation::new(id.clone(), state.app.engine.prompts.system.clone())),
            provider: state.app.providers.provider(None),
        };
        state
            .sessions
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .insert(id.clone(), Arc::new(session));
        Ok((StatusCode::CREATED, json!({ "session_id": id })))
    })
    .await
}

async fn post_message(State(s): State<Arc<ServerState>>, Path(id): Path<String>, headers: HeaderMap, body: Bytes) -> Response {
    let state = s.clone();
    let scope = format!("POST /api/sessions/{id}/messages");
    idempotent(&s, &headers, scope, || async move {
        let m = parse_body(&body)?;
        check_fields(&m, &["text"])?;
        let text = match m.get("text") {
            Some(Value::String(t)) if !t.trim().is_empty() => t.clone(),
            Some(Value::String(_)) => return Err(ApiError::invalid("text", "must not be empty")),
            _ => return Err(ApiError::invalid("text", "is required and must be a string")),
        };
        let session = state
            .sessions
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .get(&id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("session {id:?} not found")))?;
        let provider = session
            .provider
            .clone()
            .map_err(|e| ApiError::new(StatusCode::BAD_GATEWAY, "provider", e))?;
        let app = state.app.clone();
        let task = tokio::task::spawn_blocking(move || {
            let mut conv = session.conversation.lock().unwrap_or_else(|p| p.into_inner());
            run_turn(&mut conv, &text, &app.registry, provider.as_ref(), app.engine.turn, app.trace.as_ref())
        });
        let outcome: TurnOutcome = match tokio::time::timeout(state.turn_timeout, task).await {
            Err(_) => return Err(ApiError::new(StatusCode::GATEWAY_TIMEOUT, "timeout", "the provider did not answer in time")),
            Ok(Err(e)) => return Err(ApiError::internal(format!("worker failed: {e}"))),
            Ok(Ok(Err(e))) => return Err(ApiError::internal(e.to_string())),
            Ok(Ok(Ok(o))) => o,
        };
        if outcome.kind == OutcomeKind::ProviderError {
            let timed_out = outcome.error.as_deref().is_some_and(|e| e.contains("timed out"));
            let status = if timed_out {
                StatusCode::GATEWAY_TIMEOUT
            } else {
                StatusCode::BAD_GATEWAY
            };
            let mut body = ApiError::new(status, if timed_out { "timeout" } else { "provider" }, outcome.error.clone().unwrap_or_default()).body();
            body["outcome"] = json!(outcome);
            return Ok((status, body));
        }
        Ok((StatusCode::OK, json!(outcome)))
    })
    .await
}

fn jsonl_response(text: String) -> Response {
    (StatusCode::OK, [(header::CONTENT_TYPE, "application/x-ndjson")], scrub(&text)).into_response()
}

async fn session_trace(State(s): State<Arc<ServerState>>, Path(id): Path<String>) -> Response {
    if !s.sessions.lock().unwrap_or_else(|p| p.into_inner()).contains_key(&id) && !s.app.trace.scope_exists(&id) {
        return ApiError::not_found(format!("session {id:?} not found")).into_response();
    }
    match s.app.trace.export_jsonl(&id) {
        Ok(t) => jsonl_response(t),
        Err(e) => ApiError::not_found(e.to_string()).into_response(),
    }
}

fn spawn_run(app: Arc<App>, run_id: String) {
    tokio::task::spawn_blocking(move || {
        if let Err(e) = app.engine.execute(&run_id) {
            eprintln!("{}", json!({"event": "run_error", "run_id": run_id, "error": scrub(&e.to_string())}));
        }
    });
}

async fn create_run(State(s): State<Arc<ServerState>>, headers: HeaderMap, body: Bytes) -> Response {
    let state = s.clone();
    idempotent(&s, &headers, "POST /api/runs".into(), || async move {
        let m = parse_body(&body)?;
        check_fields(&m, &["congress", "no_review", "agent_checks", "threshold", "top_k"])?;
        let congress = match m.get("congress").and_then(Value::as_u64) {
            Some(c) if (1..=u64::from(u32::MAX)).contains(&c) => c as u32,
            _ => return Err(ApiError::invalid("congress", "is required and must be a positive integer")),
        };
        let mut options = RunOptions {
            no_review: opt_bool(&m, "no_review")?.unwrap_or(false),
            agent_checks: opt_bool(&m, "agent_checks")?.unwrap_or(false),
            ..RunOptions::default()
        };
        if let Some(t) = opt_threshold(&m)? {
            options.threshold = t;
        }
        match m.get("top_k") {
            None | Some(Value::Null) => {}
            Some(v) => match v.as_u64() {
                Some(k) if k >= 1 => options.top_k = k as usize,
                _ => return Err(ApiError::invalid("top_k", "must be a positive integer")),
            },
        }
        let engine = state.app.engine.clone();
        let run = blocking(move || engine.create_run(congress, options)).await??;
        spawn_run(state.app.clone(), run.run_id.clone());
        Ok((StatusCode::ACCEPTED, json!({"run_id": run.run_id, "state": run.state})))
    })
    .await
}

async fn get_run(State(s): State<Arc<ServerState>>, Path(id): Path<String>) -> Response {
    finish(s.app.runs.get(&id).map(|r| (StatusCode::OK, json!(r))).map_err(ApiError::from))
}

async fn get_clusters(State(s): State<Arc<ServerState>>, Path(id): Path<String>) -> Response {
    finish(
        s.app
            .runs
            .get(&id)
            .map(|r| (StatusCode::OK, json!(r.cluster_reports)))
            .map_err(ApiError::from),
    )
}

fn parse_review(m: &Map<String, Value>) -> Result<ReviewOverride, ApiError> {
    check_fields(m, &["threshold", "bill_overrides", "actor"])?;
    let mut review = ReviewOverride {
        threshold: opt_threshold(m)?,
        ..ReviewOverride::default()
    };
    match m.get("bill_overrides") {
        None | Some(Value::Null) => {}
        Some(Value::Object(o)) => {
            for (k, v) in o {
                let id = BillId::parse(k).map_err(|e| ApiError::invalid("bill_overrides", format!("{k:?}: {e}")))?;
                let include = v
                    .as_bool()
                    .ok_or_else(|| ApiError::invalid("bill_overrides", format!("value for {k:?} must be a boolean")))?;
                review.bill_overrides.insert(id, include);
            }
        }
        Some(_) => return Err(ApiError::invalid("bill_overrides", "must be an object of bill_id to boolean")),
    }
    if review.threshold.is_none() && review.bill_overrides.is_empty() {
        return Err(ApiError::invalid("body", "give threshold or bill_overrides"));
    }
    Ok(review)
}

async fn patch_cluster(
    State(s): State<Arc<ServerState>>,
    Path((id, name)): Path<(String, String)>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let state = s.clone();
    let scope = format!("PATCH /api/runs/{id}/clusters/{name}");
    let header_actor = headers.get("x-actor").and_then(|v| v.to_str().ok()).map(str::to_string);
    idempotent(&s, &headers, scope, || async move {
        let m = parse_body(&body)?;
        let review = parse_review(&m)?;
        let actor = m
            .get("actor")
            .and_then(Value::as_str)
            .map(str::to_string)
            .or(header_actor)
            .unwrap_or_else(|| "api".into());
        let engine = state.app.engine.clone();
        let (report, run) = blocking(move || engine.review_override(&id, &name, &review, &actor)).await??;
        Ok((StatusCode::OK, json!({"cluster_report": report, "result": run.result, "state": run.state})))
    })
    .await
}

async fn finalize_run(State(s): State<Arc<ServerState>>, Path(id): Path<String>, headers: HeaderMap) -> Response {
    let state = s.clone();
    let scope = format!("POST /api/runs/{id}/finalize");
    idempotent(&s, &headers, scope, || async move {
        let engine = state.app.engine.clone();
        let run = blocking(move || engine.finalize(&id)).await??;
        Ok((StatusCode::OK, json!(run.result)))
    })
    .await
}

#[derive(Deserialize)]
struct TraceQuery {
    format: Option<String>,
}

async fn run_trace(State(s): State<Arc<ServerState>>, Path(id): Path<String>, Query(q): Query<TraceQuery>) -> Response {
    if let Err(e) = s.app.runs.get(&id) {
        return ApiError::from(e).into_response();
    }
    match q.format.as_deref().unwrap_or("jsonl") {
        "jsonl" => match s.app.trace.export_jsonl(&id) {
            Ok(t) => jsonl_response(t),
            Err(e) => ApiError::not_found(e.to_string()).into_response(),
        },
        "html" => match s.app.trace.export_html(&id) {
            Ok(h) => (StatusCode::OK, [(header::CONTENT_TYPE, "text/html; charset=utf-8")], scrub(&h)).into_response(),
            Err(e) => ApiError::not_found(e.to_string()).into_response(),
        },
        _ => ApiError::invalid("format", "must be jsonl or html").into_response(),
    }
}

async fn gridlock(State(s): State<Arc<ServerState>>, Query(q): Query<BTreeMap<String, String>>) -> Response {
    let num = |field: &'static str, default: u32| -> Result<u32, ApiError> {
        match q.get(field) {
            None => Ok(default),
            Some(v) => v
                .parse::<u32>()
                .ok()
                .filter(|n| *n > 0)
                .ok_or_else(|| ApiError::invalid(field, "must be a positive integer")),
        }
    };
    let r = (|| {
        let from = num("from", 113)?;
        let to = num("to", 118)?;
        if to < from {
            return Err(ApiError::invalid("to", "must not be less than from"));
        }
        let pairs: Vec<Value> = s
            .app
            .engine
            .stored_series(from, to)
            .into_iter()
            .map(|(congress, score)| json!({"congress": congress, "score": score}))
            .collect();
        Ok((StatusCode::OK, Value::Array(pairs)))
    })();
    finish(r)
}

async fn health() -> Response {
    json_response(StatusCode::OK, &json!({"status": "ok"}))
}

pub fn router(state: Arc<ServerState>) -> Router {
    let origin = state.app.config.cors_origin.clone();
    let allow = if origin == "*" {
        AllowOrigin::any()
    } else {
        AllowOrigin::list(
            origin
                .split(',')
                .filter_map(|o| HeaderValue::from_str(o.trim()).ok())
                .collect::<Vec<_>>(),
        )
    };
    let cors = CorsLayer::new()
        .allow_origin(allow)
        .allow_methods([Method::GET, Method::POST, Method::PATCH, Method::OPTIONS])
        .allow_headers([
            header::CONTENT_TYPE,
            header::HeaderName::from_static("idempotency-key"),
            header::HeaderName::from_static("x-actor"),
        ]);
    Router::new()
        .route("/api/health", get(health))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/:id/messages", post(post_message))
        .route("/api/sessions/:id/trace", get(session_trace))
        .route("/api/runs", post(create_run))
        .route("/api/runs/:id", get(get_run))
        .route("/api/runs/:id/clusters", get(get_clusters))
        .route("/api/runs/:id/clusters/:name", patch(patch_cluster))
        .route("/api/runs/:id/finalize", post(finalize_run))
        .route("/api/runs/:id/trace", get(run_trace))
        .route("/api/gridlock", get(gridlock))
        .layer(cors)
        .with_state(state)
}

/// Restarts runs left mid-pipeline by an earlier process.
pub fn resume_unfinished(app: &Arc<App>) -> usize {
    let mut n = 0;
    for run in app.runs.list() {
        if matches!(run.state, RunState::Pending | RunState::Step1 | RunState::Step2 | RunState::Step3) {
            spawn_run(app.clone(), run.run_id);
            n += 1;
        }
    }
    n
}

/// Serves until Ctrl-C. Runs in flight finish their current step; each step is
/// checkpointed, so anything cut short resumes on the next start.
pub async fn serve(app: Arc<App>, port: u16) -> std::io::Result<()> {
    let resumed = resume_unfinished(&app);
    let state = Arc::new(ServerState::new(app));
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
    eprintln!(
        "{}",
        json!({"event": "listening", "addr": listener.local_addr()?.to_string(), "resumed_runs": resumed})
    );
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
