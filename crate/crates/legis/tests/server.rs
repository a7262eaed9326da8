mod common;

use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use legis::server::{router, ServerState};
use serde_json::{json, Value};
use tower::ServiceExt;

fn app_router(congresses: &[u32]) -> (Router, Arc<ServerState>) {
    let state = Arc::new(ServerState::new(Arc::new(common::replay(congresses, None))));
    (router(state.clone()), state)
}

async fn send(app: &Router, method: &str, uri: &str, body: Option<Value>, headers: &[(&str, &str)]) -> (StatusCode, String) {
    let mut req = Request::builder().method(method).uri(uri);
    for (k, v) in headers {
        req = req.header(*k, *v);
    }
    let body = match body {
        Some(b) => {
            req = req.header("content-type", "application/json");
            Body::from(b.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn send_json(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (s, text) = send(app, method, uri, body, &[]).await;
    (s, serde_json::from_str(&text).unwrap_or(Value::Null))
}

async fn wait_for(app: &Router, run_id: &str, state: &str) -> Value {
    for _ in 0..400 {
        let (s, run) = send_json(app, "GET", &format!("/api/runs/{run_id}"), None).await;
        assert_eq!(s, StatusCode::OK);
        if run["state"] == state {
            return run;
        }
        assert_ne!(run["state"], "failed", "{run}");
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    panic!("run {run_id} never reached {state}");
}

#[tokio::test(flavor = "multi_thread")]
async fn run_review_and_finalize_over_http() {
    let (app, _) = app_router(&[113]);
    let (s, body) = send_json(&app, "POST", "/api/runs", Some(json!({"congress": 113}))).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    let run_id = body["run_id"].as_str().unwrap().to_string();
    wait_for(&app, &run_id, "awaiting_review").await;

    let (s, clusters) = send_json(&app, "GET", &format!("/api/runs/{run_id}/clusters"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(clusters.as_array().unwrap().len(), 8);

    let uri = format!("/api/runs/{run_id}/clusters/Immigration%20Reform");
    let (s, body) = send_json(&app, "PATCH", &uri, Some(json!({"threshold": 0.59}))).await;
    assert_eq!(s, StatusCode::OK, "{body}");
    assert_eq!(body["cluster_report"]["total_bills_found"], 0);
    assert_eq!(body["state"], "awaiting_review");

    let (s, result) = send_json(&app, "POST", &format!("/api/runs/{run_id}/finalize"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(result["score"], 0.625);
    let (s, err) = send_json(&app, "POST", &format!("/api/runs/{run_id}/finalize"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(err["error"]["code"], "conflict");

    // PATCH after finalizing returns the recomputed result.
    let (s, body) = send_json(&app, "PATCH", &uri, Some(json!({"threshold": 0.4}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body["result"]["score"], 0.5);

    let (s, series) = send_json(&app, "GET", "/api/gridlock?from=113&to=118", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(series, json!([{"congress": 113, "score": 0.5}]));

    let (s, text) = send(&app, "GET", &format!("/api/runs/{run_id}/trace"), None, &[]).await;
    assert_eq!(s, StatusCode::OK);
    let overrides = text
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap())
        .filter(|e| e["kind"] == "override")
        .count();
    assert_eq!(overrides, 2);
    let (s, html) = send(&app, "GET", &format!("/api/runs/{run_id}/trace?format=html"), None, &[]).await;
    assert_eq!(s, StatusCode::OK);
    assert!(html.starts_with("<!DOCTYPE html>"));
}

#[tokio::test(flavor = "multi_thread")]
async fn validation_errors_name_the_field() {
    let (app, _) = app_router(&[116]);
    let cases = [
        (json!({}), "congress"),
        (json!({"congress": "x"}), "congress"),
        (json!({"congress": 116, "no_review": 3}), "no_review"),
        (json!({"congress": 116, "threshold": 2}), "threshold"),
        (json!({"congress": 116, "top_k": 0}), "top_k"),
        (json!({"congress": 116, "colour": "red"}), "body"),
    ];
    for (body, field) in cases {
        let (s, err) = send_json(&app, "POST", "/api/runs", Some(body.clone())).await;
        assert_eq!(s, StatusCode::BAD_REQUEST, "{body}");
        assert_eq!(err["error"]["field"], field, "{body}");
    }
    let (s, _) = send(&app, "POST", "/api/runs", None, &[("content-type", "application/json")]).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let (_, body) = send_json(&app, "POST", "/api/runs", Some(json!({"congress": 116}))).await;
    let run_id = body["run_id"].as_str().unwrap().to_string();
    wait_for(&app, &run_id, "awaiting_review").await;
    let uri = format!("/api/runs/{run_id}/clusters/Climate%20Change");
    for (body, field) in [
        (json!({"threshold": "high"}), "threshold"),
        (json!({"bill_overrides": {"not-a-bill": true}}), "bill_overrides"),
        (json!({"bill_overrides": {"116-hr-1": "yes"}}), "bill_overrides"),
        (json!({"bill_overrides": {"116-hr-99999": false}}), "bill_overrides"),
        (json!({}), "body"),
    ] {
        let (s, err) = send_json(&app, "PATCH", &uri, Some(body.clone())).await;
        assert_eq!(s, StatusCode::BAD_REQUEST, "{body}");
        assert_eq!(err["error"]["field"], field, "{body}");
    }
    let (s, _) = send_json(&app, "PATCH", &format!("/api/runs/{run_id}/clusters/Nope"), Some(json!({"threshold": 0.5}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = send_json(&app, "GET", "/api/runs/missing", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, err) = send_json(&app, "GET", "/api/gridlock?from=118&to=113", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(err["error"]["field"], "to");
    let (s, _) = send_json(&app, "GET", &format!("/api/runs/{run_id}/trace?format=pdf"), None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread")]
async fn idempotency_key_replays_without_a_second_run() {
    let (app, state) = app_router(&[116]);
    let key = [("idempotency-key", "abc-123")];
    let body = json!({"congress": 116, "no_review": true});
    let (s1, a) = send(&app, "POST", "/api/runs", Some(body.clone()), &key).await;
    let (s2, b) = send(&app, "POST", "/api/runs", Some(body.clone()), &key).await;
    assert_eq!((s1, s2), (StatusCode::ACCEPTED, StatusCode::ACCEPTED));
    assert_eq!(a, b);
    let run_id = serde_json::from_str::<Value>(&a).unwrap()["run_id"].as_str().unwrap().to_string();
    let run = wait_for(&app, &run_id, "finalized").await;
    assert_eq!(run["result"]["score"], 0.4);
    assert_eq!(state.app.runs.list().len(), 1);

    let (_, c) = send(&app, "POST", "/api/runs", Some(body), &[("idempotency-key", "other")]).await;
    assert_ne!(a, c);
    assert_eq!(state.app.runs.list().len(), 2);
}

#[tokio::test(flavor = "multi_thread")]
async fn sessions_answer_and_trace() {
    let (app, _) = app_router(&[113]);
    let (s, body) = send_json(&app, "POST", "/api/sessions", None).await;
    assert_eq!(s, StatusCode::CREATED);
    let id = body["session_id"].as_str().unwrap().to_string();

    let uri = format!("/api/sessions/{id}/messages");
    let (s, err) = send_json(&app, "POST", &uri, Some(json!({"text": ""}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(err["error"]["field"], "text");
    let (s, outcome) = send_json(&app, "POST", &uri, Some(json!({"text": "Was S. 1 enacted?"}))).await;
    assert_eq!(s, StatusCode::OK, "{outcome}");
    assert_eq!(outcome["kind"], "answered");
    assert_eq!(outcome["tool_calls_made"].as_array().unwrap().len(), 1);

    // The script is used up, so the next turn is a provider failure.
    let (s, err) = send_json(&app, "POST", &uri, Some(json!({"text": "And S. 2?"}))).await;
    assert_eq!(s, StatusCode::BAD_GATEWAY, "{err}");
    assert_eq!(err["error"]["code"], "provider");

    let (s, text) = send(&app, "GET", &format!("/api/sessions/{id}/trace"), None, &[]).await;
    assert_eq!(s, StatusCode::OK);
    let kinds: Vec<String> = text
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["kind"].as_str().unwrap().to_string())
        .collect();
    assert!(kinds.contains(&"tool_call".to_string()) && kinds.contains(&"tool_result".to_string()));
    let (s, _) = send_json(&app, "POST", "/api/sessions/nope/messages", Some(json!({"text": "hi"}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread")]
async fn cors_allows_the_configured_origin() {
    let (app, _) = app_router(&[116]);
    let (s, _) = send(
        &app,
        "OPTIONS",
        "/api/runs",
        None,
        &[("origin", "http://localhost:5173"), ("access-control-request-method", "PATCH")],
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    let req = Request::builder()
        .uri("/api/health")
        .header("origin", "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.headers()["access-control-allow-origin"], "http://localhost:5173");
    let req = Request::builder()
        .uri("/api/health")
        .header("origin", "http://evil.example")
        .body(Body::empty())
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert!(resp.headers().get("access-control-allow-origin").is_none());
}

#[tokio::test(flavor = "multi_thread")]
async fn unfinished_runs_resume_on_start() {
    let dir = tempfile::tempdir().unwrap();
    let run_id = {
        let app = common::replay(&[116], Some(dir.path()));
        let options = legis_core::pipeline::RunOptions {
            no_review: true,
            ..Default::default()
        };
        let run = app.engine.create_run(116, options).unwrap();
        app.engine
            .execute_until(&run.run_id, Some(legis_core::pipeline::RunState::Step2))
            .unwrap();
        run.run_id
    };
    let app = Arc::new(common::replay(&[116], Some(dir.path())));
    assert_eq!(legis::server::resume_unfinished(&app), 1);
    let router = router(Arc::new(ServerState::new(app)));
    let run = wait_for(&router, &run_id, "finalized").await;
    assert_eq!(run["result"]["score"], 0.4);
}

struct Stub(fn() -> Result<legis_core::agent::AssistantStep, legis_core::agent::ProviderError>);

impl legis_core::agent::ChatProvider for Stub {
    fn chat(
        &self,
        _: &[legis_core::agent::Message],
        _: &[legis_core::agent::ToolDefinition],
    ) -> Result<legis_core::agent::AssistantStep, legis_core::agent::ProviderError> {
        (self.0)()
    }
}

fn stub_router(f: fn() -> Result<legis_core::agent::AssistantStep, legis_core::agent::ProviderError>, timeout: Duration) -> Router {
    let base = common::replay(&[116], None);
    let providers: Arc<dyn legis::pipeline::ProviderFactory> = Arc::new(legis::pipeline::SharedProvider(Arc::new(Stub(f))));
    let engine = legis::pipeline::Engine::new(base.registry.clone(), providers.clone(), base.trace.clone(), base.runs.clone());
    let app = legis::app::App {
        providers,
        engine: Arc::new(engine),
        ..base
    };
    let mut state = ServerState::new(Arc::new(app));
    state.turn_timeout = timeout;
    router(Arc::new(state))
}

async fn ask(app: &Router) -> (StatusCode, String) {
    let (_, body) = send_json(app, "POST", "/api/sessions", None).await;
    let id = body["session_id"].as_str().unwrap().to_string();
    send(app, "POST", &format!("/api/sessions/{id}/messages"), Some(json!({"text": "hello"})), &[]).await
}

#[tokio::test(flavor = "multi_thread")]
async fn provider_timeouts_are_504() {
    let app = stub_router(|| Err(legis_core::agent::ProviderError::Timeout), Duration::from_secs(5));
    let (s, body) = ask(&app).await;
    assert_eq!(s, StatusCode::GATEWAY_TIMEOUT, "{body}");

    let slow = stub_router(
        || {
            std::thread::sleep(Duration::from_millis(500));
            Ok(legis_core::agent::AssistantStep::text("late"))
        },
        Duration::from_millis(50),
    );
    let (s, body) = ask(&slow).await;
    assert_eq!(s, StatusCode::GATEWAY_TIMEOUT, "{body}");
    assert!(body.contains("timeout"));
}

#[tokio::test(flavor = "multi_thread")]
async fn responses_never_carry_the_provider_token() {
    std::env::set_var("AGENT_PROVIDER_TOKEN", "sk-test-secret-value");
    let app = stub_router(
        || {
            Err(legis_core::agent::ProviderError::Status {
                status: 401,
                message: "bad token sk-test-secret-value".into(),
            })
        },
        Duration::from_secs(5),
    );
    let (s, body) = ask(&app).await;
    assert_eq!(s, StatusCode::BAD_GATEWAY);
    assert!(!body.contains("sk-test-secret-value"), "{body}");
    assert!(body.contains("[redacted]"));
}
