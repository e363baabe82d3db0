use std::io::BufReader;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use overhang_core::metrics::{summarize_runs, trace_log_likelihood};
use overhang_core::model::{DecisionState, PlacedBlock};
use overhang_core::planners::{myopic_select, PlannerConfig};
use overhang_core::predictors::{Predictor, PredictorSpec};
use overhang_core::rng::seeded;
use overhang_core::session::{ManualClock, SessionView, STEP_DEADLINE_MS, TRIALS_PER_SESSION};
use overhang_core::trace::{read_jsonl, Outcome};
use overhang_server::{router, SessionManager};
use rand::Rng;
use serde_json::{json, Value};

fn manual(dir: Option<&std::path::Path>, start: u64) -> (Router, Arc<ManualClock>) {
    let clock = Arc::new(ManualClock::new(start));
    let manager = match dir {
        Some(d) => SessionManager::open(d, clock.clone()).unwrap(),
        None => SessionManager::new(None, clock.clone()),
    };
    (router(Arc::new(manager)), clock)
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    use tower::ServiceExt;
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or(Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

async fn create(app: &Router, condition: &str, seed: u64) -> (String, SessionView) {
    let (status, body) = call(app, Method::POST, "/sessions", Some(json!({"condition": condition, "seed": seed}))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let id = body["id"].as_str().unwrap().to_string();
    (id, serde_json::from_value(body["state"].clone()).unwrap())
}

fn state_of(view: &SessionView) -> DecisionState {
    let geometry = overhang_core::TowerGeometry::from_blocks(view.geometry.clone()).unwrap();
    DecisionState::new(geometry, view.remaining.clone())
}

#[tokio::test]
async fn scripted_client_completes_twenty_trials() {
    let dir = tempfile::tempdir().unwrap();
    let (app, clock) = manual(Some(dir.path()), 1_000);
    let (id, mut view) = create(&app, "time_constrained", 11).await;
    assert_eq!(view.deadline_ms, Some(1_000 + STEP_DEADLINE_MS));
    assert_eq!(view.geometry.len(), 1);

    let predictor = Predictor::Veridical;
    let config = PlannerConfig::myopic(PredictorSpec::Veridical);
    let mut rewards = Vec::new();
    while view.status == overhang_core::session::SessionStatus::Active {
        let state = state_of(&view);
        let action = myopic_select(&state, &predictor, &config).unwrap().unwrap();
        clock.advance(300);
        let uri = format!("/sessions/{id}/preview");
        let (status, _) = call(&app, Method::POST, &uri, Some(json!({"x": action.x, "layer": action.layer, "dwell_ms": 120.0}))).await;
        assert_eq!(status, StatusCode::OK);
        clock.advance(700);
        let uri = format!("/sessions/{id}/place");
        let (status, body) = call(&app, Method::POST, &uri, Some(json!({"x": action.x, "layer": action.layer, "client_ts": 0.0}))).await;
        assert_eq!(status, StatusCode::OK, "{body}");
        assert_eq!(body["outcome"], "placed_stable");
        if let Some(r) = body["trial_reward"].as_f64() {
            rewards.push(r);
        }
        view = serde_json::from_value(body["state"].clone()).unwrap();
    }
    assert_eq!(rewards.len(), TRIALS_PER_SESSION);
    assert!(rewards.iter().all(|&r| r > 0.0));
    assert!((view.score - rewards.iter().sum::<f64>()).abs() < 1e-9);

    let (status, fin) = call(&app, Method::POST, &format!("/sessions/{id}/finalize"), None).await;
    assert_eq!(status, StatusCode::OK);
    let path = fin["traces_path"].as_str().unwrap();
    let traces = read_jsonl(BufReader::new(std::fs::File::open(path).unwrap())).unwrap();
    assert_eq!(traces.len(), TRIALS_PER_SESSION);
    for (t, r) in traces.iter().zip(&rewards) {
        assert_eq!(t.outcome, Outcome::Completed);
        assert_eq!(t.condition, "time_constrained");
        assert!((t.recomputed_reward().unwrap() - r).abs() < 1e-12);
        assert_eq!(trace_log_likelihood(t, &predictor).unwrap().len(), 5);
        assert!(t.steps.iter().all(|s| (s.duration_s - 1.0).abs() < 1e-12));
        assert!(t.steps.iter().all(|s| s.previews.len() == 1 && s.previews[0].t_ms == 300.0));
    }
    let summary = summarize_runs(&traces);
    assert_eq!(fin["summary"]["total_reward"].as_f64().unwrap(), view.score);
    assert_eq!(fin["summary"]["stable_proportion"].as_f64().unwrap(), summary.stable_proportion.unwrap().mean);
    assert_eq!(fin["summary"]["mean_decision_time"].as_f64().unwrap(), summary.decision_time.unwrap().mean);
}

#[tokio::test]
async fn forged_late_commit_times_out() {
    let (app, clock) = manual(None, 50_000);
    let (id, view) = create(&app, "time_constrained", 3).await;
    let deadline = view.deadline_ms.unwrap();
    clock.set(deadline + 100);
    let top = view.geometry.iter().map(|b| b.layer).max().unwrap() as i32;
    let body = json!({"x": 0.0, "layer": top + 1, "client_ts": (deadline - 4_000) as f64});
    let (status, resp) = call(&app, Method::POST, &format!("/sessions/{id}/place"), Some(body)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(resp["outcome"], "timed_out");
    assert_eq!(resp["trial_reward"], 0.0);
    assert_eq!(resp["state"]["trial"], 1);
    assert_eq!(resp["state"]["trial_rewards"], json!([0.0]));
    assert_eq!(resp["state"]["deadline_ms"].as_u64(), Some(deadline + 100 + STEP_DEADLINE_MS));
}

#[tokio::test]
async fn exact_deadline_commit_is_accepted_and_idle_trial_expires() {
    let (app, clock) = manual(None, 0);
    let (id, view) = create(&app, "time_constrained", 3).await;
    clock.set(view.deadline_ms.unwrap());
    let (_, resp) = call(&app, Method::POST, &format!("/sessions/{id}/place"), Some(json!({"x": 0.0, "layer": 1}))).await;
    assert_eq!(resp["outcome"], "placed_stable");
    clock.advance(STEP_DEADLINE_MS + 1);
    let (_, state) = call(&app, Method::GET, &format!("/sessions/{id}/state"), None).await;
    assert_eq!(state["trial"], 1);
    assert_eq!(state["trial_rewards"], json!([0.0]));
}

#[tokio::test]
async fn unconstrained_state_has_no_deadline() {
    let (app, clock) = manual(None, 0);
    let (id, view) = create(&app, "unconstrained", 3).await;
    assert!(view.deadline_ms.is_none());
    clock.advance(3_600_000);
    let (_, state) = call(&app, Method::GET, &format!("/sessions/{id}/state"), None).await;
    assert!(state.get("deadline_ms").is_none());
    assert_eq!(state["trial"], 0);
}

#[tokio::test]
async fn previews_carry_only_a_verdict() {
    let (app, _clock) = manual(None, 0);
    let (id, view) = create(&app, "unconstrained", 5).await;
    let mut rng = seeded(99);
    let mut seen = std::collections::HashSet::new();
    for _ in 0..1000 {
        let x: f64 = rng.random_range(-4.5..4.5);
        let layer: i32 = rng.random_range(-1..4);
        let body = json!({"x": x, "layer": layer, "dwell_ms": rng.random_range(0.0..500.0)});
        let (status, resp) = call(&app, Method::POST, &format!("/sessions/{id}/preview"), Some(body)).await;
        assert_eq!(status, StatusCode::OK);
        let obj = resp.as_object().unwrap();
        assert_eq!(obj.keys().collect::<Vec<_>>(), vec!["verdict"]);
        let verdict = obj["verdict"].as_str().unwrap();
        assert!(["valid", "penetrates", "unsupported", "out_of_bounds"].contains(&verdict));
        seen.insert(verdict.to_string());
    }
    assert!(seen.contains("valid") && seen.contains("unsupported"));
    let (_, state) = call(&app, Method::GET, &format!("/sessions/{id}/state"), None).await;
    let text = state.to_string();
    for banned in ["stable", "probability", "margin", "collapse"] {
        assert!(!text.contains(banned), "state leaks {banned}");
    }
    assert_eq!(state["geometry"].as_array().unwrap().len(), view.geometry.len());
}

#[tokio::test]
async fn penetrating_preview_and_rejected_commit() {
    let (app, _clock) = manual(None, 0);
    let (id, _) = create(&app, "unconstrained", 5).await;
    let (_, resp) = call(&app, Method::POST, &format!("/sessions/{id}/preview"), Some(json!({"x": 0.0, "layer": 0}))).await;
    assert_eq!(resp["verdict"], "penetrates");
    let (_, resp) = call(&app, Method::POST, &format!("/sessions/{id}/place"), Some(json!({"x": 0.0, "layer": 0}))).await;
    assert_eq!(resp["outcome"], "rejected");
    assert_eq!(resp["state"]["trial"], 0);
}

#[tokio::test]
async fn tipping_commit_collapses() {
    let (app, _clock) = manual(None, 0);
    let (id, view) = create(&app, "unconstrained", 5).await;
    let base: &PlacedBlock = &view.geometry[0];
    let next = view.remaining[0];
    let x = base.right() + next.half_width() - 0.06;
    let (_, resp) = call(&app, Method::POST, &format!("/sessions/{id}/place"), Some(json!({"x": x, "layer": 1}))).await;
    assert_eq!(resp["outcome"], "collapsed");
    assert_eq!(resp["trial_reward"], 0.0);
}

#[tokio::test]
async fn unknown_session_is_not_found() {
    let (app, _clock) = manual(None, 0);
    for (method, path, body) in [
        (Method::GET, "/sessions/nope/state", None),
        (Method::POST, "/sessions/nope/preview", Some(json!({"x": 0.0, "layer": 1}))),
        (Method::POST, "/sessions/nope/place", Some(json!({"x": 0.0, "layer": 1}))),
        (Method::POST, "/sessions/nope/finalize", None),
    ] {
        let (status, resp) = call(&app, method, path, body).await;
        assert_eq!(status, StatusCode::NOT_FOUND);
        assert!(resp["error"].as_str().unwrap().contains("nope"));
    }
}

#[tokio::test]
async fn finalized_session_refuses_commands() {
    let (app, _clock) = manual(None, 0);
    let (id, _) = create(&app, "unconstrained", 5).await;
    let (status, fin) = call(&app, Method::POST, &format!("/sessions/{id}/finalize"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(fin["summary"]["trials"], 1);
    assert!(fin["traces_path"].is_null());
    let (status, _) = call(&app, Method::POST, &format!("/sessions/{id}/place"), Some(json!({"x": 0.0, "layer": 1}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn same_seed_gives_same_tasks() {
    let (app, _clock) = manual(None, 0);
    let (_, a) = create(&app, "unconstrained", 42).await;
    let (_, b) = create(&app, "time_constrained", 42).await;
    assert_eq!(a.task_id, b.task_id);
    assert_eq!(a.geometry, b.geometry);
    assert_eq!(a.remaining, b.remaining);
}

#[tokio::test]
async fn sessions_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let (app, clock) = manual(Some(dir.path()), 0);
    let (id, _) = create(&app, "time_constrained", 8).await;
    clock.advance(400);
    call(&app, Method::POST, &format!("/sessions/{id}/preview"), Some(json!({"x": 0.1, "layer": 1}))).await;
    let (_, placed) = call(&app, Method::POST, &format!("/sessions/{id}/place"), Some(json!({"x": 0.0, "layer": 1}))).await;
    drop(app);

    let (app, _clock) = manual(Some(dir.path()), 400);
    let (_, state) = call(&app, Method::GET, &format!("/sessions/{id}/state"), None).await;
    assert_eq!(state, placed["state"]);
    let (id2, _) = create(&app, "unconstrained", 8).await;
    assert_ne!(id, id2);
    let (_, resp) = call(&app, Method::POST, &format!("/sessions/{id}/place"), Some(json!({"x": 0.0, "layer": 2}))).await;
    assert_eq!(resp["outcome"], "placed_stable");
}
