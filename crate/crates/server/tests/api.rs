use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use mrcad::action::Action;
use mrcad::config::ServerSettings;
use mrcad::dataset::rollout_to_line;
use mrcad::game::{GameConfig, Outcome};
use mrcad::synth;
use mrcad_server::{rollout_from_events, AppState, FileStorage, ManualClock, MemoryStorage, Storage};
use serde_json::{json, Value};
use tower::ServiceExt;

struct Harness {
    app: Router,
    state: Arc<AppState>,
    clock: Arc<ManualClock>,
    store: Arc<MemoryStorage>,
}

fn harness() -> Harness {
    let clock = Arc::new(ManualClock::default());
    let store = Arc::new(MemoryStorage::default());
    let state = Arc::new(
        AppState::new(
            ServerSettings::default(),
            GameConfig::default(),
            store.clone(),
            clock.clone(),
            Vec::new(),
            11,
        )
        .with_stamp(|| "t0".into()),
    );
    Harness {
        app: mrcad_server::router(state.clone()),
        state,
        clock,
        store,
    }
}

async fn call(app: &Router, method: &str, uri: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("x-session-token", t);
    }
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, v)
}

struct Seats {
    id: String,
    designer: String,
    maker: String,
}

async fn start(app: &Router, body: Value) -> Seats {
    let (st, v) = call(app, "POST", "/sessions", None, Some(body)).await;
    assert_eq!(st, StatusCode::OK, "{v}");
    let id = v["session_id"].as_str().unwrap().to_string();
    let mut designer = None;
    let mut maker = None;
    for _ in 0..2 {
        let (st, j) = call(app, "POST", &format!("/sessions/{id}/join"), None, None).await;
        assert_eq!(st, StatusCode::OK, "{j}");
        let tok = j["token"].as_str().unwrap().to_string();
        match j["role"].as_str().unwrap() {
            "designer" => designer = Some(tok),
            "maker" => maker = Some(tok),
            r => panic!("role {r}"),
        }
    }
    Seats {
        id,
        designer: designer.unwrap(),
        maker: maker.unwrap(),
    }
}

fn copy_actions() -> Value {
    let acts: Vec<Action> = synth::smiley_face().curves().iter().copied().map(Action::MakeCurve).collect();
    serde_json::to_value(acts).unwrap()
}

#[tokio::test]
async fn maker_view_never_contains_target() {
    let h = harness();
    let s = start(&h.app, json!({"fixture": "smiley"})).await;
    let (_, dv) = call(&h.app, "GET", &format!("/sessions/{}/view", s.id), Some(&s.designer), None).await;
    let (_, mv) = call(&h.app, "GET", &format!("/sessions/{}/view", s.id), Some(&s.maker), None).await;
    assert!(dv.get("target").is_some());
    assert!(mv.get("target").is_none());
    assert_eq!(dv["phase"], "designer_turn");
    let target = serde_json::to_string(&synth::smiley_face()).unwrap();
    assert!(!mv.to_string().contains(&target));
}

#[tokio::test]
async fn full_game_is_won_and_persisted() {
    let h = harness();
    let s = start(&h.app, json!({"fixture": "smiley", "preset": "dataset", "dyad": "pair-1"})).await;
    let base = format!("/sessions/{}", s.id);

    let (st, v) = call(&h.app, "POST", &format!("{base}/message"), Some(&s.maker), Some(json!({"text": "hi", "strokes": []}))).await;
    assert_eq!(st, StatusCode::CONFLICT);
    assert_eq!(v["error"], "not_your_turn");

    let (st, _) = call(&h.app, "POST", &format!("{base}/submit"), Some(&s.maker), None).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);

    h.clock.advance(10.0);
    let (st, v) = call(
        &h.app,
        "POST",
        &format!("{base}/message"),
        Some(&s.designer),
        Some(json!({"text": "draw a smiley", "strokes": []})),
    )
    .await;
    assert_eq!(st, StatusCode::OK, "{v}");
    assert_eq!(v["phase"], "maker_turn");

    h.clock.advance(20.0);
    let (st, v) = call(&h.app, "POST", &format!("{base}/actions"), Some(&s.maker), Some(copy_actions())).await;
    assert_eq!(st, StatusCode::OK, "{v}");
    assert_eq!(v["submittable"], true);
    // designer time counts double in this condition
    assert_eq!(v["duration"], 30.0);

    let (st, v) = call(&h.app, "POST", &format!("{base}/submit"), Some(&s.maker), None).await;
    assert_eq!(st, StatusCode::OK, "{v}");
    assert_eq!(v["accepted"], true);

    let (_, v) = call(&h.app, "GET", &format!("{base}/view"), Some(&s.maker), None).await;
    assert_eq!(v["phase"], "finished");
    assert_eq!(v["outcome"], "won");

    let rollouts = h.store.rollouts.lock().unwrap().clone();
    assert_eq!(rollouts.len(), 1);
    let r = &rollouts[0];
    assert_eq!(r.outcome, Outcome::Won);
    assert_eq!(r.meta.dyad.as_deref(), Some("pair-1"));
    assert_eq!(r.meta.started_at.as_deref(), Some("t0"));
    assert!(r.check_replay().is_ok());
    assert_eq!(h.state.dyad("pair-1").unwrap().bonuses, 1);

    let (st, v) = call(&h.app, "POST", &format!("{base}/actions"), Some(&s.maker), Some(json!([]))).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY, "{v}");
}

#[tokio::test]
async fn event_log_replays_to_the_stored_rollout() {
    let h = harness();
    let s = start(&h.app, json!({"fixture": "smiley"})).await;
    let base = format!("/sessions/{}", s.id);
    let curves = synth::smiley_face().curves().to_vec();
    for (i, c) in curves.iter().enumerate() {
        h.clock.advance(1.5);
        call(&h.app, "POST", &format!("{base}/message"), Some(&s.designer), Some(json!({"text": format!("part {i}"), "strokes": []}))).await;
        h.clock.advance(2.25);
        let acts = serde_json::to_value(vec![Action::MakeCurve(*c)]).unwrap();
        let (st, v) = call(&h.app, "POST", &format!("{base}/actions"), Some(&s.maker), Some(acts)).await;
        assert_eq!(st, StatusCode::OK, "{v}");
    }
    let (_, v) = call(&h.app, "POST", &format!("{base}/submit"), Some(&s.maker), None).await;
    assert_eq!(v["accepted"], true);

    let stored = h.store.rollouts.lock().unwrap()[0].clone();
    let events = h.store.events_of(&s.id);
    let seqs: Vec<u64> = events.iter().map(|e| e.seq).collect();
    assert_eq!(seqs, (0..events.len() as u64).collect::<Vec<_>>());
    let replayed = rollout_from_events(&synth::smiley_face(), &events).unwrap();
    assert_eq!(rollout_to_line(&replayed), rollout_to_line(&stored));
}

#[tokio::test]
async fn reconnect_is_idempotent() {
    let h = harness();
    let s = start(&h.app, json!({"fixture": "smiley"})).await;
    let before = h.store.events_of(&s.id).len();
    let (st, v) = call(
        &h.app,
        "POST",
        &format!("/sessions/{}/join", s.id),
        None,
        Some(json!({"token": s.maker})),
    )
    .await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v["role"], "maker");
    assert_eq!(v["rejoin"], true);
    assert!(v["view"].get("target").is_none());
    assert_eq!(h.store.events_of(&s.id).len(), before);

    let (st, v) = call(&h.app, "POST", &format!("/sessions/{}/join", s.id), None, None).await;
    assert_eq!(st, StatusCode::CONFLICT);
    assert_eq!(v["error"], "session_full");
    let (st, _) = call(&h.app, "GET", &format!("/sessions/{}/view", s.id), Some("nope"), None).await;
    assert_eq!(st, StatusCode::FORBIDDEN);
    let (st, _) = call(&h.app, "GET", "/sessions/zzz/view", Some("nope"), None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn bad_requests_are_rejected() {
    let h = harness();
    let (st, v) = call(&h.app, "POST", "/sessions", None, Some(json!({"preset": "nope"}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "invalid_config");
    let (st, _) = call(&h.app, "POST", "/sessions", None, Some(json!({"fixture": "frowny"}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    let (st, _) = call(&h.app, "POST", "/sessions", None, Some(json!({"colour": 1}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);

    let s = start(&h.app, json!({"fixture": "smiley", "preset": "text_refine"})).await;
    let base = format!("/sessions/{}", s.id);
    let drawing = json!({"text": "", "strokes": [[[0.0, 0.0], [1.0, 1.0]]]});
    let (st, v) = call(&h.app, "POST", &format!("{base}/message"), Some(&s.designer), Some(drawing)).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY, "{v}");
    let long = json!({"text": "x".repeat(201), "strokes": []});
    let (st, _) = call(&h.app, "POST", &format!("{base}/message"), Some(&s.designer), Some(long)).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    let (st, _) = call(&h.app, "POST", &format!("{base}/message"), Some(&s.designer), Some(json!({"txt": 1}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn clock_expiry_loses_once_and_ejects_after_three() {
    let h = harness();
    for k in 0..3 {
        let s = start(&h.app, json!({"fixture": "smiley", "preset": "dataset", "dyad": "slow"})).await;
        h.clock.advance(271.0);
        // 271 s of designer time at double rate exceeds 540 s
        let (st, v) = call(
            &h.app,
            "POST",
            &format!("/sessions/{}/message", s.id),
            Some(&s.designer),
            Some(json!({"text": "late", "strokes": []})),
        )
        .await;
        assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY, "{v}");
        h.state.tick_all();
        let rs = h.store.rollouts.lock().unwrap().clone();
        assert_eq!(rs.len(), k + 1);
        assert_eq!(rs[k].outcome, Outcome::Lost);
    }
    assert!(h.state.dyad("slow").unwrap().ejected);
    let (st, v) = call(&h.app, "POST", "/sessions", None, Some(json!({"dyad": "slow"}))).await;
    assert_eq!(st, StatusCode::CONFLICT, "{v}");
}

#[tokio::test]
async fn event_stream_replays_and_closes_after_finish() {
    let h = harness();
    let s = start(&h.app, json!({"fixture": "smiley"})).await;
    let base = format!("/sessions/{}", s.id);
    call(&h.app, "POST", &format!("{base}/message"), Some(&s.designer), Some(json!({"text": "smile", "strokes": []}))).await;
    call(&h.app, "POST", &format!("{base}/actions"), Some(&s.maker), Some(copy_actions())).await;
    call(&h.app, "POST", &format!("{base}/submit"), Some(&s.maker), None).await;

    let req = Request::get(format!("{base}/events?token={}&since=2", s.maker))
        .body(Body::empty())
        .unwrap();
    let resp = h.app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["content-type"], "text/event-stream");
    let body = resp.into_body().collect().await.unwrap().to_bytes();
    let text = String::from_utf8(body.to_vec()).unwrap();
    let kinds: Vec<&str> = text.lines().filter_map(|l| l.strip_prefix("event: ")).collect();
    assert_eq!(kinds, ["message_posted", "actions_applied", "submit_result", "finished"]);
    assert!(!text.contains("\"target\""));

    let (st, _) = call(&h.app, "GET", &format!("{base}/events"), None, None).await;
    assert_eq!(st, StatusCode::FORBIDDEN);
}

#[tokio::test]
async fn file_storage_layout() {
    let dir = tempfile::tempdir().unwrap();
    let fs = Arc::new(FileStorage::new(dir.path()).unwrap());
    let clock = Arc::new(ManualClock::default());
    let state = Arc::new(AppState::new(
        ServerSettings::default(),
        GameConfig::default(),
        fs.clone() as Arc<dyn Storage>,
        clock,
        Vec::new(),
        3,
    ));
    let app = mrcad_server::router(state);
    let s = start(&app, json!({"fixture": "smiley"})).await;
    let base = format!("/sessions/{}", s.id);
    call(&app, "POST", &format!("{base}/message"), Some(&s.designer), Some(json!({"text": "smile", "strokes": []}))).await;
    call(&app, "POST", &format!("{base}/actions"), Some(&s.maker), Some(copy_actions())).await;
    call(&app, "POST", &format!("{base}/submit"), Some(&s.maker), None).await;

    let record = fs.read_session(&s.id).unwrap();
    assert_eq!(record.target, synth::smiley_face());
    let events = fs.read_events(&s.id).unwrap();
    let replayed = rollout_from_events(&record.target, &events).unwrap();
    let lines = std::fs::read_to_string(fs.rollouts_path()).unwrap();
    assert_eq!(lines, format!("{}\n", rollout_to_line(&replayed)));
}

#[tokio::test]
async fn silent_participant_forfeits_after_grace_unless_listening() {
    let h = harness();
    let s = start(&h.app, json!({"fixture": "smiley", "dyad": "quiet"})).await;
    let open = |token: &str| {
        let req = Request::get(format!("/sessions/{}/events?token={token}", s.id)).body(Body::empty()).unwrap();
        h.app.clone().oneshot(req)
    };
    let designer_stream = open(&s.designer).await.unwrap();
    let maker_stream = open(&s.maker).await.unwrap();

    // both listening: a long silence is fine
    h.clock.advance(100.0);
    h.state.tick_all();
    assert!(h.store.rollouts.lock().unwrap().is_empty());

    drop(maker_stream);
    h.clock.advance(59.0);
    h.state.tick_all();
    assert!(h.store.rollouts.lock().unwrap().is_empty());

    h.clock.advance(2.0);
    h.state.tick_all();
    let rs = h.store.rollouts.lock().unwrap().clone();
    assert_eq!(rs.len(), 1);
    assert_eq!(rs[0].outcome, Outcome::Lost);
    let events = h.store.events_of(&s.id);
    let abandoned = events.iter().find(|e| e.payload.get("abandoned_by").is_some()).unwrap();
    assert_eq!(abandoned.payload["abandoned_by"], "maker");
    assert_eq!(h.state.dyad("quiet").unwrap().lives, Some(2));
    drop(designer_stream);

    // any authenticated request counts as presence
    let s = start(&h.app, json!({"fixture": "smiley"})).await;
    for _ in 0..3 {
        h.clock.advance(40.0);
        for t in [&s.designer, &s.maker] {
            let (st, _) = call(&h.app, "GET", &format!("/sessions/{}/view", s.id), Some(t), None).await;
            assert_eq!(st, StatusCode::OK);
        }
        h.state.tick_all();
    }
    assert_eq!(h.store.rollouts.lock().unwrap().len(), 1);
}
