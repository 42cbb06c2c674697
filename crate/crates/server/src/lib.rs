//! HTTP service for live Designer/Maker games.
//!
//! Commands are plain request/response endpoints; each session also has a
//! server-sent event stream that replays its log and then follows it live.
//! The Maker never receives target geometry.

pub mod session;
pub mod storage;

use std::collections::HashMap;
use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use mrcad::action::Action;
use mrcad::config::ServerSettings;
use mrcad::design::Design;
use mrcad::game::{Dyad, GameConfig, Rollout};
use mrcad::message::Message;
use mrcad::synth;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::broadcast;

pub use session::{rollout_from_events, Event, EventKind, Phase, Role, Session, SessionError};
pub use storage::{FileStorage, MemoryStorage, SessionRecord, Storage};

/// Time source; injectable so tests control the game clock.
pub trait Clock: Send + Sync {
    /// Seconds on a monotonic scale.
    fn now(&self) -> f64;
}

#[derive(Debug)]
pub struct SystemClock(std::time::Instant);

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock(std::time::Instant::now())
    }
}

impl Clock for SystemClock {
    fn now(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

#[derive(Debug, Default)]
pub struct ManualClock(Mutex<f64>);

impl ManualClock {
    pub fn advance(&self, secs: f64) {
        *self.0.lock().expect("clock lock") += secs;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> f64 {
        *self.0.lock().expect("clock lock")
    }
}

fn wall_stamp() -> String {
    let t = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .unwrap_or_default();
    format!("{}", t.as_secs())
}

pub struct AppState {
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    dyads: Mutex<HashMap<String, Dyad>>,
    storage: Arc<dyn Storage>,
    clock: Arc<dyn Clock>,
    settings: ServerSettings,
    base: GameConfig,
    pool: Vec<Design>,
    rng: Mutex<ChaCha8Rng>,
    /// Produces the `started_at` stamp; wall-clock seconds by default.
    stamp: Box<dyn Fn() -> String + Send + Sync>,
}

impl AppState {
    /// `base` supplies the metric and defaults; sessions pick presets on top.
    pub fn new(
        settings: ServerSettings,
        base: GameConfig,
        storage: Arc<dyn Storage>,
        clock: Arc<dyn Clock>,
        pool: Vec<Design>,
        seed: u64,
    ) -> Self {
        AppState {
            sessions: Mutex::new(HashMap::new()),
            dyads: Mutex::new(HashMap::new()),
            storage,
            clock,
            settings,
            base,
            pool,
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
            stamp: Box::new(wall_stamp),
        }
    }

    pub fn with_stamp(mut self, f: impl Fn() -> String + Send + Sync + 'static) -> Self {
        self.stamp = Box::new(f);
        self
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, SessionError> {
        self.sessions
            .lock()
            .expect("sessions lock")
            .get(id)
            .cloned()
            .ok_or(SessionError::NotFound)
    }

    pub fn dyad(&self, id: &str) -> Option<Dyad> {
        self.dyads.lock().expect("dyads lock").get(id).cloned()
    }

    /// Writes new events and, when the game ended, the rollout and dyad
    /// bookkeeping.
    fn persist(&self, s: &mut Session, finished: Option<Rollout>) {
        for e in s.drain_new_events() {
            if let Err(err) = self.storage.append_event(&s.id, &e) {
                log::error!("session {}: could not store event {}: {err}", s.id, e.seq);
            }
        }
        if let Some(r) = finished {
            if let Err(err) = self.storage.append_rollout(&r) {
                log::error!("session {}: could not store rollout: {err}", s.id);
            }
            if let Some(d) = &s.dyad {
                let lives = s.config().lives;
                let mut dyads = self.dyads.lock().expect("dyads lock");
                dyads.entry(d.clone()).or_insert_with(|| Dyad::new(d.clone(), lives)).record(r.outcome);
            }
        }
    }

    fn grace(&self) -> f64 {
        self.settings.disconnect_grace_secs as f64
    }

    /// Clock check for every live session; ends expired and abandoned games.
    pub fn tick_all(&self) {
        let sessions: Vec<Arc<Mutex<Session>>> = self.sessions.lock().expect("sessions lock").values().cloned().collect();
        let now = self.clock.now();
        for s in sessions {
            let mut s = s.lock().expect("session lock");
            let finished = s.tick(now).or_else(|| s.abandon(now, self.grace()));
            self.persist(&mut s, finished);
        }
    }
}

pub struct ApiError(SessionError);

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            SessionError::NotFound => StatusCode::NOT_FOUND,
            SessionError::BadToken => StatusCode::FORBIDDEN,
            SessionError::SessionFull | SessionError::NotYourTurn(_) | SessionError::DyadEjected(_) => StatusCode::CONFLICT,
            SessionError::InvalidConfig(_) | SessionError::BadRequest(_) => StatusCode::BAD_REQUEST,
            SessionError::NothingToSubmit | SessionError::Engine(_) => StatusCode::UNPROCESSABLE_ENTITY,
        };
        (status, Json(json!({"error": self.0.code(), "message": self.0.to_string()}))).into_response()
    }
}

type ApiResult = Result<Json<Value>, ApiError>;

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, SessionError> {
    let text: &[u8] = if body.is_empty() { b"{}" } else { body };
    serde_json::from_slice(text).map_err(|e| SessionError::BadRequest(e.to_string()))
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CreateRequest {
    preset: Option<String>,
    config: Option<GameConfig>,
    target: Option<Design>,
    /// Named built-in target; `smiley` is the practice design.
    fixture: Option<String>,
    dyad: Option<String>,
}

async fn create_session(State(st): State<Arc<AppState>>, body: Bytes) -> ApiResult {
    let req: CreateRequest = parse_body(&body)?;
    let condition = req.preset.clone().unwrap_or_else(|| "dataset".into());
    let cfg = match req.config {
        Some(c) => c,
        None => {
            let mut c = GameConfig::preset(&condition).map_err(|e| SessionError::InvalidConfig(e.to_string()))?;
            c.metric = st.base.metric;
            c
        }
    };
    if let Some(d) = &req.dyad {
        if st.dyad(d).is_some_and(|x| x.ejected) {
            return Err(SessionError::DyadEjected(d.clone()).into());
        }
    }
    let mut rng = st.rng.lock().expect("rng lock");
    let target = match (req.target, req.fixture.as_deref()) {
        (Some(t), _) => t,
        (None, Some("smiley")) => synth::smiley_face(),
        (None, Some(other)) => return Err(SessionError::BadRequest(format!("unknown fixture {other:?}")).into()),
        (None, None) if !st.pool.is_empty() => st.pool[rng.random_range(0..st.pool.len())].clone(),
        (None, None) => synth::random_design(&mut *rng, &synth::DesignOptions::default()),
    };
    if !target.in_canvas() {
        return Err(SessionError::BadRequest("target leaves the canvas".into()).into());
    }
    let id = format!("{:016x}", rng.random::<u64>());
    let session = Session::new(id.clone(), condition, cfg, target, req.dyad, &mut *rng)?;
    drop(rng);
    let record = SessionRecord {
        id: id.clone(),
        condition: session.condition.clone(),
        config: session.config().clone(),
        target: session.target().clone(),
    };
    if let Err(err) = st.storage.save_session(&record) {
        log::error!("session {id}: could not store session record: {err}");
    }
    let config = serde_json::to_value(session.config()).expect("config serializes");
    st.sessions
        .lock()
        .expect("sessions lock")
        .insert(id.clone(), Arc::new(Mutex::new(session)));
    Ok(Json(json!({"session_id": id, "config": config})))
}

fn token_from(headers: &HeaderMap, query: &TokenQuery) -> Option<String> {
    if let Some(t) = headers.get("x-session-token").and_then(|v| v.to_str().ok()) {
        return Some(t.to_string());
    }
    if let Some(t) = headers
        .get("authorization")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
    {
        return Some(t.to_string());
    }
    query.token.clone()
}

#[derive(Debug, Default, Deserialize)]
pub struct TokenQuery {
    token: Option<String>,
    since: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct JoinRequest {
    token: Option<String>,
}

async fn join(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Query(q): Query<TokenQuery>,
    body: Bytes,
) -> ApiResult {
    let req: JoinRequest = parse_body(&body)?;
    let token = req.token.or_else(|| token_from(&headers, &q));
    let s = st.session(&id)?;
    let mut s = s.lock().expect("session lock");
    let now = st.clock.now();
    let stamp = (st.stamp)();
    let (role, token, rejoin) = {
        let mut rng = st.rng.lock().expect("rng lock");
        s.join(token.as_deref(), now, &stamp, &mut *rng)?
    };
    st.persist(&mut s, None);
    Ok(Json(json!({
        "role": role,
        "token": token,
        "rejoin": rejoin,
        "view": s.view(role, now),
    })))
}

/// Resolves the caller's role and runs `f` on the session after ending it
/// if the clock ran out or the partner has been away too long.
fn with_role<F>(st: &AppState, id: &str, headers: &HeaderMap, q: &TokenQuery, f: F) -> ApiResult
where
    F: FnOnce(&mut Session, Role, f64) -> session::CommandResult,
{
    let token = token_from(headers, q).ok_or(SessionError::BadToken)?;
    let s = st.session(id)?;
    let mut s = s.lock().expect("session lock");
    let role = s.role_of(&token)?;
    let now = st.clock.now();
    s.touch(role, now);
    let ended = s.expire(now).or_else(|| s.abandon(now, st.grace()));
    st.persist(&mut s, ended);
    let result = f(&mut s, role, now);
    match result {
        Ok(reply) => {
            st.persist(&mut s, reply.finished);
            Ok(Json(reply.body))
        }
        Err(e) => {
            st.persist(&mut s, None);
            Err(e.into())
        }
    }
}

async fn view(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Query(q): Query<TokenQuery>,
) -> ApiResult {
    with_role(&st, &id, &headers, &q, |s, role, now| {
        Ok(session::Reply {
            body: s.view(role, now),
            finished: None,
        })
    })
}

async fn post_message(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Query(q): Query<TokenQuery>,
    body: Bytes,
) -> ApiResult {
    let message: Message = parse_body(&body)?;
    with_role(&st, &id, &headers, &q, |s, role, now| s.post_message(role, message, now))
}

async fn post_actions(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Query(q): Query<TokenQuery>,
    body: Bytes,
) -> ApiResult {
    let actions: Vec<Action> = parse_body(&body)?;
    with_role(&st, &id, &headers, &q, |s, role, now| s.post_actions(role, actions, now))
}

async fn submit(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Query(q): Query<TokenQuery>,
) -> ApiResult {
    with_role(&st, &id, &headers, &q, |s, role, now| s.submit(role, now))
}

fn sse_event(e: &Event) -> SseEvent {
    SseEvent::default()
        .event(e.kind.as_str())
        .id(e.seq.to_string())
        .data(serde_json::to_string(e).expect("event serializes"))
}

/// Marks a role as listening for as long as its event stream is alive.
struct Presence {
    session: Arc<Mutex<Session>>,
    role: Role,
    clock: Arc<dyn Clock>,
}

impl Presence {
    fn open(session: Arc<Mutex<Session>>, role: Role, clock: Arc<dyn Clock>) -> Presence {
        session.lock().expect("session lock").stream_opened(role, clock.now());
        Presence { session, role, clock }
    }
}

impl Drop for Presence {
    fn drop(&mut self) {
        if let Ok(mut s) = self.session.lock() {
            s.stream_closed(self.role, self.clock.now());
        }
    }
}

/// Replayed events followed by live ones; ends after the `finished` event.
fn event_stream(
    past: Vec<Event>,
    rx: broadcast::Receiver<Event>,
    presence: Presence,
) -> impl Stream<Item = Result<SseEvent, Infallible>> {
    let done = past.iter().any(|e| e.kind == EventKind::Finished);
    let next_seq = past.last().map(|e| e.seq + 1);
    let live = stream::unfold((rx, next_seq, done), |(mut rx, mut next, done)| async move {
        if done {
            return None;
        }
        loop {
            match rx.recv().await {
                Ok(e) => {
                    if next.is_some_and(|n| e.seq < n) {
                        continue;
                    }
                    next = Some(e.seq + 1);
                    let finished = e.kind == EventKind::Finished;
                    return Some((e, (rx, next, finished)));
                }
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    log::warn!("event subscriber lagged by {n}; client should reconnect with since");
                    continue;
                }
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    stream::iter(past).chain(live).map(move |e| {
        let _listening = &presence;
        Ok(sse_event(&e))
    })
}

async fn events(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Query(q): Query<TokenQuery>,
) -> Result<Response, ApiError> {
    let token = token_from(&headers, &q).ok_or(SessionError::BadToken)?;
    let s = st.session(&id)?;
    let (role, past, rx) = {
        let s = s.lock().expect("session lock");
        let role = s.role_of(&token)?;
        let (past, rx) = s.subscribe(q.since.unwrap_or(0));
        (role, past, rx)
    };
    let presence = Presence::open(s, role, st.clock.clone());
    let keep = KeepAlive::new().interval(Duration::from_secs(st.settings.heartbeat_secs.max(1)));
    Ok(Sse::new(event_stream(past, rx, presence)).keep_alive(keep).into_response())
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/join", post(join))
        .route("/sessions/{id}/view", get(view))
        .route("/sessions/{id}/message", post(post_message))
        .route("/sessions/{id}/actions", post(post_actions))
        .route("/sessions/{id}/submit", post(submit))
        .route("/sessions/{id}/events", get(events))
        .with_state(state)
}

/// Binds and serves until the process is stopped; a background task runs
/// the clock check every heartbeat.
pub async fn serve(state: Arc<AppState>) -> std::io::Result<()> {
    let addr: SocketAddr = state
        .settings
        .bind
        .parse()
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, format!("bind address: {e}")))?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    let ticker = state.clone();
    let period = Duration::from_secs(state.settings.heartbeat_secs.max(1));
    tokio::spawn(async move {
        let mut iv = tokio::time::interval(period);
        loop {
            iv.tick().await;
            ticker.tick_all();
        }
    });
    axum::serve(listener, router(state)).await
}
