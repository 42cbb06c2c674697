//! One game session: seats, turn phases, the shared clock and the event log.
//! All mutation goes through `&mut self`; the server serializes access.

use mrcad::action::Action;
use mrcad::design::Design;
use mrcad::game::{Game, GameConfig, GameError, Outcome, Rollout, RolloutMeta, RoundTiming};
use mrcad::message::Message;
use mrcad::metric::chamfer;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use tokio::sync::broadcast;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Waiting,
    DesignerTurn,
    MakerTurn,
    Finished,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Designer,
    Maker,
}

impl Role {
    fn seat(self) -> usize {
        match self {
            Role::Designer => 0,
            Role::Maker => 1,
        }
    }

    fn from_seat(i: usize) -> Role {
        if i == 0 {
            Role::Designer
        } else {
            Role::Maker
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Joined,
    MessagePosted,
    ActionsApplied,
    SubmitResult,
    Timer,
    Finished,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Joined => "joined",
            EventKind::MessagePosted => "message_posted",
            EventKind::ActionsApplied => "actions_applied",
            EventKind::SubmitResult => "submit_result",
            EventKind::Timer => "timer",
            EventKind::Finished => "finished",
        }
    }
}

/// Everything broadcast to a session's participants. Never carries the
/// target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Event {
    pub seq: u64,
    pub kind: EventKind,
    pub payload: Value,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("no such session")]
    NotFound,
    #[error("token does not belong to this session")]
    BadToken,
    #[error("both seats are taken")]
    SessionFull,
    #[error("not your turn (phase {0:?})")]
    NotYourTurn(Phase),
    #[error("nothing to submit yet")]
    NothingToSubmit,
    #[error("dyad {0} has been ejected")]
    DyadEjected(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error(transparent)]
    Engine(#[from] GameError),
}

impl SessionError {
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::NotFound => "not_found",
            SessionError::BadToken => "bad_token",
            SessionError::SessionFull => "session_full",
            SessionError::NotYourTurn(_) => "not_your_turn",
            SessionError::NothingToSubmit => "nothing_to_submit",
            SessionError::DyadEjected(_) => "dyad_ejected",
            SessionError::InvalidConfig(_) => "invalid_config",
            SessionError::BadRequest(_) => "bad_request",
            SessionError::Engine(e) => match e {
                GameError::InvalidConfig(_) | GameError::UnknownPreset(_) => "invalid_config",
                GameError::ModalityViolation { .. } => "modality_violation",
                GameError::CharLimitExceeded { .. } => "char_limit_exceeded",
                GameError::RoundLimitExceeded(_) => "round_limit_exceeded",
                GameError::TimeExhausted => "time_exhausted",
                GameError::EmptyMessage => "empty_message",
                GameError::Finished => "finished",
            },
        }
    }
}

#[derive(Debug, Clone)]
struct Seat {
    token: String,
    joined: bool,
    /// Clock reading of the seat's last request or stream activity.
    last_seen: f64,
    /// Open event streams; a listening participant is never away.
    streams: usize,
}

/// A command's response body plus the rollout when the command ended the
/// game.
#[derive(Debug, Clone)]
pub struct Reply {
    pub body: Value,
    pub finished: Option<Rollout>,
}

pub type CommandResult = Result<Reply, SessionError>;

pub struct Session {
    pub id: String,
    pub condition: String,
    pub dyad: Option<String>,
    game: Game,
    phase: Phase,
    seats: [Seat; 2],
    pending: Option<(Message, f64)>,
    /// Clock reading when the current turn started.
    turn_started: f64,
    started_at: Option<String>,
    log: Vec<Event>,
    /// Events already handed to storage.
    flushed: usize,
    tx: broadcast::Sender<Event>,
    rollout: Option<Rollout>,
}

fn new_token(rng: &mut impl Rng) -> String {
    format!("{:016x}{:016x}", rng.random::<u64>(), rng.random::<u64>())
}

impl Session {
    pub fn new(
        id: String,
        condition: String,
        cfg: GameConfig,
        target: Design,
        dyad: Option<String>,
        rng: &mut impl Rng,
    ) -> Result<Session, SessionError> {
        if target.is_empty() {
            return Err(SessionError::BadRequest("target design is empty".into()));
        }
        let game = Game::new(target, cfg).map_err(|e| SessionError::InvalidConfig(e.to_string()))?;
        let (tx, _) = broadcast::channel(256);
        Ok(Session {
            id,
            condition,
            dyad,
            game,
            phase: Phase::Waiting,
            seats: [
                Seat {
                    token: new_token(rng),
                    joined: false,
                    last_seen: 0.0,
                    streams: 0,
                },
                Seat {
                    token: new_token(rng),
                    joined: false,
                    last_seen: 0.0,
                    streams: 0,
                },
            ],
            pending: None,
            turn_started: 0.0,
            started_at: None,
            log: Vec::new(),
            flushed: 0,
            tx,
            rollout: None,
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn config(&self) -> &GameConfig {
        self.game.config()
    }

    pub fn target(&self) -> &Design {
        self.game.target()
    }

    pub fn token(&self, role: Role) -> &str {
        &self.seats[role.seat()].token
    }

    pub fn events(&self) -> &[Event] {
        &self.log
    }

    /// Events emitted since the previous call, for persistence.
    pub fn drain_new_events(&mut self) -> Vec<Event> {
        let new = self.log[self.flushed..].to_vec();
        self.flushed = self.log.len();
        new
    }

    pub fn rollout(&self) -> Option<&Rollout> {
        self.rollout.as_ref()
    }

    /// Subscribes to live events and returns the log from `since` onwards;
    /// taken together so no event is missed or repeated.
    pub fn subscribe(&self, since: u64) -> (Vec<Event>, broadcast::Receiver<Event>) {
        let rx = self.tx.subscribe();
        let past = self.log.iter().filter(|e| e.seq >= since).cloned().collect();
        (past, rx)
    }

    fn emit(&mut self, kind: EventKind, payload: Value) -> Event {
        let e = Event {
            seq: self.log.len() as u64,
            kind,
            payload,
        };
        self.log.push(e.clone());
        // no subscribers is fine
        let _ = self.tx.send(e.clone());
        e
    }

    pub fn role_of(&self, token: &str) -> Result<Role, SessionError> {
        self.seats
            .iter()
            .position(|s| s.token == token)
            .map(Role::from_seat)
            .ok_or(SessionError::BadToken)
    }

    /// Joins with a token (claim or reconnect), or without one to take a
    /// random free seat. Returns the role, the seat token, and whether this
    /// is a reconnect.
    pub fn join(&mut self, token: Option<&str>, now: f64, stamp: &str, rng: &mut impl Rng) -> Result<(Role, String, bool), SessionError> {
        let role = match token {
            Some(t) => self.role_of(t)?,
            None => {
                let free: Vec<usize> = (0..2).filter(|&i| !self.seats[i].joined).collect();
                if free.is_empty() {
                    return Err(SessionError::SessionFull);
                }
                Role::from_seat(free[rng.random_range(0..free.len())])
            }
        };
        let seat = &mut self.seats[role.seat()];
        seat.last_seen = now;
        let rejoin = seat.joined;
        if !rejoin {
            seat.joined = true;
            self.emit(EventKind::Joined, json!({"role": role}));
            if self.seats.iter().all(|s| s.joined) && self.phase == Phase::Waiting {
                self.phase = Phase::DesignerTurn;
                self.turn_started = now;
                self.started_at = Some(stamp.to_string());
            }
        }
        Ok((role, self.seats[role.seat()].token.clone(), rejoin))
    }

    /// Records activity from `role`.
    pub fn touch(&mut self, role: Role, now: f64) {
        self.seats[role.seat()].last_seen = now;
    }

    pub fn stream_opened(&mut self, role: Role, now: f64) {
        let seat = &mut self.seats[role.seat()];
        seat.streams += 1;
        seat.last_seen = now;
    }

    pub fn stream_closed(&mut self, role: Role, now: f64) {
        let seat = &mut self.seats[role.seat()];
        seat.streams = seat.streams.saturating_sub(1);
        seat.last_seen = now;
    }

    /// A joined participant with no open stream and no request for longer
    /// than `grace` seconds.
    pub fn away(&self, now: f64, grace: f64) -> Option<Role> {
        (0..2)
            .find(|&i| {
                let s = &self.seats[i];
                s.joined && s.streams == 0 && now - s.last_seen > grace
            })
            .map(Role::from_seat)
    }

    /// Ends a running game as lost once a participant has been away past
    /// the grace period.
    pub fn abandon(&mut self, now: f64, grace: f64) -> Option<Rollout> {
        if !matches!(self.phase, Phase::DesignerTurn | Phase::MakerTurn) {
            return None;
        }
        let role = self.away(now, grace)?;
        self.emit(EventKind::Timer, json!({"abandoned_by": role, "phase": self.phase}));
        Some(self.finish(false))
    }

    /// Seconds charged to the shared clock, including the running turn.
    fn charged(&self, now: f64) -> f64 {
        let mult = self.config().designer_time_multiplier;
        let pending = self.pending.as_ref().map_or(0.0, |(_, d)| d * mult);
        let running = match self.phase {
            Phase::DesignerTurn => (now - self.turn_started) * mult,
            Phase::MakerTurn => now - self.turn_started,
            _ => 0.0,
        };
        self.game.elapsed() + pending + running
    }

    pub fn remaining(&self, now: f64) -> Option<f64> {
        self.config().total_time.map(|t| (t - self.charged(now)).max(0.0))
    }

    fn expired(&self, now: f64) -> bool {
        matches!(self.phase, Phase::DesignerTurn | Phase::MakerTurn) && self.remaining(now) == Some(0.0)
    }

    /// The state visible to `role`. Only the Designer's view has a target.
    pub fn view(&self, role: Role, now: f64) -> Value {
        let cfg = self.config();
        let last = self.game.last_step();
        let mut v = json!({
            "session_id": self.id,
            "role": role,
            "phase": self.phase,
            "condition": self.condition,
            "round": self.game.rounds().len(),
            "max_rounds": cfg.max_rounds,
            "modality": cfg.modality,
            "char_limit": cfg.char_limit,
            "remaining_time": self.remaining(now),
            "design": self.game.current(),
            "history": self.game.rounds(),
            "pending_message": self.pending.as_ref().map(|(m, _)| m),
            "submittable": self.game.submittable(),
            "threshold": last.map(|s| s.threshold),
            "distance": last.filter(|_| cfg.reveal_distance).map(|s| s.distance),
            "outcome": self.rollout.as_ref().map(|r| r.outcome),
            "last_seq": self.log.len() as u64,
        });
        if role == Role::Designer {
            v["target"] = serde_json::to_value(self.game.target()).expect("design serializes");
        }
        v
    }

    fn ensure_live(&self, now: f64) -> Result<(), SessionError> {
        if self.phase == Phase::Finished {
            return Err(SessionError::Engine(GameError::Finished));
        }
        if self.expired(now) {
            return Err(SessionError::Engine(GameError::TimeExhausted));
        }
        Ok(())
    }

    /// Ends the game if the clock has run out. Callers run this before
    /// every command so an expired game is persisted exactly once.
    pub fn expire(&mut self, now: f64) -> Option<Rollout> {
        self.expired(now).then(|| self.finish(false))
    }

    pub fn post_message(&mut self, role: Role, message: Message, now: f64) -> CommandResult {
        self.ensure_live(now)?;
        if role != Role::Designer || self.phase != Phase::DesignerTurn {
            return Err(SessionError::NotYourTurn(self.phase));
        }
        self.game.can_start_round()?;
        self.config().check_message(&message)?;
        let spent = now - self.turn_started;
        let round = self.game.rounds().len() + 1;
        self.emit(EventKind::MessagePosted, json!({"round": round, "message": message}));
        self.pending = Some((message, spent));
        self.phase = Phase::MakerTurn;
        self.turn_started = now;
        Ok(Reply {
            body: json!({"round": round, "phase": self.phase}),
            finished: None,
        })
    }

    pub fn post_actions(&mut self, role: Role, actions: Vec<Action>, now: f64) -> CommandResult {
        self.ensure_live(now)?;
        if role != Role::Maker || self.phase != Phase::MakerTurn {
            return Err(SessionError::NotYourTurn(self.phase));
        }
        let (message, designer_secs) = self.pending.take().expect("maker turn follows a message");
        let maker_secs = now - self.turn_started;
        let step = self.game.step(
            message,
            actions.clone(),
            RoundTiming {
                designer_secs: Some(designer_secs),
                maker_secs: Some(maker_secs),
            },
        )?;
        let reveal = self.config().reveal_distance;
        let round = self.game.rounds().last().expect("just played");
        let body = json!({
            "round": step.round,
            "actions": actions,
            "skipped": step.skipped,
            "design": round.design_after,
            "duration": round.duration,
            "submittable": step.submittable,
            "threshold": step.threshold,
            "distance": if reveal { Some(step.distance) } else { None },
        });
        self.emit(EventKind::ActionsApplied, body.clone());
        self.phase = Phase::DesignerTurn;
        self.turn_started = now;
        let finished = if self.game.can_start_round().is_err() && !step.submittable {
            Some(self.finish(false))
        } else {
            None
        };
        Ok(Reply { body, finished })
    }

    /// Maker asks to end the game with the current design.
    pub fn submit(&mut self, role: Role, now: f64) -> CommandResult {
        self.ensure_live(now)?;
        if role != Role::Maker || !matches!(self.phase, Phase::DesignerTurn | Phase::MakerTurn) {
            return Err(SessionError::NotYourTurn(self.phase));
        }
        let Some(last) = self.game.last_step().cloned() else {
            return Err(SessionError::NothingToSubmit);
        };
        let reveal = self.config().reveal_distance;
        let accepted = last.submittable;
        let body = json!({
            "accepted": accepted,
            "round": last.round,
            "threshold": last.threshold,
            "distance": if reveal { Some(last.distance) } else { None },
        });
        self.emit(EventKind::SubmitResult, body.clone());
        let finished = if accepted {
            Some(self.finish(true))
        } else if self.game.can_start_round().is_err() {
            Some(self.finish(false))
        } else {
            None
        };
        Ok(Reply { body, finished })
    }

    /// Periodic clock check; ends the game when time has run out.
    pub fn tick(&mut self, now: f64) -> Option<Rollout> {
        if !matches!(self.phase, Phase::DesignerTurn | Phase::MakerTurn) {
            return None;
        }
        if let Some(r) = self.expire(now) {
            return Some(r);
        }
        if let Some(r) = self.remaining(now) {
            self.emit(EventKind::Timer, json!({"remaining": r, "phase": self.phase}));
        }
        None
    }

    fn finish(&mut self, submitted: bool) -> Rollout {
        let mut game = self.game.clone();
        game.meta = RolloutMeta {
            id: self.id.clone(),
            dyad: self.dyad.clone(),
            condition: Some(self.condition.clone()),
            started_at: self.started_at.clone(),
            finished_at: None,
            extra: Default::default(),
        };
        let rollout = game.finalize(submitted);
        let distance = chamfer(rollout.final_design(), &rollout.target, &self.config().metric);
        self.phase = Phase::Finished;
        self.pending = None;
        let reveal = self.config().reveal_distance;
        self.emit(
            EventKind::Finished,
            json!({
                "outcome": rollout.outcome,
                "rounds": rollout.rounds.len(),
                "distance": if reveal { Some(distance) } else { None },
                "meta": rollout.meta,
            }),
        );
        self.rollout = Some(rollout.clone());
        rollout
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReplayError {
    #[error("event {seq}: {reason}")]
    Malformed { seq: u64, reason: String },
    #[error("event log has no finished event")]
    Unfinished,
}

/// Rebuilds the rollout of a finished session from its event log and the
/// target.
pub fn rollout_from_events(target: &Design, events: &[Event]) -> Result<Rollout, ReplayError> {
    let bad = |seq: u64, reason: &str| ReplayError::Malformed {
        seq,
        reason: reason.to_string(),
    };
    let mut current = Design::empty();
    let mut pending: Option<Message> = None;
    let mut rounds = Vec::new();
    for (i, e) in events.iter().enumerate() {
        if e.seq != i as u64 {
            return Err(bad(e.seq, "sequence gap"));
        }
        match e.kind {
            EventKind::MessagePosted => {
                let m = serde_json::from_value(e.payload["message"].clone()).map_err(|x| bad(e.seq, &x.to_string()))?;
                pending = Some(m);
            }
            EventKind::ActionsApplied => {
                let message = pending.take().ok_or_else(|| bad(e.seq, "actions without a message"))?;
                let actions: Vec<Action> =
                    serde_json::from_value(e.payload["actions"].clone()).map_err(|x| bad(e.seq, &x.to_string()))?;
                let after = current.apply_lenient(&actions).design;
                rounds.push(mrcad::game::Round {
                    design_before: std::mem::replace(&mut current, after.clone()),
                    message,
                    actions,
                    design_after: after,
                    duration: e.payload["duration"].as_f64(),
                });
            }
            EventKind::Finished => {
                let outcome: Outcome =
                    serde_json::from_value(e.payload["outcome"].clone()).map_err(|x| bad(e.seq, &x.to_string()))?;
                let meta: RolloutMeta =
                    serde_json::from_value(e.payload["meta"].clone()).map_err(|x| bad(e.seq, &x.to_string()))?;
                return Ok(Rollout {
                    target: target.clone(),
                    rounds,
                    outcome,
                    meta,
                });
            }
            _ => {}
        }
    }
    Err(ReplayError::Unfinished)
}
