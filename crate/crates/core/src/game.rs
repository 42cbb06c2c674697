//! The two-player game: rounds, rollouts, submission thresholds, lives,
//! condition presets, and a play loop over abstract Designer/Maker agents.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::Action;
use crate::design::{design_equal, Design};
use crate::geometry::EPS_ID;
use crate::message::Message;
use crate::metric::{chamfer, Distance, MetricConfig};
use crate::render::{render_history, scene_to_svg, RenderStyle, Scene};

/// Submission threshold for the first round of the default schedule.
pub const DEFAULT_FIRST_THRESHOLD: f64 = 0.05;

/// One instruction/execution exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Round {
    pub design_before: Design,
    pub message: Message,
    pub actions: Vec<Action>,
    pub design_after: Design,
    /// Seconds spent on the round, when measured.
    pub duration: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Won,
    Lost,
    Excluded,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RolloutMeta {
    #[serde(default)]
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dyad: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started_at: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<String>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

/// A full game: the hidden target plus the ordered rounds played towards it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rollout {
    pub target: Design,
    pub rounds: Vec<Round>,
    pub outcome: Outcome,
    #[serde(default)]
    pub meta: RolloutMeta,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error("rollout has no rounds")]
    NoRounds,
    #[error("round 1 does not start from the empty design")]
    NonEmptyStart,
    #[error("round {round}: design_before differs from the previous design_after")]
    Broken { round: usize },
    #[error("round {round}: replaying the actions does not reproduce design_after")]
    ReplayMismatch { round: usize },
}

impl Rollout {
    pub fn id(&self) -> &str {
        &self.meta.id
    }

    /// The last resulting design, or the empty design when no round was played.
    pub fn final_design(&self) -> &Design {
        static EMPTY: std::sync::OnceLock<Design> = std::sync::OnceLock::new();
        self.rounds
            .last()
            .map(|r| &r.design_after)
            .unwrap_or_else(|| EMPTY.get_or_init(Design::empty))
    }

    pub fn final_distance(&self, cfg: &MetricConfig) -> Distance {
        chamfer(self.final_design(), &self.target, cfg)
    }

    pub fn has_actions(&self) -> bool {
        self.rounds.iter().any(|r| !r.actions.is_empty())
    }

    /// Checks that round 1 starts empty and each round starts where the
    /// previous one ended (1-based round numbers in errors).
    pub fn check_chain(&self) -> Result<(), ChainError> {
        let first = self.rounds.first().ok_or(ChainError::NoRounds)?;
        if !first.design_before.is_empty() {
            return Err(ChainError::NonEmptyStart);
        }
        for (i, pair) in self.rounds.windows(2).enumerate() {
            if !design_equal(&pair[0].design_after, &pair[1].design_before, 0.0) {
                return Err(ChainError::Broken { round: i + 2 });
            }
        }
        Ok(())
    }

    /// Re-applies every round's actions (lenient) and compares the result
    /// with the recorded `design_after`.
    pub fn check_replay(&self) -> Result<(), ChainError> {
        for (i, r) in self.rounds.iter().enumerate() {
            let replayed = r.design_before.apply_lenient(&r.actions).design;
            if !design_equal(&replayed, &r.design_after, EPS_ID) {
                return Err(ChainError::ReplayMismatch { round: i + 1 });
            }
        }
        Ok(())
    }
}

/// Which message channels a condition allows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelPolicy {
    #[default]
    Multimodal,
    TextOnly,
    DrawingOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GameConfig {
    pub max_rounds: usize,
    /// Shared budget in seconds for the whole game.
    pub total_time: Option<f64>,
    pub win_threshold: f64,
    /// Per-round submission thresholds; `None` uses the default linear schedule.
    pub submission_schedule: Option<Vec<f64>>,
    pub lives: Option<u32>,
    pub modality: ChannelPolicy,
    pub char_limit: Option<usize>,
    /// Per-round turn limits in seconds.
    pub designer_time: Option<f64>,
    pub maker_time: Option<f64>,
    /// Designer time is charged to the shared clock at this rate.
    pub designer_time_multiplier: f64,
    /// Whether a rejected submission reports the numeric distance.
    pub reveal_distance: bool,
    pub metric: MetricConfig,
}

impl Default for GameConfig {
    fn default() -> Self {
        GameConfig {
            max_rounds: 10,
            total_time: Some(540.0),
            win_threshold: 0.2,
            submission_schedule: None,
            lives: Some(3),
            modality: ChannelPolicy::Multimodal,
            char_limit: None,
            designer_time: None,
            maker_time: None,
            designer_time_multiplier: 1.0,
            reveal_distance: true,
            metric: MetricConfig::default(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("invalid game config: {0}")]
    InvalidConfig(String),
    #[error("unknown condition preset {0:?}")]
    UnknownPreset(String),
    #[error("message violates the {policy:?} condition: {reason}")]
    ModalityViolation { policy: ChannelPolicy, reason: &'static str },
    #[error("message has {got} characters, limit is {limit}")]
    CharLimitExceeded { limit: usize, got: usize },
    #[error("round limit of {0} reached")]
    RoundLimitExceeded(usize),
    #[error("time budget exhausted")]
    TimeExhausted,
    #[error("message is empty")]
    EmptyMessage,
    #[error("game already finished")]
    Finished,
}

impl GameConfig {
    pub fn validate(&self) -> Result<(), GameError> {
        let bad = |m: String| Err(GameError::InvalidConfig(m));
        if self.max_rounds == 0 {
            return bad("max_rounds must be at least 1".into());
        }
        if !(self.win_threshold > 0.0) {
            return bad(format!("win_threshold must be positive, got {}", self.win_threshold));
        }
        if let Some(s) = &self.submission_schedule {
            if s.len() != self.max_rounds {
                return bad(format!(
                    "submission_schedule has {} entries for {} rounds",
                    s.len(),
                    self.max_rounds
                ));
            }
            if s.iter().any(|t| !(*t > 0.0)) {
                return bad("submission thresholds must be positive".into());
            }
            if s.windows(2).any(|w| w[1] < w[0]) {
                return bad("submission_schedule must be nondecreasing".into());
            }
        }
        if !(self.designer_time_multiplier > 0.0) {
            return bad("designer_time_multiplier must be positive".into());
        }
        self.metric
            .validate()
            .map_err(|e| GameError::InvalidConfig(e.to_string()))
    }

    /// Named condition presets: the three-round refinement studies, the
    /// single-round generation-only study, and the dataset collection setup.
    pub fn preset(name: &str) -> Result<GameConfig, GameError> {
        let study = |modality| GameConfig {
            max_rounds: 3,
            total_time: None,
            lives: None,
            modality,
            char_limit: Some(200),
            designer_time: Some(30.0),
            maker_time: Some(120.0),
            ..GameConfig::default()
        };
        Ok(match name {
            "mm_refine" => study(ChannelPolicy::Multimodal),
            "text_refine" => study(ChannelPolicy::TextOnly),
            "draw_refine" => study(ChannelPolicy::DrawingOnly),
            "mm_genonly" => GameConfig {
                max_rounds: 1,
                char_limit: Some(600),
                designer_time: Some(90.0),
                maker_time: Some(360.0),
                ..study(ChannelPolicy::Multimodal)
            },
            "dataset" => GameConfig {
                designer_time_multiplier: 2.0,
                ..GameConfig::default()
            },
            other => return Err(GameError::UnknownPreset(other.to_string())),
        })
    }

    pub const PRESETS: [&'static str; 5] = ["mm_refine", "text_refine", "draw_refine", "mm_genonly", "dataset"];

    /// Checks a message against the channel policy and character limit.
    pub fn check_message(&self, m: &Message) -> Result<(), GameError> {
        if m.is_empty() {
            return Err(GameError::EmptyMessage);
        }
        match self.modality {
            ChannelPolicy::TextOnly if m.has_drawing() => {
                return Err(GameError::ModalityViolation {
                    policy: self.modality,
                    reason: "drawing not allowed",
                })
            }
            ChannelPolicy::DrawingOnly if m.has_text() => {
                return Err(GameError::ModalityViolation {
                    policy: self.modality,
                    reason: "text not allowed",
                })
            }
            _ => {}
        }
        if let Some(limit) = self.char_limit {
            let got = m.char_count();
            if got > limit {
                return Err(GameError::CharLimitExceeded { limit, got });
            }
        }
        Ok(())
    }
}

pub fn condition_preset(name: &str) -> Result<GameConfig, GameError> {
    GameConfig::preset(name)
}

/// Submission threshold for 1-based round `round` (clamped to the valid range).
pub fn dynamic_threshold(cfg: &GameConfig, round: usize) -> f64 {
    let r = round.clamp(1, cfg.max_rounds.max(1));
    if let Some(s) = &cfg.submission_schedule {
        if let Some(t) = s.get(r - 1) {
            return *t;
        }
    }
    if cfg.max_rounds <= 1 {
        return cfg.win_threshold;
    }
    let t = (r - 1) as f64 / (cfg.max_rounds - 1) as f64;
    DEFAULT_FIRST_THRESHOLD + t * (cfg.win_threshold - DEFAULT_FIRST_THRESHOLD)
}

/// Seconds spent by each role in a round; unmeasured in library play.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RoundTiming {
    pub designer_secs: Option<f64>,
    pub maker_secs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    /// 1-based index of the round just played.
    pub round: usize,
    pub distance: Distance,
    pub threshold: f64,
    pub submittable: bool,
    /// Indices of actions skipped during lenient application.
    pub skipped: Vec<usize>,
}

/// A game in progress. All mutation goes through [`Game::step`] and
/// [`Game::finalize`].
#[derive(Debug, Clone)]
pub struct Game {
    cfg: GameConfig,
    target: Design,
    rounds: Vec<Round>,
    elapsed: f64,
    last: Option<StepOutcome>,
    pub meta: RolloutMeta,
}

impl Game {
    pub fn new(target: Design, cfg: GameConfig) -> Result<Game, GameError> {
        cfg.validate()?;
        Ok(Game {
            cfg,
            target,
            rounds: Vec::new(),
            elapsed: 0.0,
            last: None,
            meta: RolloutMeta::default(),
        })
    }

    pub fn config(&self) -> &GameConfig {
        &self.cfg
    }

    pub fn target(&self) -> &Design {
        &self.target
    }

    pub fn rounds(&self) -> &[Round] {
        &self.rounds
    }

    pub fn current(&self) -> &Design {
        self.rounds.last().map_or(self.target_empty(), |r| &r.design_after)
    }

    fn target_empty(&self) -> &'static Design {
        static EMPTY: std::sync::OnceLock<Design> = std::sync::OnceLock::new();
        EMPTY.get_or_init(Design::empty)
    }

    /// Seconds charged to the shared clock so far.
    pub fn elapsed(&self) -> f64 {
        self.elapsed
    }

    pub fn time_exhausted(&self) -> bool {
        self.cfg.total_time.is_some_and(|t| self.elapsed >= t)
    }

    pub fn rounds_exhausted(&self) -> bool {
        self.rounds.len() >= self.cfg.max_rounds
    }

    pub fn last_step(&self) -> Option<&StepOutcome> {
        self.last.as_ref()
    }

    pub fn submittable(&self) -> bool {
        self.last.as_ref().is_some_and(|s| s.submittable)
    }

    /// Charges designer time to the shared clock without playing a round.
    pub fn charge_time(&mut self, timing: RoundTiming) {
        self.elapsed += timing.designer_secs.unwrap_or(0.0) * self.cfg.designer_time_multiplier
            + timing.maker_secs.unwrap_or(0.0);
    }

    /// Preconditions for starting a new round.
    pub fn can_start_round(&self) -> Result<(), GameError> {
        if self.rounds_exhausted() {
            return Err(GameError::RoundLimitExceeded(self.cfg.max_rounds));
        }
        if self.time_exhausted() {
            return Err(GameError::TimeExhausted);
        }
        Ok(())
    }

    /// Plays one round: applies `actions` leniently to the current design
    /// and scores the result against the target.
    pub fn step(
        &mut self,
        message: Message,
        actions: Vec<Action>,
        timing: RoundTiming,
    ) -> Result<StepOutcome, GameError> {
        self.can_start_round()?;
        self.cfg.check_message(&message)?;
        let before = self.current().clone();
        let report = before.apply_lenient(&actions);
        let round_no = self.rounds.len() + 1;
        let duration = match (timing.designer_secs, timing.maker_secs) {
            (None, None) => None,
            (d, m) => Some(d.unwrap_or(0.0) + m.unwrap_or(0.0)),
        };
        self.charge_time(timing);
        self.rounds.push(Round {
            design_before: before,
            message,
            actions,
            design_after: report.design,
            duration,
        });
        let distance = chamfer(self.current(), &self.target, &self.cfg.metric);
        let threshold = dynamic_threshold(&self.cfg, round_no);
        let any_actions = self.rounds.iter().any(|r| !r.actions.is_empty());
        let outcome = StepOutcome {
            round: round_no,
            distance,
            threshold,
            submittable: any_actions && distance.0 < threshold,
            skipped: report.skipped,
        };
        self.last = Some(outcome.clone());
        Ok(outcome)
    }

    /// Ends the game. It is won iff it was submitted, some round carried
    /// actions, and the final design is within the win threshold.
    pub fn finalize(self, submitted: bool) -> Rollout {
        let distance = chamfer(self.current(), &self.target, &self.cfg.metric);
        let won = submitted
            && self.rounds.iter().any(|r| !r.actions.is_empty())
            && distance.0 < self.cfg.win_threshold;
        Rollout {
            target: self.target,
            rounds: self.rounds,
            outcome: if won { Outcome::Won } else { Outcome::Lost },
            meta: self.meta,
        }
    }
}

/// Lives and bonus bookkeeping for one Designer/Maker pair across games.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dyad {
    pub id: String,
    /// `None` when the condition does not track lives.
    pub lives: Option<u32>,
    pub bonuses: u32,
    pub ejected: bool,
}

impl Dyad {
    pub fn new(id: impl Into<String>, lives: Option<u32>) -> Self {
        Dyad {
            id: id.into(),
            lives,
            bonuses: 0,
            ejected: false,
        }
    }

    pub fn record(&mut self, outcome: Outcome) {
        match outcome {
            Outcome::Won => self.bonuses += 1,
            Outcome::Lost => {
                if let Some(l) = self.lives.as_mut() {
                    *l = l.saturating_sub(1);
                    if *l == 0 {
                        self.ejected = true;
                    }
                }
            }
            Outcome::Excluded => {}
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{0}")]
pub struct AgentError(pub String);

impl AgentError {
    pub fn new(msg: impl Into<String>) -> Self {
        AgentError(msg.into())
    }
}

/// A past round as the Designer sees it: rendered panels and the text.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedPanel {
    pub round: usize,
    pub text: String,
    pub before_svg: String,
    pub after_svg: String,
}

/// Everything the Designer is conditioned on: renders only.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignerView {
    /// 1-based index of the round being composed.
    pub round: usize,
    pub modality: ChannelPolicy,
    pub char_limit: Option<usize>,
    pub target_svg: String,
    pub current_svg: String,
    pub history: Vec<RenderedPanel>,
}

/// Everything the Maker is conditioned on.
#[derive(Debug, Clone, Copy)]
pub struct MakerView<'a> {
    /// 1-based round index.
    pub round: usize,
    pub message: &'a Message,
    pub current: &'a Design,
    pub history: &'a [Round],
    /// Per-call seed for stochastic agents.
    pub seed: u64,
    /// The target, passed only to agents that declare themselves privileged.
    pub privileged_target: Option<&'a Design>,
}

pub trait DesignerAgent: Send + Sync {
    fn produce_message(&self, view: &DesignerView) -> Result<Message, AgentError>;
}

pub trait MakerAgent: Send + Sync {
    fn name(&self) -> String;

    /// Privileged agents see the target; used for calibration baselines.
    fn privileged(&self) -> bool {
        false
    }

    fn propose_actions(&self, view: &MakerView<'_>) -> Result<Vec<Action>, AgentError>;
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlayError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("{role} agent failed in round {round}: {source}")]
    Agent {
        role: &'static str,
        round: usize,
        #[source]
        source: AgentError,
    },
}

#[derive(Debug, Clone, Default)]
pub struct PlayOptions {
    pub seed: u64,
    pub meta: RolloutMeta,
    pub style: RenderStyle,
}

fn rendered(design: &Design, style: &RenderStyle) -> String {
    let scene = Scene {
        design: design.clone(),
        overlay: None,
        style: style.clone(),
    };
    scene_to_svg(&scene).unwrap_or_default()
}

/// Runs a full game: Designer, then Maker, then scoring, until the design is
/// submittable (submitted immediately), the round limit, or the time budget.
pub fn play(
    target: &Design,
    designer: &dyn DesignerAgent,
    maker: &dyn MakerAgent,
    cfg: &GameConfig,
    opts: &PlayOptions,
) -> Result<Rollout, PlayError> {
    let mut game = Game::new(target.clone(), cfg.clone())?;
    game.meta = opts.meta.clone();
    let target_svg = rendered(target, &opts.style);
    while game.can_start_round().is_ok() {
        let round = game.rounds().len() + 1;
        let history = render_history(game.rounds(), &opts.style)
            .into_iter()
            .map(|p| RenderedPanel {
                round: p.round,
                text: p.text,
                before_svg: scene_to_svg(&p.before).unwrap_or_default(),
                after_svg: scene_to_svg(&p.after).unwrap_or_default(),
            })
            .collect();
        let view = DesignerView {
            round,
            modality: cfg.modality,
            char_limit: cfg.char_limit,
            target_svg: target_svg.clone(),
            current_svg: rendered(game.current(), &opts.style),
            history,
        };
        let message = designer
            .produce_message(&view)
            .map_err(|source| PlayError::Agent {
                role: "designer",
                round,
                source,
            })?;
        let actions = maker
            .propose_actions(&MakerView {
                round,
                message: &message,
                current: game.current(),
                history: game.rounds(),
                seed: opts.seed.wrapping_add(round as u64),
                privileged_target: maker.privileged().then_some(target),
            })
            .map_err(|source| PlayError::Agent {
                role: "maker",
                round,
                source,
            })?;
        let step = game.step(message, actions, RoundTiming::default())?;
        if step.submittable {
            return Ok(game.finalize(true));
        }
    }
    Ok(game.finalize(false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Curve, Point};
    use crate::message::{Drawing, Stroke};

    fn p(x: f64, y: f64) -> Point {
        Point::new(x, y)
    }

    fn target() -> Design {
        Design::from_curves([
            Curve::line(p(-10.0, 0.0), p(10.0, 0.0)).unwrap(),
            Curve::circle(p(0.0, -5.0), p(0.0, 5.0)).unwrap(),
        ])
    }

    fn copy_actions(d: &Design) -> Vec<Action> {
        d.curves().iter().copied().map(Action::MakeCurve).collect()
    }

    #[test]
    fn threshold_schedule() {
        let cfg = GameConfig::default();
        assert_eq!(dynamic_threshold(&cfg, 1), 0.05);
        assert!((dynamic_threshold(&cfg, 10) - 0.2).abs() < 1e-15);
        assert!((dynamic_threshold(&cfg, 5) - (0.05 + 4.0 / 9.0 * 0.15)).abs() < 1e-15);
        assert!((dynamic_threshold(&cfg, 5) - 0.11667).abs() < 1e-5);
        let single = GameConfig::preset("mm_genonly").unwrap();
        assert_eq!(dynamic_threshold(&single, 1), single.win_threshold);
        let custom = GameConfig {
            max_rounds: 2,
            submission_schedule: Some(vec![0.1, 0.3]),
            ..GameConfig::default()
        };
        assert_eq!(dynamic_threshold(&custom, 2), 0.3);
        let bad = GameConfig {
            max_rounds: 2,
            submission_schedule: Some(vec![0.3, 0.1]),
            ..GameConfig::default()
        };
        assert!(matches!(bad.validate(), Err(GameError::InvalidConfig(_))));
    }

    #[test]
    fn presets() {
        assert_eq!(GameConfig::preset("mm_genonly").unwrap().max_rounds, 1);
        let d = GameConfig::preset("dataset").unwrap();
        assert_eq!((d.max_rounds, d.total_time), (10, Some(540.0)));
        assert_eq!(d.char_limit, None);
        assert_eq!(d.designer_time_multiplier, 2.0);
        let t = GameConfig::preset("text_refine").unwrap();
        assert_eq!((t.max_rounds, t.designer_time, t.maker_time, t.char_limit), (3, Some(30.0), Some(120.0), Some(200)));
        let drawn = Message {
            text: String::new(),
            drawing: Drawing::new(vec![Stroke::new(vec![p(0.0, 0.0), p(1.0, 0.0)]).unwrap()]),
        };
        assert!(matches!(t.check_message(&drawn), Err(GameError::ModalityViolation { .. })));
        let d = GameConfig::preset("draw_refine").unwrap();
        assert!(d.check_message(&drawn).is_ok());
        assert!(matches!(d.check_message(&Message::text("hi")), Err(GameError::ModalityViolation { .. })));
        assert_eq!(GameConfig::preset("nope"), Err(GameError::UnknownPreset("nope".into())));
        for name in GameConfig::PRESETS {
            GameConfig::preset(name).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn exact_copy_is_submittable_at_round_one() {
        let mut g = Game::new(target(), GameConfig::default()).unwrap();
        let s = g
            .step(Message::text("copy"), copy_actions(&target()), RoundTiming::default())
            .unwrap();
        assert_eq!(s.distance, Distance::ZERO);
        assert!(s.submittable);
        let r = g.finalize(true);
        assert_eq!(r.outcome, Outcome::Won);
        r.check_chain().unwrap();
        r.check_replay().unwrap();
    }

    #[test]
    fn distance_vs_schedule() {
        // a fixed Δ = 0.10 is rejected at round 1 and accepted at round 5
        let cfg = GameConfig::default();
        assert!(!(0.10 < dynamic_threshold(&cfg, 1)));
        assert!(0.10 < dynamic_threshold(&cfg, 5));
    }

    #[test]
    fn empty_design_is_never_submittable() {
        let mut g = Game::new(target(), GameConfig { submission_schedule: Some(vec![0.2; 10]), ..GameConfig::default() }).unwrap();
        let s = g.step(Message::text("wait"), vec![], RoundTiming::default()).unwrap();
        assert_eq!(s.distance.0, 0.125);
        assert!(!s.submittable);
        assert_eq!(g.finalize(true).outcome, Outcome::Lost);
    }

    #[test]
    fn step_errors() {
        let mut g = Game::new(target(), GameConfig::preset("text_refine").unwrap()).unwrap();
        assert_eq!(
            g.step(Message::default(), vec![], RoundTiming::default()),
            Err(GameError::EmptyMessage)
        );
        let long = Message::text("x".repeat(201));
        assert!(matches!(
            g.step(long, vec![], RoundTiming::default()),
            Err(GameError::CharLimitExceeded { limit: 200, got: 201 })
        ));
        for _ in 0..3 {
            g.step(Message::text("more"), vec![], RoundTiming::default()).unwrap();
        }
        assert_eq!(
            g.step(Message::text("more"), vec![], RoundTiming::default()),
            Err(GameError::RoundLimitExceeded(3))
        );

        let mut g = Game::new(target(), GameConfig::preset("dataset").unwrap()).unwrap();
        g.step(
            Message::text("slow"),
            vec![],
            RoundTiming {
                designer_secs: Some(200.0),
                maker_secs: Some(140.0),
            },
        )
        .unwrap();
        // 200 s of designer time count double
        assert_eq!(g.elapsed(), 540.0);
        assert_eq!(g.rounds()[0].duration, Some(340.0));
        assert_eq!(
            g.step(Message::text("late"), vec![], RoundTiming::default()),
            Err(GameError::TimeExhausted)
        );
    }

    #[test]
    fn lives() {
        let mut g = Game::new(target(), GameConfig::default()).unwrap();
        g.step(
            Message::text("one line"),
            vec![Action::MakeCurve(Curve::line(p(15.0, 15.0), p(18.0, 18.0)).unwrap())],
            RoundTiming::default(),
        )
        .unwrap();
        let r = g.finalize(false);
        assert_eq!(r.outcome, Outcome::Lost);
        let mut dyad = Dyad::new("d1", Some(3));
        dyad.record(r.outcome);
        assert_eq!(dyad.lives, Some(2));
        dyad.record(Outcome::Won);
        assert_eq!(dyad.bonuses, 1);
        dyad.record(Outcome::Lost);
        assert!(!dyad.ejected);
        dyad.record(Outcome::Lost);
        assert!(dyad.ejected);
    }

    #[test]
    fn rollout_json_shape() {
        let mut g = Game::new(target(), GameConfig::default()).unwrap();
        g.meta.id = "r1".into();
        g.step(Message::text("copy"), copy_actions(&target()), RoundTiming::default())
            .unwrap();
        let r = g.finalize(true);
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.starts_with(r#"{"target":{"curves":["#));
        assert!(s.contains(r#""duration":null"#));
        assert!(s.contains(r#""outcome":"won","meta":{"id":"r1"}"#));
        let back: Rollout = serde_json::from_str(&s).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), s);
    }

    #[test]
    fn chain_errors() {
        let mut g = Game::new(target(), GameConfig::default()).unwrap();
        g.step(Message::text("a"), copy_actions(&target())[..1].to_vec(), RoundTiming::default())
            .unwrap();
        g.step(Message::text("b"), copy_actions(&target())[1..].to_vec(), RoundTiming::default())
            .unwrap();
        let mut r = g.finalize(true);
        r.check_chain().unwrap();
        r.rounds[1].design_before = Design::empty();
        assert_eq!(r.check_chain(), Err(ChainError::Broken { round: 2 }));
        r.rounds[1].design_before = r.rounds[0].design_after.clone();
        r.rounds[1].design_after = Design::empty();
        assert_eq!(r.check_replay(), Err(ChainError::ReplayMismatch { round: 2 }));
    }
}
