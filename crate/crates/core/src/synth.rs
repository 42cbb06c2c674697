//! Seeded synthetic data: random valid designs and actions, a scripted
//! Designer, and corpora of rollouts with known success counts.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::action::Action;
use crate::dataset::{design_id, rescale_for_play, DEFAULT_MIN_GAP};
use crate::design::Design;
use crate::game::{
    AgentError, ChannelPolicy, DesignerAgent, DesignerView, Game, GameConfig, Outcome, Rollout, RolloutMeta,
    RoundTiming,
};
use crate::geometry::{Curve, Point};
use crate::message::{Drawing, Message, Stroke};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignOptions {
    pub min_curves: usize,
    pub max_curves: usize,
    /// Control points stay within `[-extent, extent]²`.
    pub extent: f64,
    /// Spacing every generated design satisfies; see `rescale_for_play`.
    pub min_gap: f64,
    /// Probability that a new line starts at an existing point.
    pub share_prob: f64,
    /// Snap coordinates to multiples of this step (0 disables snapping).
    pub grid: f64,
}

impl Default for DesignOptions {
    fn default() -> Self {
        DesignOptions {
            min_curves: 1,
            max_curves: 6,
            extent: 15.0,
            min_gap: DEFAULT_MIN_GAP,
            share_prob: 0.3,
            grid: 0.5,
        }
    }
}

fn coord(rng: &mut impl Rng, lo: f64, hi: f64, grid: f64) -> f64 {
    let v = rng.random_range(lo..=hi);
    if grid > 0.0 {
        (v / grid).round() * grid
    } else {
        v
    }
}

fn point(rng: &mut impl Rng, r: f64, grid: f64) -> Point {
    Point::new(coord(rng, -r, r, grid), coord(rng, -r, r, grid))
}

/// A random valid curve with control points in `[-extent, extent]²`.
pub fn random_curve(rng: &mut impl Rng, extent: f64, grid: f64) -> Curve {
    loop {
        let c = match rng.random_range(0..3) {
            0 => Curve::line(point(rng, extent, grid), point(rng, extent, grid)),
            1 => {
                let c = point(rng, extent * 0.6, grid);
                let r = coord(rng, 1.0, extent * 0.4, grid).max(1.0);
                let a = rng.random_range(0.0..std::f64::consts::PI);
                let d = Point::new(r * a.cos(), r * a.sin());
                Curve::circle(c - d, c + d)
            }
            _ => {
                let c = point(rng, extent * 0.6, grid);
                let r = rng.random_range(1.0..=extent * 0.4);
                let a0 = rng.random_range(0.0..std::f64::consts::TAU);
                let span = rng.random_range(0.5..5.5);
                let at = |t: f64| c + Point::new(r * (a0 + t).cos(), r * (a0 + t).sin());
                Curve::arc(at(0.0), at(span / 2.0), at(span))
            }
        };
        if let Ok(c) = c {
            if c.control_points().iter().all(|p| p.x.abs() <= extent && p.y.abs() <= extent) {
                return c;
            }
        }
    }
}

/// A random design satisfying the spacing rules of `rescale_for_play`.
pub fn random_design(rng: &mut impl Rng, opts: &DesignOptions) -> Design {
    let n = rng.random_range(opts.min_curves..=opts.max_curves.max(opts.min_curves));
    let mut curves: Vec<Curve> = Vec::with_capacity(n);
    let mut attempts = 0;
    while curves.len() < n {
        attempts += 1;
        if attempts > 200 * n {
            // restart when the canvas gets too crowded to place more
            curves.clear();
            attempts = 0;
        }
        let shared: Vec<Point> = curves.iter().flat_map(|c| c.control_points().to_vec()).collect();
        let c = if !shared.is_empty() && rng.random_bool(opts.share_prob) {
            let a = *shared.choose(rng).expect("nonempty");
            match Curve::line(a, point(rng, opts.extent, opts.grid)) {
                Ok(c) => c,
                Err(_) => continue,
            }
        } else {
            random_curve(rng, opts.extent, opts.grid)
        };
        let mut next = curves.clone();
        next.push(c);
        let d = Design::from_curves(next.iter().copied());
        if d.len() == next.len() && rescale_for_play(&d, 1.0, opts.min_gap).is_ok() {
            curves = next;
        }
    }
    Design::from_curves(curves)
}

/// `count` designs with pairwise distinct design ids.
pub fn distinct_designs(seed: u64, count: usize, opts: &DesignOptions) -> Vec<Design> {
    let mut r = rng(seed);
    let mut ids = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let d = random_design(&mut r, opts);
        if ids.insert(design_id(&d).expect("generated designs are nondegenerate")) {
            out.push(d);
        }
    }
    out
}

fn random_action_once(rng: &mut impl Rng, design: &Design, extent: f64) -> Action {
    let grid = 0.5;
    let choice = if design.is_empty() { 0 } else { rng.random_range(0..5) };
    match choice {
        0 => Action::MakeCurve(random_curve(rng, extent, grid)),
        1 => Action::RemoveCurve(*design.curves().choose(rng).expect("nonempty")),
        2 => Action::MoveCurve {
            curve: *design.curves().choose(rng).expect("nonempty"),
            delta: point(rng, 3.0, grid),
        },
        3 => {
            let pts: Vec<Point> = design.points().collect();
            Action::MovePoint {
                point: *pts.choose(rng).expect("nonempty"),
                new_point: point(rng, extent, grid),
            }
        }
        _ => {
            let pts: Vec<Point> = design.points().collect();
            Action::DeletePoint {
                point: *pts.choose(rng).expect("nonempty"),
            }
        }
    }
}

/// An action that applies cleanly to `design`, when one is found within a
/// bounded number of draws.
pub fn random_action(rng: &mut impl Rng, design: &Design, extent: f64) -> Option<Action> {
    (0..32)
        .map(|_| random_action_once(rng, design, extent))
        .find(|a| design.apply(a).is_ok())
}

/// Up to `n` actions, each valid for the design produced by its prefix.
pub fn random_actions(rng: &mut impl Rng, design: &Design, n: usize, extent: f64) -> Vec<Action> {
    let mut cur = design.clone();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let Some(a) = random_action(rng, &cur, extent) else { break };
        cur = cur.apply(&a).expect("checked by random_action");
        out.push(a);
    }
    out
}

/// Random actions that may reference missing geometry or produce invalid
/// results; exercises lenient application.
pub fn noisy_actions(rng: &mut impl Rng, design: &Design, n: usize, extent: f64) -> Vec<Action> {
    let mut cur = design.clone();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let a = if rng.random_bool(0.25) {
            // a reference that almost surely does not resolve
            Action::DeletePoint {
                point: point(rng, extent, 0.0),
            }
        } else {
            random_action_once(rng, &cur, extent)
        };
        if let Ok(next) = cur.apply(&a) {
            cur = next;
        }
        out.push(a);
    }
    out
}

/// The practice target: a face outline, two eyes and a smiling mouth.
pub fn smiley_face() -> Design {
    let p = Point::new;
    Design::from_curves([
        Curve::circle(p(0.0, -15.0), p(0.0, 15.0)).expect("valid"),
        Curve::circle(p(-6.0, 4.0), p(-6.0, 8.0)).expect("valid"),
        Curve::circle(p(6.0, 4.0), p(6.0, 8.0)).expect("valid"),
        Curve::arc(p(-8.0, -4.0), p(0.0, -9.0), p(8.0, -4.0)).expect("valid"),
    ])
}

/// A deterministic Designer that reads element counts off the target render
/// and, when drawings are allowed, sketches a short mark.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptedDesigner;

impl ScriptedDesigner {
    fn count(svg: &str, tag: &str) -> usize {
        let body = svg.split(r#"class="design""#).nth(1).unwrap_or("");
        let body = body.split("</g>").next().unwrap_or("");
        body.matches(tag).count()
    }
}

impl DesignerAgent for ScriptedDesigner {
    fn produce_message(&self, view: &DesignerView) -> Result<Message, AgentError> {
        let lines = Self::count(&view.target_svg, "<line");
        let circles = Self::count(&view.target_svg, "<circle");
        let arcs = Self::count(&view.target_svg, "<path");
        let mut text = format!("Round {}: make {lines} lines, {circles} circles and {arcs} arcs.", view.round);
        if let Some(limit) = view.char_limit {
            text = text.chars().take(limit).collect();
        }
        let mark = || {
            let s = Stroke::new(vec![Point::new(-1.0, 0.0), Point::new(0.0, 1.0), Point::new(1.0, 0.0)])
                .expect("three finite points");
            Drawing::new(vec![s])
        };
        Ok(match view.modality {
            ChannelPolicy::TextOnly => Message::text(text),
            ChannelPolicy::DrawingOnly => Message {
                text: String::new(),
                drawing: mark(),
            },
            ChannelPolicy::Multimodal => Message { text, drawing: mark() },
        })
    }
}

/// A rollout that rebuilds `target` over `rounds` rounds, adding its curves
/// in order; submitted and won when the last round reaches the target.
pub fn copy_rollout(target: &Design, rounds: usize, id: impl Into<String>) -> Rollout {
    let curves = target.curves();
    let rounds = rounds.clamp(1, curves.len().max(1));
    let cfg = GameConfig {
        max_rounds: rounds.max(1),
        total_time: None,
        submission_schedule: Some(vec![f64::INFINITY; rounds.max(1)]),
        ..GameConfig::default()
    };
    let mut game = Game::new(target.clone(), cfg).expect("valid config");
    game.meta.id = id.into();
    let chunk = curves.len().div_ceil(rounds).max(1);
    for (i, part) in curves.chunks(chunk).enumerate() {
        let actions = part.iter().copied().map(Action::MakeCurve).collect();
        game.step(Message::text(format!("add part {}", i + 1)), actions, RoundTiming::default())
            .expect("round within limits");
    }
    game.finalize(true)
}

/// A lost single-round rollout whose only curve lies far from the target.
pub fn failed_rollout(target: &Design, id: impl Into<String>) -> Rollout {
    let cfg = GameConfig {
        max_rounds: 1,
        total_time: None,
        ..GameConfig::default()
    };
    let mut game = Game::new(target.clone(), cfg).expect("valid config");
    game.meta.id = id.into();
    let stray = Curve::line(Point::new(19.0, 19.0), Point::new(19.5, 19.0)).expect("distinct points");
    game.step(
        Message::text("put a tiny mark in the corner"),
        vec![Action::MakeCurve(stray)],
        RoundTiming::default(),
    )
    .expect("round within limits");
    let r = game.finalize(false);
    debug_assert_eq!(r.outcome, Outcome::Lost);
    r
}

/// One design per entry of `successes`; design `i` gets `successes[i]` won
/// rollouts of `rounds` rounds each plus `failures` lost ones.
pub fn corpus(seed: u64, successes: &[usize], rounds: usize, failures: usize, opts: &DesignOptions) -> Vec<Rollout> {
    let designs = distinct_designs(seed, successes.len(), opts);
    let mut out = Vec::new();
    for (i, (d, &n)) in designs.iter().zip(successes).enumerate() {
        for j in 0..n {
            let mut r = copy_rollout(d, rounds, format!("d{i:03}-w{j:03}"));
            r.meta = RolloutMeta {
                dyad: Some(format!("dyad{}", j % 7)),
                condition: Some("dataset".into()),
                ..r.meta
            };
            out.push(r);
        }
        for j in 0..failures {
            out.push(failed_rollout(d, format!("d{i:03}-l{j:03}")));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{Outcome, PlayOptions};

    #[test]
    fn designs_are_valid_and_reproducible() {
        let opts = DesignOptions::default();
        let a: Vec<Design> = (0..20).map(|s| random_design(&mut rng(s), &opts)).collect();
        let b: Vec<Design> = (0..20).map(|s| random_design(&mut rng(s), &opts)).collect();
        assert_eq!(a, b);
        for d in &a {
            assert!(!d.is_empty() && d.len() <= 6);
            assert!(d.in_canvas());
            assert!(rescale_for_play(d, 1.0, 1.0).is_ok());
        }
    }

    #[test]
    fn random_actions_apply_in_sequence() {
        let mut r = rng(7);
        let d = random_design(&mut r, &DesignOptions::default());
        let acts = random_actions(&mut r, &d, 5, 15.0);
        assert!(!acts.is_empty());
        let strict = d.apply_all(&acts, crate::action::ApplyMode::Strict);
        assert!(strict.is_ok());
    }

    #[test]
    fn copy_rollouts_win() {
        let d = random_design(&mut rng(3), &DesignOptions { min_curves: 4, ..DesignOptions::default() });
        let r = copy_rollout(&d, 2, "x");
        assert_eq!(r.rounds.len(), 2);
        assert_eq!(r.outcome, Outcome::Won);
        r.check_chain().unwrap();
        r.check_replay().unwrap();
        assert_eq!(failed_rollout(&d, "y").outcome, Outcome::Lost);
    }

    #[test]
    fn scripted_designer_respects_modality() {
        struct Copy;
        impl crate::game::MakerAgent for Copy {
            fn name(&self) -> String {
                "copy".into()
            }
            fn privileged(&self) -> bool {
                true
            }
            fn propose_actions(&self, v: &crate::game::MakerView<'_>) -> Result<Vec<Action>, AgentError> {
                Ok(v.privileged_target.unwrap().curves().iter().copied().map(Action::MakeCurve).collect())
            }
        }
        let d = random_design(&mut rng(5), &DesignOptions::default());
        for preset in GameConfig::PRESETS {
            let cfg = GameConfig::preset(preset).unwrap();
            let r = crate::game::play(&d, &ScriptedDesigner, &Copy, &cfg, &PlayOptions::default()).unwrap();
            assert_eq!(r.outcome, Outcome::Won, "{preset}");
        }
    }
}
