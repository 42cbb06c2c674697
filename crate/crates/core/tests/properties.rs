use mrcad::action::Action;
use mrcad::dataset::{
    self, design_id, exclusion_filter, normalize_to_grid, parse_jsonl, rollout_to_line, signature, to_jsonl,
    FilterOptions, SplitSpec, DEFAULT_ANGLE_TOL,
};
use mrcad::design::Design;
use mrcad::eval::{proportional_improvement, EvalItem};
use mrcad::game::{dynamic_threshold, GameConfig};
use mrcad::geometry::{Curve, Point};
use mrcad::message::{Drawing, Message, Stroke};
use mrcad::metric::{chamfer, chamfer_batch_with, MetricConfig};
use mrcad::par::Exec;
use mrcad::render::{rasterize_with, scene_to_svg, Scene};
use mrcad::synth::{self, DesignOptions};
use proptest::prelude::*;

fn design_from(seed: u64) -> Design {
    synth::random_design(&mut synth::rng(seed), &DesignOptions::default())
}

fn design() -> impl Strategy<Value = Design> {
    any::<u64>().prop_map(design_from)
}

fn transform(d: &Design, f: impl Fn(Point) -> Point) -> Design {
    Design::from_curves(d.curves().iter().map(|c| c.map_points(&f).unwrap()))
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn chamfer_is_a_bounded_symmetric_premetric(a in design(), b in design()) {
        let cfg = MetricConfig::default();
        let ab = chamfer(&a, &b, &cfg).0;
        prop_assert_eq!(ab, chamfer(&b, &a, &cfg).0);
        prop_assert!((0.0..=cfg.cap).contains(&ab));
        prop_assert_eq!(chamfer(&a, &a, &cfg).0, 0.0);
    }

    #[test]
    fn chamfer_ignores_curve_order(a in design(), b in design()) {
        let cfg = MetricConfig::default();
        let rev = Design::from_curves(a.curves().iter().rev().copied());
        prop_assert!(close(chamfer(&a, &b, &cfg).0, chamfer(&rev, &b, &cfg).0, 1e-12));
    }

    #[test]
    fn chamfer_survives_rigid_motion(
        a in design(), b in design(),
        dx in -3.0f64..3.0, dy in -3.0f64..3.0, theta in -3.2f64..3.2,
    ) {
        let cfg = MetricConfig::default();
        let (s, c) = theta.sin_cos();
        let m = |p: Point| Point::new(c * p.x - s * p.y + dx, s * p.x + c * p.y + dy);
        let before = chamfer(&a, &b, &cfg).0;
        let after = chamfer(&transform(&a, m), &transform(&b, m), &cfg).0;
        prop_assert!(close(before, after, 1e-9), "{before} vs {after}");
    }

    #[test]
    fn chamfer_is_scale_consistent_with_canvas_extent(a in design(), b in design(), k in 0.25f64..4.0) {
        let cfg = MetricConfig::default();
        let scaled = MetricConfig { canvas_extent: cfg.canvas_extent * k, ..cfg };
        let m = |p: Point| Point::new(p.x * k, p.y * k);
        let before = chamfer(&a, &b, &cfg).0;
        let after = chamfer(&transform(&a, m), &transform(&b, m), &scaled).0;
        prop_assert!(close(before, after, 1e-9), "{before} vs {after}");
    }

    #[test]
    fn batch_matches_pointwise_under_both_executors(seeds in prop::collection::vec(any::<u64>(), 0..12)) {
        let cfg = MetricConfig::default();
        let pairs: Vec<(Design, Design)> =
            seeds.iter().map(|s| (design_from(*s), design_from(s.wrapping_add(1)))).collect();
        let seq = chamfer_batch_with(Exec::Sequential, &pairs, &cfg);
        let par = chamfer_batch_with(Exec::Parallel, &pairs, &cfg);
        prop_assert_eq!(&seq, &par);
        for ((a, b), d) in pairs.iter().zip(&seq) {
            prop_assert_eq!(chamfer(a, b, &cfg), *d);
        }
    }

    #[test]
    fn lenient_application_composes(seed in any::<u64>(), n in 0usize..10, cut in 0usize..10) {
        let mut rng = synth::rng(seed);
        let d = synth::random_design(&mut rng, &DesignOptions::default());
        let acts = synth::noisy_actions(&mut rng, &d, n, 15.0);
        let cut = cut.min(acts.len());
        let whole = d.apply_lenient(&acts);
        let first = d.apply_lenient(&acts[..cut]);
        let second = first.design.apply_lenient(&acts[cut..]);
        prop_assert_eq!(&whole.design, &second.design);
        let joined: Vec<usize> =
            first.skipped.iter().copied().chain(second.skipped.iter().map(|i| i + cut)).collect();
        prop_assert_eq!(whole.skipped, joined);
        prop_assert!(whole.design.index_is_consistent());
    }

    #[test]
    fn grid_normalization_is_idempotent_and_keeps_identity(d in design(), dx in -2.0f64..2.0, dy in -2.0f64..2.0) {
        let n = normalize_to_grid(&d).unwrap();
        prop_assert_eq!(&normalize_to_grid(&n).unwrap(), &n);
        // translation and curve order do not change the dedup identity
        let moved = transform(&d, |p| Point::new(p.x + dx, p.y + dy));
        let shuffled = Design::from_curves(moved.curves().iter().rev().copied());
        prop_assert_eq!(design_id(&d).unwrap(), design_id(&shuffled).unwrap());
    }

    #[test]
    fn signature_ignores_translation_and_order(d in design(), dx in -2.0f64..2.0, dy in -2.0f64..2.0) {
        let moved = transform(&d, |p| Point::new(p.x + dx, p.y + dy));
        let shuffled = Design::from_curves(moved.curves().iter().rev().copied());
        let s = signature(&d, DEFAULT_ANGLE_TOL);
        prop_assert_eq!(s, signature(&shuffled, DEFAULT_ANGLE_TOL));
        prop_assert_eq!(s.total(), d.len());
    }

    #[test]
    fn exclusion_filter_partitions_in_order(seed in any::<u64>(), tamper in prop::collection::vec(any::<bool>(), 6)) {
        let mut records = synth::corpus(seed, &[2, 1], 2, 1, &DesignOptions::default());
        for (r, t) in records.iter_mut().zip(&tamper) {
            if *t {
                if let Some(round) = r.rounds.first_mut() {
                    round.message = Message::text("");
                }
            }
        }
        let ids: Vec<String> = records.iter().map(|r| r.id().to_string()).collect();
        let out = exclusion_filter(records.clone(), &FilterOptions::default());
        prop_assert_eq!(out.kept.len() + out.excluded.len(), records.len());
        let kept: Vec<&str> = out.kept.iter().map(|r| r.id()).collect();
        let excluded: Vec<&str> = out.excluded.iter().map(|(r, _)| r.id()).collect();
        let in_order = |sub: &[&str]| {
            let pos: Vec<usize> = sub.iter().map(|s| ids.iter().position(|i| i == s).unwrap()).collect();
            pos.windows(2).all(|w| w[0] < w[1])
        };
        prop_assert!(in_order(&kept) && in_order(&excluded));
        for (r, why) in &out.excluded {
            prop_assert_eq!(dataset::exclusion_reason(r, &FilterOptions::default()), Some(*why));
        }
    }

    #[test]
    fn split_classes_follow_success_counts(n in 0usize..60) {
        let spec = SplitSpec::default();
        let split = spec.classify(n);
        use dataset::Split::*;
        let expected = match n {
            0 => None,
            1..=2 => Coverage,
            3..=29 => Dense,
            _ => VeryDense,
        };
        prop_assert_eq!(split, expected);
        prop_assert_eq!(spec.in_eval(n), n >= 3);
    }

    #[test]
    fn jsonl_round_trips_byte_for_byte(seed in any::<u64>()) {
        let records = synth::corpus(seed, &[1, 2], 3, 1, &DesignOptions::default());
        let text = to_jsonl(&records);
        let back = parse_jsonl(&text).unwrap();
        prop_assert_eq!(&back, &records);
        prop_assert_eq!(to_jsonl(&back), text);
        for r in &back {
            prop_assert!(!rollout_to_line(r).contains('\n'));
        }
    }

    #[test]
    fn threshold_is_monotone_and_pinned(rounds in 1usize..15) {
        let cfg = GameConfig { max_rounds: rounds, submission_schedule: None, ..GameConfig::preset("dataset").unwrap() };
        let ts: Vec<f64> = (1..=rounds).map(|r| dynamic_threshold(&cfg, r)).collect();
        prop_assert!(ts.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(close(*ts.last().unwrap(), cfg.win_threshold, 1e-12));
        if rounds > 1 {
            prop_assert!(close(ts[0], 0.05, 1e-12));
        }
    }

    #[test]
    fn improvement_is_zero_for_no_change_and_one_for_the_target(seed in any::<u64>()) {
        let mut rng = synth::rng(seed);
        let target = synth::random_design(&mut rng, &DesignOptions::default());
        let current = target.apply_lenient(&synth::random_actions(&mut rng, &target, 3, 15.0)).design;
        let metric = MetricConfig::default();
        prop_assume!(chamfer(&current, &target, &metric).0 > 0.0);
        let item = EvalItem {
            rollout_id: "r".into(),
            round_index: 2,
            history: Vec::new(),
            current: current.clone(),
            message: Message::text("fix it"),
            target: target.clone(),
            human_after: target.clone(),
        };
        prop_assert_eq!(proportional_improvement(&[], &item, &metric).unwrap(), 0.0);
        let mut rebuild: Vec<Action> = current.curves().iter().copied().map(Action::RemoveCurve).collect();
        rebuild.extend(target.curves().iter().copied().map(Action::MakeCurve));
        prop_assert_eq!(proportional_improvement(&rebuild, &item, &metric).unwrap(), 1.0);
    }

    #[test]
    fn rendering_is_deterministic(d in design(), xs in prop::collection::vec((-19.0f64..19.0, -19.0f64..19.0), 2..6)) {
        let stroke = Stroke::new(xs.into_iter().map(|(x, y)| Point::new(x, y)).collect()).unwrap();
        let scene = Scene::new(d.clone()).with_overlay(Drawing::new(vec![stroke]));
        let svg = scene_to_svg(&scene).unwrap();
        prop_assert_eq!(&svg, &scene_to_svg(&scene.clone()).unwrap());
        let rev = Scene { design: Design::from_curves(d.curves().iter().rev().copied()), ..scene.clone() };
        prop_assert_eq!(&svg, &scene_to_svg(&rev).unwrap());
        let seq = rasterize_with(Exec::Sequential, &scene, 96, 96).unwrap();
        let par = rasterize_with(Exec::Parallel, &scene, 96, 96).unwrap();
        prop_assert!(seq == par);
    }
}

#[test]
fn curve_constructors_reject_degenerate_input() {
    let p = Point::new(1.0, 1.0);
    assert!(Curve::line(p, p).is_err());
    assert!(Curve::circle(p, p).is_err());
    assert!(Curve::arc(Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(2.0, 0.0)).is_err());
}
