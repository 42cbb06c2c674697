//! The evaluation gym: benchmark items built from human rollouts, the
//! proportional-improvement metric, baseline Makers and reports.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::Action;
use crate::dataset::{build_splits, eval_designs, DatasetRecord, SplitSpec};
use crate::design::Design;
use crate::game::{AgentError, MakerAgent, MakerView, Round};
use crate::geometry::EPS_ID;
use crate::message::{AblationMode, Message};
use crate::metric::{chamfer, MetricConfig};
use crate::par::{self, Exec};
use crate::synth;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("the current design already matches the target; improvement is undefined")]
    ZeroBaseline,
    #[error("no evaluation items")]
    NoItems,
    #[error("unknown agent {0:?}")]
    UnknownAgent(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Generation,
    Refinement,
}

/// One instruction/execution step of a human rollout, posed to a Maker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub rollout_id: String,
    /// 1-based.
    pub round_index: usize,
    pub history: Vec<Round>,
    pub current: Design,
    pub message: Message,
    pub target: Design,
    /// The human Maker's result; reference only.
    pub human_after: Design,
}

impl EvalItem {
    pub fn group(&self) -> Group {
        if self.round_index == 1 {
            Group::Generation
        } else {
            Group::Refinement
        }
    }

    pub fn baseline(&self, metric: &MetricConfig) -> f64 {
        chamfer(&self.current, &self.target, metric).0
    }
}

fn pi_of(before: f64, after: &Design, target: &Design, metric: &MetricConfig) -> f64 {
    (before - chamfer(after, target, metric).0) / before
}

/// Fraction of the distance to the target removed by `actions` (applied
/// leniently); negative when the design gets worse.
pub fn proportional_improvement(actions: &[Action], item: &EvalItem, metric: &MetricConfig) -> Result<f64, EvalError> {
    let before = item.baseline(metric);
    if !(before > 0.0) {
        return Err(EvalError::ZeroBaseline);
    }
    let after = item.current.apply_lenient(actions).design;
    Ok(pi_of(before, &after, &item.target, metric))
}

/// Improvement achieved by the human Maker on this item.
pub fn human_improvement(item: &EvalItem, metric: &MetricConfig) -> Result<f64, EvalError> {
    let before = item.baseline(metric);
    if !(before > 0.0) {
        return Err(EvalError::ZeroBaseline);
    }
    Ok(pi_of(before, &item.human_after, &item.target, metric))
}

/// Items from every round of every rollout whose target has enough
/// successful rollouts, sorted by rollout id then round. Rounds that start
/// at zero distance are left out.
pub fn build_benchmark(records: &[DatasetRecord], spec: &SplitSpec, metric: &MetricConfig) -> Vec<EvalItem> {
    let splits = build_splits(records, spec);
    let keep: BTreeSet<&str> = eval_designs(&splits, spec).into_iter().collect();
    let mut items = Vec::new();
    for rec in records.iter().filter(|r| keep.contains(r.design_id.as_str())) {
        let r = &rec.rollout;
        for (i, round) in r.rounds.iter().enumerate() {
            let item = EvalItem {
                rollout_id: r.id().to_string(),
                round_index: i + 1,
                history: r.rounds[..i].to_vec(),
                current: round.design_before.clone(),
                message: round.message.clone(),
                target: r.target.clone(),
                human_after: round.design_after.clone(),
            };
            if item.baseline(metric) > 0.0 {
                items.push(item);
            }
        }
    }
    items.sort_by(|a, b| (a.rollout_id.as_str(), a.round_index).cmp(&(b.rollout_id.as_str(), b.round_index)));
    items
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub rollout_id: String,
    pub round_index: usize,
    pub group: Group,
    pub distance_before: f64,
    pub distance_after: f64,
    /// Scored as 0 when the agent failed.
    pub pi: f64,
    pub actions: usize,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GroupSummary {
    pub items: usize,
    pub failures: usize,
    /// Mean over all items, failures included at 0.
    pub mean_pi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub agent: String,
    pub ablation: AblationMode,
    pub seed: u64,
    pub items: Vec<ItemResult>,
    pub generation: GroupSummary,
    pub refinement: GroupSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub ablation: AblationMode,
    pub seed: u64,
    pub metric: MetricConfig,
    pub exec: Exec,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            ablation: AblationMode::None,
            seed: 0,
            metric: MetricConfig::default(),
            exec: Exec::default(),
        }
    }
}

fn item_seed(seed: u64, i: usize) -> u64 {
    seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Runs the agent on every item. Agent errors are recorded per item and
/// scored 0; items with zero baseline distance are skipped.
pub fn evaluate(agent: &dyn MakerAgent, items: &[EvalItem], opts: &EvalOptions) -> Result<EvalReport, EvalError> {
    if items.is_empty() {
        return Err(EvalError::NoItems);
    }
    let indexed: Vec<(usize, &EvalItem)> = items.iter().enumerate().collect();
    let results: Vec<Option<ItemResult>> = par::map_with(opts.exec, &indexed, |&(i, item)| {
        let before = item.baseline(&opts.metric);
        if !(before > 0.0) {
            return None;
        }
        let message = item.message.ablate(opts.ablation);
        // every instruction the agent sees is ablated, earlier rounds included
        let history: Vec<Round> = item
            .history
            .iter()
            .map(|r| Round {
                message: r.message.ablate(opts.ablation),
                ..r.clone()
            })
            .collect();
        let view = MakerView {
            round: item.round_index,
            message: &message,
            current: &item.current,
            history: &history,
            seed: item_seed(opts.seed, i),
            privileged_target: agent.privileged().then_some(&item.target),
        };
        let (actions, failure) = match agent.propose_actions(&view) {
            Ok(a) => (a, None),
            Err(e) => (Vec::new(), Some(e.to_string())),
        };
        let after = item.current.apply_lenient(&actions).design;
        let distance_after = chamfer(&after, &item.target, &opts.metric).0;
        Some(ItemResult {
            rollout_id: item.rollout_id.clone(),
            round_index: item.round_index,
            group: item.group(),
            distance_before: before,
            distance_after,
            pi: if failure.is_some() { 0.0 } else { (before - distance_after) / before },
            actions: actions.len(),
            failure,
        })
    });
    let mut results: Vec<ItemResult> = results.into_iter().flatten().collect();
    if results.is_empty() {
        return Err(EvalError::NoItems);
    }
    results.sort_by(|a, b| (a.rollout_id.as_str(), a.round_index).cmp(&(b.rollout_id.as_str(), b.round_index)));
    let summary = |g: Group| {
        let rs: Vec<&ItemResult> = results.iter().filter(|r| r.group == g).collect();
        GroupSummary {
            items: rs.len(),
            failures: rs.iter().filter(|r| r.failure.is_some()).count(),
            mean_pi: if rs.is_empty() {
                0.0
            } else {
                rs.iter().map(|r| r.pi).sum::<f64>() / rs.len() as f64
            },
        }
    };
    Ok(EvalReport {
        agent: agent.name(),
        ablation: opts.ablation,
        seed: opts.seed,
        generation: summary(Group::Generation),
        refinement: summary(Group::Refinement),
        items: results,
    })
}

pub fn report_to_csv(report: &EvalReport, out: impl std::io::Write) -> Result<(), csv::Error> {
    #[derive(Serialize)]
    struct Row<'a> {
        agent: &'a str,
        ablation: AblationMode,
        rollout_id: &'a str,
        round_index: usize,
        group: Group,
        distance_before: f64,
        distance_after: f64,
        pi: f64,
        actions: usize,
        failure: &'a str,
    }
    let mut w = csv::Writer::from_writer(out);
    for r in &report.items {
        w.serialize(Row {
            agent: &report.agent,
            ablation: report.ablation,
            rollout_id: &r.rollout_id,
            round_index: r.round_index,
            group: r.group,
            distance_before: r.distance_before,
            distance_after: r.distance_after,
            pi: r.pi,
            actions: r.actions,
            failure: r.failure.as_deref().unwrap_or(""),
        })?;
    }
    w.flush()?;
    Ok(())
}

fn ablation_label(a: AblationMode) -> &'static str {
    match a {
        AblationMode::None => "",
        AblationMode::DropText => " -text",
        AblationMode::DropDrawing => " -drawing",
    }
}

/// Plain-text table: one row per agent/ablation, mean PI for generation and
/// refinement items with item counts.
pub fn summary_table(reports: &[EvalReport]) -> String {
    let labels: Vec<String> = reports
        .iter()
        .map(|r| format!("{}{}", r.agent, ablation_label(r.ablation)))
        .collect();
    let w = labels.iter().map(String::len).max().unwrap_or(0).max(5);
    let mut s = format!("{:<w$}  {:>18}  {:>18}\n", "agent", "generation", "refinement");
    for (label, r) in labels.iter().zip(reports) {
        let cell = |g: &GroupSummary| format!("{:.3} (n={})", g.mean_pi, g.items);
        let _ = writeln!(s, "{:<w$}  {:>18}  {:>18}", label, cell(&r.generation), cell(&r.refinement));
    }
    s
}

/// Returns nothing.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoopAgent;

impl MakerAgent for NoopAgent {
    fn name(&self) -> String {
        "noop".into()
    }

    fn propose_actions(&self, _: &MakerView<'_>) -> Result<Vec<Action>, AgentError> {
        Ok(Vec::new())
    }
}

/// Clears the design and rebuilds the target. Privileged.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleAgent;

impl MakerAgent for OracleAgent {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn privileged(&self) -> bool {
        true
    }

    fn propose_actions(&self, view: &MakerView<'_>) -> Result<Vec<Action>, AgentError> {
        let target = view
            .privileged_target
            .ok_or_else(|| AgentError::new("oracle needs the target"))?;
        Ok(view
            .current
            .curves()
            .iter()
            .copied()
            .map(Action::RemoveCurve)
            .chain(target.curves().iter().copied().map(Action::MakeCurve))
            .collect())
    }
}

/// Up to five random actions that apply cleanly, from a seeded stream.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomAgent {
    pub seed: u64,
}

impl MakerAgent for RandomAgent {
    fn name(&self) -> String {
        format!("random:{}", self.seed)
    }

    fn propose_actions(&self, view: &MakerView<'_>) -> Result<Vec<Action>, AgentError> {
        let mut rng = synth::rng(self.seed ^ view.seed);
        let n = rand::Rng::random_range(&mut rng, 1..=5);
        Ok(synth::random_actions(&mut rng, view.current, n, 15.0))
    }
}

/// Removes up to `k` curves absent from the target and adds up to `k`
/// missing target curves, each chosen to reduce the distance the most.
/// Privileged.
#[derive(Debug, Clone)]
pub struct GreedyAgent {
    pub k: usize,
    pub metric: MetricConfig,
}

impl GreedyAgent {
    pub fn new(k: usize) -> Self {
        GreedyAgent {
            k,
            metric: MetricConfig::default(),
        }
    }
}

impl MakerAgent for GreedyAgent {
    fn name(&self) -> String {
        format!("greedy:{}", self.k)
    }

    fn privileged(&self) -> bool {
        true
    }

    fn propose_actions(&self, view: &MakerView<'_>) -> Result<Vec<Action>, AgentError> {
        let target = view
            .privileged_target
            .ok_or_else(|| AgentError::new("greedy agent needs the target"))?;
        let mut cur = view.current.clone();
        let mut actions = Vec::new();
        let mut spurious: Vec<_> = cur
            .curves()
            .iter()
            .filter(|c| !target.curves().iter().any(|t| t.matches(c, EPS_ID)))
            .copied()
            .collect();
        spurious.sort_by(|a, b| a.canonical_cmp(b));
        for c in spurious.into_iter().take(self.k) {
            let a = Action::RemoveCurve(c);
            if let Ok(next) = cur.apply(&a) {
                cur = next;
                actions.push(a);
            }
        }
        for _ in 0..self.k {
            let missing = target
                .sorted_curves()
                .into_iter()
                .filter(|t| !cur.curves().iter().any(|c| c.matches(t, EPS_ID)));
            let best = missing
                .filter_map(|t| {
                    let a = Action::MakeCurve(t);
                    let next = cur.apply(&a).ok()?;
                    Some((chamfer(&next, target, &self.metric).0, a, next))
                })
                .min_by(|x, y| x.0.total_cmp(&y.0));
            let Some((_, a, next)) = best else { break };
            cur = next;
            actions.push(a);
        }
        Ok(actions)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BaselineKind {
    Noop,
    Oracle,
    Random(u64),
    Greedy(usize),
}

impl FromStr for BaselineKind {
    type Err = EvalError;

    /// `noop`, `oracle`, `random`, `random:<seed>`, `greedy:<k>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || EvalError::UnknownAgent(s.to_string());
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        match (head, arg) {
            ("noop", None) => Ok(BaselineKind::Noop),
            ("oracle", None) => Ok(BaselineKind::Oracle),
            ("random", None) => Ok(BaselineKind::Random(0)),
            ("random", Some(a)) => a.parse().map(BaselineKind::Random).map_err(|_| bad()),
            ("greedy", Some(a)) => match a.parse() {
                Ok(k) if k > 0 => Ok(BaselineKind::Greedy(k)),
                _ => Err(bad()),
            },
            _ => Err(bad()),
        }
    }
}

pub fn baseline_agent(kind: &BaselineKind) -> Box<dyn MakerAgent> {
    match *kind {
        BaselineKind::Noop => Box::new(NoopAgent),
        BaselineKind::Oracle => Box::new(OracleAgent),
        BaselineKind::Random(seed) => Box::new(RandomAgent { seed }),
        BaselineKind::Greedy(k) => Box::new(GreedyAgent::new(k)),
    }
}
