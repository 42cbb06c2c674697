//! Dataset tooling: design signatures and dedup identity, rescaling for
//! play, exclusion filtering, split construction, per-round statistics and
//! newline-delimited rollout record files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::design::Design;
use crate::game::{ChainError, Outcome, Rollout};
use crate::geometry::{Curve, Point, EPS_GEOM, EPS_ID};
use crate::message::{stroke_stats, Modality};
use crate::metric::{chamfer, MetricConfig};
use crate::par::{self, Exec};

/// Default tolerance for classifying lines as horizontal or vertical (0.5°).
pub const DEFAULT_ANGLE_TOL: f64 = 0.5 * std::f64::consts::PI / 180.0;
/// Default minimum separation between elements of a rescaled design.
pub const DEFAULT_MIN_GAP: f64 = 1.0;
/// Side of the square region designs are normalized into for dedup.
pub const GRID_SIZE: f64 = 20.0;
/// Success threshold used for splits and the analysis view.
pub const SUCCESS_THRESHOLD: f64 = 0.2;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("design bounding box is a single point")]
    DegenerateBoundingBox,
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Signature {
    pub h_lines: usize,
    pub v_lines: usize,
    pub skew_lines: usize,
    pub arcs: usize,
    pub circles: usize,
}

impl Signature {
    pub fn total(&self) -> usize {
        self.h_lines + self.v_lines + self.skew_lines + self.arcs + self.circles
    }
}

/// Counts curves by class; lines within `angle_tol` of an axis count as
/// horizontal or vertical.
pub fn signature(design: &Design, angle_tol: f64) -> Signature {
    let t = angle_tol.tan();
    let mut s = Signature::default();
    for c in design.curves() {
        match c {
            Curve::Line([a, b]) => {
                let (dx, dy) = ((b.x - a.x).abs(), (b.y - a.y).abs());
                if dy <= t * dx {
                    s.h_lines += 1;
                } else if dx <= t * dy {
                    s.v_lines += 1;
                } else {
                    s.skew_lines += 1;
                }
            }
            Curve::Arc(_) => s.arcs += 1,
            Curve::Circle(_) => s.circles += 1,
        }
    }
    s
}

fn bbox(points: impl Iterator<Item = Point>) -> Option<(Point, Point)> {
    points.fold(None, |acc, p| match acc {
        None => Some((p, p)),
        Some((lo, hi)) => Some((
            Point::new(lo.x.min(p.x), lo.y.min(p.y)),
            Point::new(hi.x.max(p.x), hi.y.max(p.y)),
        )),
    })
}

fn normalize_once(design: &Design) -> Result<Design, DatasetError> {
    let Some((lo, hi)) = bbox(design.points()) else {
        return Ok(Design::empty());
    };
    let extent = (hi.x - lo.x).max(hi.y - lo.y);
    if extent <= EPS_GEOM {
        return Err(DatasetError::DegenerateBoundingBox);
    }
    let s = GRID_SIZE / extent;
    // after snapping the long axis spans [0, 20]; integer shifts center it
    let shift = Point::new(
        ((hi.x - lo.x) * s / 2.0).round(),
        ((hi.y - lo.y) * s / 2.0).round(),
    );
    let map = |p: Point| {
        let q = (p - lo) * s;
        Point::new(q.x.round() - shift.x + 0.0, q.y.round() - shift.y + 0.0)
    };
    let curves = design.curves().iter().filter_map(|c| {
        let mapped = c.map_points(map).ok()?;
        Some(match mapped {
            Curve::Circle([a, b]) if b.lex_cmp(&a).is_lt() => Curve::Circle([b, a]),
            other => other,
        })
    });
    let mut sorted: Vec<Curve> = Design::from_curves(curves).curves().to_vec();
    sorted.sort_by(|a, b| a.canonical_cmp(b));
    Ok(Design::from_curves(sorted))
}

/// Maps the design's bounding box uniformly into a centered 20×20 region and
/// snaps control points to the integer grid. Curves that collapse are
/// dropped. Used only for dedup identity, never for play.
pub fn normalize_to_grid(design: &Design) -> Result<Design, DatasetError> {
    let mut cur = normalize_once(design)?;
    // dropping a collapsed curve can shrink the box; iterate to a fixed point
    loop {
        let next = normalize_once(&cur)?;
        if next == cur {
            return Ok(cur);
        }
        cur = next;
    }
}

/// Stable identifier: a digest of the normalized design's canonical JSON.
pub fn design_id(design: &Design) -> Result<String, DatasetError> {
    let norm = normalize_to_grid(design)?;
    let digest = Sha256::digest(norm.to_json().as_bytes());
    let mut hex = String::with_capacity(16);
    for b in &digest[..8] {
        let _ = write!(hex, "{b:02x}");
    }
    Ok(hex)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Rejection {
    #[error("scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("scaled design is degenerate: {0}")]
    Degenerate(String),
    #[error("point {0:?} leaves the canvas")]
    OutOfCanvas(Point),
    #[error("points {a:?} and {b:?} are {gap} apart")]
    PointsTooClose { a: Point, b: Point, gap: f64 },
    #[error("parallel lines {a:?} and {b:?} are {gap} apart")]
    ParallelLines { a: Curve, b: Curve, gap: f64 },
    #[error("concentric curves {a:?} and {b:?} are {gap} apart")]
    ConcentricCurves { a: Curve, b: Curve, gap: f64 },
}

fn round_params(c: &Curve) -> Option<(Point, f64)> {
    c.circle_params()
        .map(|p| (p.center, p.radius))
        .or_else(|| c.arc_params().map(|p| (p.center, p.radius)))
}

/// Whether two round curves share some direction from their common center.
fn angular_overlap(a: &Curve, b: &Curve) -> bool {
    let (pa, pb) = (a.arc_params(), b.arc_params());
    let covers = |arc: &Option<crate::geometry::ArcParams>, other: &Curve, center: Point| match arc {
        None => true,
        Some(p) => other.sample(16).into_iter().any(|q| {
            let d = q - center;
            p.contains_angle(d.y.atan2(d.x))
        }),
    };
    let (ca, _) = round_params(a).expect("round curve");
    covers(&pa, b, ca) && covers(&pb, a, ca)
}

/// Scales the design about the canvas origin and checks spacing: distinct
/// control points, parallel overlapping lines, and concentric circles or arcs
/// must all be at least `min_gap` apart.
pub fn rescale_for_play(design: &Design, scale: f64, min_gap: f64) -> Result<Design, Rejection> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Rejection::NonPositiveScale(scale));
    }
    let mut curves = Vec::with_capacity(design.len());
    for c in design.curves() {
        curves.push(
            c.map_points(|p| p * scale)
                .map_err(|e| Rejection::Degenerate(e.to_string()))?,
        );
    }
    let out = Design::from_curves(curves);
    if out.len() != design.len() {
        return Err(Rejection::Degenerate("curves merged after scaling".into()));
    }
    if let Some(p) = out.points().find(|p| !p.in_canvas()) {
        return Err(Rejection::OutOfCanvas(p));
    }
    let pts: Vec<Point> = out.points().collect();
    for (i, &a) in pts.iter().enumerate() {
        for &b in &pts[i + 1..] {
            let gap = a.dist(b);
            if gap < min_gap {
                return Err(Rejection::PointsTooClose { a, b, gap });
            }
        }
    }
    let cs = out.curves();
    for (i, a) in cs.iter().enumerate() {
        for b in &cs[i + 1..] {
            match (a, b) {
                (Curve::Line([a0, a1]), Curve::Line([b0, b1])) => {
                    let u = *a1 - *a0;
                    let v = *b1 - *b0;
                    let len = u.norm();
                    if (u.cross(v) / (len * v.norm())).abs() > DEFAULT_ANGLE_TOL.sin() {
                        continue;
                    }
                    let dir = u * (1.0 / len);
                    let (t0, t1) = ((*b0 - *a0).dot(dir), (*b1 - *a0).dot(dir));
                    let overlap = t0.max(t1).min(len) - t0.min(t1).max(0.0);
                    if overlap <= EPS_GEOM {
                        continue;
                    }
                    let gap = ((*b0 - *a0).cross(dir).abs() + (*b1 - *a0).cross(dir).abs()) / 2.0;
                    if gap < min_gap {
                        return Err(Rejection::ParallelLines { a: *a, b: *b, gap });
                    }
                }
                _ => {
                    let (Some((ca, ra)), Some((cb, rb))) = (round_params(a), round_params(b)) else {
                        continue;
                    };
                    let d = ca.dist(cb);
                    if d >= min_gap || !angular_overlap(a, b) {
                        continue;
                    }
                    let gap = (ra - rb).abs() - d;
                    if gap < min_gap {
                        return Err(Rejection::ConcentricCurves { a: *a, b: *b, gap: gap.max(0.0) });
                    }
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImportOptions {
    /// Random scale factor drawn uniformly from this range; `None` keeps size.
    pub scale_range: Option<(f64, f64)>,
    pub min_gap: f64,
    pub angle_tol: f64,
    pub seed: u64,
    /// Scale draws per design before it is rejected.
    pub attempts: usize,
}

impl Default for ImportOptions {
    fn default() -> Self {
        ImportOptions {
            scale_range: None,
            min_gap: DEFAULT_MIN_GAP,
            angle_tol: DEFAULT_ANGLE_TOL,
            seed: 0,
            attempts: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportedDesign {
    /// Position in the input.
    pub source: usize,
    pub design_id: String,
    pub signature: Signature,
    pub design: Design,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImportReport {
    pub accepted: Vec<ImportedDesign>,
    pub rejected: Vec<(usize, String)>,
    /// Input index and the id it duplicates.
    pub duplicates: Vec<(usize, String)>,
}

/// Dedups designs by normalized identity (first occurrence wins) and
/// optionally rescales each for play. Each design draws its scale from its
/// own seeded stream, so results do not depend on scheduling.
pub fn import_designs(designs: &[Design], opts: &ImportOptions) -> ImportReport {
    import_designs_with(Exec::default(), designs, opts)
}

pub fn import_designs_with(exec: Exec, designs: &[Design], opts: &ImportOptions) -> ImportReport {
    let indexed: Vec<(usize, &Design)> = designs.iter().enumerate().collect();
    let results = par::map_with(exec, &indexed, |&(i, d)| -> Result<ImportedDesign, String> {
        let id = design_id(d).map_err(|e| e.to_string())?;
        let design = match opts.scale_range {
            None => rescale_for_play(d, 1.0, opts.min_gap).map_err(|e| e.to_string())?,
            Some((lo, hi)) => {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                let mut last = String::from("no attempts");
                let mut found = None;
                for _ in 0..opts.attempts.max(1) {
                    let s = if hi > lo { rng.random_range(lo..hi) } else { lo };
                    match rescale_for_play(d, s, opts.min_gap) {
                        Ok(x) => {
                            found = Some(x);
                            break;
                        }
                        Err(e) => last = e.to_string(),
                    }
                }
                found.ok_or(last)?
            }
        };
        Ok(ImportedDesign {
            source: i,
            design_id: id,
            signature: signature(&design, opts.angle_tol),
            design,
        })
    });
    let mut report = ImportReport::default();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Err(reason) => report.rejected.push((i, reason)),
            Ok(item) => {
                if seen.contains_key(&item.design_id) {
                    report.duplicates.push((i, item.design_id));
                } else {
                    seen.insert(item.design_id.clone(), i);
                    report.accepted.push(item);
                }
            }
        }
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    MissingRounds,
    NoActions,
    EmptyMessage,
    ReplayMismatch,
    MarkedExcluded,
    AboveInclusionThreshold,
}

impl ExclusionReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ExclusionReason::MissingRounds => "missing_rounds",
            ExclusionReason::NoActions => "no_actions",
            ExclusionReason::EmptyMessage => "empty_message",
            ExclusionReason::ReplayMismatch => "replay_mismatch",
            ExclusionReason::MarkedExcluded => "marked_excluded",
            ExclusionReason::AboveInclusionThreshold => "above_inclusion_threshold",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FilterOptions {
    /// Analysis-view bound on the final distance; `None` disables it.
    pub inclusion_threshold: Option<f64>,
    pub metric: MetricConfig,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FilterResult {
    pub kept: Vec<Rollout>,
    pub excluded: Vec<(Rollout, ExclusionReason)>,
}

/// First reason a rollout should be excluded, if any.
pub fn exclusion_reason(r: &Rollout, opts: &FilterOptions) -> Option<ExclusionReason> {
    match r.check_chain() {
        Ok(()) => {}
        Err(ChainError::ReplayMismatch { .. }) => return Some(ExclusionReason::ReplayMismatch),
        Err(_) => return Some(ExclusionReason::MissingRounds),
    }
    if !r.has_actions() {
        return Some(ExclusionReason::NoActions);
    }
    if r.rounds.iter().any(|x| x.message.is_empty()) {
        return Some(ExclusionReason::EmptyMessage);
    }
    if r.check_replay().is_err() {
        return Some(ExclusionReason::ReplayMismatch);
    }
    if r.outcome == Outcome::Excluded {
        return Some(ExclusionReason::MarkedExcluded);
    }
    if let Some(t) = opts.inclusion_threshold {
        if !(r.final_distance(&opts.metric).0 < t) {
            return Some(ExclusionReason::AboveInclusionThreshold);
        }
    }
    None
}

/// Partitions rollouts into kept and excluded, preserving input order.
pub fn exclusion_filter(records: Vec<Rollout>, opts: &FilterOptions) -> FilterResult {
    let reasons = par::map(&records, |r| exclusion_reason(r, opts));
    let mut out = FilterResult::default();
    for (r, reason) in records.into_iter().zip(reasons) {
        match reason {
            None => out.kept.push(r),
            Some(why) => out.excluded.push((r, why)),
        }
    }
    out
}

/// A rollout annotated with its target identity and success flag.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub rollout: Rollout,
    pub design_id: String,
    pub success: bool,
}

impl DatasetRecord {
    /// Success means the final design is within `threshold` of the target
    /// after at least one round with actions.
    pub fn new(rollout: Rollout, metric: &MetricConfig, threshold: f64) -> Result<Self, DatasetError> {
        let design_id = design_id(&rollout.target)?;
        let success = rollout.has_actions() && rollout.final_distance(metric).0 < threshold;
        Ok(DatasetRecord {
            rollout,
            design_id,
            success,
        })
    }
}

/// Annotates rollouts in parallel; the result is sorted by design id, then
/// rollout id, then input position.
pub fn annotate(rollouts: Vec<Rollout>, metric: &MetricConfig, threshold: f64) -> Result<Vec<DatasetRecord>, DatasetError> {
    let mut recs = par::map(&rollouts, |r| DatasetRecord::new(r.clone(), metric, threshold))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    recs.sort_by(|a, b| {
        (a.design_id.as_str(), a.rollout.id()).cmp(&(b.design_id.as_str(), b.rollout.id()))
    });
    Ok(recs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    /// No successful rollout.
    None,
    Coverage,
    Dense,
    VeryDense,
}

/// Success-count boundaries for the splits. Counts between `dense_max` and
/// `very_dense_min` are assigned to dense.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub coverage_min: usize,
    pub dense_min: usize,
    pub dense_max: usize,
    pub very_dense_min: usize,
    pub eval_min: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            coverage_min: 1,
            dense_min: 3,
            dense_max: 6,
            very_dense_min: 30,
            eval_min: 3,
        }
    }
}

impl SplitSpec {
    pub fn classify(&self, successes: usize) -> Split {
        if successes >= self.very_dense_min {
            Split::VeryDense
        } else if successes >= self.dense_min {
            Split::Dense
        } else if successes >= self.coverage_min {
            Split::Coverage
        } else {
            Split::None
        }
    }

    pub fn in_eval(&self, successes: usize) -> bool {
        successes >= self.eval_min
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitEntry {
    pub design_id: String,
    pub split: Split,
    pub successes: usize,
}

/// One entry per design id, sorted by id.
pub fn build_splits(records: &[DatasetRecord], spec: &SplitSpec) -> Vec<SplitEntry> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        *counts.entry(&r.design_id).or_default() += usize::from(r.success);
    }
    counts
        .into_iter()
        .map(|(id, n)| SplitEntry {
            design_id: id.to_string(),
            split: spec.classify(n),
            successes: n,
        })
        .collect()
}

/// Design ids whose success count qualifies for the benchmark.
pub fn eval_designs<'a>(entries: &'a [SplitEntry], spec: &SplitSpec) -> Vec<&'a str> {
    entries
        .iter()
        .filter(|e| spec.in_eval(e.successes))
        .map(|e| e.design_id.as_str())
        .collect()
}

pub fn manifest_to_jsonl(entries: &[SplitEntry]) -> String {
    let mut s = String::new();
    for e in entries {
        s.push_str(&serde_json::to_string(e).expect("split entry serializes"));
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundStatsRow {
    /// Round number, or `generation` / `refinement` for the grouped rows.
    pub group: String,
    pub messages: usize,
    pub text_only: usize,
    pub drawing_only: usize,
    pub multimodal: usize,
    pub empty: usize,
    /// Fraction of messages with at least one stroke.
    pub drawing_share: f64,
    pub mean_strokes: f64,
    pub mean_ink: f64,
    pub mean_text_len: f64,
    pub mean_distance: f64,
}

#[derive(Default)]
struct Acc {
    n: usize,
    modality: [usize; 4],
    strokes: f64,
    ink: f64,
    text: f64,
    dist: f64,
}

impl Acc {
    fn add(&mut self, round: &crate::game::Round, dist: f64) {
        self.n += 1;
        let m = &round.message;
        let slot = match m.modality() {
            Modality::TextOnly => 0,
            Modality::DrawingOnly => 1,
            Modality::Multimodal => 2,
            Modality::Empty => 3,
        };
        self.modality[slot] += 1;
        let st = stroke_stats(&m.drawing);
        self.strokes += st.stroke_count as f64;
        self.ink += st.ink;
        self.text += m.text.chars().count() as f64;
        self.dist += dist;
    }

    fn row(&self, group: String) -> RoundStatsRow {
        let n = self.n.max(1) as f64;
        RoundStatsRow {
            group,
            messages: self.n,
            text_only: self.modality[0],
            drawing_only: self.modality[1],
            multimodal: self.modality[2],
            empty: self.modality[3],
            drawing_share: (self.modality[1] + self.modality[2]) as f64 / n,
            mean_strokes: self.strokes / n,
            mean_ink: self.ink / n,
            mean_text_len: self.text / n,
            mean_distance: self.dist / n,
        }
    }
}

/// Per-round message and distance statistics, followed by the grouped
/// generation (round 1) and refinement (rounds 2+) rows.
pub fn round_stats(records: &[Rollout], metric: &MetricConfig) -> Vec<RoundStatsRow> {
    let dists: Vec<Vec<f64>> = par::map(records, |r| {
        r.rounds
            .iter()
            .map(|x| chamfer(&x.design_after, &r.target, metric).0)
            .collect()
    });
    let mut per: BTreeMap<usize, Acc> = BTreeMap::new();
    let (mut gen, mut refine) = (Acc::default(), Acc::default());
    for (r, ds) in records.iter().zip(&dists) {
        for (i, (round, &d)) in r.rounds.iter().zip(ds).enumerate() {
            per.entry(i + 1).or_default().add(round, d);
            if i == 0 { &mut gen } else { &mut refine }.add(round, d);
        }
    }
    let mut rows: Vec<RoundStatsRow> = per.iter().map(|(k, a)| a.row(k.to_string())).collect();
    rows.push(gen.row("generation".into()));
    rows.push(refine.row("refinement".into()));
    rows
}

pub fn stats_to_csv(rows: &[RoundStatsRow], out: impl Write) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Canonical record line for one rollout (no trailing newline).
pub fn rollout_to_line(r: &Rollout) -> String {
    serde_json::to_string(r).expect("rollout serialization is infallible")
}

pub fn to_jsonl(records: &[Rollout]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&rollout_to_line(r));
        s.push('\n');
    }
    s
}

/// Parses newline-delimited records; blank lines are skipped and errors
/// carry 1-based line numbers.
pub fn parse_jsonl(text: &str) -> Result<Vec<Rollout>, DatasetError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| DatasetError::Json { line: i + 1, source }))
        .collect()
}

pub fn read_records(path: &Path) -> Result<Vec<Rollout>, DatasetError> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| DatasetError::Json { line: i + 1, source })?);
    }
    Ok(out)
}

pub fn write_records(path: &Path, records: &[Rollout]) -> Result<(), DatasetError> {
    std::fs::write(path, to_jsonl(records))?;
    Ok(())
}

pub fn append_record(path: &Path, record: &Rollout) -> Result<(), DatasetError> {
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(f, "{}", rollout_to_line(record))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationIssue {
    /// 1-based round, when the issue is tied to one.
    pub round: Option<usize>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidateOptions {
    pub max_rounds: usize,
    pub win_threshold: f64,
    pub metric: MetricConfig,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        ValidateOptions {
            max_rounds: 10,
            win_threshold: SUCCESS_THRESHOLD,
            metric: MetricConfig::default(),
        }
    }
}

/// Schema-level and invariant checks: chaining, replay consistency, round
/// count, canvas bounds, and outcome consistency.
pub fn validate_rollout(r: &Rollout, opts: &ValidateOptions) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    let mut push = |round: Option<usize>, reason: String| issues.push(ValidationIssue { round, reason });
    if r.target.is_empty() {
        push(None, "target design is empty".into());
    }
    if !r.target.in_canvas() {
        push(None, "target leaves the canvas".into());
    }
    if r.rounds.len() > opts.max_rounds {
        push(None, format!("{} rounds exceed the limit of {}", r.rounds.len(), opts.max_rounds));
    }
    match r.check_chain() {
        Ok(()) => {}
        Err(ChainError::Broken { round }) => push(Some(round), "design_before differs from the previous design_after".into()),
        Err(e) => push(None, e.to_string()),
    }
    for (i, round) in r.rounds.iter().enumerate() {
        let replayed = round.design_before.apply_lenient(&round.actions).design;
        if !crate::design::design_equal(&replayed, &round.design_after, EPS_ID) {
            push(Some(i + 1), "replaying the actions does not reproduce design_after".into());
        }
        if round.duration.is_some_and(|d| !(d >= 0.0 && d.is_finite())) {
            push(Some(i + 1), "duration must be a nonnegative number".into());
        }
    }
    if r.outcome == Outcome::Won {
        let d = r.final_distance(&opts.metric).0;
        if !(d < opts.win_threshold) {
            push(None, format!("marked won but final distance {d} is not below {}", opts.win_threshold));
        }
        if !r.has_actions() {
            push(None, "marked won without any actions".into());
        }
    }
    issues
}
