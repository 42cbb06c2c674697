//! `mrcad` subcommands. Everything runs through [`run`] so tests can drive
//! the tool in-process; `main` only wires up the process.
//!
//! Exit status: 0 success, 1 data or validation failure, 2 usage error.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mrcad::bridge::{ChatMaker, ChatTransport, HttpTransport, RecordingTransport, ReplayTransport};
use mrcad::config::GlobalConfig;
use mrcad::dataset::{
    self, annotate, build_splits, exclusion_filter, import_designs_with, manifest_to_jsonl, round_stats, stats_to_csv,
    validate_rollout, FilterOptions, ImportOptions, SplitSpec, ValidateOptions, SUCCESS_THRESHOLD,
};
use mrcad::design::Design;
use mrcad::eval::{baseline_agent, build_benchmark, evaluate, report_to_csv, summary_table, BaselineKind, EvalItem, EvalOptions};
use mrcad::game::{MakerAgent, Rollout};
use mrcad::message::AblationMode;
use mrcad::metric::chamfer;
use mrcad::par::{self, Exec};
use mrcad::render::{design_png, scene_to_svg, Scene};
use serde_json::{json, Value};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "mrcad", version, about = "Multimodal CAD instruction toolkit")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// One JSON object per line on standard output.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Schema and invariant check of rollout records.
    Validate { records: PathBuf },
    /// Draws a design file as SVG (default) or PNG.
    Render(RenderArgs),
    /// Chamfer distance between two design files.
    Score { a: PathBuf, b: PathBuf },
    /// Re-applies every round's actions.
    Replay {
        records: PathBuf,
        /// Fail on any broken chain or replay mismatch.
        #[arg(long)]
        check: bool,
    },
    /// Dedups designs and optionally rescales them for play.
    Import(ImportArgs),
    /// Builds the design-level split manifest.
    Split(SplitArgs),
    /// Scores a Maker agent on benchmark items.
    Eval(EvalArgs),
    /// Runs the game server.
    Serve,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    pub design: PathBuf,
    #[arg(long, conflicts_with = "png")]
    pub svg: bool,
    #[arg(long)]
    pub png: bool,
    /// Output file; SVG goes to standard output when omitted.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    /// JSON array or newline-delimited designs.
    pub designs: PathBuf,
    /// Rescale each design by a random factor from this range.
    #[arg(long, value_name = "LO:HI", num_args = 0..=1, default_missing_value = "0.8:1.8")]
    pub rescale: Option<ScaleRange>,
    #[arg(long, value_name = "DELTA", default_value_t = dataset::DEFAULT_MIN_GAP)]
    pub min_gap: f64,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    pub records: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Per-round message statistics as CSV.
    #[arg(long)]
    pub stats: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Benchmark items or rollout records (newline-delimited).
    pub input: PathBuf,
    /// noop, oracle, random[:seed], greedy:k or chat:<config file>.
    #[arg(long)]
    pub agent: String,
    #[arg(long)]
    pub ablate: Option<Ablate>,
    #[arg(long)]
    pub report: PathBuf,
    /// Worker threads; 1 runs sequentially.
    #[arg(long, default_value_t = 0)]
    pub parallel: usize,
    /// Record chat exchanges to this file.
    #[arg(long, conflicts_with = "replay")]
    pub record: Option<PathBuf>,
    /// Answer chat requests from a recorded transcript instead of the network.
    #[arg(long)]
    pub replay: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Ablate {
    Text,
    Drawing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleRange(pub f64, pub f64);

impl std::str::FromStr for ScaleRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (lo, hi) = s.split_once(':').ok_or("expected LO:HI")?;
        let lo: f64 = lo.trim().parse().map_err(|e| format!("{lo}: {e}"))?;
        let hi: f64 = hi.trim().parse().map_err(|e| format!("{hi}: {e}"))?;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(format!("bad scale range {lo}:{hi}"));
        }
        Ok(ScaleRange(lo, hi))
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
        }
    }
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

fn data(e: impl fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn io_at(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.code()
        }
    }
}

struct Ctx<'a> {
    cfg: GlobalConfig,
    seed: u64,
    json: bool,
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

impl Ctx<'_> {
    fn emit(&mut self, v: &Value) -> Result<(), CliError> {
        writeln!(self.out, "{v}").map_err(data)
    }

    fn say(&mut self, text: fmt::Arguments<'_>) -> Result<(), CliError> {
        writeln!(self.out, "{text}").map_err(data)
    }

    fn warn(&mut self, text: fmt::Arguments<'_>) {
        let _ = writeln!(self.err, "{text}");
    }
}

pub fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let cfg = match &cli.config {
        Some(p) => GlobalConfig::load(p).map_err(|e| CliError::Usage(e.to_string()))?,
        None => GlobalConfig::default(),
    };
    let seed = cli.seed.unwrap_or(cfg.seed);
    let mut ctx = Ctx {
        cfg,
        seed,
        json: cli.json,
        out,
        err,
    };
    match &cli.command {
        Command::Validate { records } => cmd_validate(&mut ctx, records),
        Command::Render(a) => cmd_render(&mut ctx, a),
        Command::Score { a, b } => cmd_score(&mut ctx, a, b),
        Command::Replay { records, check } => cmd_replay(&mut ctx, records, *check),
        Command::Import(a) => cmd_import(&mut ctx, a),
        Command::Split(a) => cmd_split(&mut ctx, a),
        Command::Eval(a) => cmd_eval(&mut ctx, a),
        Command::Serve => cmd_serve(&mut ctx, cli.config.is_some()),
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(io_at(path))
}

fn read_design(path: &Path) -> Result<Design, CliError> {
    let d: Design =
        serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(d)
}

/// A JSON array of designs, or one design per line.
pub fn read_designs(path: &Path) -> Result<Vec<Design>, CliError> {
    let text = read_text(path)?;
    if text.trim_start().starts_with('[') {
        return serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())));
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CliError::Data(format!("{}: line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn read_rollouts(path: &Path) -> Result<Vec<Rollout>, CliError> {
    dataset::read_records(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn cmd_validate(ctx: &mut Ctx<'_>, path: &Path) -> Result<i32, CliError> {
    let game = ctx.cfg.game_config().map_err(data)?;
    let opts = ValidateOptions {
        max_rounds: game.max_rounds,
        win_threshold: game.win_threshold,
        metric: ctx.cfg.metric,
    };
    let text = read_text(path)?;
    let (mut total, mut bad) = (0usize, 0usize);
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        total += 1;
        let lineno = i + 1;
        let issues: Vec<(Option<usize>, String)>;
        let id: Option<String>;
        match serde_json::from_str::<Rollout>(line) {
            Err(e) => {
                id = None;
                issues = vec![(None, format!("schema: {e}"))];
            }
            Ok(r) => {
                id = Some(r.id().to_string());
                issues = validate_rollout(&r, &opts).into_iter().map(|x| (x.round, x.reason)).collect();
            }
        }
        if !issues.is_empty() {
            bad += 1;
        }
        for (round, reason) in &issues {
            let who = id.as_deref().map_or(format!("line {lineno}"), |x| format!("rollout {x}"));
            match round {
                Some(r) => ctx.warn(format_args!("{who}: round {r}: {reason}")),
                None => ctx.warn(format_args!("{who}: {reason}")),
            }
        }
        if ctx.json {
            let v = json!({
                "line": lineno,
                "rollout": id,
                "ok": issues.is_empty(),
                "issues": issues.iter().map(|(r, m)| json!({"round": r, "reason": m})).collect::<Vec<_>>(),
            });
            ctx.emit(&v)?;
        }
    }
    if !ctx.json {
        ctx.say(format_args!("{total} records, {bad} invalid"))?;
    }
    Ok(if bad == 0 { EXIT_OK } else { EXIT_DATA })
}

fn cmd_render(ctx: &mut Ctx<'_>, a: &RenderArgs) -> Result<i32, CliError> {
    let design = read_design(&a.design)?;
    let style = ctx.cfg.render.clone();
    if a.png {
        let bytes = design_png(&design, None, &style).map_err(data)?;
        match &a.out {
            Some(p) => std::fs::write(p, bytes).map_err(io_at(p))?,
            None => ctx.out.write_all(&bytes).map_err(data)?,
        }
    } else {
        let svg = scene_to_svg(&Scene {
            design,
            overlay: None,
            style,
        })
        .map_err(data)?;
        match &a.out {
            Some(p) => std::fs::write(p, svg).map_err(io_at(p))?,
            None => ctx.say(format_args!("{svg}"))?,
        }
    }
    Ok(EXIT_OK)
}

fn cmd_score(ctx: &mut Ctx<'_>, a: &Path, b: &Path) -> Result<i32, CliError> {
    let (da, db) = (read_design(a)?, read_design(b)?);
    let d = chamfer(&da, &db, &ctx.cfg.metric).value();
    if ctx.json {
        ctx.emit(&json!({"distance": d}))?;
    } else {
        ctx.say(format_args!("{d}"))?;
    }
    Ok(EXIT_OK)
}

fn cmd_replay(ctx: &mut Ctx<'_>, path: &Path, check: bool) -> Result<i32, CliError> {
    let metric = ctx.cfg.metric;
    let mut failed = 0;
    for r in read_rollouts(path)? {
        if check {
            let errors: Vec<String> = if r.rounds.is_empty() {
                Vec::new()
            } else {
                [r.check_replay(), r.check_chain()].into_iter().filter_map(|x| x.err()).map(|e| e.to_string()).collect()
            };
            if !errors.is_empty() {
                failed += 1;
                for e in &errors {
                    ctx.warn(format_args!("rollout {}: {e}", r.id()));
                }
                if ctx.json {
                    ctx.emit(&json!({"rollout": r.id(), "ok": false, "errors": errors}))?;
                }
                continue;
            }
        }
        let mut current = Design::empty();
        for (i, round) in r.rounds.iter().enumerate() {
            current = current.apply_lenient(&round.actions).design;
            let d = chamfer(&current, &r.target, &metric).value();
            if ctx.json {
                ctx.emit(&json!({"rollout": r.id(), "round": i + 1, "curves": current.len(), "distance": d}))?;
            } else {
                ctx.say(format_args!("{} round {}: {} curves, distance {d:.6}", r.id(), i + 1, current.len()))?;
            }
        }
    }
    Ok(if failed == 0 { EXIT_OK } else { EXIT_DATA })
}

fn cmd_import(ctx: &mut Ctx<'_>, a: &ImportArgs) -> Result<i32, CliError> {
    let designs = read_designs(&a.designs)?;
    let opts = ImportOptions {
        scale_range: a.rescale.map(|r| (r.0, r.1)),
        min_gap: a.min_gap,
        seed: ctx.seed,
        ..ImportOptions::default()
    };
    let report = import_designs_with(Exec::Sequential, &designs, &opts);
    for (i, why) in &report.rejected {
        ctx.warn(format_args!("design {i}: rejected: {why}"));
    }
    for (i, id) in &report.duplicates {
        ctx.warn(format_args!("design {i}: duplicate of {id}"));
    }
    let mut lines = String::new();
    for d in &report.accepted {
        lines.push_str(&serde_json::to_string(d).map_err(data)?);
        lines.push('\n');
    }
    match &a.out {
        Some(p) => std::fs::write(p, &lines).map_err(io_at(p))?,
        None => ctx.out.write_all(lines.as_bytes()).map_err(data)?,
    }
    if a.out.is_some() {
        let summary = json!({
            "accepted": report.accepted.len(),
            "rejected": report.rejected.len(),
            "duplicates": report.duplicates.len(),
        });
        if ctx.json {
            ctx.emit(&summary)?;
        } else {
            ctx.say(format_args!(
                "{} accepted, {} rejected, {} duplicates",
                report.accepted.len(),
                report.rejected.len(),
                report.duplicates.len()
            ))?;
        }
    }
    Ok(EXIT_OK)
}

fn cmd_split(ctx: &mut Ctx<'_>, a: &SplitArgs) -> Result<i32, CliError> {
    let metric = ctx.cfg.metric;
    let filtered = exclusion_filter(
        read_rollouts(&a.records)?,
        &FilterOptions {
            inclusion_threshold: None,
            metric,
        },
    );
    for (r, why) in &filtered.excluded {
        ctx.warn(format_args!("rollout {}: excluded: {}", r.id(), why.as_str()));
    }
    if let Some(p) = &a.stats {
        let rows = round_stats(&filtered.kept, &metric);
        let f = std::fs::File::create(p).map_err(io_at(p))?;
        stats_to_csv(&rows, f).map_err(data)?;
    }
    let records = annotate(filtered.kept, &metric, SUCCESS_THRESHOLD).map_err(data)?;
    let spec = SplitSpec::default();
    let entries = build_splits(&records, &spec);
    std::fs::write(&a.out, manifest_to_jsonl(&entries)).map_err(io_at(&a.out))?;
    let count = |s| entries.iter().filter(|e| e.split == s).count();
    use dataset::Split;
    let summary = json!({
        "records": records.len(),
        "excluded": filtered.excluded.len(),
        "designs": entries.len(),
        "none": count(Split::None),
        "coverage": count(Split::Coverage),
        "dense": count(Split::Dense),
        "very_dense": count(Split::VeryDense),
        "eval": entries.iter().filter(|e| spec.in_eval(e.successes)).count(),
    });
    if ctx.json {
        ctx.emit(&summary)?;
    } else {
        ctx.say(format_args!(
            "{} records ({} excluded), {} designs: coverage {}, dense {}, very dense {}, none {}",
            summary["records"], summary["excluded"], summary["designs"], summary["coverage"], summary["dense"],
            summary["very_dense"], summary["none"]
        ))?;
    }
    Ok(EXIT_OK)
}

/// Items directly, or rollout records turned into the benchmark.
pub fn read_eval_input(path: &Path, cfg: &GlobalConfig) -> Result<Vec<EvalItem>, CliError> {
    let text = read_text(path)?;
    let first = text.lines().find(|l| !l.trim().is_empty());
    let is_items = first
        .and_then(|l| serde_json::from_str::<Value>(l).ok())
        .is_some_and(|v| v.get("round_index").is_some());
    if is_items {
        return text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| CliError::Data(format!("{}: line {}: {e}", path.display(), i + 1)))
            })
            .collect();
    }
    let rollouts = dataset::parse_jsonl(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let kept = exclusion_filter(
        rollouts,
        &FilterOptions {
            inclusion_threshold: None,
            metric: cfg.metric,
        },
    )
    .kept;
    let records = annotate(kept, &cfg.metric, SUCCESS_THRESHOLD).map_err(data)?;
    Ok(build_benchmark(&records, &SplitSpec::default(), &cfg.metric))
}

type Recorder = Arc<RecordingTransport<HttpTransport>>;

fn chat_agent(spec: &str, a: &EvalArgs) -> Result<(Box<dyn MakerAgent>, Option<Recorder>), CliError> {
    let cfg = GlobalConfig::load(Path::new(spec)).map_err(|e| CliError::Usage(e.to_string()))?;
    let endpoint = cfg
        .endpoint
        .ok_or_else(|| CliError::Usage(format!("{spec}: no [endpoint] section")))?;
    if let Some(p) = &a.replay {
        let t = ReplayTransport::load(p).map_err(data)?;
        return Ok((Box::new(ChatMaker::new(endpoint, Box::new(t))), None));
    }
    let http = HttpTransport::new(endpoint.clone());
    if a.record.is_some() {
        let rec = Arc::new(RecordingTransport::new(http));
        let t: Box<dyn ChatTransport> = Box::new(rec.clone());
        return Ok((Box::new(ChatMaker::new(endpoint, t)), Some(rec)));
    }
    Ok((Box::new(ChatMaker::new(endpoint, Box::new(http))), None))
}

fn cmd_eval(ctx: &mut Ctx<'_>, a: &EvalArgs) -> Result<i32, CliError> {
    let (agent, recorder) = match a.agent.strip_prefix("chat:") {
        Some(spec) => chat_agent(spec, a)?,
        None => {
            let kind: BaselineKind = a.agent.parse().map_err(|e| CliError::Usage(format!("--agent: {e}")))?;
            (baseline_agent(&kind), None)
        }
    };
    let items = read_eval_input(&a.input, &ctx.cfg)?;
    let opts = EvalOptions {
        ablation: match a.ablate {
            None => AblationMode::None,
            Some(Ablate::Text) => AblationMode::DropText,
            Some(Ablate::Drawing) => AblationMode::DropDrawing,
        },
        seed: ctx.seed,
        metric: ctx.cfg.metric,
        exec: if a.parallel == 1 { Exec::Sequential } else { Exec::Parallel },
    };
    let report = par::with_threads(a.parallel, || evaluate(agent.as_ref(), &items, &opts)).map_err(data)?;
    if let (Some(rec), Some(p)) = (&recorder, &a.record) {
        rec.save(p).map_err(data)?;
    }
    let f = std::fs::File::create(&a.report).map_err(io_at(&a.report))?;
    report_to_csv(&report, f).map_err(data)?;
    if ctx.json {
        for item in &report.items {
            ctx.emit(&serde_json::to_value(item).map_err(data)?)?;
        }
        ctx.emit(&json!({
            "agent": report.agent,
            "ablation": report.ablation,
            "seed": report.seed,
            "generation": report.generation,
            "refinement": report.refinement,
        }))?;
    } else {
        ctx.say(format_args!("{}", summary_table(std::slice::from_ref(&report))))?;
    }
    Ok(EXIT_OK)
}

fn cmd_serve(ctx: &mut Ctx<'_>, configured: bool) -> Result<i32, CliError> {
    if !configured {
        return Err(CliError::Usage("serve requires --config".into()));
    }
    let settings = ctx.cfg.server.clone();
    let base = ctx.cfg.game_config().map_err(data)?;
    let pool = match &settings.target_pool {
        Some(p) => read_designs(p)?,
        None => Vec::new(),
    };
    let storage = mrcad_server::FileStorage::new(&settings.data_dir).map_err(io_at(&settings.data_dir))?;
    let state = Arc::new(mrcad_server::AppState::new(
        settings,
        base,
        Arc::new(storage),
        Arc::new(mrcad_server::SystemClock::default()),
        pool,
        ctx.seed,
    ));
    let rt = tokio::runtime::Runtime::new().map_err(data)?;
    rt.block_on(mrcad_server::serve(state)).map_err(data)?;
    Ok(EXIT_OK)
}
