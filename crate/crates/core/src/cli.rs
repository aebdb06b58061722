//! The `cvrank` command line.
//!
//! Exit codes: 0 success, 1 I/O, 2 bad data, 3 method guard (database too
//! small, holdout/baseline constraints), 64 usage.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::config::apply_overrides;
use crate::engine::{CandidateScore, CvSequence, CycleConfig, EngineError, RankEngine};
use crate::eval::{
    build_protocol, evaluate, evaluate_arps, load_fixture, BaselineSelection, EvalError,
};
use crate::metric::{format_half_even, metric_by_name, ChangeMetric};
use crate::service::{self, AppState, ServiceConfig};
use crate::stats::descriptive;
use crate::store::{parse_candidates, resolve_flips, Label, PreferenceDb, Store, StoreError};
use crate::synth;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_METHOD: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(
    name = "cvrank",
    version,
    about = "Rank chess compositions by a solver's past likes and dislikes"
)]
pub struct Cli {
    /// Store directory holding the liked and disliked databases.
    #[arg(
        long,
        global = true,
        env = "CVRANK_STORE",
        default_value = "cvrank-store"
    )]
    store: PathBuf,

    /// File of `key = value` cycle configuration overrides.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Inline override, e.g. `--set alpha=0.01`; applied after --config.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Change metric.
    #[arg(long, global = true, default_value = "padded-bytes", value_parser = ["padded-bytes", "board-squares"])]
    metric: String,

    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Import a PGN file as the liked or disliked database (replaces it).
    Ingest {
        pgn: PathBuf,
        #[arg(long)]
        label: LabelArg,
    },
    /// Score and rank candidate positions (PGN or one FEN per line).
    Rank {
        candidates: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[command(flatten)]
        workers: Workers,
    },
    /// Run the holdout evaluation, or test ARP lists from fixture files.
    Evaluate(EvaluateArgs),
    /// Change-value statistics of one database.
    Stats {
        #[arg(long)]
        db: LabelArg,
        /// Skip the per-record CV listing.
        #[arg(long)]
        summary_only: bool,
    },
    /// Serve the triage HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        #[command(flatten)]
        workers: Workers,
    },
    /// Write synthetic liked/disliked PGNs and a candidate list for demos.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 600)]
        liked: usize,
        #[arg(long, default_value_t = 900)]
        disliked: usize,
        #[arg(long, default_value_t = 20)]
        candidates: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
struct Workers {
    /// Worker threads (default: all cores).
    #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
    workers: Option<u16>,
}

impl Workers {
    fn get(&self) -> Option<usize> {
        self.workers.map(usize::from)
    }
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u32).range(1..))]
    holdout: u32,
    #[arg(long, default_value_t = 60, value_parser = clap::value_parser!(u32).range(1..))]
    baseline: u32,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
    groups: u32,
    #[arg(long)]
    seed: Option<u64>,
    /// Take baseline records in order instead of at random.
    #[arg(long)]
    sequential: bool,
    /// Directory with `nus_arps.csv` and `brs_arps.csv`; skips the engine.
    #[arg(long)]
    fixture: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    format: ReportFormat,
    /// Also write the JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    workers: Workers,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LabelArg {
    Liked,
    Disliked,
}

impl From<LabelArg> for Label {
    fn from(l: LabelArg) -> Label {
        match l {
            LabelArg::Liked => Label::Liked,
            LabelArg::Disliked => Label::Disliked,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Text,
    Json,
}

/// An error with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn new(code: i32, message: impl ToString) -> Self {
        Failure {
            code,
            message: message.to_string(),
        }
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        let code = match e {
            StoreError::FileNotFound(_) | StoreError::Io { .. } | StoreError::StoreMissing(..) => {
                EXIT_IO
            }
            StoreError::HoldoutTooLarge { .. } => EXIT_METHOD,
            _ => EXIT_DATA,
        };
        Failure::new(code, e)
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        let code = match e {
            EngineError::NoCandidates => EXIT_DATA,
            _ => EXIT_METHOD,
        };
        Failure::new(code, e)
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Store(s) => s.into(),
            EvalError::Engine(s) => s.into(),
            EvalError::Fixture { .. } | EvalError::LengthMismatch(..) | EvalError::Stats(_) => {
                Failure::new(EXIT_DATA, e)
            }
            EvalError::EmptyHoldout | EvalError::InsufficientBaseline(_) => {
                Failure::new(EXIT_METHOD, e)
            }
        }
    }
}

type CmdResult = Result<(), Failure>;

/// Parse `args` (including the program name) and run. Output goes to `out`,
/// diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    init_logging(cli.verbose);
    match dispatch(&cli, out, err) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

fn cycle_config(cli: &Cli) -> Result<CycleConfig, Failure> {
    let mut cfg = CycleConfig::default();
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", path.display())))?;
        cfg = apply_overrides(cfg, &text)
            .map_err(|e| Failure::new(EXIT_USAGE, format!("{}: {e}", path.display())))?;
    }
    if !cli.overrides.is_empty() {
        cfg = apply_overrides(cfg, &cli.overrides.join("\n"))
            .map_err(|e| Failure::new(EXIT_USAGE, format!("--set: {e}")))?;
    }
    cfg.validate().map_err(|e| Failure::new(EXIT_USAGE, e))?;
    Ok(cfg)
}

fn metric(cli: &Cli) -> &'static dyn ChangeMetric {
    metric_by_name(&cli.metric).expect("clap restricts metric names")
}

fn dispatch(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    match &cli.command {
        Command::Ingest { pgn, label } => cmd_ingest(cli, pgn, (*label).into(), out, err),
        Command::Rank {
            candidates,
            seed,
            format,
            workers,
        } => cmd_rank(cli, candidates, *seed, *format, workers.get(), out),
        Command::Evaluate(args) => cmd_evaluate(cli, args, out),
        Command::Stats { db, summary_only } => cmd_stats(cli, (*db).into(), *summary_only, out),
        Command::Serve { bind, workers } => cmd_serve(cli, *bind, workers.get()),
        Command::Synth {
            out_dir,
            liked,
            disliked,
            candidates,
            seed,
        } => cmd_synth(out_dir, *liked, *disliked, *candidates, *seed, out),
    }
}

fn io_failure(e: impl std::fmt::Display) -> Failure {
    Failure::new(EXIT_IO, e)
}

fn cmd_ingest(
    cli: &Cli,
    pgn: &Path,
    label: Label,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CmdResult {
    let mut store = Store::new(&cli.store);
    let summary = store.import_pgn(pgn, label)?;
    writeln!(
        out,
        "{} ingested, {} skipped",
        summary.ingested, summary.skipped
    )
    .map_err(io_failure)?;
    if summary.skipped > 0 {
        let _ = writeln!(err, "warning: skipped: {} (no FEN tag)", summary.skipped);
    }
    Ok(())
}

fn load_training(cli: &Cli) -> Result<(PreferenceDb, PreferenceDb), Failure> {
    let store = Store::new(&cli.store);
    let liked = store.load(Label::Liked)?;
    let disliked = store.load(Label::Disliked)?;
    let (liked, disliked, _) = resolve_flips(&liked, &disliked);
    Ok((liked, disliked))
}

fn fmt2(x: f64) -> String {
    format_half_even(x, 2)
}

/// Ranked rows as CSV: header, then `rank,"fen",cycle_1..,arp`.
pub fn ranking_csv(scores: &[CandidateScore]) -> String {
    let cycles = scores.iter().map(|s| s.cycles.len()).max().unwrap_or(0);
    let mut out = String::from("rank,fen");
    for c in 1..=cycles {
        out.push_str(&format!(",cycle_{c}"));
    }
    out.push_str(",arp\r\n");
    for (i, s) in scores.iter().enumerate() {
        out.push_str(&format!(
            "{},\"{}\"",
            i + 1,
            s.fen.text().replace('"', "\"\"")
        ));
        for c in &s.cycles {
            out.push_str(&format!(",{}", fmt2(c.rp)));
        }
        out.push_str(&format!(",{}\r\n", fmt2(s.arp)));
    }
    out
}

pub fn ranking_json(scores: &[CandidateScore], seed: u64) -> String {
    let rows: Vec<_> = scores
        .iter()
        .enumerate()
        .map(|(i, s)| json!({ "rank": i + 1, "fen": s.fen, "cycles": s.cycles, "arp": s.arp }))
        .collect();
    serde_json::to_string_pretty(&json!({ "seed": seed, "ranking": rows })).expect("serializable")
        + "\n"
}

fn cmd_rank(
    cli: &Cli,
    candidates: &Path,
    seed: Option<u64>,
    format: Format,
    workers: Option<usize>,
    out: &mut dyn Write,
) -> CmdResult {
    let mut config = cycle_config(cli)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let text = fs::read_to_string(candidates)
        .map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", candidates.display())))?;
    let fens = parse_candidates(&text)
        .map_err(|e| Failure::new(EXIT_DATA, format!("{}: {e}", candidates.display())))?;
    let (liked, disliked) = load_training(cli)?;
    let metric = metric(cli);
    let l = CvSequence::build(&liked, metric)?;
    let d = CvSequence::build(&disliked, metric)?;
    let engine = RankEngine::new(&l, &d, config)?;
    let ranked = engine.rank_collection(&fens, workers, None)?;
    let body = match format {
        Format::Csv => ranking_csv(&ranked),
        Format::Json => ranking_json(&ranked, config.seed),
    };
    out.write_all(body.as_bytes()).map_err(io_failure)
}

fn cmd_evaluate(cli: &Cli, args: &EvaluateArgs, out: &mut dyn Write) -> CmdResult {
    let mut config = cycle_config(cli)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let report = match &args.fixture {
        Some(dir) => {
            let (nus, groups) = load_fixture(&dir.join("nus_arps.csv"), &dir.join("brs_arps.csv"))?;
            evaluate_arps(&nus, &groups, config.alpha)?
        }
        None => {
            let (liked, disliked) = load_training(cli)?;
            let selection = if args.sequential {
                BaselineSelection::Sequential
            } else {
                BaselineSelection::Random(config.seed)
            };
            let protocol = build_protocol(
                &liked,
                &disliked,
                args.holdout as usize,
                args.baseline as usize,
                args.groups as usize,
                selection,
            )?;
            evaluate(&protocol, metric(cli), &config, args.workers.get())?
        }
    };
    let json = serde_json::to_string_pretty(&report).expect("serializable") + "\n";
    if let Some(path) = &args.report {
        fs::write(path, &json)
            .map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", path.display())))?;
    }
    let body = match args.format {
        ReportFormat::Text => report.to_table(),
        ReportFormat::Json => json,
    };
    out.write_all(body.as_bytes()).map_err(io_failure)
}

fn cmd_stats(cli: &Cli, label: Label, summary_only: bool, out: &mut dyn Write) -> CmdResult {
    let db = Store::new(&cli.store).load(label)?;
    if db.is_empty() {
        return Err(Failure::new(
            EXIT_IO,
            format!("the {label} database is empty"),
        ));
    }
    let seq = CvSequence::build(&db, metric(cli))?;
    let values: Vec<f64> = seq.entries().map(|(_, cv)| cv.value()).collect();
    let d = descriptive(&values).map_err(|e| Failure::new(EXIT_DATA, e))?;
    let quantum = 100.0 / seq.metric().resolution() as f64;
    let quantized = values.iter().all(|v| (v / quantum).fract() == 0.0);

    let mut text = String::new();
    text.push_str(&format!(
        "database: {label}\nrecords: {}\nmetric: {}\n",
        seq.len(),
        seq.metric().name()
    ));
    text.push_str(&format!(
        "cv mean: {:.3}\ncv median: {:.3}\ncv max: {:.3}\n",
        d.mean, d.median, d.max
    ));
    text.push_str(&format!(
        "quantization: all CVs multiples of {quantum}: {}\n",
        if quantized { "yes" } else { "NO" }
    ));
    if !summary_only {
        text.push_str("\nindex\tcv\tfen\n");
        for (i, (fen, cv)) in seq.entries().enumerate() {
            text.push_str(&format!("{}\t{}\t{}\n", i + 1, cv.display(), fen));
        }
    }
    out.write_all(text.as_bytes()).map_err(io_failure)
}

fn cmd_serve(cli: &Cli, bind: SocketAddr, workers: Option<usize>) -> CmdResult {
    let state = AppState::new(ServiceConfig {
        store_dir: cli.store.clone(),
        cycle: cycle_config(cli)?,
        metric: metric(cli),
        workers,
    });
    let rt = tokio::runtime::Runtime::new().map_err(io_failure)?;
    rt.block_on(service::serve(bind, state)).map_err(io_failure)
}

fn cmd_synth(
    dir: &Path,
    n_liked: usize,
    n_disliked: usize,
    n_candidates: usize,
    seed: u64,
    out: &mut dyn Write,
) -> CmdResult {
    let taste = synth::Taste::new(seed, synth::TasteModel::default());
    let (liked, disliked) = synth::synthetic_stores(&taste, seed, n_liked, n_disliked);
    let mut rng = crate::rng::Stream::split(seed, 3);
    let mut candidates = String::from("# liked-like candidates first, then disliked-like\n");
    for _ in 0..n_candidates {
        candidates.push_str(&format!("{}\n", taste.liked_like(&mut rng)));
    }
    for _ in 0..n_candidates {
        candidates.push_str(&format!("{}\n", taste.disliked_like(&mut rng)));
    }
    fs::create_dir_all(dir).map_err(io_failure)?;
    let write = |name: &str, body: &str| {
        fs::write(dir.join(name), body).map_err(|e| Failure::new(EXIT_IO, format!("{name}: {e}")))
    };
    write("liked.pgn", &synth::to_pgn(&liked))?;
    write("disliked.pgn", &synth::to_pgn(&disliked))?;
    write("candidates.fen", &candidates)?;
    writeln!(
        out,
        "wrote {} liked, {} disliked and {} candidates to {}",
        liked.len(),
        disliked.len(),
        2 * n_candidates,
        dir.display()
    )
    .map_err(io_failure)
}
