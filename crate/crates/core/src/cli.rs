//! Batch front end: JSONL events in, one CSV row per event out, plus a
//! run manifest and the privacy ledger as JSON sidecars.
//!
//! Settings are layered: command-line flags, then `CDPK_*` environment
//! variables, then a TOML config file, then defaults.

use crate::budget::BudgetError;
use crate::common::{InputError, UpdateEvent};
use crate::counting::CountingError;
use crate::low_dim::LowDimError;
use crate::pipeline::{Engine, EngineError, PipelineConfig, StepOutput};
use clap::Parser;
use serde_json::json;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

/// Version of the CSV column layout.
pub const CSV_SCHEMA: u32 = 1;

#[derive(Debug, Default, Parser)]
#[command(name = "cdpk", version, about = "Private continual k-means / k-median over an insert/delete stream")]
pub struct Args {
    /// Privacy parameter.
    #[arg(long, env = "CDPK_EPSILON")]
    pub epsilon: Option<f64>,
    /// Number of centers.
    #[arg(long, env = "CDPK_K")]
    pub k: Option<usize>,
    /// Radius of the input ball.
    #[arg(long, env = "CDPK_LAMBDA")]
    pub lambda: Option<f64>,
    /// Approximation slack, in (0, 1/4].
    #[arg(long, env = "CDPK_ALPHA")]
    pub alpha: Option<f64>,
    /// Failure probability.
    #[arg(long, env = "CDPK_BETA")]
    pub beta: Option<f64>,
    /// Decay exponent of the copy budgets.
    #[arg(long, env = "CDPK_KAPPA")]
    pub kappa: Option<f64>,
    /// kmeans or kmedian.
    #[arg(long, env = "CDPK_COST")]
    pub cost: Option<crate::common::CostKind>,
    /// Cluster in the input dimension.
    #[arg(long, env = "CDPK_NO_DIM_REDUCE")]
    pub no_dim_reduce: bool,
    #[arg(long, env = "CDPK_SEED")]
    pub seed: Option<u64>,
    /// Bound on the number of live points.
    #[arg(long, env = "CDPK_NMAX")]
    pub nmax: Option<u64>,
    /// Number of events in the stream.
    #[arg(long, env = "CDPK_T_MAX")]
    pub t_max: Option<u64>,
    /// on or off. Off is for testing only.
    #[arg(long, env = "CDPK_NOISE")]
    pub noise: Option<crate::counting::NoiseMode>,
    /// Number of boosting copies.
    #[arg(long, env = "CDPK_COPIES")]
    pub copies: Option<usize>,
    /// Input JSONL file; stdin when absent.
    #[arg(long, env = "CDPK_STREAM")]
    pub stream: Option<PathBuf>,
    /// Output CSV file; stdout when absent.
    #[arg(long, env = "CDPK_OUT")]
    pub out: Option<PathBuf>,
    /// Add the exact, non-private cost column.
    #[arg(long, env = "CDPK_DEBUG_TRUE_COST")]
    pub debug_true_cost: bool,
    /// Mark the run for release; refuses debug output.
    #[arg(long, env = "CDPK_PRIVATE_RELEASE")]
    pub private_release: bool,
    /// TOML file with any configuration keys.
    #[arg(long, env = "CDPK_CONFIG")]
    pub config: Option<PathBuf>,
    /// Point dimension for streams that carry no points.
    #[arg(long, env = "CDPK_DIM")]
    pub dim: Option<usize>,
    /// Manifest path; defaults to `<out>.manifest.json`.
    #[arg(long, env = "CDPK_MANIFEST")]
    pub manifest: Option<PathBuf>,
    /// Ledger path; defaults to `<out>.ledger.json`.
    #[arg(long, env = "CDPK_LEDGER")]
    pub ledger: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: {source}")]
    OutsideBall { line: usize, source: InputError },
    #[error("budget: {0}")]
    Budget(#[from] BudgetError),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("line {line}: {msg}")]
    Internal { line: usize, msg: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Malformed { .. } => 2,
            CliError::OutsideBall { .. } => 3,
            CliError::Budget(_) => 4,
            CliError::Io { .. } => 5,
            CliError::Internal { .. } => 1,
        }
    }

    fn io(path: &str, source: io::Error) -> Self {
        CliError::Io { path: path.to_string(), source }
    }

    fn at_line(line: usize, e: EngineError) -> Self {
        match e {
            EngineError::Input(e @ InputError::OutsideBall { .. }) => CliError::OutsideBall { line, source: e },
            EngineError::Input(e) => CliError::Malformed { line, msg: e.to_string() },
            EngineError::Budget(b) => CliError::Budget(b),
            EngineError::Config(m) => CliError::Usage(m),
            EngineError::Mechanism(LowDimError::Counting(CountingError::HorizonExceeded { .. })) => {
                CliError::Malformed { line, msg: "stream is longer than --t-max".into() }
            }
            EngineError::Mechanism(m) => CliError::Internal { line, msg: m.to_string() },
        }
    }
}

/// Resolve the effective configuration from the file, then flags and env.
pub fn resolve_config(args: &Args) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(&p.display().to_string(), e))?;
            toml::from_str::<PipelineConfig>(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        None => PipelineConfig::default(),
    };
    macro_rules! overlay {
        ($($f:ident),*) => { $( if let Some(v) = args.$f { cfg.$f = v; } )* };
    }
    overlay!(epsilon, k, lambda, alpha, beta, kappa, cost, seed, noise);
    if args.nmax.is_some() {
        cfg.nmax = args.nmax;
    }
    if args.t_max.is_some() {
        cfg.t_max = args.t_max;
    }
    if args.copies.is_some() {
        cfg.copies = args.copies;
    }
    if args.no_dim_reduce {
        cfg.dim_reduce = false;
    }
    if args.private_release {
        cfg.private_release = true;
    }
    if args.debug_true_cost && cfg.private_release {
        return Err(CliError::Usage("--debug-true-cost is refused for a private-release run".into()));
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn parse_line(line: &str, n: usize) -> Result<Option<UpdateEvent>, CliError> {
    if line.trim().is_empty() {
        return Ok(None);
    }
    let ev: UpdateEvent =
        serde_json::from_str(line).map_err(|e| CliError::Malformed { line: n, msg: e.to_string() })?;
    if ev.t == 0 {
        return Err(CliError::Malformed { line: n, msg: "timesteps start at 1".into() });
    }
    Ok(Some(ev))
}

/// CSV header for `k` centers in dimension `d`.
pub fn header(k: usize, d: usize, true_cost: bool) -> String {
    let mut h = String::from("t,k,est_cost");
    if true_cost {
        h.push_str(",true_cost");
    }
    for j in 0..k {
        for i in 0..d {
            h.push_str(&format!(",c{j}_x{i}"));
        }
    }
    h
}

/// One CSV row. Floats use the shortest round-trip representation.
pub fn format_row(row: &StepOutput, true_cost: Option<f64>) -> String {
    let mut s = format!("{},{},{}", row.t, row.centers.len(), row.est_cost.max(0.0));
    if let Some(c) = true_cost {
        s.push_str(&format!(",{c}"));
    }
    for c in &row.centers {
        for x in c {
            s.push_str(&format!(",{x}"));
        }
    }
    s
}

struct Output<'a> {
    w: Box<dyn Write + 'a>,
    name: String,
}

impl Output<'_> {
    fn line(&mut self, s: &str) -> Result<(), CliError> {
        writeln!(self.w, "{s}").map_err(|e| CliError::io(&self.name, e))
    }
}

fn sidecar(out: &Option<PathBuf>, explicit: &Option<PathBuf>, suffix: &str) -> Option<PathBuf> {
    explicit.clone().or_else(|| {
        out.as_ref().map(|o| {
            let mut s = o.as_os_str().to_owned();
            s.push(suffix);
            PathBuf::from(s)
        })
    })
}

fn write_json(path: &Path, v: &serde_json::Value) -> Result<(), CliError> {
    let name = path.display().to_string();
    let f = File::create(path).map_err(|e| CliError::io(&name, e))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, v).map_err(|e| CliError::io(&name, e.into()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::io(&name, e))
}

/// Summary of a finished run.
#[derive(Debug)]
pub struct RunSummary {
    pub rows: usize,
    pub dim: usize,
    pub config: PipelineConfig,
}

/// Run with an explicit stdin and stdout.
pub fn run_with<R: BufRead, W: Write>(args: &Args, stdin: R, stdout: W) -> Result<RunSummary, CliError> {
    let cfg = resolve_config(args)?;
    let (reader, in_name): (Box<dyn BufRead>, String) = match &args.stream {
        Some(p) => {
            let f = File::open(p).map_err(|e| CliError::io(&p.display().to_string(), e))?;
            (Box::new(BufReader::new(f)), p.display().to_string())
        }
        None => (Box::new(stdin), "<stdin>".into()),
    };
    let mut out = match &args.out {
        Some(p) => {
            let name = p.display().to_string();
            let f = File::create(p).map_err(|e| CliError::io(&name, e))?;
            Output { w: Box::new(BufWriter::new(f)), name }
        }
        None => Output { w: Box::new(stdout), name: "<stdout>".into() },
    };

    // leading noops wait until the dimension is known
    let mut pending: Vec<(usize, UpdateEvent)> = Vec::new();
    let mut engine: Option<Engine> = None;
    let mut rows = 0usize;
    let start = |d: usize, out: &mut Output| -> Result<Engine, CliError> {
        if let Some(want) = args.dim {
            if want != d {
                return Err(CliError::Malformed { line: 0, msg: format!("points have dimension {d}, --dim is {want}") });
            }
        }
        let e = Engine::new(cfg.clone(), d).map_err(|e| CliError::at_line(0, e))?;
        out.line(&header(cfg.k, d, args.debug_true_cost))?;
        Ok(e)
    };
    let emit = |e: &mut Engine, n: usize, ev: &UpdateEvent, out: &mut Output| -> Result<(), CliError> {
        let row = e.process(ev).map_err(|err| CliError::at_line(n, err))?;
        let tc = args.debug_true_cost.then(|| e.true_cost(&row.centers));
        out.line(&format_row(&row, tc))
    };

    for (i, line) in reader.lines().enumerate() {
        let n = i + 1;
        let line = line.map_err(|e| CliError::io(&in_name, e))?;
        let Some(ev) = parse_line(&line, n)? else { continue };
        rows += 1;
        match engine.as_mut() {
            Some(e) => emit(e, n, &ev, &mut out)?,
            None => match &ev.point {
                None => pending.push((n, ev)),
                Some(p) => {
                    let mut e = start(p.len(), &mut out)?;
                    for (pn, pev) in pending.drain(..) {
                        emit(&mut e, pn, &pev, &mut out)?;
                    }
                    emit(&mut e, n, &ev, &mut out)?;
                    engine = Some(e);
                }
            },
        }
    }
    if engine.is_none() {
        let mut e = start(args.dim.unwrap_or(1), &mut out)?;
        for (pn, pev) in pending.drain(..) {
            emit(&mut e, pn, &pev, &mut out)?;
        }
        engine = Some(e);
    }
    out.w.flush().map_err(|e| CliError::io(&out.name, e))?;
    let engine = engine.expect("engine started");
    let ledger = engine.ledger();
    ledger.verify()?;

    if let Some(p) = sidecar(&args.out, &args.ledger, ".ledger.json") {
        write_json(&p, &ledger.to_json())?;
    }
    if let Some(p) = sidecar(&args.out, &args.manifest, ".manifest.json") {
        let manifest = json!({
            "tool": "cdpk",
            "version": env!("CARGO_PKG_VERSION"),
            "csv_schema": CSV_SCHEMA,
            "seed": cfg.seed,
            "dim": engine.dim(),
            "clustering_dim": cfg.clustering_dim(engine.dim()),
            "rows": rows,
            "private_release": cfg.private_release,
            "debug_true_cost": args.debug_true_cost,
            "stream": in_name,
            "config": cfg,
        });
        write_json(&p, &manifest)?;
    }
    Ok(RunSummary { rows, dim: engine.dim(), config: cfg })
}

/// Run against the process's stdin and stdout; returns the exit code.
pub fn run(args: &Args) -> i32 {
    let stdin = io::stdin();
    let stdout = io::stdout();
    match run_with(args, stdin.lock(), stdout.lock()) {
        Ok(s) => {
            log::info!("wrote {} rows", s.rows);
            0
        }
        Err(e) => {
            eprintln!("cdpk: {e}");
            e.exit_code()
        }
    }
}
