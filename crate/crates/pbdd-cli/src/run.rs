//! The `run` subcommand: execute an engine over a stored instance and write
//! the trace CSV plus a manifest that pins everything needed to reproduce it.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Serialize;

use pbdd::engine::asynchronous::{AsyncConfig, AsyncEngine};
use pbdd::engine::coordinate::run_matched_pair;
use pbdd::engine::sync::{SyncConfig, SyncEngine};
use pbdd::oracle::{self, OracleSolution};
use pbdd::solver::SolveConfig;
use pbdd::stepsize::StepSizeRule;
use pbdd::trace::{write_trace_file, TraceRecord, TraceSchema};
use pbdd::{Error, PartitionedProblem};

use crate::files::{resolve_out, sha256_hex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EngineKind {
    /// Lock-step rounds over all nodes.
    Sync,
    /// Event-driven updates on per-node exponential timers.
    Async,
    /// The event engine and its single-block coordinate reference run in
    /// lock step; the output records how far the two trajectories drift.
    CoordRef,
}

impl EngineKind {
    fn name(self) -> &'static str {
        match self {
            EngineKind::Sync => "sync",
            EngineKind::Async => "async",
            EngineKind::CoordRef => "coord-ref",
        }
    }
}

#[derive(Args)]
pub struct RunArgs {
    /// Update scheme.
    #[arg(long, value_enum)]
    pub engine: EngineKind,
    /// Instance JSON path.
    #[arg(long)]
    pub inst: PathBuf,
    /// Rounds to run (sync).
    #[arg(long)]
    pub rounds: Option<u64>,
    /// Timer fires to simulate (async, coord-ref).
    #[arg(long)]
    pub events: Option<u64>,
    /// Multiplier on the convergence-bound step sizes.
    #[arg(long, default_value_t = 1.0)]
    pub step_factor: f64,
    /// Seed for the event timers (async, coord-ref).
    #[arg(long, default_value_t = 0)]
    pub timer_seed: u64,
    /// Rate of each node's exponential timer.
    #[arg(long, default_value_t = 1.0)]
    pub timer_rate: f64,
    /// Residual target for the local solves.
    #[arg(long, default_value_t = 1e-10)]
    pub solve_tol: f64,
    /// Solve the instance centrally first; fills the trace's primal error
    /// column and caches the solution next to the instance.
    #[arg(long)]
    pub oracle: bool,
    /// Accuracy of the centralized solve.
    #[arg(long, default_value_t = 1e-8)]
    pub oracle_tol: f64,
    /// Trace CSV path; the manifest lands next to it. Relative paths go to
    /// $PBDD_OUT_DIR when it is set.
    #[arg(short, long)]
    pub output: PathBuf,
}

/// Everything the run depends on, exactly as resolved from the command line.
/// Serialized unchanged into the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub engine: String,
    pub instance: String,
    pub rounds: Option<u64>,
    pub events: Option<u64>,
    pub step_factor: f64,
    pub timer_seed: u64,
    pub timer_rate: f64,
    pub solve_tol: f64,
    pub oracle: bool,
    pub oracle_tol: f64,
    pub trace: String,
    pub manifest: String,
}

impl RunConfig {
    fn from_args(args: &RunArgs) -> Self {
        let trace = resolve_out(&args.output);
        let manifest = trace.with_extension("manifest.json");
        RunConfig {
            engine: args.engine.name().to_string(),
            instance: args.inst.display().to_string(),
            rounds: args.rounds,
            events: args.events,
            step_factor: args.step_factor,
            timer_seed: args.timer_seed,
            timer_rate: args.timer_rate,
            solve_tol: args.solve_tol,
            oracle: args.oracle,
            oracle_tol: args.oracle_tol,
            trace: trace.display().to_string(),
            manifest: manifest.display().to_string(),
        }
    }

    fn validate(&self, engine: EngineKind) -> Result<(), Error> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match engine {
            EngineKind::Sync => {
                if self.events.is_some() {
                    return bad("--events applies to the event-driven engines; use --rounds with sync".into());
                }
                match self.rounds {
                    None => return bad("the sync engine needs --rounds".into()),
                    Some(0) => return bad("--rounds must be at least 1".into()),
                    Some(_) => {}
                }
            }
            EngineKind::Async | EngineKind::CoordRef => {
                if self.rounds.is_some() {
                    return bad(format!(
                        "--rounds applies to the sync engine; use --events with {}",
                        engine.name()
                    ));
                }
                match self.events {
                    None => return bad(format!("the {} engine needs --events", engine.name())),
                    Some(0) => return bad("--events must be at least 1".into()),
                    Some(_) => {}
                }
            }
        }
        if !(self.step_factor.is_finite() && self.step_factor > 0.0) {
            return bad(format!("--step-factor must be positive, got {}", self.step_factor));
        }
        if !(self.timer_rate.is_finite() && self.timer_rate > 0.0) {
            return bad(format!("--timer-rate must be positive, got {}", self.timer_rate));
        }
        if !(self.solve_tol.is_finite() && self.solve_tol > 0.0) {
            return bad(format!("--solve-tol must be positive, got {}", self.solve_tol));
        }
        if !(self.oracle_tol.is_finite() && self.oracle_tol > 0.0) {
            return bad(format!("--oracle-tol must be positive, got {}", self.oracle_tol));
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct InstanceInfo {
    path: String,
    sha256: String,
    scenario: String,
    seed: u64,
    n: usize,
    dimension: usize,
}

#[derive(Serialize)]
struct OracleInfo {
    f_star: f64,
    kkt_residual: f64,
    tol: f64,
    cache: String,
}

#[derive(Serialize)]
struct CoordRefInfo {
    iterations: usize,
    max_deviation: f64,
}

#[derive(Serialize)]
struct Manifest {
    format: &'static str,
    version: &'static str,
    config: RunConfig,
    instance: InstanceInfo,
    /// Per-node step sizes the run actually used.
    step_sizes: Vec<f64>,
    oracle: Option<OracleInfo>,
    coord_ref: Option<CoordRefInfo>,
}

fn write_manifest(path: &Path, manifest: &Manifest) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

struct Outcome {
    rows: Vec<TraceRecord>,
    error: Option<Error>,
}

fn collect(k: u64, mut step: impl FnMut() -> Result<TraceRecord, Error>) -> Outcome {
    let mut rows = Vec::new();
    for _ in 0..k {
        match step() {
            Ok(r) => rows.push(r),
            Err(e) => return Outcome { rows, error: Some(e) },
        }
    }
    Outcome { rows, error: None }
}

pub fn run(args: &RunArgs) -> Result<(), Error> {
    let cfg = RunConfig::from_args(args);
    cfg.validate(args.engine)?;

    let text = std::fs::read_to_string(&args.inst)?;
    let problem = PartitionedProblem::from_json(&text)?;

    let cache = args.inst.with_extension("oracle.json");
    let oracle_sol = if args.oracle {
        Some(oracle::load_or_solve(&problem, &cache, args.oracle_tol)?)
    } else {
        None
    };
    let x_star = oracle_sol.as_ref().map(|s| s.x_star.values.clone());

    let solve = SolveConfig { tol: args.solve_tol, ..SolveConfig::default() };
    let rule = StepSizeRule::Factor(args.step_factor);
    let trace_path = PathBuf::from(&cfg.trace);
    let manifest_path = PathBuf::from(&cfg.manifest);

    let mut coord_ref = None;
    let step_sizes;
    let mut failure = None;

    match args.engine {
        EngineKind::Sync => {
            step_sizes = rule.resolve_sync(&problem)?;
            let ecfg = SyncConfig { step_rule: rule.clone(), solve, x_star };
            let mut engine = SyncEngine::new(&problem, ecfg)?;
            let outcome = collect(args.rounds.unwrap(), || engine.step());
            write_trace_file(&trace_path, TraceSchema::Sync, &outcome.rows)?;
            report_trace(&outcome, &trace_path);
            failure = outcome.error;
        }
        EngineKind::Async => {
            step_sizes = rule.resolve_async(&problem)?;
            let ecfg = AsyncConfig {
                step_rule: rule.clone(),
                solve,
                seed: args.timer_seed,
                rate: args.timer_rate,
                x_star,
            };
            let mut engine = AsyncEngine::new(&problem, ecfg)?;
            let outcome = collect(args.events.unwrap(), || engine.step());
            write_trace_file(&trace_path, TraceSchema::Async, &outcome.rows)?;
            report_trace(&outcome, &trace_path);
            failure = outcome.error;
        }
        EngineKind::CoordRef => {
            step_sizes = rule.resolve_async(&problem)?;
            let ecfg = AsyncConfig {
                step_rule: rule.clone(),
                solve,
                seed: args.timer_seed,
                rate: args.timer_rate,
                x_star,
            };
            let deviations = run_matched_pair(&problem, args.events.unwrap(), ecfg)?;
            let max_deviation = deviations.iter().copied().fold(0.0, f64::max);
            write_deviations(&trace_path, &deviations)?;
            println!("max per-iteration deviation: {max_deviation:.3e}");
            coord_ref = Some(CoordRefInfo { iterations: deviations.len(), max_deviation });
        }
    }

    let manifest = Manifest {
        format: "pbdd.run.v1",
        version: env!("CARGO_PKG_VERSION"),
        instance: InstanceInfo {
            path: cfg.instance.clone(),
            sha256: sha256_hex(text.as_bytes()),
            scenario: problem.scenario().to_string(),
            seed: problem.seed(),
            n: problem.n(),
            dimension: problem.layout().total(),
        },
        step_sizes,
        oracle: oracle_sol.as_ref().map(|s: &OracleSolution| OracleInfo {
            f_star: s.f_star,
            kkt_residual: s.kkt_residual,
            tol: s.tol,
            cache: cache.display().to_string(),
        }),
        coord_ref,
        config: cfg,
    };
    write_manifest(&manifest_path, &manifest)?;

    match failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn write_deviations(path: &Path, deviations: &[f64]) -> Result<(), Error> {
    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(out, "iteration,deviation")?;
    for (i, d) in deviations.iter().enumerate() {
        writeln!(out, "{i},{d}")?;
    }
    out.flush()?;
    Ok(())
}

fn report_trace(outcome: &Outcome, path: &Path) {
    match (&outcome.error, outcome.rows.last()) {
        (Some(e), _) => eprintln!(
            "run stopped after {} rows ({e}); partial trace written to {}",
            outcome.rows.len(),
            path.display()
        ),
        (None, Some(last)) => eprintln!(
            "wrote {} rows to {} (final dual cost {:.6e}, disagreement {:.3e})",
            outcome.rows.len(),
            path.display(),
            last.dual_cost,
            last.disagreement
        ),
        (None, None) => {}
    }
}
