//! The `verify` subcommand: replay invariant checks over a finished trace,
//! using only the instance file, the trace file, and the centralized
//! solution. Prints a machine-readable report and exits 4 on any violation.

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use pbdd::oracle;
use pbdd::trace::{read_trace_file, TraceRecord, TraceSchema};
use pbdd::{Error, PartitionedProblem};

#[derive(Args)]
pub struct VerifyArgs {
    /// Instance JSON path.
    #[arg(long)]
    pub inst: PathBuf,
    /// Trace CSV path.
    #[arg(long)]
    pub trace: PathBuf,
    /// Accuracy of the centralized solve the checks compare against.
    #[arg(long, default_value_t = 1e-8)]
    pub oracle_tol: f64,
    /// Also write the report JSON here.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

/// One invariant check. `margin` is the distance to the pass/fail boundary:
/// positive means the check held with that much room, negative by how much
/// it was violated.
#[derive(Debug, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub margin: f64,
    pub detail: String,
}

#[derive(Serialize)]
pub struct Report {
    pub format: &'static str,
    pub version: &'static str,
    pub instance: String,
    pub trace: String,
    pub schema: &'static str,
    pub rows: usize,
    pub f_star: f64,
    pub oracle_tol: f64,
    pub pass: bool,
    pub checks: Vec<Check>,
}

fn check(name: &'static str, margin: f64, detail: String) -> Check {
    Check { name, pass: margin >= 0.0, margin, detail }
}

/// Dual values may sit above the stored optimum by the oracle's own error,
/// so every comparison against `f_star` carries this slack.
fn oracle_slack(f_star: f64, oracle_tol: f64) -> f64 {
    (oracle_tol + 1e-9) * (1.0 + f_star.abs())
}

fn weak_duality(rows: &[TraceRecord], f_star: f64, oracle_tol: f64) -> Check {
    let (t_max, q_max) = rows
        .iter()
        .map(|r| (r.t, r.dual_cost))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let margin = f_star + oracle_slack(f_star, oracle_tol) - q_max;
    check(
        "weak_duality",
        margin,
        format!("largest dual cost {q_max:.9e} at t = {t_max}, optimal value {f_star:.9e}"),
    )
}

fn monotone_dual_cost(rows: &[TraceRecord], f_star: f64) -> Check {
    let slack = 1e-9 * (1.0 + f_star.abs());
    let mut worst = f64::NEG_INFINITY;
    let mut worst_t = 0;
    for pair in rows.windows(2) {
        let drop = pair[0].dual_cost - pair[1].dual_cost;
        if drop > worst {
            worst = drop;
            worst_t = pair[1].t;
        }
    }
    if rows.len() < 2 {
        return check("monotone_dual_cost", slack, "single row, nothing to compare".into());
    }
    check(
        "monotone_dual_cost",
        slack - worst,
        if worst > slack {
            format!("dual cost dropped by {worst:.3e} into t = {worst_t}")
        } else {
            format!("worst round-to-round drop {worst:.3e}")
        },
    )
}

fn disagreement_decay(rows: &[TraceRecord]) -> Check {
    let first = rows.first().unwrap().disagreement;
    let last = rows.last().unwrap().disagreement;
    check(
        "disagreement_decay",
        first + 1e-12 - last,
        format!("disagreement {first:.3e} at the start, {last:.3e} at the end"),
    )
}

fn primal_error_decay(rows: &[TraceRecord]) -> Option<Check> {
    let present: Vec<(u64, f64)> =
        rows.iter().filter_map(|r| r.primal_err.map(|p| (r.t, p))).collect();
    if present.is_empty() {
        return None;
    }
    if rows.last().unwrap().primal_err.is_none() {
        return Some(check(
            "primal_error_decay",
            -1.0,
            "primal error column stops before the final row".into(),
        ));
    }
    let first = present.first().unwrap().1;
    let last = present.last().unwrap().1;
    Some(check(
        "primal_error_decay",
        first + 1e-12 - last,
        format!("primal error {first:.3e} at the start, {last:.3e} at the end"),
    ))
}

pub fn verify(args: &VerifyArgs) -> Result<i32, Error> {
    let text = std::fs::read_to_string(&args.inst)?;
    let problem = PartitionedProblem::from_json(&text)?;
    let (schema, rows) = read_trace_file(&args.trace)?;
    if rows.is_empty() {
        return Err(Error::InvalidData(format!(
            "trace {} has a header but no rows",
            args.trace.display()
        )));
    }

    let cache = args.inst.with_extension("oracle.json");
    let sol = oracle::load_or_solve(&problem, &cache, args.oracle_tol)?;

    let mut checks = vec![weak_duality(&rows, sol.f_star, args.oracle_tol)];
    if schema == TraceSchema::Sync {
        checks.push(monotone_dual_cost(&rows, sol.f_star));
    }
    checks.push(disagreement_decay(&rows));
    checks.extend(primal_error_decay(&rows));

    let report = Report {
        format: "pbdd.verify.v1",
        version: env!("CARGO_PKG_VERSION"),
        instance: args.inst.display().to_string(),
        trace: args.trace.display().to_string(),
        schema: match schema {
            TraceSchema::Sync => "sync",
            TraceSchema::Async => "async",
        },
        rows: rows.len(),
        f_star: sol.f_star,
        oracle_tol: args.oracle_tol,
        pass: checks.iter().all(|c| c.pass),
        checks,
    };

    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    print!("{text}");
    if let Some(out) = &args.output {
        std::fs::write(out, &text)?;
    }
    Ok(if report.pass { 0 } else { 4 })
}
