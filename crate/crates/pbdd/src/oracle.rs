//! Centralized ground truth for desk-scale verification.
//!
//! Two independent paths compute the global optimum. For all-quadratic
//! instances with at most [`ENUMERATION_ROW_LIMIT`] half-space rows in
//! total, every active set of the lifted global QP is enumerated and the
//! KKT system of each is solved exactly. Everything else runs accelerated
//! projected gradient on the aggregated objective, with feasibility
//! enforced by Dykstra projection onto the lifted per-node sets. Where both
//! paths apply they must agree, so no expected value in the test suite
//! rests on a single implementation.
//!
//! The module also provides finite-difference dual gradients, the ground
//! truth the analytic gradient identity is checked against.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::blockspace::BlockVector;
use crate::duals::DualState;
use crate::engine::DualWorkspace;
use crate::problem::{PartitionedProblem, PolyConstraint, QuadraticForm};
use crate::solver::{
    apg, project_onto_intersection, ApgConfig, ConvexSet, DirectQp, DykstraConfig,
    SmoothObjective, SolveConfig,
};
use crate::{Error, Result};

/// Most half-space rows the enumeration path accepts; `2^rows` subsets are
/// factorized up front.
pub const ENUMERATION_ROW_LIMIT: usize = 12;

/// Every returned solution is feasible for each node's set within this.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Every returned solution carries a KKT residual at or below this.
pub const KKT_TOL: f64 = 1e-8;

const CACHE_FORMAT: &str = "pbdd-oracle-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Enumeration when applicable, projected gradient otherwise.
    Auto,
    Enumeration,
    ProjectedGradient,
}

#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub x_star: BlockVector,
    pub f_star: f64,
    pub kkt_residual: f64,
    /// Path that produced the solution: `"enumeration"` or
    /// `"projected-gradient"`.
    pub method: String,
    pub tol: f64,
}

/// Solves the full problem over the global space. `tol` bounds the KKT
/// residual of the projected-gradient path; the enumeration path is exact
/// regardless.
pub fn solve_centralized(problem: &PartitionedProblem, tol: f64) -> Result<OracleSolution> {
    solve_with(problem, Method::Auto, tol)
}

pub fn solve_with(
    problem: &PartitionedProblem,
    method: Method,
    tol: f64,
) -> Result<OracleSolution> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidParameter(format!("oracle tolerance must be positive, got {tol}")));
    }
    let candidate = match method {
        Method::Enumeration => Some(enumeration_path(problem)?.ok_or_else(|| {
            Error::InvalidParameter(
                "a box bound is active at the optimum, which the enumeration path cannot \
                 certify; use the projected-gradient path"
                    .into(),
            )
        })?),
        Method::Auto if enumeration_applies(problem) => enumeration_path(problem)?,
        Method::Auto | Method::ProjectedGradient => None,
    };
    let (x_star, f_star, kkt_residual, method) = match candidate {
        Some((x, f, r)) => (x, f, r, "enumeration"),
        None => {
            let (x, f, r) = projected_gradient_path(problem, tol)?;
            (x, f, r, "projected-gradient")
        }
    };
    let solution = OracleSolution {
        x_star: BlockVector { values: x_star },
        f_star,
        kkt_residual,
        method: method.to_string(),
        tol,
    };
    check_invariants(problem, &solution)?;
    Ok(solution)
}

fn check_invariants(problem: &PartitionedProblem, sol: &OracleSolution) -> Result<()> {
    let mut violation = f64::NEG_INFINITY;
    for i in 0..problem.n() {
        let local = problem.gather(&sol.x_star, i);
        violation = violation.max(problem.constraint(i).violation(&local.values));
    }
    if violation > FEASIBILITY_TOL {
        return Err(Error::OracleFailure { residual: violation, tol: FEASIBILITY_TOL });
    }
    if sol.kkt_residual > KKT_TOL {
        return Err(Error::OracleFailure { residual: sol.kkt_residual, tol: KKT_TOL });
    }
    Ok(())
}

fn total_rows(problem: &PartitionedProblem) -> usize {
    (0..problem.n()).map(|i| problem.constraint(i).rows()).sum()
}

/// Whether the exact enumeration path can run at all.
pub fn enumeration_applies(problem: &PartitionedProblem) -> bool {
    total_rows(problem) <= ENUMERATION_ROW_LIMIT
        && (0..problem.n()).all(|i| problem.objective(i).quadratic_form().is_some())
}

/// Lifts every node's half-space rows and box bounds to the global space.
/// Boxes of overlapping neighborhoods intersect componentwise.
fn lift_constraints(problem: &PartitionedProblem) -> (DMatrix<f64>, DVector<f64>, DVector<f64>, DVector<f64>) {
    let layout = problem.layout();
    let nbhd = problem.neighborhoods();
    let total = layout.total();
    let rows_total = total_rows(problem);
    let mut a = DMatrix::zeros(rows_total, total);
    let mut b = DVector::zeros(rows_total);
    let mut lo = DVector::from_element(total, f64::NEG_INFINITY);
    let mut hi = DVector::from_element(total, f64::INFINITY);
    let mut row = 0;
    for i in 0..problem.n() {
        let cons = problem.constraint(i);
        for &m in nbhd.members(i) {
            let slot = nbhd.slot(i, m);
            for (kl, kg) in slot.zip(layout.block_range(m)) {
                lo[kg] = lo[kg].max(cons.lo[kl]);
                hi[kg] = hi[kg].min(cons.hi[kl]);
            }
        }
        for rk in 0..cons.rows() {
            for &m in nbhd.members(i) {
                let slot = nbhd.slot(i, m);
                for (kl, kg) in slot.zip(layout.block_range(m)) {
                    a[(row, kg)] = cons.a[(rk, kl)];
                }
            }
            b[row] = cons.b[rk];
            row += 1;
        }
    }
    (a, b, lo, hi)
}

fn enumeration_path(problem: &PartitionedProblem) -> Result<Option<(DVector<f64>, f64, f64)>> {
    let form = problem.global_quadratic_form().ok_or_else(|| {
        Error::InvalidParameter(
            "the enumeration path needs every objective to be exactly quadratic".into(),
        )
    })?;
    if total_rows(problem) > ENUMERATION_ROW_LIMIT {
        return Err(Error::InvalidParameter(format!(
            "{} half-space rows exceed the enumeration limit of {ENUMERATION_ROW_LIMIT}",
            total_rows(problem)
        )));
    }
    let (a, b, lo, hi) = lift_constraints(problem);
    let constraint = PolyConstraint::new(a, b, lo, hi)?;
    let qp = DirectQp::new(&form, &constraint, ENUMERATION_ROW_LIMIT)?
        .expect("row count was checked against the enumeration limit");
    let zero = DVector::zeros(problem.layout().total());
    Ok(qp.solve(&zero).map(|s| (s.y, s.value, s.residual)))
}

/// The aggregated objective `F(x) = sum_i f_i(gather(x, i))` over the
/// global space, with curvature bounds computed once.
struct Aggregate<'a> {
    problem: &'a PartitionedProblem,
    form: Option<QuadraticForm>,
    sigma: f64,
    smoothness: f64,
    domain_lo: DVector<f64>,
    domain_hi: DVector<f64>,
}

impl<'a> Aggregate<'a> {
    fn new(problem: &'a PartitionedProblem) -> Self {
        let (_, _, domain_lo, domain_hi) = lift_constraints(problem);
        let form = problem.global_quadratic_form();
        let (sigma, smoothness) = match &form {
            Some(f) => {
                let eigs = f.hessian.clone().symmetric_eigenvalues();
                (eigs.min(), eigs.max())
            }
            None => {
                // Lifting maps are coordinate selections, so the aggregate
                // inherits at least the weakest node modulus, and the sum of
                // node constants bounds its smoothness.
                let sigma = (0..problem.n())
                    .map(|i| problem.objective(i).sigma())
                    .fold(f64::INFINITY, f64::min);
                let smoothness = (0..problem.n()).map(|i| problem.objective(i).smoothness()).sum();
                (sigma, smoothness)
            }
        };
        Aggregate { problem, form, sigma, smoothness, domain_lo, domain_hi }
    }
}

impl SmoothObjective for Aggregate<'_> {
    fn dim(&self) -> usize {
        self.problem.layout().total()
    }

    fn value(&self, y: &DVector<f64>) -> f64 {
        match &self.form {
            Some(f) => 0.5 * (&f.hessian * y).dot(y) + f.linear.dot(y) + f.constant,
            None => self.problem.global_value(&BlockVector { values: y.clone() }),
        }
    }

    fn gradient(&self, y: &DVector<f64>) -> DVector<f64> {
        match &self.form {
            Some(f) => &f.hessian * y + &f.linear,
            None => self.problem.global_gradient(&BlockVector { values: y.clone() }),
        }
    }

    fn sigma(&self) -> f64 {
        self.sigma
    }

    fn smoothness(&self) -> f64 {
        self.smoothness
    }

    fn clamp_domain(&self, y: &mut DVector<f64>) {
        for k in 0..y.len() {
            y[k] = y[k].clamp(self.domain_lo[k], self.domain_hi[k]);
        }
    }
}

/// Every node's feasible set lifted to the global space, for Dykstra. The
/// per-node boxes are axis-aligned, so their intersection collapses into a
/// single global box; halfspaces that lift to the same global row (shared
/// coupling constraints seen from several nodes) are kept once.
fn lifted_sets(problem: &PartitionedProblem) -> Vec<ConvexSet> {
    let layout = problem.layout();
    let nbhd = problem.neighborhoods();
    let total = layout.total();
    let mut lo = DVector::from_element(total, f64::NEG_INFINITY);
    let mut hi = DVector::from_element(total, f64::INFINITY);
    let mut halfspaces: Vec<(DVector<f64>, f64)> = Vec::new();
    for i in 0..problem.n() {
        let cons = problem.constraint(i);
        let idx: Vec<usize> =
            nbhd.members(i).iter().flat_map(|&m| layout.block_range(m)).collect();
        for (kl, &kg) in idx.iter().enumerate() {
            lo[kg] = lo[kg].max(cons.lo[kl]);
            hi[kg] = hi[kg].min(cons.hi[kl]);
        }
        for rk in 0..cons.rows() {
            let mut a = DVector::zeros(total);
            for (kl, &kg) in idx.iter().enumerate() {
                a[kg] = cons.a[(rk, kl)];
            }
            let b = cons.b[rk];
            if !halfspaces.iter().any(|(a2, b2)| *b2 == b && a2 == &a) {
                halfspaces.push((a, b));
            }
        }
    }
    let mut sets = vec![ConvexSet::Box { idx: (0..total).collect(), lo, hi }];
    sets.extend(halfspaces.into_iter().map(|(a, b)| ConvexSet::HalfSpace { a, b }));
    sets
}

fn projected_gradient_path(
    problem: &PartitionedProblem,
    tol: f64,
) -> Result<(DVector<f64>, f64, f64)> {
    let aggregate = Aggregate::new(problem);
    let sets = lifted_sets(problem);
    let proj_cfg = DykstraConfig { tol: (tol * 1e-2).max(1e-14), max_cycles: 1_000_000 };
    let project = |x: &DVector<f64>| project_onto_intersection(&sets, x, &proj_cfg);
    let start = problem.witness().values.clone();
    let cfg = ApgConfig { tol: tol.min(KKT_TOL), max_iter: 500_000 };
    let solve = apg::minimize(&aggregate, project, &start, &cfg)?;
    if !solve.converged {
        return Err(Error::OracleFailure { residual: solve.residual, tol: cfg.tol });
    }
    Ok((solve.y, solve.value, solve.residual))
}

/// Central finite differences of the dual function in every stacked dual
/// coordinate.
pub fn fd_dual_gradient(
    problem: &PartitionedProblem,
    duals: &DualState,
    h: f64,
) -> Result<DVector<f64>> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidParameter(format!("finite-difference step must be positive, got {h}")));
    }
    let ws = DualWorkspace::new(problem, SolveConfig::default())?;
    let nbhd = problem.neighborhoods();
    let base = duals.to_stacked();
    let mut grad = DVector::zeros(base.len());
    let mut probe = base.clone();
    for k in 0..base.len() {
        probe[k] = base[k] + h;
        let up = ws.cost(&DualState::from_stacked(nbhd, &probe)?)?;
        probe[k] = base[k] - h;
        let down = ws.cost(&DualState::from_stacked(nbhd, &probe)?)?;
        probe[k] = base[k];
        grad[k] = (up - down) / (2.0 * h);
    }
    Ok(grad)
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    format: String,
    scenario: String,
    seed: u64,
    method: String,
    tol: f64,
    f_star: f64,
    kkt_residual: f64,
    x_star: Vec<f64>,
}

/// Writes a solution as JSON, conventionally next to the instance file.
pub fn write_cache(path: &Path, problem: &PartitionedProblem, sol: &OracleSolution) -> Result<()> {
    let file = CacheFile {
        format: CACHE_FORMAT.to_string(),
        scenario: problem.scenario().to_string(),
        seed: problem.seed(),
        method: sol.method.clone(),
        tol: sol.tol,
        f_star: sol.f_star,
        kkt_residual: sol.kkt_residual,
        x_star: sol.x_star.values.iter().copied().collect(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

/// Reads a cached solution back, checking it belongs to this instance.
/// Returns `Ok(None)` when no cache file exists.
pub fn read_cache(path: &Path, problem: &PartitionedProblem) -> Result<Option<OracleSolution>> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let file: CacheFile = serde_json::from_str(&text)?;
    if file.format != CACHE_FORMAT {
        return Err(Error::InvalidData(format!("unknown oracle cache format {:?}", file.format)));
    }
    if file.scenario != problem.scenario() || file.seed != problem.seed() {
        return Err(Error::InvalidData(format!(
            "oracle cache is for scenario {:?} seed {}, not scenario {:?} seed {}",
            file.scenario,
            file.seed,
            problem.scenario(),
            problem.seed()
        )));
    }
    if file.x_star.len() != problem.layout().total() {
        return Err(Error::InvalidData(format!(
            "oracle cache solution has {} coordinates, instance has {}",
            file.x_star.len(),
            problem.layout().total()
        )));
    }
    Ok(Some(OracleSolution {
        x_star: BlockVector::from_vec(problem.layout(), file.x_star)?,
        f_star: file.f_star,
        kkt_residual: file.kkt_residual,
        method: file.method,
        tol: file.tol,
    }))
}

/// Returns the cached solution when one exists at the requested accuracy or
/// better; solves and writes the cache otherwise.
pub fn load_or_solve(
    problem: &PartitionedProblem,
    cache: &Path,
    tol: f64,
) -> Result<OracleSolution> {
    if let Some(sol) = read_cache(cache, problem)? {
        if sol.tol <= tol {
            return Ok(sol);
        }
    }
    let sol = solve_centralized(problem, tol)?;
    write_cache(cache, problem, &sol)?;
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockspace::{BlockLayout, BlockVector};
    use crate::engine::fixtures::{coupled_qp, decoupled_consensus, quadratic_path3, random_duals};
    use crate::engine::{dual_cost, dual_gradient};
    use crate::graph::Graph;
    use crate::problem::Objective;
    use approx::assert_relative_eq;

    #[test]
    fn decoupled_optimum_is_the_shared_target_on_both_paths() {
        let p = decoupled_consensus(5, 0.6, 2);
        let enumerated = solve_with(&p, Method::Enumeration, 1e-9).unwrap();
        let projected = solve_with(&p, Method::ProjectedGradient, 1e-9).unwrap();
        // Each objective is ||y - gather(target)||^2, so the global optimum
        // is the target itself with value zero.
        assert_relative_eq!(enumerated.f_star, 0.0, epsilon = 1e-9);
        assert_relative_eq!(projected.f_star, 0.0, epsilon = 1e-9);
        assert!((&enumerated.x_star.values - &projected.x_star.values).amax() <= 1e-6);
    }

    #[test]
    fn both_paths_agree_on_a_coupled_instance() {
        let p = coupled_qp(4, 0.8, 3);
        let enumerated = solve_with(&p, Method::Enumeration, 1e-9).unwrap();
        let projected = solve_with(&p, Method::ProjectedGradient, 1e-9).unwrap();
        let scale = 1.0_f64.max(enumerated.f_star.abs()).max(projected.f_star.abs());
        assert!(
            (enumerated.f_star - projected.f_star).abs() <= 1e-7 * scale,
            "paths disagree: {} vs {}",
            enumerated.f_star,
            projected.f_star
        );
        assert_eq!(enumerated.method, "enumeration");
        assert_eq!(projected.method, "projected-gradient");
    }

    #[test]
    fn auto_falls_back_when_a_box_bound_binds() {
        let graph = Graph::from_edges(1, &[]).unwrap();
        let layout = BlockLayout::uniform(1, 2).unwrap();
        let objective = Objective::quadratic(
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![-10.0, -10.0]),
            0.0,
        )
        .unwrap();
        let constraint = PolyConstraint::box_only(
            DVector::from_element(2, -1.0),
            DVector::from_element(2, 1.0),
        )
        .unwrap();
        let witness = BlockVector::zeros(&layout);
        let p = PartitionedProblem::new(
            graph,
            layout,
            vec![objective],
            vec![constraint],
            witness,
            "test",
            0,
        )
        .unwrap();
        // Unconstrained minimum (5, 5) sits far outside the box, so the
        // optimum is the corner (1, 1) with value 2 - 20 = -18.
        let solution = solve_centralized(&p, 1e-9).unwrap();
        assert_eq!(solution.method, "projected-gradient");
        assert_relative_eq!(solution.f_star, -18.0, epsilon = 1e-6);
        assert!(matches!(
            solve_with(&p, Method::Enumeration, 1e-9),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn weak_duality_holds_at_sampled_duals() {
        let p = coupled_qp(5, 0.6, 9);
        let f_star = solve_centralized(&p, 1e-9).unwrap().f_star;
        for seed in 0..5 {
            let duals = random_duals(&p, seed, 1.0);
            let q = dual_cost(&p, &duals, &SolveConfig::default()).unwrap();
            assert!(q <= f_star + 1e-8, "q = {q} exceeds f* = {f_star}");
        }
    }

    #[test]
    fn finite_differences_match_the_analytic_gradient() {
        let p = quadratic_path3();
        let duals = random_duals(&p, 5, 1.5);
        let analytic = dual_gradient(&p, &duals, &SolveConfig::default()).unwrap().to_stacked();
        let fd = fd_dual_gradient(&p, &duals, 1e-5).unwrap();
        let rel = (&fd - &analytic).norm() / (1.0 + analytic.norm());
        assert!(rel <= 1e-6, "relative gradient error {rel}");
    }

    #[test]
    fn finite_differences_are_step_independent_on_interior_quadratics() {
        // With every constraint inactive the dual function is quadratic in
        // the duals, so central differences are exact for any step.
        let p = quadratic_path3();
        let duals = random_duals(&p, 8, 0.5);
        let coarse = fd_dual_gradient(&p, &duals, 1e-3).unwrap();
        let fine = fd_dual_gradient(&p, &duals, 1e-5).unwrap();
        let rel = (&coarse - &fine).norm() / (1.0 + fine.norm());
        assert!(rel <= 1e-7, "step dependence {rel}");
    }

    #[test]
    fn cache_round_trips_and_rejects_foreign_instances() {
        let p = coupled_qp(4, 0.8, 12);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("instance.oracle.json");
        assert!(read_cache(&path, &p).unwrap().is_none());

        let solved = load_or_solve(&p, &path, 1e-9).unwrap();
        let cached = load_or_solve(&p, &path, 1e-9).unwrap();
        assert_eq!(solved.f_star.to_bits(), cached.f_star.to_bits());
        assert_eq!(
            solved.x_star.values.as_slice(),
            cached.x_star.values.as_slice()
        );

        let other = coupled_qp(4, 0.8, 13);
        assert!(matches!(read_cache(&path, &other), Err(Error::InvalidData(_))));
    }

    #[test]
    fn dual_cost_meets_f_star_near_the_dual_optimum() {
        // Run plenty of sync rounds, then check q has climbed to f*.
        let p = coupled_qp(4, 0.8, 15);
        let f_star = solve_centralized(&p, 1e-9).unwrap().f_star;
        let mut engine =
            crate::engine::SyncEngine::new(&p, crate::engine::SyncConfig::default()).unwrap();
        let trace = engine.run(4000).unwrap();
        let q_end = trace.last().unwrap().dual_cost;
        assert!(
            (q_end - f_star).abs() <= 1e-4 * (1.0 + f_star.abs()),
            "q = {q_end} never reached f* = {f_star}"
        );
    }
}
