//! Local subproblem solver.
//!
//! Each dual iteration asks node `i` for
//!
//! ```text
//!     argmin { f_i(y) + c' y  :  y in X_i }
//! ```
//!
//! with a fresh linear offset `c` every time. Two paths serve that query:
//!
//! * a direct path for exactly quadratic objectives with few constraint
//!   rows (active-set enumeration over cached factorizations; exact up to
//!   linear-algebra roundoff),
//! * an iterative path (accelerated projected gradient, projections by
//!   Dykstra's method) for everything else, and as fallback when the box
//!   turns out active at the optimum.
//!
//! Either way the result is deterministic: same inputs, same bits. The
//! engines rely on that to match their reference implementations.

pub mod active_set;
pub mod apg;
pub mod dykstra;

pub use active_set::{DirectQp, DirectSolve};
pub use apg::{ApgConfig, ApgSolve, SmoothObjective};
pub use dykstra::{project_onto_intersection, ConvexSet, DykstraConfig};

use nalgebra::DVector;

use crate::problem::{Objective, PolyConstraint};
use crate::Result;

#[derive(Debug, Clone, Copy)]
pub struct SolveConfig {
    /// Fixed-point residual target for the iterative path; the direct path
    /// lands far below it.
    pub tol: f64,
    pub max_iter: u64,
    /// Row budget above which active-set enumeration is not attempted.
    pub max_enum_rows: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig { tol: 1e-10, max_iter: 100_000, max_enum_rows: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    /// The iterative path ran out of iterations; the caller decides whether
    /// the reached residual is acceptable.
    MaxIterExceeded,
}

/// A solved local subproblem.
#[derive(Debug, Clone)]
pub struct LocalSolve {
    pub y: DVector<f64>,
    /// `f(y) + c'y` at the minimizer: node's contribution to the dual value.
    pub value: f64,
    pub residual: f64,
    pub iterations: u64,
    pub status: SolveStatus,
    pub used_direct: bool,
}

/// Projects onto `{A y <= b} ∩ [lo, hi]`. Box-only sets are clamped in
/// closed form; anything with rows goes through Dykstra's method.
pub fn project_polyhedron(
    constraint: &PolyConstraint,
    x: &DVector<f64>,
    tol: f64,
) -> Result<DVector<f64>> {
    if constraint.rows() == 0 {
        let mut y = x.clone();
        constraint.clamp_to_box(&mut y);
        return Ok(y);
    }
    let sets = constraint_sets(constraint);
    project_onto_intersection(&sets, x, &DykstraConfig { tol, max_cycles: 1_000_000 })
}

fn constraint_sets(constraint: &PolyConstraint) -> Vec<ConvexSet> {
    let d = constraint.dim();
    let mut sets = Vec::with_capacity(1 + constraint.rows());
    sets.push(ConvexSet::Box {
        idx: (0..d).collect(),
        lo: constraint.lo.clone(),
        hi: constraint.hi.clone(),
    });
    for r in 0..constraint.rows() {
        sets.push(ConvexSet::HalfSpace {
            a: constraint.a.row(r).transpose(),
            b: constraint.b[r],
        });
    }
    sets
}

/// Composite `f(y) + c'y` adapter for the iterative path.
struct Composite<'a> {
    objective: &'a Objective,
    constraint: &'a PolyConstraint,
    c: &'a DVector<f64>,
}

impl SmoothObjective for Composite<'_> {
    fn dim(&self) -> usize {
        self.objective.dim()
    }
    fn value(&self, y: &DVector<f64>) -> f64 {
        self.objective.value(y) + self.c.dot(y)
    }
    fn gradient(&self, y: &DVector<f64>) -> DVector<f64> {
        self.objective.gradient(y) + self.c
    }
    fn sigma(&self) -> f64 {
        self.objective.sigma()
    }
    fn smoothness(&self) -> f64 {
        self.objective.smoothness()
    }
    fn clamp_domain(&self, y: &mut DVector<f64>) {
        self.constraint.clamp_to_box(y);
    }
}

/// A node's solver with whatever caching its objective allows. Building one
/// is the expensive part; `solve` is then cheap and reusable across offsets.
pub struct LocalSolver {
    objective: Objective,
    constraint: PolyConstraint,
    direct: Option<DirectQp>,
    cfg: SolveConfig,
}

impl LocalSolver {
    pub fn new(objective: Objective, constraint: PolyConstraint, cfg: SolveConfig) -> Result<Self> {
        let direct = match objective.quadratic_form() {
            Some(form) => DirectQp::new(&form, &constraint, cfg.max_enum_rows)?,
            None => None,
        };
        Ok(LocalSolver { objective, constraint, direct, cfg })
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn constraint(&self) -> &PolyConstraint {
        &self.constraint
    }

    /// Minimizes `f(y) + c'y` over the constraint set.
    pub fn solve(&self, c: &DVector<f64>) -> Result<LocalSolve> {
        if let Some(qp) = &self.direct {
            if let Some(ds) = qp.solve(c) {
                return Ok(LocalSolve {
                    y: ds.y,
                    value: ds.value,
                    residual: ds.residual,
                    iterations: 0,
                    status: SolveStatus::Converged,
                    used_direct: true,
                });
            }
        }
        let composite = Composite { objective: &self.objective, constraint: &self.constraint, c };
        let proj_tol = (self.cfg.tol * 1e-2).max(1e-14);
        let project = |x: &DVector<f64>| project_polyhedron(&self.constraint, x, proj_tol);
        let start = DVector::zeros(self.objective.dim());
        let apg = apg::minimize(
            &composite,
            project,
            &start,
            &ApgConfig { tol: self.cfg.tol, max_iter: self.cfg.max_iter },
        )?;
        Ok(LocalSolve {
            y: apg.y,
            value: apg.value,
            residual: apg.residual,
            iterations: apg.iterations,
            status: if apg.converged { SolveStatus::Converged } else { SolveStatus::MaxIterExceeded },
            used_direct: false,
        })
    }
}

/// One-shot convenience wrapper around [`LocalSolver`].
pub fn solve_local(
    objective: &Objective,
    constraint: &PolyConstraint,
    c: &DVector<f64>,
    cfg: &SolveConfig,
) -> Result<LocalSolve> {
    LocalSolver::new(objective.clone(), constraint.clone(), *cfg)?.solve(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Utility;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn random_pd_quadratic(rng: &mut impl rand_core::RngCore, d: usize) -> Objective {
        let m = DMatrix::from_fn(d, d, |_, _| crate::rng::standard_normal(rng));
        let q = &m * m.transpose() + DMatrix::identity(d, d);
        let r = DVector::from_fn(d, |_, _| crate::rng::uniform(rng, -3.0, 3.0));
        Objective::quadratic(q, r, 0.0).unwrap()
    }

    /// Constraints through a strictly feasible anchor so the region is
    /// never empty.
    fn random_constraint(rng: &mut impl rand_core::RngCore, d: usize, rows: usize) -> PolyConstraint {
        let anchor = DVector::from_fn(d, |_, _| crate::rng::uniform(rng, -1.0, 1.0));
        let a = DMatrix::from_fn(rows, d, |_, _| crate::rng::standard_normal(rng));
        let b = DVector::from_fn(rows, |k, _| {
            a.row(k).transpose().dot(&anchor) + crate::rng::uniform(rng, 0.1, 1.0)
        });
        PolyConstraint::new(a, b, DVector::from_element(d, -50.0), DVector::from_element(d, 50.0))
            .unwrap()
    }

    #[test]
    fn direct_and_iterative_paths_agree_on_random_qps() {
        let mut rng = crate::rng::stream(31, 0);
        for trial in 0..25 {
            let obj = random_pd_quadratic(&mut rng, 3);
            let con = random_constraint(&mut rng, 3, 2);
            let c = DVector::from_fn(3, |_, _| crate::rng::uniform(&mut rng, -5.0, 5.0));
            let direct =
                LocalSolver::new(obj.clone(), con.clone(), SolveConfig::default()).unwrap();
            let forced_iterative = LocalSolver::new(
                obj,
                con,
                SolveConfig { max_enum_rows: 0, ..SolveConfig::default() },
            )
            .unwrap();
            let a = direct.solve(&c).unwrap();
            let b = forced_iterative.solve(&c).unwrap();
            assert!(a.used_direct && !b.used_direct);
            assert!(
                (&a.y - &b.y).norm() <= 1e-8,
                "trial {trial}: paths disagree by {}",
                (&a.y - &b.y).norm()
            );
            assert!((a.value - b.value).abs() <= 1e-8 * (1.0 + a.value.abs()));
        }
    }

    #[test]
    fn minimizer_satisfies_kkt_on_active_rows() {
        let mut rng = crate::rng::stream(33, 0);
        for _ in 0..10 {
            let obj = random_pd_quadratic(&mut rng, 4);
            let con = random_constraint(&mut rng, 4, 3);
            // Strong pull outward makes some rows active.
            let c = DVector::from_fn(4, |_, _| crate::rng::uniform(&mut rng, -30.0, 30.0));
            let solver = LocalSolver::new(obj.clone(), con.clone(), SolveConfig::default()).unwrap();
            let sol = solver.solve(&c).unwrap();
            assert!(sol.residual <= 1e-8, "stationarity residual {}", sol.residual);
            assert!(con.contains(&sol.y, 1e-8));
        }
    }

    /// For an unconstrained quadratic node the dual contribution has the
    /// closed form  q(c) = constant - (c + r)' Q^{-1} (c + r) / 4,
    /// the negated convex conjugate of f at -c.
    #[test]
    fn value_matches_conjugate_closed_form() {
        let mut rng = crate::rng::stream(35, 0);
        let d = 3;
        let m = DMatrix::from_fn(d, d, |_, _| crate::rng::standard_normal(&mut rng));
        let q = &m * m.transpose() + DMatrix::identity(d, d);
        let r = DVector::from_fn(d, |_, _| crate::rng::uniform(&mut rng, -2.0, 2.0));
        let constant = 0.75;
        let obj = Objective::quadratic(q.clone(), r.clone(), constant).unwrap();
        // Box wide enough that it never binds.
        let con = PolyConstraint::box_only(
            DVector::from_element(d, -1e6),
            DVector::from_element(d, 1e6),
        )
        .unwrap();
        let q_inv = q.try_inverse().unwrap();
        let solver = LocalSolver::new(obj, con, SolveConfig::default()).unwrap();
        for _ in 0..10 {
            let c = DVector::from_fn(d, |_, _| crate::rng::uniform(&mut rng, -4.0, 4.0));
            let sol = solver.solve(&c).unwrap();
            let cr = &c + &r;
            let expected = constant - 0.25 * (&q_inv * &cr).dot(&cr);
            assert_relative_eq!(sol.value, expected, epsilon = 1e-9, max_relative = 1e-9);
        }
    }

    #[test]
    fn log_utility_interior_stationary_point() {
        // f(y) = -ln(y) + 0.5 y^2 has its minimum at y = 1.
        let obj = Objective::regularized_utility(
            Utility::Log { weight: 1.0 },
            DVector::from_vec(vec![0.5]),
            0.1,
            5.0,
        )
        .unwrap();
        let con = PolyConstraint::box_only(
            DVector::from_vec(vec![0.1]),
            DVector::from_vec(vec![5.0]),
        )
        .unwrap();
        let sol = solve_local(&obj, &con, &DVector::zeros(1), &SolveConfig::default()).unwrap();
        assert!(!sol.used_direct);
        assert_relative_eq!(sol.y[0], 1.0, epsilon = 1e-8);
    }

    #[test]
    fn iteration_budget_exhaustion_is_reported_not_fatal() {
        let obj = Objective::regularized_utility(
            Utility::Log { weight: 1.0 },
            DVector::from_vec(vec![0.5]),
            0.1,
            5.0,
        )
        .unwrap();
        let con = PolyConstraint::box_only(
            DVector::from_vec(vec![0.1]),
            DVector::from_vec(vec![5.0]),
        )
        .unwrap();
        let sol = solve_local(
            &obj,
            &con,
            &DVector::zeros(1),
            &SolveConfig { tol: 0.0, max_iter: 3, ..SolveConfig::default() },
        )
        .unwrap();
        assert_eq!(sol.status, SolveStatus::MaxIterExceeded);
        assert!(sol.residual.is_finite());
    }

    #[test]
    fn box_active_quadratic_falls_back_to_iterative() {
        // min (y - 5)^2 over [0, 1]: enumeration refuses (box active), the
        // iterative path must take over and return y = 1.
        let q = DMatrix::from_element(1, 1, 1.0);
        let obj = Objective::quadratic(q, DVector::from_vec(vec![-10.0]), 25.0).unwrap();
        let con = PolyConstraint::box_only(
            DVector::from_vec(vec![0.0]),
            DVector::from_vec(vec![1.0]),
        )
        .unwrap();
        let sol = solve_local(&obj, &con, &DVector::zeros(1), &SolveConfig::default()).unwrap();
        assert!(!sol.used_direct);
        assert_relative_eq!(sol.y[0], 1.0, epsilon = 1e-9);
    }
}
