//! Exact QP solves by active-set enumeration.
//!
//! For `min 1/2 y'Hy + g'y` over `{A y <= b, lo <= y <= hi}` with few rows,
//! every subset of rows is tried as the active set: solve the equality-
//! constrained KKT system, keep the first candidate whose multipliers are
//! nonnegative and whose point is feasible. Strong convexity makes any such
//! point the unique global minimizer, so "first hit" is not a heuristic.
//!
//! The box is assumed inactive at the optimum (generators size boxes that
//! way); a candidate violating the box is rejected, and if no subset
//! produces a box-interior point the caller falls back to the iterative
//! solver. Factorizations depend only on `(H, A)`, so one instance serves
//! many solves with different linear terms, which is what the dual engines
//! do thousands of times per run.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::Error;
use crate::problem::{PolyConstraint, QuadraticForm};
use crate::Result;

/// Result of a direct solve.
#[derive(Debug, Clone)]
pub struct DirectSolve {
    pub y: DVector<f64>,
    /// `1/2 y'Hy + g'y + constant` at the solution.
    pub value: f64,
    /// Max-norm of the stationarity residual `Hy + g + A_S' mu`.
    pub residual: f64,
    pub active_rows: Vec<usize>,
    pub multipliers: DVector<f64>,
}

struct Subset {
    rows: Vec<usize>,
    /// `H^{-1} A_S'`, dim x |S|.
    hinv_at: DMatrix<f64>,
    /// Cholesky of the Schur complement `A_S H^{-1} A_S'`.
    schur: Cholesky<f64, Dyn>,
}

/// A QP with cached factorizations for repeated solves.
pub struct DirectQp {
    hessian: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    linear: DVector<f64>,
    constant: f64,
    a: DMatrix<f64>,
    b: DVector<f64>,
    lo: DVector<f64>,
    hi: DVector<f64>,
    subsets: Vec<Subset>,
}

const FEAS_TOL: f64 = 1e-9;
const MULT_TOL: f64 = 1e-9;

fn subsets_by_cardinality(rows: usize, max_size: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    let mut current = Vec::new();
    fn rec(start: usize, rows: usize, left: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left == 0 {
            out.push(current.clone());
            return;
        }
        for r in start..rows {
            current.push(r);
            rec(r + 1, rows, left - 1, current, out);
            current.pop();
        }
    }
    for k in 1..=max_size.min(rows) {
        rec(0, rows, k, &mut current, &mut out);
    }
    out
}

impl DirectQp {
    /// Returns `None` when the row count exceeds `max_rows` (enumeration
    /// would be too expensive; use the iterative path instead).
    pub fn new(
        form: &QuadraticForm,
        constraint: &PolyConstraint,
        max_rows: usize,
    ) -> Result<Option<Self>> {
        let rows = constraint.rows();
        if rows > max_rows {
            return Ok(None);
        }
        let dim = form.linear.len();
        let chol = Cholesky::new(form.hessian.clone()).ok_or_else(|| {
            Error::InvalidParameter("direct QP needs a positive definite Hessian".into())
        })?;
        let mut subsets = Vec::new();
        for rows_set in subsets_by_cardinality(rows, dim.min(rows)) {
            if rows_set.is_empty() {
                subsets.push(Subset {
                    rows: rows_set,
                    hinv_at: DMatrix::zeros(dim, 0),
                    schur: Cholesky::new(DMatrix::identity(0, 0)).expect("0x0 is trivially PD"),
                });
                continue;
            }
            let s = rows_set.len();
            let mut at = DMatrix::zeros(dim, s);
            for (k, &r) in rows_set.iter().enumerate() {
                at.column_mut(k).copy_from(&constraint.a.row(r).transpose());
            }
            let hinv_at = chol.solve(&at);
            let schur_m = at.transpose() * &hinv_at;
            // A singular Schur complement means linearly dependent rows;
            // that subset cannot be a nondegenerate active set, skip it.
            let Some(schur) = Cholesky::new(schur_m) else { continue };
            subsets.push(Subset { rows: rows_set, hinv_at, schur });
        }
        Ok(Some(DirectQp {
            hessian: form.hessian.clone(),
            chol,
            linear: form.linear.clone(),
            constant: form.constant,
            a: constraint.a.clone(),
            b: constraint.b.clone(),
            lo: constraint.lo.clone(),
            hi: constraint.hi.clone(),
            subsets,
        }))
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    fn feasible(&self, y: &DVector<f64>) -> bool {
        for k in 0..self.dim() {
            if y[k] < self.lo[k] - FEAS_TOL * (1.0 + self.lo[k].abs())
                || y[k] > self.hi[k] + FEAS_TOL * (1.0 + self.hi[k].abs())
            {
                return false;
            }
        }
        if self.a.nrows() > 0 {
            let ay = &self.a * y;
            for k in 0..self.a.nrows() {
                if ay[k] > self.b[k] + FEAS_TOL * (1.0 + self.b[k].abs()) {
                    return false;
                }
            }
        }
        true
    }

    /// Solves with the linear term shifted by `extra` (the dual offset):
    /// `min 1/2 y'Hy + (linear + extra)'y`.
    pub fn solve(&self, extra: &DVector<f64>) -> Option<DirectSolve> {
        let g = &self.linear + extra;
        let y0 = -self.chol.solve(&g);
        for subset in &self.subsets {
            let s = subset.rows.len();
            let (mut y, mut mu);
            if s == 0 {
                y = y0.clone();
                mu = DVector::zeros(0);
            } else {
                let mut rhs = DVector::zeros(s);
                for (k, &r) in subset.rows.iter().enumerate() {
                    rhs[k] = self.a.row(r).transpose().dot(&y0) - self.b[r];
                }
                mu = subset.schur.solve(&rhs);
                let mu_scale = 1.0 + mu.amax();
                if mu.iter().any(|&m| m < -MULT_TOL * mu_scale) {
                    continue;
                }
                y = &y0 - &subset.hinv_at * &mu;
            }
            if !self.feasible(&y) {
                continue;
            }
            let mut residual = self.stationarity_residual(&y, &g, subset, &mu);
            // One step of iterative refinement if the direct solve left
            // more error than it should (large linear terms can do that).
            if residual > 1e-12 * (1.0 + g.amax()) && s > 0 {
                self.refine(&g, subset, &mut y, &mut mu);
                residual = self.stationarity_residual(&y, &g, subset, &mu);
            }
            let value = 0.5 * (&self.hessian * &y).dot(&y) + g.dot(&y) + self.constant;
            return Some(DirectSolve {
                y,
                value,
                residual,
                active_rows: subset.rows.clone(),
                multipliers: mu,
            });
        }
        None
    }

    fn stationarity_residual(
        &self,
        y: &DVector<f64>,
        g: &DVector<f64>,
        subset: &Subset,
        mu: &DVector<f64>,
    ) -> f64 {
        let mut r = &self.hessian * y + g;
        for (k, &row) in subset.rows.iter().enumerate() {
            r += self.a.row(row).transpose() * mu[k];
        }
        r.amax()
    }

    fn refine(&self, g: &DVector<f64>, subset: &Subset, y: &mut DVector<f64>, mu: &mut DVector<f64>) {
        let s = subset.rows.len();
        let mut r1 = &self.hessian * &*y + g;
        for (k, &row) in subset.rows.iter().enumerate() {
            r1 += self.a.row(row).transpose() * mu[k];
        }
        let mut r2 = DVector::zeros(s);
        for (k, &row) in subset.rows.iter().enumerate() {
            r2[k] = self.a.row(row).transpose().dot(y) - self.b[row];
        }
        let u = self.chol.solve(&r1);
        let mut rhs = DVector::zeros(s);
        for k in 0..s {
            rhs[k] = r2[k] - subset.hinv_at.column(k).dot(&r1);
        }
        // d_mu = S^{-1} (r2 - A_S H^{-1} r1); d_y = -H^{-1} r1 - H^{-1}A_S' d_mu
        let dmu = subset.schur.solve(&rhs);
        let dy = -u - &subset.hinv_at * &dmu;
        *y += dy;
        *mu += dmu;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn box_1d(lo: f64, hi: f64) -> PolyConstraint {
        PolyConstraint::box_only(DVector::from_vec(vec![lo]), DVector::from_vec(vec![hi])).unwrap()
    }

    #[test]
    fn unconstrained_minimum_inside_feasible_set() {
        // min (y - 2)^2 over y <= 3: the free minimum y = 2 is feasible.
        let form = QuadraticForm {
            hessian: DMatrix::from_element(1, 1, 2.0),
            linear: DVector::from_vec(vec![-4.0]),
            constant: 4.0,
        };
        let c = PolyConstraint::new(
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_vec(vec![3.0]),
            DVector::from_vec(vec![-100.0]),
            DVector::from_vec(vec![100.0]),
        )
        .unwrap();
        let qp = DirectQp::new(&form, &c, 8).unwrap().unwrap();
        let sol = qp.solve(&DVector::zeros(1)).unwrap();
        assert_relative_eq!(sol.y[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(sol.value, 0.0, epsilon = 1e-12);
        assert!(sol.active_rows.is_empty());
    }

    #[test]
    fn active_row_with_known_multiplier() {
        // min (y - 2)^2 over y <= 1: optimum y = 1 with multiplier 2
        // (stationarity: 2(y - 2) + mu = 0 at y = 1).
        let form = QuadraticForm {
            hessian: DMatrix::from_element(1, 1, 2.0),
            linear: DVector::from_vec(vec![-4.0]),
            constant: 4.0,
        };
        let c = PolyConstraint::new(
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![-100.0]),
            DVector::from_vec(vec![100.0]),
        )
        .unwrap();
        let qp = DirectQp::new(&form, &c, 8).unwrap().unwrap();
        let sol = qp.solve(&DVector::zeros(1)).unwrap();
        assert_relative_eq!(sol.y[0], 1.0, epsilon = 1e-12);
        assert_eq!(sol.active_rows, vec![0]);
        assert_relative_eq!(sol.multipliers[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(sol.value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn two_active_rows_pin_a_corner() {
        // min |y|^2 s.t. y1 + y2 <= ... pushed the other way:
        // min (y1-2)^2 + (y2-2)^2 with y1 <= 1 and y2 <= 0.5.
        let form = QuadraticForm {
            hessian: DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 2.0])),
            linear: DVector::from_vec(vec![-4.0, -4.0]),
            constant: 8.0,
        };
        let c = PolyConstraint::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
            DVector::from_vec(vec![1.0, 0.5]),
            DVector::from_element(2, -100.0),
            DVector::from_element(2, 100.0),
        )
        .unwrap();
        let qp = DirectQp::new(&form, &c, 8).unwrap().unwrap();
        let sol = qp.solve(&DVector::zeros(2)).unwrap();
        assert_relative_eq!(sol.y[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(sol.y[1], 0.5, epsilon = 1e-12);
        assert_eq!(sol.active_rows, vec![0, 1]);
    }

    #[test]
    fn linear_term_shifts_the_solution() {
        // Same QP solved with different offsets must reuse factorizations.
        let form = QuadraticForm {
            hessian: DMatrix::from_element(1, 1, 2.0),
            linear: DVector::zeros(1),
            constant: 0.0,
        };
        let qp = DirectQp::new(&form, &box_1d(-10.0, 10.0), 8).unwrap().unwrap();
        for c in [-3.0, 0.0, 1.5] {
            let sol = qp.solve(&DVector::from_vec(vec![c])).unwrap();
            assert_relative_eq!(sol.y[0], -c / 2.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn box_active_optimum_returns_none() {
        // min (y - 5)^2 over [0, 1] without rows: optimum y = 1 sits on the
        // box, which enumeration does not handle.
        let form = QuadraticForm {
            hessian: DMatrix::from_element(1, 1, 2.0),
            linear: DVector::from_vec(vec![-10.0]),
            constant: 25.0,
        };
        let qp = DirectQp::new(&form, &box_1d(0.0, 1.0), 8).unwrap().unwrap();
        assert!(qp.solve(&DVector::zeros(1)).is_none());
    }

    #[test]
    fn too_many_rows_defers_to_iterative() {
        let form = QuadraticForm {
            hessian: DMatrix::identity(2, 2),
            linear: DVector::zeros(2),
            constant: 0.0,
        };
        let c = PolyConstraint::new(
            DMatrix::from_fn(9, 2, |r, k| (r + k) as f64 + 1.0),
            DVector::from_element(9, 100.0),
            DVector::from_element(2, -10.0),
            DVector::from_element(2, 10.0),
        )
        .unwrap();
        assert!(DirectQp::new(&form, &c, 8).unwrap().is_none());
    }

    #[test]
    fn dependent_rows_are_skipped_not_fatal() {
        // Two identical rows: the pair subset has a singular Schur
        // complement, but singleton subsets still solve the problem.
        let form = QuadraticForm {
            hessian: DMatrix::from_element(1, 1, 2.0),
            linear: DVector::from_vec(vec![-4.0]),
            constant: 0.0,
        };
        let c = PolyConstraint::new(
            DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            DVector::from_vec(vec![1.0, 1.0]),
            DVector::from_vec(vec![-100.0]),
            DVector::from_vec(vec![100.0]),
        )
        .unwrap();
        let qp = DirectQp::new(&form, &c, 8).unwrap().unwrap();
        let sol = qp.solve(&DVector::zeros(1)).unwrap();
        assert_relative_eq!(sol.y[0], 1.0, epsilon = 1e-12);
    }
}
