//! Dykstra's alternating projection with correction terms.
//!
//! Projects onto an intersection of simple convex sets (boxes and
//! half-spaces), each of which has a closed-form projection. Unlike plain
//! alternating projections, Dykstra's correction vectors make the limit the
//! *projection* of the starting point, not just some feasible point.

use nalgebra::DVector;

use crate::error::Error;
use crate::Result;

/// One set in the collection.
#[derive(Debug, Clone)]
pub enum ConvexSet {
    /// `{ y : a' y <= b }` with `a` over the full coordinate space.
    HalfSpace { a: DVector<f64>, b: f64 },
    /// Bounds on a subset of coordinates: `lo[k] <= y[idx[k]] <= hi[k]`.
    Box { idx: Vec<usize>, lo: DVector<f64>, hi: DVector<f64> },
}

impl ConvexSet {
    fn project_in_place(&self, y: &mut DVector<f64>) {
        match self {
            ConvexSet::HalfSpace { a, b } => {
                let slack = a.dot(y) - b;
                if slack > 0.0 {
                    let nn = a.norm_squared();
                    if nn > 0.0 {
                        y.axpy(-slack / nn, a, 1.0);
                    }
                }
            }
            ConvexSet::Box { idx, lo, hi } => {
                for (k, &coord) in idx.iter().enumerate() {
                    y[coord] = y[coord].clamp(lo[k], hi[k]);
                }
            }
        }
    }

    fn violation(&self, y: &DVector<f64>) -> f64 {
        match self {
            ConvexSet::HalfSpace { a, b } => a.dot(y) - b,
            ConvexSet::Box { idx, lo, hi } => {
                let mut v = f64::NEG_INFINITY;
                for (k, &coord) in idx.iter().enumerate() {
                    v = v.max(lo[k] - y[coord]).max(y[coord] - hi[k]);
                }
                v
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DykstraConfig {
    /// Cycle-displacement and feasibility target.
    pub tol: f64,
    /// Hard cap on full cycles through the set collection.
    pub max_cycles: usize,
}

impl Default for DykstraConfig {
    fn default() -> Self {
        // The cap is far beyond anything a feasible intersection needs; it
        // exists so an empty intersection fails instead of spinning.
        DykstraConfig { tol: 1e-12, max_cycles: 1_000_000 }
    }
}

/// Projects `x0` onto the intersection of `sets`.
pub fn project_onto_intersection(
    sets: &[ConvexSet],
    x0: &DVector<f64>,
    cfg: &DykstraConfig,
) -> Result<DVector<f64>> {
    if sets.is_empty() {
        return Ok(x0.clone());
    }
    let mut y = x0.clone();
    let mut corrections = vec![DVector::zeros(x0.len()); sets.len()];
    let mut before = DVector::zeros(x0.len());
    // Convergence is judged on the iterate, not the corrections: for a set
    // active at the projection the correction settles to a fixed nonzero
    // normal component, while y itself stops moving between cycles.
    let mut cycle_start = x0.clone();
    // Stagnation window: if the per-cycle displacement refuses to shrink
    // while the point is still infeasible, the intersection is likely empty.
    let mut window_best = f64::INFINITY;
    let mut window_count = 0usize;
    for _ in 0..cfg.max_cycles {
        for (set, correction) in sets.iter().zip(corrections.iter_mut()) {
            y += &*correction;
            before.copy_from(&y);
            set.project_in_place(&mut y);
            // correction = (point before projection) - (projected point)
            correction.copy_from(&before);
            *correction -= &y;
        }
        let cycle_shift = (&y - &cycle_start).amax();
        cycle_start.copy_from(&y);
        let violation = sets.iter().fold(f64::NEG_INFINITY, |v, s| v.max(s.violation(&y)));
        let scale = 1.0 + y.amax();
        if violation <= cfg.tol * scale {
            if cycle_shift <= cfg.tol * scale {
                return Ok(y);
            }
        } else {
            if violation < window_best * 0.999_999 {
                window_best = violation;
                window_count = 0;
            } else {
                window_count += 1;
                if window_count > 2_000 {
                    return Err(Error::ProjectionFailure { residual: violation });
                }
            }
        }
    }
    let violation = sets.iter().fold(f64::NEG_INFINITY, |v, s| v.max(s.violation(&y)));
    if violation <= cfg.tol * (1.0 + y.amax()) {
        Ok(y)
    } else {
        Err(Error::ProjectionFailure { residual: violation })
    }
}
