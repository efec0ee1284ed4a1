//! Dual ascent step sizes.
//!
//! The dual function is concave with a block-Lipschitz gradient: the block
//! of partials belonging to node `i`'s pairs has constant
//!
//! ```text
//!     L_i = sqrt( 2 * sum_{j in N_i} (1/sigma_i + 1/sigma_j)^2 )
//! ```
//!
//! where `sigma_i` is the strong-convexity modulus of `f_i`. Synchronous
//! ascent moves all blocks at once and needs the conservative `1/(n L_i)`;
//! a single-block update tolerates the full `1/L_i`. Isolated nodes carry
//! no dual variables, so their entry is zero by convention.

use crate::problem::PartitionedProblem;

/// Per-node gradient block Lipschitz constants `L_i`.
pub fn lipschitz_blocks(problem: &PartitionedProblem) -> Vec<f64> {
    let graph = problem.graph();
    (0..problem.n())
        .map(|i| {
            let si = problem.sigma(i);
            let sum: f64 = graph
                .neighbors(i)
                .iter()
                .map(|&j| {
                    let term = 1.0 / si + 1.0 / problem.sigma(j);
                    term * term
                })
                .sum();
            (2.0 * sum).sqrt()
        })
        .collect()
}

/// Step sizes for all-blocks-at-once ascent: `factor / (n * L_i)`.
/// `factor = 1` sits exactly on the convergence bound.
pub fn sync_step_sizes(problem: &PartitionedProblem, factor: f64) -> Vec<f64> {
    let n = problem.n() as f64;
    lipschitz_blocks(problem)
        .into_iter()
        .map(|l| if l > 0.0 { factor / (n * l) } else { 0.0 })
        .collect()
}

/// Step sizes for one-block-at-a-time ascent: `factor / L_i`.
pub fn async_step_sizes(problem: &PartitionedProblem, factor: f64) -> Vec<f64> {
    lipschitz_blocks(problem)
        .into_iter()
        .map(|l| if l > 0.0 { factor / l } else { 0.0 })
        .collect()
}

/// How an engine picks its step sizes.
#[derive(Debug, Clone)]
pub enum StepSizeRule {
    /// Theory-backed per-node sizes scaled by `factor` (in `(0, 1]` for the
    /// guarantees to hold; larger values are allowed for experimentation).
    Factor(f64),
    /// One explicit size shared by every node.
    Common(f64),
    /// Explicit per-node sizes, one per node.
    PerNode(Vec<f64>),
}

impl Default for StepSizeRule {
    fn default() -> Self {
        StepSizeRule::Factor(1.0)
    }
}

impl StepSizeRule {
    /// Resolves to concrete per-node sizes for a synchronous engine.
    pub fn resolve_sync(&self, problem: &PartitionedProblem) -> crate::Result<Vec<f64>> {
        self.resolve(problem, true)
    }

    /// Resolves to concrete per-node sizes for a single-block engine.
    pub fn resolve_async(&self, problem: &PartitionedProblem) -> crate::Result<Vec<f64>> {
        self.resolve(problem, false)
    }

    fn resolve(&self, problem: &PartitionedProblem, sync: bool) -> crate::Result<Vec<f64>> {
        match self {
            StepSizeRule::Factor(factor) => {
                if !factor.is_finite() || *factor <= 0.0 {
                    return Err(crate::Error::InvalidParameter(format!(
                        "step size factor must be positive and finite, got {factor}"
                    )));
                }
                Ok(if sync {
                    sync_step_sizes(problem, *factor)
                } else {
                    async_step_sizes(problem, *factor)
                })
            }
            StepSizeRule::Common(alpha) => {
                if !alpha.is_finite() || *alpha <= 0.0 {
                    return Err(crate::Error::InvalidParameter(format!(
                        "common step size must be positive and finite, got {alpha}"
                    )));
                }
                Ok(vec![*alpha; problem.n()])
            }
            StepSizeRule::PerNode(alphas) => {
                if alphas.len() != problem.n() {
                    return Err(crate::Error::InvalidParameter(format!(
                        "expected {} per-node step sizes, got {}",
                        problem.n(),
                        alphas.len()
                    )));
                }
                if let Some(bad) = alphas.iter().find(|a| !a.is_finite() || **a < 0.0) {
                    return Err(crate::Error::InvalidParameter(format!(
                        "step sizes must be finite and nonnegative, got {bad}"
                    )));
                }
                Ok(alphas.clone())
            }
        }
    }
}
