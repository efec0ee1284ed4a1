//! Crate error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied parameter is outside its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Random graph generation kept producing disconnected graphs.
    #[error("no connected graph after {attempts} attempts (n = {n}, p = {p})")]
    RetryLimitExceeded { n: usize, p: f64, attempts: usize },

    /// An induced or supplied graph is not connected.
    #[error("graph is not connected: {0}")]
    Disconnected(String),

    /// A scenario generator could not produce a strictly feasible witness.
    #[error("no strictly feasible interior point: {0}")]
    NoInteriorPoint(String),

    /// Least-squares generation with a singular per-node Gram block and no
    /// regularization; the local objective would not be strongly convex.
    #[error("node {node}: Gram block is singular and the regularization weight is zero")]
    SingularGram { node: usize },

    /// A local subproblem solve did not reach the requested residual.
    #[error("local solve failed at node {node} (iteration {iteration}): residual {residual:.3e} > tol {tol:.3e}")]
    SolverFailure {
        node: usize,
        iteration: u64,
        residual: f64,
        tol: f64,
    },

    /// A projection did not converge; the constraint set is likely empty.
    #[error("projection did not converge (residual {residual:.3e}); constraint set may be empty")]
    ProjectionFailure { residual: f64 },

    /// The centralized oracle did not reach its target accuracy.
    #[error("oracle did not reach tolerance: residual {residual:.3e} > tol {tol:.3e}")]
    OracleFailure { residual: f64, tol: f64 },

    /// Malformed instance, trace, or cache file.
    #[error("invalid file content: {0}")]
    InvalidData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
