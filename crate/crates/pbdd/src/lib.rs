//! Partitioned dual decomposition for block-structured convex programs.
//!
//! A problem over `x = (x_1, ..., x_n)` is *partitioned* when both the cost
//! term `f_i` and the constraint set `X_i` owned by node `i` depend only on
//! `x_i` and on the blocks of its graph neighbours. Each node keeps a local
//! copy of every neighbouring block, the copies are tied together by linear
//! coherence constraints, and those constraints are dualized. What remains
//! is a dual problem that splits per node: every node repeatedly minimizes
//! its own small subproblem and exchanges primal values and multipliers with
//! its neighbours only.
//!
//! The crate provides:
//!
//! * [`graph`]: undirected communication graphs and generators,
//! * [`blockspace`]: block layouts, closed neighbourhoods, gather/scatter,
//! * [`problem`]: local objectives, polyhedral constraint sets, scenario
//!   generators,
//! * [`duals`]: edge multiplier pairs and the linear offsets they induce,
//! * [`solver`]: the projected-gradient / active-set local solver,
//! * [`engine`]: the synchronous round engine, the asynchronous event
//!   engine, and a randomized block-coordinate reference,
//! * [`oracle`]: centralized solutions and finite-difference dual gradients
//!   used as ground truth in tests and verification,
//! * [`trace`]: CSV trace records emitted by the engines.

pub mod blockspace;
pub mod duals;
pub mod engine;
pub mod error;
pub mod graph;
pub mod oracle;
pub mod problem;
pub mod rng;
pub mod solver;
pub mod stepsize;
pub mod trace;

pub use blockspace::{BlockLayout, BlockVector, LocalVector, Neighborhoods};
pub use duals::{DualState, EdgeDualPair};
pub use error::Error;
pub use graph::Graph;
pub use problem::{Objective, PartitionedProblem, PolyConstraint};
pub use trace::TraceRecord;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
