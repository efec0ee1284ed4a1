//! Dual ascent engines.
//!
//! Three interchangeable drivers share the node-local state in this module:
//!
//! * [`sync`] — round-based: every node solves, exchanges primals, steps its
//!   dual pairs, exchanges duals, all behind strict barriers;
//! * [`asynchronous`] — event-driven: exponential local timers fire one node
//!   at a time, messages cascade with zero latency;
//! * [`coordinate`] — a centralized block-coordinate ascent loop used as the
//!   reference the event-driven engine is checked against.
//!
//! All three are deterministic: identical inputs produce bit-identical
//! traces.

pub mod asynchronous;
pub mod coordinate;
pub mod sync;

pub use asynchronous::{AsyncConfig, AsyncEngine, Horizon};
pub use coordinate::{run_coordinate_reference, run_matched_pair, Selection};
pub use sync::{run_sync, SyncConfig, SyncEngine};

use nalgebra::DVector;

use crate::blockspace::LocalVector;
use crate::duals::{DualState, EdgeDualPair};
use crate::problem::PartitionedProblem;
use crate::solver::{LocalSolve, LocalSolver, SolveConfig, SolveStatus};
use crate::{Error, Result};

/// Latest primal bundle received from one neighbor: the sender's own block
/// and the sender's copy of the receiver's block.
#[derive(Debug, Clone)]
pub struct NeighborPrimal {
    pub sender_block: DVector<f64>,
    pub receiver_block: DVector<f64>,
}

/// Everything one node stores.
///
/// The owned state is the local primal vector (own block plus one copy per
/// neighbor) and the dual pairs of the node's outgoing relations: `1 + 3|N_i|`
/// block variables in total. The `recv_*` buffers hold the latest incoming
/// messages; they are communication state, not owned variables.
#[derive(Debug, Clone)]
pub struct NodeState {
    pub node: usize,
    pub y: LocalVector,
    /// Pair `(i, j)` for each neighbor `j`, in neighbor slot order.
    pub own_pairs: Vec<EdgeDualPair>,
    /// Latest received mirror pair `(j, i)` from each neighbor.
    pub recv_pairs: Vec<EdgeDualPair>,
    /// Latest received primal bundle from each neighbor.
    pub recv_primal: Vec<NeighborPrimal>,
    pub alpha: f64,
    /// Objective-plus-offset value of the last local solve: this node's
    /// current contribution to the dual cost.
    pub last_value: f64,
    pub last_residual: f64,
}

impl NodeState {
    pub fn new(problem: &PartitionedProblem, node: usize, alpha: f64) -> Self {
        let nbhd = problem.neighborhoods();
        let layout = problem.layout();
        let neighbors = problem.graph().neighbors(node);
        let mi = layout.size(node);
        let own_pairs: Vec<EdgeDualPair> = neighbors
            .iter()
            .map(|&j| EdgeDualPair::zeros(mi, layout.size(j)))
            .collect();
        let recv_pairs: Vec<EdgeDualPair> = neighbors
            .iter()
            .map(|&j| EdgeDualPair::zeros(layout.size(j), mi))
            .collect();
        let recv_primal: Vec<NeighborPrimal> = neighbors
            .iter()
            .map(|&j| NeighborPrimal {
                sender_block: DVector::zeros(layout.size(j)),
                receiver_block: DVector::zeros(mi),
            })
            .collect();
        NodeState {
            node,
            y: LocalVector::zeros(nbhd, node),
            own_pairs,
            recv_pairs,
            recv_primal,
            alpha,
            last_value: 0.0,
            last_residual: 0.0,
        }
    }

    /// Number of block variables this node owns: its own block, one copy
    /// per neighbor, and two dual blocks per neighbor.
    pub fn owned_block_count(&self) -> usize {
        1 + 3 * self.own_pairs.len()
    }

    /// Linear offset of the local subproblem at the currently stored duals:
    /// the own slot collects `own_pair.own - recv_pair.neighbor` over
    /// neighbors, the slot of neighbor `j` is `own_pair.neighbor -
    /// recv_pair.own` of the relation with `j`.
    pub fn offset(&self, problem: &PartitionedProblem) -> DVector<f64> {
        let nbhd = problem.neighborhoods();
        let i = self.node;
        let mut c = DVector::zeros(nbhd.local_dim(i));
        let own_len = problem.layout().size(i);
        for (p, &j) in problem.graph().neighbors(i).iter().enumerate() {
            let own = &self.own_pairs[p];
            let recv = &self.recv_pairs[p];
            {
                let mut own_slot = c.rows_mut(0, own_len);
                own_slot += &own.own;
                own_slot -= &recv.neighbor;
            }
            let jr = nbhd.slot(i, j);
            let mut j_slot = c.rows_mut(jr.start, jr.len());
            j_slot += &own.neighbor;
            j_slot -= &recv.own;
        }
        c
    }

    /// One dual ascent step on every pair this node owns, using its own
    /// fresh primal and the stored neighbor bundles.
    pub fn ascend_own_pairs(&mut self, problem: &PartitionedProblem) {
        let nbhd = problem.neighborhoods();
        let i = self.node;
        let own_block = self.y.block(nbhd, i).clone_owned();
        let alpha = self.alpha;
        for (p, &j) in problem.graph().neighbors(i).iter().enumerate() {
            let copy_of_j = self.y.block(nbhd, j).clone_owned();
            let recv = &self.recv_primal[p];
            let pair = &mut self.own_pairs[p];
            pair.own += alpha * (&own_block - &recv.receiver_block);
            pair.neighbor += alpha * (&copy_of_j - &recv.sender_block);
        }
    }

    fn store_solve(&mut self, solve: &LocalSolve) {
        self.y.values.copy_from(&solve.y);
        self.last_value = solve.value;
        self.last_residual = solve.residual;
    }
}

/// Copies every node's own pairs into one [`DualState`] snapshot.
pub fn assemble_duals(problem: &PartitionedProblem, states: &[NodeState]) -> DualState {
    let nbhd = problem.neighborhoods();
    let mut duals = DualState::zeros(nbhd);
    for state in states {
        for (p, &j) in problem.graph().neighbors(state.node).iter().enumerate() {
            *duals.pair_mut(nbhd, state.node, j) = state.own_pairs[p].clone();
        }
    }
    duals
}

/// Loads a [`DualState`] into per-node stores, filling both the owned pairs
/// and the received mirrors, as if all exchanges had completed.
pub fn load_duals(problem: &PartitionedProblem, states: &mut [NodeState], duals: &DualState) {
    let nbhd = problem.neighborhoods();
    for state in states.iter_mut() {
        let i = state.node;
        for (p, &j) in problem.graph().neighbors(i).iter().enumerate() {
            state.own_pairs[p] = duals.pair(nbhd, i, j).clone();
            state.recv_pairs[p] = duals.pair(nbhd, j, i).clone();
        }
    }
}

/// Largest norm over directed relations between an owned block and the copy
/// the other endpoint computed.
pub fn max_disagreement(problem: &PartitionedProblem, states: &[NodeState]) -> f64 {
    let nbhd = problem.neighborhoods();
    let mut worst = 0.0f64;
    for state in states {
        let i = state.node;
        let own = state.y.block(nbhd, i);
        for &j in problem.graph().neighbors(i) {
            let copy = states[j].y.block(nbhd, i);
            worst = worst.max((own - copy).norm());
        }
    }
    worst
}

/// Stacks every node's own block into a global vector.
pub fn diagonal_primal(problem: &PartitionedProblem, states: &[NodeState]) -> DVector<f64> {
    let layout = problem.layout();
    let nbhd = problem.neighborhoods();
    let mut x = DVector::zeros(layout.total());
    for state in states {
        let range = layout.block_range(state.node);
        x.rows_mut(range.start, range.end - range.start)
            .copy_from(&state.y.block(nbhd, state.node));
    }
    x
}

/// Cached per-node solvers for evaluating the dual function and its
/// gradient at arbitrary dual values.
pub struct DualWorkspace<'a> {
    problem: &'a PartitionedProblem,
    solvers: Vec<LocalSolver>,
    cfg: SolveConfig,
}

impl<'a> DualWorkspace<'a> {
    pub fn new(problem: &'a PartitionedProblem, cfg: SolveConfig) -> Result<Self> {
        let solvers = (0..problem.n())
            .map(|i| {
                LocalSolver::new(problem.objective(i).clone(), problem.constraint(i).clone(), cfg)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DualWorkspace { problem, solvers, cfg })
    }

    pub fn problem(&self) -> &PartitionedProblem {
        self.problem
    }

    pub fn config(&self) -> SolveConfig {
        self.cfg
    }

    pub fn solve_node(&self, i: usize, duals: &DualState) -> Result<LocalSolve> {
        let c = duals.offset(self.problem.neighborhoods(), i);
        let solve = self.solvers[i].solve(&c)?;
        if solve.status == SolveStatus::MaxIterExceeded {
            return Err(Error::SolverFailure {
                node: i,
                iteration: solve.iterations,
                residual: solve.residual,
                tol: self.cfg.tol,
            });
        }
        Ok(solve)
    }

    pub fn solve_all(&self, duals: &DualState) -> Result<Vec<LocalSolve>> {
        (0..self.problem.n()).map(|i| self.solve_node(i, duals)).collect()
    }

    /// Dual function value: the sum of offset-shifted minima over nodes.
    pub fn cost(&self, duals: &DualState) -> Result<f64> {
        Ok(self.solve_all(duals)?.iter().map(|s| s.value).sum())
    }

    /// Analytic dual gradient: for the relation `(i, j)`, the component on
    /// `own` is `x_i^(i) - x_i^(j)` and on `neighbor` is `x_j^(i) - x_j^(j)`,
    /// with all blocks read from fresh exact minimizers.
    pub fn gradient(&self, duals: &DualState) -> Result<DualState> {
        let problem = self.problem;
        let nbhd = problem.neighborhoods();
        let solves = self.solve_all(duals)?;
        let mut grad = DualState::zeros(nbhd);
        for i in 0..problem.n() {
            for &j in problem.graph().neighbors(i) {
                let si = nbhd.slot(i, i);
                let sj = nbhd.slot(j, i);
                let ti = nbhd.slot(i, j);
                let tj = nbhd.slot(j, j);
                let xi_i = solves[i].y.rows(si.start, si.len());
                let xi_j = solves[j].y.rows(sj.start, sj.len());
                let xj_i = solves[i].y.rows(ti.start, ti.len());
                let xj_j = solves[j].y.rows(tj.start, tj.len());
                let pair = grad.pair_mut(nbhd, i, j);
                pair.own = xi_i - xi_j;
                pair.neighbor = xj_i - xj_j;
            }
        }
        Ok(grad)
    }
}

/// Dual function value at the given duals, solving every local problem
/// fresh. Convenience wrapper over [`DualWorkspace`].
pub fn dual_cost(problem: &PartitionedProblem, duals: &DualState, cfg: &SolveConfig) -> Result<f64> {
    DualWorkspace::new(problem, *cfg)?.cost(duals)
}

/// Analytic dual gradient at the given duals. Convenience wrapper over
/// [`DualWorkspace`].
pub fn dual_gradient(
    problem: &PartitionedProblem,
    duals: &DualState,
    cfg: &SolveConfig,
) -> Result<DualState> {
    DualWorkspace::new(problem, *cfg)?.gradient(duals)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::blockspace::{BlockLayout, BlockVector, Neighborhoods};
    use crate::graph::Graph;
    use crate::problem::{Objective, PolyConstraint};
    use nalgebra::DMatrix;

    /// Three nodes on a path with identity-quadratic objectives and skewed
    /// linear terms: small, coupled, box-inactive.
    pub fn quadratic_path3() -> PartitionedProblem {
        let graph = Graph::path(3).unwrap();
        let layout = BlockLayout::uniform(3, 1).unwrap();
        let nbhd = Neighborhoods::new(&graph, &layout).unwrap();
        let mut objectives = Vec::new();
        let mut constraints = Vec::new();
        for i in 0..3 {
            let d = nbhd.local_dim(i);
            let q = DMatrix::<f64>::identity(d, d);
            let r = DVector::from_fn(d, |k, _| 0.5 * (i as f64 + 1.0) + 0.25 * k as f64);
            objectives.push(Objective::quadratic(q, r, 0.0).unwrap());
            constraints.push(
                PolyConstraint::box_only(
                    DVector::from_element(d, -20.0),
                    DVector::from_element(d, 20.0),
                )
                .unwrap(),
            );
        }
        let witness = BlockVector::zeros(&layout);
        PartitionedProblem::new(graph, layout, objectives, constraints, witness, "test", 7)
            .unwrap()
    }

    /// A connected random QP with mixed block sizes, one linear row per
    /// node, and a wide box. Built by hand so engine tests do not depend on
    /// the scenario generators.
    pub fn coupled_qp(n: usize, p_edge: f64, seed: u64) -> PartitionedProblem {
        let graph = Graph::erdos_renyi(n, p_edge, seed).unwrap();
        let mut rng = crate::rng::stream(seed, 999);
        let sizes: Vec<usize> =
            (0..n).map(|_| crate::rng::uniform_usize(&mut rng, 1, 2)).collect();
        let layout = BlockLayout::new(sizes).unwrap();
        let nbhd = Neighborhoods::new(&graph, &layout).unwrap();
        let mut objectives = Vec::new();
        let mut constraints = Vec::new();
        for i in 0..n {
            let d = nbhd.local_dim(i);
            let m = DMatrix::from_fn(d, d, |_, _| crate::rng::standard_normal(&mut rng));
            let q = &m * m.transpose() + DMatrix::identity(d, d);
            let r = DVector::from_fn(d, |_, _| crate::rng::uniform(&mut rng, -4.0, 4.0));
            objectives.push(Objective::quadratic(q, r, 0.0).unwrap());
            let a = DMatrix::from_fn(1, d, |_, _| crate::rng::standard_normal(&mut rng));
            // Row through the origin with slack, so zero stays strictly
            // feasible.
            let b = DVector::from_element(1, crate::rng::uniform(&mut rng, 0.5, 2.0));
            constraints.push(
                PolyConstraint::new(
                    a,
                    b,
                    DVector::from_element(d, -50.0),
                    DVector::from_element(d, 50.0),
                )
                .unwrap(),
            );
        }
        let witness = BlockVector::zeros(&layout);
        PartitionedProblem::new(graph, layout, objectives, constraints, witness, "test", seed)
            .unwrap()
    }

    /// A fully decoupled instance: every objective pulls toward the gather
    /// of one shared global point, so all copies already agree at zero
    /// duals.
    pub fn decoupled_consensus(n: usize, p_edge: f64, seed: u64) -> PartitionedProblem {
        let graph = Graph::erdos_renyi(n, p_edge, seed).unwrap();
        let layout = BlockLayout::uniform(n, 1).unwrap();
        let nbhd = Neighborhoods::new(&graph, &layout).unwrap();
        let mut rng = crate::rng::stream(seed, 1234);
        let target = BlockVector::from_vec(
            &layout,
            (0..n).map(|_| crate::rng::uniform(&mut rng, -3.0, 3.0)).collect(),
        )
        .unwrap();
        let mut objectives = Vec::new();
        let mut constraints = Vec::new();
        for i in 0..n {
            let d = nbhd.local_dim(i);
            let local_target = nbhd.gather(&target, i);
            let q = DMatrix::<f64>::identity(d, d);
            let r = -2.0 * &local_target.values;
            let constant = local_target.values.norm_squared();
            objectives.push(Objective::quadratic(q, r, constant).unwrap());
            constraints.push(
                PolyConstraint::box_only(
                    DVector::from_element(d, -10.0),
                    DVector::from_element(d, 10.0),
                )
                .unwrap(),
            );
        }
        let witness = BlockVector::zeros(&layout);
        PartitionedProblem::new(graph, layout, objectives, constraints, witness, "test", seed)
            .unwrap()
    }

    pub fn random_duals(p: &PartitionedProblem, seed: u64, scale: f64) -> DualState {
        let nbhd = p.neighborhoods();
        let dim = DualState::dim(nbhd);
        let mut rng = crate::rng::stream(seed, 0);
        let stacked = DVector::from_fn(dim, |_, _| crate::rng::uniform(&mut rng, -scale, scale));
        DualState::from_stacked(nbhd, &stacked).unwrap()
    }
}
