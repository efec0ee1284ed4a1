//! Centralized block-coordinate dual ascent.
//!
//! One iteration picks a node, solves it and its neighbors exactly at the
//! current duals, and steps only the pairs that node owns. The update
//! expression matches [`NodeState::ascend_own_pairs`] term for term, so a
//! run driven by the firing sequence of an [`AsyncEngine`] reproduces its
//! dual trajectory bit for bit.
//!
//! [`NodeState::ascend_own_pairs`]: super::NodeState::ascend_own_pairs
//! [`AsyncEngine`]: super::AsyncEngine

use nalgebra::DVector;
use rand_chacha::ChaCha12Rng;

use super::asynchronous::{AsyncConfig, AsyncEngine};
use super::assemble_duals;
use crate::duals::DualState;
use crate::problem::PartitionedProblem;
use crate::rng;
use crate::solver::{LocalSolve, LocalSolver, SolveConfig, SolveStatus};
use crate::stepsize::StepSizeRule;
use crate::trace::TraceRecord;
use crate::{Error, Result};

/// How the next node to update is chosen.
#[derive(Debug, Clone)]
pub enum Selection {
    /// Independent uniform draws.
    Uniform { seed: u64 },
    /// A fixed node sequence, e.g. the firing order of an event-driven run.
    Sequence(Vec<usize>),
}

enum Picker {
    Rng(Box<ChaCha12Rng>),
    Seq(std::vec::IntoIter<usize>),
}

pub struct CoordinateEngine<'a> {
    problem: &'a PartitionedProblem,
    solvers: Vec<LocalSolver>,
    duals: DualState,
    alphas: Vec<f64>,
    picker: Picker,
    t: u64,
    solve_tol: f64,
}

impl<'a> CoordinateEngine<'a> {
    /// Builds the engine with the step sizes of single-node updates, the
    /// same ones the event-driven engine uses.
    pub fn new(
        problem: &'a PartitionedProblem,
        selection: Selection,
        step_rule: &StepSizeRule,
        solve: SolveConfig,
        initial: Option<&DualState>,
    ) -> Result<Self> {
        let alphas = step_rule.resolve_async(problem)?;
        let solvers = (0..problem.n())
            .map(|i| {
                LocalSolver::new(problem.objective(i).clone(), problem.constraint(i).clone(), solve)
            })
            .collect::<Result<Vec<_>>>()?;
        let picker = match selection {
            Selection::Uniform { seed } => Picker::Rng(Box::new(rng::stream(seed, 0))),
            Selection::Sequence(seq) => {
                if let Some(&bad) = seq.iter().find(|&&i| i >= problem.n()) {
                    return Err(Error::InvalidParameter(format!(
                        "selection sequence names node {bad} but the graph has {} nodes",
                        problem.n()
                    )));
                }
                Picker::Seq(seq.into_iter())
            }
        };
        let duals = match initial {
            Some(d) => d.clone(),
            None => DualState::zeros(problem.neighborhoods()),
        };
        Ok(CoordinateEngine {
            problem,
            solvers,
            duals,
            alphas,
            picker,
            t: 0,
            solve_tol: solve.tol,
        })
    }

    pub fn duals(&self) -> &DualState {
        &self.duals
    }

    pub fn iterations(&self) -> u64 {
        self.t
    }

    fn solve_node(&self, i: usize) -> Result<LocalSolve> {
        let c = self.duals.offset(self.problem.neighborhoods(), i);
        let solve = self.solvers[i].solve(&c)?;
        if solve.status == SolveStatus::MaxIterExceeded {
            return Err(Error::SolverFailure {
                node: i,
                iteration: self.t,
                residual: solve.residual,
                tol: self.solve_tol,
            });
        }
        Ok(solve)
    }

    /// Updates the pairs owned by `node` from fresh exact solves of the node
    /// and its neighbors. Returns the worst solver residual seen.
    pub fn step_node(&mut self, node: usize) -> Result<f64> {
        let nbhd = self.problem.neighborhoods();
        let yi = self.solve_node(node)?;
        let mut worst = yi.residual;
        let alpha = self.alphas[node];
        for &j in self.problem.graph().neighbors(node) {
            let yj = self.solve_node(j)?;
            worst = worst.max(yj.residual);
            let si = nbhd.slot(node, node);
            let ti = nbhd.slot(node, j);
            let sj = nbhd.slot(j, node);
            let tj = nbhd.slot(j, j);
            let own_block = yi.y.rows(si.start, si.len()).clone_owned();
            let copy_of_j = yi.y.rows(ti.start, ti.len()).clone_owned();
            let their_copy = yj.y.rows(sj.start, sj.len()).clone_owned();
            let their_own = yj.y.rows(tj.start, tj.len()).clone_owned();
            let pair = self.duals.pair_mut(nbhd, node, j);
            pair.own += alpha * (&own_block - &their_copy);
            pair.neighbor += alpha * (&copy_of_j - &their_own);
        }
        self.t += 1;
        Ok(worst)
    }

    /// Picks the next node from the selection rule and updates it.
    pub fn step(&mut self) -> Result<(usize, f64)> {
        let n = self.problem.n();
        let node = match &mut self.picker {
            Picker::Rng(rng) => rng::uniform_usize(rng.as_mut(), 0, n - 1),
            Picker::Seq(seq) => seq.next().ok_or_else(|| {
                Error::InvalidParameter("selection sequence exhausted".to_string())
            })?,
        };
        let residual = self.step_node(node)?;
        Ok((node, residual))
    }
}

/// Runs `iterations` single-node updates and returns one trace row per
/// iteration, reporting the post-update dual cost from a full solve pass.
/// The message column stays zero: this driver is centralized.
pub fn run_coordinate_reference(
    problem: &PartitionedProblem,
    iterations: u64,
    selection: Selection,
    step_rule: &StepSizeRule,
    solve: SolveConfig,
    x_star: Option<&DVector<f64>>,
) -> Result<Vec<TraceRecord>> {
    let mut engine = CoordinateEngine::new(problem, selection, step_rule, solve, None)?;
    let nbhd = problem.neighborhoods();
    let layout = problem.layout();
    let mut records = Vec::with_capacity(iterations as usize);
    for _ in 0..iterations {
        let (_, update_residual) = engine.step()?;
        let solves: Vec<LocalSolve> =
            (0..problem.n()).map(|i| engine.solve_node(i)).collect::<Result<_>>()?;
        let dual_cost: f64 = solves.iter().map(|s| s.value).sum();
        let mut disagreement = 0.0f64;
        for i in 0..problem.n() {
            let si = nbhd.slot(i, i);
            let own = solves[i].y.rows(si.start, si.len());
            for &j in problem.graph().neighbors(i) {
                let sj = nbhd.slot(j, i);
                let copy = solves[j].y.rows(sj.start, sj.len());
                disagreement = disagreement.max((own - copy).norm());
            }
        }
        let primal_err = x_star.map(|xs| {
            let mut diag = DVector::zeros(layout.total());
            for (i, s) in solves.iter().enumerate() {
                let range = layout.block_range(i);
                let si = nbhd.slot(i, i);
                diag.rows_mut(range.start, range.end - range.start)
                    .copy_from(&s.y.rows(si.start, si.len()));
            }
            (diag - xs).norm()
        });
        let worst_residual = solves
            .iter()
            .map(|s| s.residual)
            .fold(update_residual, f64::max);
        records.push(TraceRecord {
            t: engine.iterations(),
            dual_cost,
            primal_err,
            disagreement,
            messages: 0,
            solver_residual: worst_residual,
            sim_time: None,
            node_fired: None,
            cascade_size: None,
            t_over_n: None,
        });
    }
    Ok(records)
}

/// Runs the event-driven engine and this reference side by side, feeding the
/// reference the realized firing sequence, and returns the largest absolute
/// dual difference after each fire.
pub fn run_matched_pair(
    problem: &PartitionedProblem,
    fires: u64,
    cfg: AsyncConfig,
) -> Result<Vec<f64>> {
    let step_rule = cfg.step_rule.clone();
    let solve = cfg.solve;
    let mut event_driven = AsyncEngine::new(problem, cfg)?;
    let mut reference =
        CoordinateEngine::new(problem, Selection::Sequence(Vec::new()), &step_rule, solve, None)?;
    let mut deviations = Vec::with_capacity(fires as usize);
    for _ in 0..fires {
        let record = event_driven.step()?;
        let node = record.node_fired.expect("event-driven rows name the fired node");
        reference.step_node(node)?;
        let snapshot = assemble_duals(problem, event_driven.states());
        deviations.push(snapshot.max_abs_diff(reference.duals()));
    }
    Ok(deviations)
}
