//! Event-driven dual ascent with independent Poisson timers.
//!
//! Each node carries its own exponential clock. When a timer fires the
//! node re-solves at its current duals, broadcasts the minimizer, steps
//! every dual pair it owns, broadcasts the updated pairs, then solves once
//! more and broadcasts again so its neighbors hold the minimizer matching
//! the new duals. A node receiving a dual bundle re-solves and broadcasts
//! its own minimizer; a node receiving a primal bundle only stores it.
//!
//! Messages are delivered in send order before the next timer fires, so
//! after every cascade each stored solve and each stored copy is the exact
//! minimizer at the duals then in force. One trace row is emitted per
//! timer fire, reporting the post-cascade dual cost.

use std::collections::VecDeque;

use nalgebra::DVector;
use rand_chacha::ChaCha12Rng;

use super::{assemble_duals, diagonal_primal, load_duals, max_disagreement, NodeState};
use crate::duals::DualState;
use crate::problem::PartitionedProblem;
use crate::rng;
use crate::solver::{LocalSolver, SolveConfig, SolveStatus};
use crate::stepsize::StepSizeRule;
use crate::trace::TraceRecord;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct AsyncConfig {
    pub step_rule: StepSizeRule,
    pub solve: SolveConfig,
    /// Seed for the per-node timer streams.
    pub seed: u64,
    /// Common rate of the per-node exponential timers.
    pub rate: f64,
    /// Optimal global primal, when known; fills the trace's primal error
    /// column.
    pub x_star: Option<DVector<f64>>,
}

impl Default for AsyncConfig {
    fn default() -> Self {
        AsyncConfig {
            step_rule: StepSizeRule::default(),
            solve: SolveConfig::default(),
            seed: 0,
            rate: 1.0,
            x_star: None,
        }
    }
}

/// Stopping rule for [`AsyncEngine::run`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    /// Stop after this many timer fires.
    Fires(u64),
    /// Stop before the first fire past this simulated time.
    SimTime(f64),
}

enum Message {
    Primal { to: usize, from_slot: usize, sender_block: DVector<f64>, receiver_block: DVector<f64> },
    Dual { to: usize, from_slot: usize, own: DVector<f64>, neighbor: DVector<f64> },
}

pub struct AsyncEngine<'a> {
    problem: &'a PartitionedProblem,
    solvers: Vec<LocalSolver>,
    states: Vec<NodeState>,
    timers: Vec<ChaCha12Rng>,
    deadline: Vec<f64>,
    rate: f64,
    solve_tol: f64,
    x_star: Option<DVector<f64>>,
    fires: u64,
    sim_time: f64,
    messages: u64,
    fired: Vec<usize>,
    last_cascade_solves: Vec<usize>,
}

impl<'a> AsyncEngine<'a> {
    pub fn new(problem: &'a PartitionedProblem, cfg: AsyncConfig) -> Result<Self> {
        Self::build(problem, cfg, None)
    }

    /// Starts from the given duals instead of zero.
    pub fn with_duals(
        problem: &'a PartitionedProblem,
        cfg: AsyncConfig,
        duals: &DualState,
    ) -> Result<Self> {
        Self::build(problem, cfg, Some(duals))
    }

    fn build(
        problem: &'a PartitionedProblem,
        cfg: AsyncConfig,
        duals: Option<&DualState>,
    ) -> Result<Self> {
        if !(cfg.rate.is_finite() && cfg.rate > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "timer rate must be positive and finite, got {}",
                cfg.rate
            )));
        }
        let alphas = cfg.step_rule.resolve_async(problem)?;
        let solvers = (0..problem.n())
            .map(|i| {
                LocalSolver::new(
                    problem.objective(i).clone(),
                    problem.constraint(i).clone(),
                    cfg.solve,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let states = (0..problem.n())
            .map(|i| NodeState::new(problem, i, alphas[i]))
            .collect();
        let mut timers: Vec<ChaCha12Rng> =
            (0..problem.n()).map(|i| rng::stream(cfg.seed, i as u64)).collect();
        let deadline = timers
            .iter_mut()
            .map(|t| rng::exponential(t, cfg.rate))
            .collect();
        let mut engine = AsyncEngine {
            problem,
            solvers,
            states,
            timers,
            deadline,
            rate: cfg.rate,
            solve_tol: cfg.solve.tol,
            x_star: cfg.x_star,
            fires: 0,
            sim_time: 0.0,
            messages: 0,
            fired: Vec::new(),
            last_cascade_solves: Vec::new(),
        };
        if let Some(d) = duals {
            load_duals(problem, &mut engine.states, d);
        }
        engine.initial_exchange()?;
        Ok(engine)
    }

    /// Solves every node and exchanges primal bundles so all stored copies
    /// match the current duals before the first fire.
    fn initial_exchange(&mut self) -> Result<()> {
        let mut queue = VecDeque::new();
        for i in 0..self.problem.n() {
            self.resolve(i)?;
            self.enqueue_primal(i, &mut queue);
        }
        while let Some(msg) = queue.pop_front() {
            self.messages += 1;
            self.deliver_store_only(msg);
        }
        Ok(())
    }

    pub fn states(&self) -> &[NodeState] {
        &self.states
    }

    pub fn duals(&self) -> DualState {
        assemble_duals(self.problem, &self.states)
    }

    pub fn problem(&self) -> &PartitionedProblem {
        self.problem
    }

    pub fn fires(&self) -> u64 {
        self.fires
    }

    pub fn sim_time(&self) -> f64 {
        self.sim_time
    }

    pub fn messages(&self) -> u64 {
        self.messages
    }

    /// Nodes whose timers have fired, in order.
    pub fn fired_sequence(&self) -> &[usize] {
        &self.fired
    }

    /// Nodes that solved during the most recent fire, in execution order.
    pub fn last_cascade_solves(&self) -> &[usize] {
        &self.last_cascade_solves
    }

    /// Simulated time of the next timer fire.
    pub fn next_deadline(&self) -> f64 {
        self.deadline.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn next_to_fire(&self) -> usize {
        let mut best = 0;
        for i in 1..self.deadline.len() {
            if self.deadline[i] < self.deadline[best] {
                best = i;
            }
        }
        best
    }

    fn resolve(&mut self, node: usize) -> Result<f64> {
        let c = self.states[node].offset(self.problem);
        let solve = self.solvers[node].solve(&c)?;
        if solve.status == SolveStatus::MaxIterExceeded {
            return Err(Error::SolverFailure {
                node,
                iteration: self.fires,
                residual: solve.residual,
                tol: self.solve_tol,
            });
        }
        self.states[node].store_solve(&solve);
        self.last_cascade_solves.push(node);
        Ok(solve.residual)
    }

    fn enqueue_primal(&self, node: usize, queue: &mut VecDeque<Message>) {
        let nbhd = self.problem.neighborhoods();
        let y = &self.states[node].y;
        for &j in self.problem.graph().neighbors(node) {
            queue.push_back(Message::Primal {
                to: j,
                from_slot: nbhd.position(j, node) - 1,
                sender_block: y.block(nbhd, node).clone_owned(),
                receiver_block: y.block(nbhd, j).clone_owned(),
            });
        }
    }

    fn enqueue_duals(&self, node: usize, queue: &mut VecDeque<Message>) {
        let nbhd = self.problem.neighborhoods();
        for (p, &j) in self.problem.graph().neighbors(node).iter().enumerate() {
            let pair = &self.states[node].own_pairs[p];
            queue.push_back(Message::Dual {
                to: j,
                from_slot: nbhd.position(j, node) - 1,
                own: pair.own.clone(),
                neighbor: pair.neighbor.clone(),
            });
        }
    }

    fn deliver_store_only(&mut self, msg: Message) {
        match msg {
            Message::Primal { to, from_slot, sender_block, receiver_block } => {
                let buf = &mut self.states[to].recv_primal[from_slot];
                buf.sender_block.copy_from(&sender_block);
                buf.receiver_block.copy_from(&receiver_block);
            }
            Message::Dual { to, from_slot, own, neighbor } => {
                let pair = &mut self.states[to].recv_pairs[from_slot];
                pair.own.copy_from(&own);
                pair.neighbor.copy_from(&neighbor);
            }
        }
    }

    /// Advances one timer fire, draining the resulting message cascade, and
    /// returns the trace row for the new state.
    pub fn step(&mut self) -> Result<TraceRecord> {
        let node = self.next_to_fire();
        self.sim_time = self.deadline[node];
        self.deadline[node] =
            self.sim_time + rng::exponential(&mut self.timers[node], self.rate);
        self.fires += 1;
        self.fired.push(node);
        self.last_cascade_solves.clear();

        let mut queue = VecDeque::new();
        let mut worst_residual = self.resolve(node)?;
        self.enqueue_primal(node, &mut queue);
        self.states[node].ascend_own_pairs(self.problem);
        self.enqueue_duals(node, &mut queue);
        worst_residual = worst_residual.max(self.resolve(node)?);
        self.enqueue_primal(node, &mut queue);

        let mut cascade_size: usize = 1;
        while let Some(msg) = queue.pop_front() {
            self.messages += 1;
            cascade_size += 1;
            match msg {
                Message::Dual { to, from_slot, own, neighbor } => {
                    let pair = &mut self.states[to].recv_pairs[from_slot];
                    pair.own.copy_from(&own);
                    pair.neighbor.copy_from(&neighbor);
                    worst_residual = worst_residual.max(self.resolve(to)?);
                    self.enqueue_primal(to, &mut queue);
                }
                primal => self.deliver_store_only(primal),
            }
        }

        let dual_cost: f64 = self.states.iter().map(|s| s.last_value).sum();
        let disagreement = max_disagreement(self.problem, &self.states);
        let primal_err = self
            .x_star
            .as_ref()
            .map(|xs| (diagonal_primal(self.problem, &self.states) - xs).norm());

        Ok(TraceRecord {
            t: self.fires,
            dual_cost,
            primal_err,
            disagreement,
            messages: self.messages,
            solver_residual: worst_residual,
            sim_time: Some(self.sim_time),
            node_fired: Some(node),
            cascade_size: Some(cascade_size),
            t_over_n: Some(self.fires as f64 / self.problem.n() as f64),
        })
    }

    pub fn run(&mut self, horizon: Horizon) -> Result<Vec<TraceRecord>> {
        let mut records = Vec::new();
        loop {
            match horizon {
                Horizon::Fires(k) => {
                    if self.fires >= k {
                        return Ok(records);
                    }
                }
                Horizon::SimTime(limit) => {
                    if self.next_deadline() > limit {
                        return Ok(records);
                    }
                }
            }
            records.push(self.step()?);
        }
    }

    /// Largest gap between any stored solve and a fresh solve at the current
    /// duals. Zero (up to solver tolerance) whenever the engine is at rest.
    pub fn staleness(&mut self) -> Result<f64> {
        let mut worst = 0.0f64;
        for i in 0..self.problem.n() {
            let c = self.states[i].offset(self.problem);
            let fresh = self.solvers[i].solve(&c)?;
            worst = worst.max((&fresh.y - &self.states[i].y.values).amax());
        }
        Ok(worst)
    }
}
