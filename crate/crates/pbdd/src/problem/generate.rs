//! Scenario generators: random QPs, network utility maximization,
//! neighborhood resource allocation, and distributed least squares.
//!
//! Every generator records the seed it was given and stores a strictly
//! feasible witness point, so instances certify their own regularity and
//! reproduce bit for bit from `(scenario, seed)`.

use nalgebra::{DMatrix, DVector};
use rand_core::RngCore;
use std::collections::BTreeSet;

use super::{Objective, PartitionedProblem, PolyConstraint, Utility};
use crate::blockspace::{BlockLayout, BlockVector, Neighborhoods};
use crate::error::Error;
use crate::graph::Graph;
use crate::rng;
use crate::Result;

fn normal_matrix(rng: &mut impl RngCore, nrows: usize, ncols: usize) -> DMatrix<f64> {
    let data: Vec<f64> = (0..nrows * ncols).map(|_| rng::standard_normal(rng)).collect();
    DMatrix::from_vec(nrows, ncols, data)
}

fn uniform_vector(rng: &mut impl RngCore, n: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng::uniform(rng, lo, hi)))
}

/// Distribution parameters for [`generate_random_qp`]. Integer ranges are
/// inclusive on both ends.
#[derive(Debug, Clone)]
pub struct QpParams {
    /// Block size of each node's own variable.
    pub block_size: (usize, usize),
    /// Eigenvalues of each `Q_i`, drawn uniformly per node.
    pub eigenvalues: (f64, f64),
    /// Entries of each linear term `r_i`.
    pub linear: (f64, f64),
    /// Half-space rows per node.
    pub rows: (usize, usize),
}

impl Default for QpParams {
    fn default() -> Self {
        QpParams {
            block_size: (1, 4),
            eigenvalues: (1.0, 20.0),
            linear: (0.0, 100.0),
            rows: (1, 2),
        }
    }
}

/// Random quadratic instance on the given graph: per-node objectives
/// `y' Q_i y + r_i' y` with prescribed spectra, random half-space rows kept
/// strictly slack at a random interior witness, and a bounding box sized
/// from a level-set estimate so it stays inactive at the optimum.
pub fn generate_random_qp(graph: Graph, seed: u64, params: &QpParams) -> Result<PartitionedProblem> {
    let (m_lo, m_hi) = params.block_size;
    let (eig_lo, eig_hi) = params.eigenvalues;
    let (r_lo, r_hi) = params.linear;
    let (rows_lo, rows_hi) = params.rows;
    if m_lo == 0 || m_lo > m_hi || rows_lo > rows_hi {
        return Err(Error::InvalidParameter("qp size ranges must be nonempty".into()));
    }
    if !(eig_lo > 0.0 && eig_lo <= eig_hi) || r_lo > r_hi {
        return Err(Error::InvalidParameter("qp value ranges must be nonempty and positive".into()));
    }

    let n = graph.n();
    let mut stream = rng::stream(seed, 0);
    let sizes: Vec<usize> =
        (0..n).map(|_| rng::uniform_usize(&mut stream, m_lo, m_hi)).collect();
    let layout = BlockLayout::new(sizes)?;
    let nbhd = Neighborhoods::new(&graph, &layout)?;

    let witness = BlockVector {
        values: uniform_vector(&mut stream, layout.total(), 0.0, 0.5),
    };

    let mut objectives = Vec::with_capacity(n);
    let mut constraints = Vec::with_capacity(n);
    let mut min_eig = f64::INFINITY;
    let mut linear_norm_sum = 0.0;
    for i in 0..n {
        let d = nbhd.local_dim(i);
        let eigs = uniform_vector(&mut stream, d, eig_lo, eig_hi);
        min_eig = min_eig.min(eigs.min());
        let basis = normal_matrix(&mut stream, d, d).qr().q();
        let q = &basis * DMatrix::from_diagonal(&eigs) * basis.transpose();
        let q = (&q + q.transpose()) * 0.5;
        let r = uniform_vector(&mut stream, d, r_lo, r_hi);
        linear_norm_sum += r.norm();
        objectives.push(Objective::quadratic(q, r, 0.0)?);

        let m = rng::uniform_usize(&mut stream, rows_lo, rows_hi);
        let a = normal_matrix(&mut stream, m, d);
        let slack = uniform_vector(&mut stream, m, 0.1, 2.0);
        let b = &a * &nbhd.gather(&witness, i).values + slack;
        constraints.push((a, b));
    }

    // Level-set bound on the optimum: F(x) >= min_eig ||x||^2 - R ||x||,
    // so any x with F(x) <= F(witness) lies inside a computable ball.
    let level: f64 = (0..n)
        .map(|i| objectives[i].value(&nbhd.gather(&witness, i).values))
        .sum();
    let radius = (linear_norm_sum
        + (linear_norm_sum * linear_norm_sum + 4.0 * min_eig * level.max(0.0)).sqrt())
        / (2.0 * min_eig);
    let half_width = 10.0 * radius + 1.0;

    let constraints = constraints
        .into_iter()
        .enumerate()
        .map(|(i, (a, b))| {
            let d = nbhd.local_dim(i);
            PolyConstraint::new(
                a,
                b,
                DVector::from_element(d, -half_width),
                DVector::from_element(d, half_width),
            )
        })
        .collect::<Result<Vec<_>>>()?;

    PartitionedProblem::new(graph, layout, objectives, constraints, witness, "qp", seed)
}

/// One shared link in a rate-allocation network.
#[derive(Debug, Clone)]
pub struct NumLink {
    pub capacity: f64,
    /// Sources routing through this link.
    pub users: Vec<usize>,
}

/// Network utility maximization setup: sources share link capacities, each
/// maximizes a concave utility of its own rate inside `[rate_lo, rate_hi]`.
#[derive(Debug, Clone)]
pub struct NumParams {
    pub n_sources: usize,
    pub links: Vec<NumLink>,
    pub rate_lo: Vec<f64>,
    pub rate_hi: Vec<f64>,
    pub utilities: Vec<Utility>,
    /// Total regularization weight, split across the nodes that see each
    /// rate so the sum over the whole network is exactly `epsilon * x_j^2`.
    pub epsilon: f64,
}

impl NumParams {
    /// The five-source, three-link demonstration network: links carry
    /// sources `{0,1}`, `{1,2,3}`, and `{3,4}`, capacities are a fixed
    /// fraction of the sum of the users' target rates.
    pub fn five_source_demo(capacity_scale: f64, seed: u64) -> Self {
        let mut stream = rng::stream(seed, 0);
        let n = 5;
        let targets = uniform_vector(&mut stream, n, 1.0, 3.0);
        let weights = uniform_vector(&mut stream, n, 0.5, 2.0);
        let users: [&[usize]; 3] = [&[0, 1], &[1, 2, 3], &[3, 4]];
        let links = users
            .iter()
            .map(|&u| NumLink {
                capacity: capacity_scale * u.iter().map(|&j| targets[j]).sum::<f64>(),
                users: u.to_vec(),
            })
            .collect();
        let rate_hi = 2.0 * targets.max();
        NumParams {
            n_sources: n,
            links,
            rate_lo: vec![0.01; n],
            rate_hi: vec![rate_hi; n],
            utilities: (0..n)
                .map(|j| Utility::Quadratic { weight: weights[j], target: targets[j] })
                .collect(),
            epsilon: 0.05,
        }
    }
}

/// Builds the rate-allocation instance: the graph joins two sources iff
/// they share a link, each node's constraint stacks the capacity rows of
/// its own links over the neighborhood rate box, and the utility objective
/// carries the node's share of the global regularizer.
pub fn generate_num(params: &NumParams, seed: u64) -> Result<PartitionedProblem> {
    let n = params.n_sources;
    if n == 0 || params.links.is_empty() {
        return Err(Error::InvalidParameter("need at least one source and one link".into()));
    }
    if params.rate_lo.len() != n || params.rate_hi.len() != n || params.utilities.len() != n {
        return Err(Error::InvalidParameter("per-source parameter lengths must equal n_sources".into()));
    }
    if params.epsilon <= 0.0 {
        return Err(Error::InvalidParameter("regularization weight must be positive".into()));
    }
    for j in 0..n {
        if !(params.rate_lo[j] >= 0.0 && params.rate_lo[j] < params.rate_hi[j]) {
            return Err(Error::InvalidParameter(format!(
                "rate box of source {j} is empty or negative"
            )));
        }
    }
    for link in &params.links {
        if link.users.is_empty() {
            return Err(Error::InvalidParameter("every link needs at least one user".into()));
        }
        let mut seen = BTreeSet::new();
        for &u in &link.users {
            if u >= n {
                return Err(Error::InvalidParameter(format!("link user {u} out of range")));
            }
            if !seen.insert(u) {
                return Err(Error::InvalidParameter(format!("link lists user {u} twice")));
            }
        }
        if link.capacity <= 0.0 {
            return Err(Error::InvalidParameter("link capacities must be positive".into()));
        }
    }

    let mut edges = BTreeSet::new();
    for link in &params.links {
        for (k, &a) in link.users.iter().enumerate() {
            for &b in &link.users[k + 1..] {
                edges.insert((a.min(b), a.max(b)));
            }
        }
    }
    let edges: Vec<(usize, usize)> = edges.into_iter().collect();
    let graph = Graph::from_edges(n, &edges)?;
    let layout = BlockLayout::uniform(n, 1)?;
    let nbhd = Neighborhoods::new(&graph, &layout)?;

    // Witness: slide every rate the same relative distance t off its lower
    // bound, with t small enough that each link keeps half its spare
    // capacity. Interior exists iff lower bounds alone fit every link.
    let mut t = 0.5_f64;
    for link in &params.links {
        let floor: f64 = link.users.iter().map(|&j| params.rate_lo[j]).sum();
        let span: f64 = link.users.iter().map(|&j| params.rate_hi[j] - params.rate_lo[j]).sum();
        if link.capacity <= floor {
            return Err(Error::NoInteriorPoint(format!(
                "link capacity {} cannot fit the lower rate bounds (sum {floor})",
                link.capacity
            )));
        }
        t = t.min((link.capacity - floor) / (2.0 * span));
    }
    let witness = BlockVector {
        values: DVector::from_iterator(
            n,
            (0..n).map(|j| params.rate_lo[j] + t * (params.rate_hi[j] - params.rate_lo[j])),
        ),
    };

    let mut objectives = Vec::with_capacity(n);
    let mut constraints = Vec::with_capacity(n);
    for i in 0..n {
        let members = nbhd.members(i);
        let d = members.len();
        let reg = DVector::from_iterator(
            d,
            members.iter().map(|&j| params.epsilon / (graph.degree(j) + 1) as f64),
        );
        objectives.push(Objective::regularized_utility(
            params.utilities[i].clone(),
            reg,
            params.rate_lo[i],
            params.rate_hi[i],
        )?);

        let own_links: Vec<&NumLink> =
            params.links.iter().filter(|l| l.users.contains(&i)).collect();
        let mut a = DMatrix::zeros(own_links.len(), d);
        let mut b = DVector::zeros(own_links.len());
        for (row, link) in own_links.iter().enumerate() {
            for &j in &link.users {
                let slot = nbhd
                    .try_position(i, j)
                    .expect("link users are pairwise adjacent by construction");
                a[(row, slot)] = 1.0;
            }
            b[row] = link.capacity;
        }
        let lo = DVector::from_iterator(d, members.iter().map(|&j| params.rate_lo[j]));
        let hi = DVector::from_iterator(d, members.iter().map(|&j| params.rate_hi[j]));
        constraints.push(PolyConstraint::new(a, b, lo, hi)?);
    }

    PartitionedProblem::new(graph, layout, objectives, constraints, witness, "num", seed)
}

/// Resource-allocation instance on an explicit graph: every node caps the
/// total consumption of its closed neighborhood by `capacities[i]` and
/// maximizes a concave utility of its own share.
pub fn generate_resource_allocation(
    graph: Graph,
    capacities: &[f64],
    utilities: &[Utility],
    epsilon: f64,
    seed: u64,
) -> Result<PartitionedProblem> {
    let n = graph.n();
    if capacities.len() != n || utilities.len() != n {
        return Err(Error::InvalidParameter("per-node parameter lengths must equal n".into()));
    }
    if capacities.iter().any(|&r| r <= 0.0) {
        return Err(Error::InvalidParameter("capacities must be positive".into()));
    }
    if epsilon <= 0.0 {
        return Err(Error::InvalidParameter("regularization weight must be positive".into()));
    }

    let layout = BlockLayout::uniform(n, 1)?;
    let nbhd = Neighborhoods::new(&graph, &layout)?;

    let min_cap = capacities.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_cap = capacities.iter().cloned().fold(0.0, f64::max);
    let max_closed = (0..n).map(|i| graph.degree(i) + 1).max().unwrap() as f64;
    let share = 0.5 * min_cap / max_closed;
    let needs_positive_rates =
        utilities.iter().any(|u| matches!(u, Utility::Log { .. }));
    let rate_lo = if needs_positive_rates { 0.5 * share } else { 0.0 };
    let witness = BlockVector {
        values: DVector::from_element(n, share),
    };

    let mut objectives = Vec::with_capacity(n);
    let mut constraints = Vec::with_capacity(n);
    for i in 0..n {
        let members = nbhd.members(i);
        let d = members.len();
        let reg = DVector::from_iterator(
            d,
            members.iter().map(|&j| epsilon / (graph.degree(j) + 1) as f64),
        );
        objectives.push(Objective::regularized_utility(
            utilities[i].clone(),
            reg,
            rate_lo,
            max_cap,
        )?);
        constraints.push(PolyConstraint::new(
            DMatrix::from_element(1, d, 1.0),
            DVector::from_element(1, capacities[i]),
            DVector::from_element(d, rate_lo),
            DVector::from_element(d, max_cap),
        )?);
    }

    PartitionedProblem::new(graph, layout, objectives, constraints, witness, "resalloc", seed)
}

/// Distributed least-squares instance: node i measures
/// `z_i ~ sum_j H_ij x_j` over its closed neighborhood and minimizes the
/// squared residual plus its share of a Tikhonov term `epsilon ||x||^2`.
/// `h_blocks[i]` lists `H_ij` in slot order (self first, then neighbors
/// ascending). With `epsilon = 0` every per-node Gram matrix must be
/// nonsingular, otherwise the node is rejected.
pub fn generate_wls(
    graph: Graph,
    layout: BlockLayout,
    h_blocks: Vec<Vec<DMatrix<f64>>>,
    z: Vec<DVector<f64>>,
    epsilon: f64,
    box_radius: f64,
    seed: u64,
) -> Result<PartitionedProblem> {
    let n = graph.n();
    if h_blocks.len() != n || z.len() != n {
        return Err(Error::InvalidParameter("need one measurement per node".into()));
    }
    if epsilon < 0.0 || box_radius <= 0.0 {
        return Err(Error::InvalidParameter(
            "tikhonov weight must be nonnegative and the box radius positive".into(),
        ));
    }
    let nbhd = Neighborhoods::new(&graph, &layout)?;

    let mut objectives = Vec::with_capacity(n);
    let mut constraints = Vec::with_capacity(n);
    for i in 0..n {
        let members = nbhd.members(i);
        let d = nbhd.local_dim(i);
        let p = z[i].len();
        if p == 0 {
            return Err(Error::InvalidParameter(format!("node {i} has an empty measurement")));
        }
        if h_blocks[i].len() != members.len() {
            return Err(Error::InvalidParameter(format!(
                "node {i} needs one H block per closed-neighborhood member"
            )));
        }
        let mut h = DMatrix::zeros(p, d);
        for (k, &j) in members.iter().enumerate() {
            let block = &h_blocks[i][k];
            if block.nrows() != p || block.ncols() != layout.size(j) {
                return Err(Error::InvalidParameter(format!(
                    "H block ({i}, {j}) has the wrong shape"
                )));
            }
            h.view_mut((0, nbhd.slot(i, j).start), (p, layout.size(j)))
                .copy_from(block);
        }

        let gram = h.transpose() * &h;
        if epsilon == 0.0 {
            let eigs = gram.clone().symmetric_eigenvalues();
            if eigs.min() <= 1e-10 * eigs.max().max(1.0) {
                return Err(Error::SingularGram { node: i });
            }
        }
        let mut q = gram;
        for &j in members {
            let weight = epsilon / (graph.degree(j) + 1) as f64;
            for idx in nbhd.slot(i, j) {
                q[(idx, idx)] += weight;
            }
        }
        let q = (&q + q.transpose()) * 0.5;
        let r = -2.0 * h.transpose() * &z[i];
        objectives.push(Objective::quadratic(q, r, z[i].dot(&z[i]))?);
        constraints.push(PolyConstraint::box_only(
            DVector::from_element(d, -box_radius),
            DVector::from_element(d, box_radius),
        )?);
    }

    let witness = BlockVector::zeros(&layout);
    PartitionedProblem::new(graph, layout, objectives, constraints, witness, "wls", seed)
}

/// Random least-squares instance: block sizes in `{1, 2}`, one standard
/// normal measurement row per local dimension, targets uniform in
/// `[-5, 5]`.
pub fn random_wls(
    graph: Graph,
    seed: u64,
    epsilon: f64,
    box_radius: f64,
) -> Result<PartitionedProblem> {
    let n = graph.n();
    let mut stream = rng::stream(seed, 0);
    let sizes: Vec<usize> = (0..n).map(|_| rng::uniform_usize(&mut stream, 1, 2)).collect();
    let layout = BlockLayout::new(sizes)?;
    let nbhd = Neighborhoods::new(&graph, &layout)?;

    let mut h_blocks = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    for i in 0..n {
        let p = nbhd.local_dim(i);
        let blocks: Vec<DMatrix<f64>> = nbhd
            .members(i)
            .iter()
            .map(|&j| normal_matrix(&mut stream, p, layout.size(j)))
            .collect();
        h_blocks.push(blocks);
        z.push(uniform_vector(&mut stream, p, -5.0, 5.0));
    }
    generate_wls(graph, layout, h_blocks, z, epsilon, box_radius, seed)
}
