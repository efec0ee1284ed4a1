//! Edge multiplier pairs and the linear offsets they induce.
//!
//! Every directed neighbour relation `(i, j)` owns one pair of multipliers:
//! one on block `i` (the owner's block) and one on block `j`. They price the
//! two coherence constraints `x_i^(i) = x_i^(j)` and `x_j^(i) = x_j^(j)`
//! between node `i`'s local copy and node `j`'s.
//!
//! Collecting all multiplier terms of the Lagrangian that touch node `i`'s
//! local variables gives a linear offset `c^(i)` over its local space:
//!
//! ```text
//!   own slot:        sum_{j in N_i} (pair(i,j).own - pair(j,i).neighbor)
//!   slot of j:       pair(i,j).neighbor - pair(j,i).own
//! ```
//!
//! Node `i`'s dual subproblem is then `min f_i(y) + c^(i)' y` over `X_i`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::blockspace::Neighborhoods;
use crate::error::Error;
use crate::Result;

/// The two multiplier vectors owned by the directed relation `(owner,
/// neighbor)`: `own` prices the owner's block, `neighbor` the neighbour's.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeDualPair {
    pub own: DVector<f64>,
    pub neighbor: DVector<f64>,
}

impl EdgeDualPair {
    pub fn zeros(own_dim: usize, neighbor_dim: usize) -> Self {
        EdgeDualPair { own: DVector::zeros(own_dim), neighbor: DVector::zeros(neighbor_dim) }
    }
}

/// All multiplier pairs of a problem: `pairs[i][k]` belongs to node `i` and
/// its `k`-th neighbour in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pairs: Vec<Vec<EdgeDualPair>>,
}

#[derive(Serialize, Deserialize)]
struct DualPairFile {
    owner: usize,
    neighbor: usize,
    on_owner: Vec<f64>,
    on_neighbor: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DualFile {
    format: String,
    pairs: Vec<DualPairFile>,
}

const DUAL_FORMAT: &str = "pbdd-duals-v1";

impl DualState {
    pub fn zeros(nbhd: &Neighborhoods) -> Self {
        let layout = nbhd.layout();
        let pairs = (0..nbhd.n())
            .map(|i| {
                nbhd.members(i)[1..]
                    .iter()
                    .map(|&j| EdgeDualPair::zeros(layout.size(i), layout.size(j)))
                    .collect()
            })
            .collect();
        DualState { pairs }
    }

    pub fn n(&self) -> usize {
        self.pairs.len()
    }

    /// Pairs owned by node `i`, in ascending neighbour order.
    pub fn pairs_of(&self, i: usize) -> &[EdgeDualPair] {
        &self.pairs[i]
    }

    pub fn pairs_of_mut(&mut self, i: usize) -> &mut [EdgeDualPair] {
        &mut self.pairs[i]
    }

    pub fn pair(&self, nbhd: &Neighborhoods, i: usize, j: usize) -> &EdgeDualPair {
        &self.pairs[i][nbhd.position(i, j) - 1]
    }

    pub fn pair_mut(&mut self, nbhd: &Neighborhoods, i: usize, j: usize) -> &mut EdgeDualPair {
        &mut self.pairs[i][nbhd.position(i, j) - 1]
    }

    /// The linear offset `c^(i)` of node `i`'s dual subproblem.
    pub fn offset(&self, nbhd: &Neighborhoods, i: usize) -> DVector<f64> {
        let layout = nbhd.layout();
        let mut c = DVector::zeros(nbhd.local_dim(i));
        for (k, &j) in nbhd.members(i)[1..].iter().enumerate() {
            let mine = &self.pairs[i][k];
            let theirs = &self.pairs[j][nbhd.position(j, i) - 1];
            {
                let mut own_slot = c.rows_mut(0, layout.size(i));
                own_slot += &mine.own;
                own_slot -= &theirs.neighbor;
            }
            let slot = nbhd.slot(i, j);
            let mut j_slot = c.rows_mut(slot.start, slot.len());
            j_slot += &mine.neighbor;
            j_slot -= &theirs.own;
        }
        c
    }

    /// Total multiplier dimension: `sum_i sum_{j in N_i} (m_i + m_j)`.
    pub fn dim(nbhd: &Neighborhoods) -> usize {
        let layout = nbhd.layout();
        (0..nbhd.n())
            .map(|i| {
                nbhd.members(i)[1..]
                    .iter()
                    .map(|&j| layout.size(i) + layout.size(j))
                    .sum::<usize>()
            })
            .sum()
    }

    /// Dimension of node `i`'s multiplier block.
    pub fn block_dim(&self, i: usize) -> usize {
        self.pairs[i].iter().map(|p| p.own.len() + p.neighbor.len()).sum()
    }

    /// Stacks all pairs into one vector: nodes ascending, neighbours
    /// ascending, `own` before `neighbor`.
    pub fn to_stacked(&self) -> DVector<f64> {
        let dim: usize = (0..self.n()).map(|i| self.block_dim(i)).sum();
        let mut v = DVector::zeros(dim);
        let mut at = 0;
        for pairs in &self.pairs {
            for p in pairs {
                v.rows_mut(at, p.own.len()).copy_from(&p.own);
                at += p.own.len();
                v.rows_mut(at, p.neighbor.len()).copy_from(&p.neighbor);
                at += p.neighbor.len();
            }
        }
        v
    }

    pub fn from_stacked(nbhd: &Neighborhoods, v: &DVector<f64>) -> Result<Self> {
        if v.len() != Self::dim(nbhd) {
            return Err(Error::InvalidParameter(format!(
                "stacked dual vector has length {}, expected {}",
                v.len(),
                Self::dim(nbhd)
            )));
        }
        let mut state = Self::zeros(nbhd);
        let mut at = 0;
        for i in 0..state.n() {
            for p in &mut state.pairs[i] {
                p.own.copy_from(&v.rows(at, p.own.len()));
                at += p.own.len();
                p.neighbor.copy_from(&v.rows(at, p.neighbor.len()));
                at += p.neighbor.len();
            }
        }
        Ok(state)
    }

    /// Largest absolute entry difference against another state with the
    /// same shape.
    pub fn max_abs_diff(&self, other: &DualState) -> f64 {
        let mut worst = 0.0_f64;
        for (a_pairs, b_pairs) in self.pairs.iter().zip(&other.pairs) {
            for (a, b) in a_pairs.iter().zip(b_pairs) {
                worst = worst.max((&a.own - &b.own).amax());
                worst = worst.max((&a.neighbor - &b.neighbor).amax());
            }
        }
        worst
    }

    pub fn to_json(&self, nbhd: &Neighborhoods) -> String {
        let mut pairs = Vec::new();
        for i in 0..self.n() {
            for (k, &j) in nbhd.members(i)[1..].iter().enumerate() {
                let p = &self.pairs[i][k];
                pairs.push(DualPairFile {
                    owner: i,
                    neighbor: j,
                    on_owner: p.own.iter().copied().collect(),
                    on_neighbor: p.neighbor.iter().copied().collect(),
                });
            }
        }
        serde_json::to_string_pretty(&DualFile { format: DUAL_FORMAT.into(), pairs })
            .expect("dual serialization cannot fail")
    }

    pub fn from_json(nbhd: &Neighborhoods, text: &str) -> Result<Self> {
        let file: DualFile = serde_json::from_str(text)?;
        if file.format != DUAL_FORMAT {
            return Err(Error::InvalidData(format!(
                "unsupported dual format {:?}, expected {DUAL_FORMAT:?}",
                file.format
            )));
        }
        let layout = nbhd.layout();
        let mut state = Self::zeros(nbhd);
        let mut seen = std::collections::HashSet::new();
        for pf in file.pairs {
            let (i, j) = (pf.owner, pf.neighbor);
            if i >= nbhd.n() || nbhd.try_position(i, j).filter(|&k| k > 0).is_none() {
                return Err(Error::InvalidData(format!("({i}, {j}) is not a neighbour relation")));
            }
            if pf.on_owner.len() != layout.size(i) || pf.on_neighbor.len() != layout.size(j) {
                return Err(Error::InvalidData(format!("pair ({i}, {j}) has wrong block sizes")));
            }
            if !seen.insert((i, j)) {
                return Err(Error::InvalidData(format!("duplicate pair ({i}, {j})")));
            }
            let p = state.pair_mut(nbhd, i, j);
            p.own = DVector::from_vec(pf.on_owner);
            p.neighbor = DVector::from_vec(pf.on_neighbor);
        }
        Ok(state)
    }
}
