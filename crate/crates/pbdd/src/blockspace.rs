//! Block layouts and local coordinate spaces.
//!
//! The global variable `x` in `R^N` splits into `n` blocks, block `i` of
//! size `m_i`. Node `i` works in its *local* space: the stacked blocks of
//! its closed neighbourhood, own block first, then neighbours in ascending
//! node order. That ordering is the one canonical convention used
//! everywhere: local vectors, constraint rows, multiplier slots.

use nalgebra::{DVector, DVectorView};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::graph::Graph;
use crate::Result;

/// Block sizes and offsets of the global space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LayoutFile", into = "LayoutFile")]
pub struct BlockLayout {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
}

#[derive(Serialize, Deserialize)]
struct LayoutFile {
    sizes: Vec<usize>,
}

impl TryFrom<LayoutFile> for BlockLayout {
    type Error = Error;
    fn try_from(f: LayoutFile) -> Result<Self> {
        BlockLayout::new(f.sizes)
    }
}

impl From<BlockLayout> for LayoutFile {
    fn from(l: BlockLayout) -> Self {
        LayoutFile { sizes: l.sizes }
    }
}

impl BlockLayout {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::InvalidParameter("layout needs at least one block".into()));
        }
        if sizes.contains(&0) {
            return Err(Error::InvalidParameter("zero-sized block".into()));
        }
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut total = 0;
        for &m in &sizes {
            offsets.push(total);
            total += m;
        }
        Ok(BlockLayout { sizes, offsets, total })
    }

    /// All blocks of size one, the common case for scalar rates.
    pub fn uniform(n: usize, m: usize) -> Result<Self> {
        Self::new(vec![m; n])
    }

    pub fn n_blocks(&self) -> usize {
        self.sizes.len()
    }

    pub fn size(&self, i: usize) -> usize {
        self.sizes[i]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    /// Index range of block `i` inside the global vector.
    pub fn block_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i] + self.sizes[i]
    }

    pub fn total(&self) -> usize {
        self.total
    }
}

/// A vector in the global space `R^N`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVector {
    pub values: DVector<f64>,
}

impl BlockVector {
    pub fn zeros(layout: &BlockLayout) -> Self {
        BlockVector { values: DVector::zeros(layout.total()) }
    }

    pub fn from_vec(layout: &BlockLayout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.total() {
            return Err(Error::InvalidParameter(format!(
                "vector length {} does not match layout total {}",
                values.len(),
                layout.total()
            )));
        }
        Ok(BlockVector { values: DVector::from_vec(values) })
    }

    pub fn block<'a>(&'a self, layout: &BlockLayout, i: usize) -> DVectorView<'a, f64> {
        self.values.rows(layout.offset(i), layout.size(i))
    }
}

/// A vector in node `i`'s local space (own block first, neighbours
/// ascending).
#[derive(Debug, Clone, PartialEq)]
pub struct LocalVector {
    pub owner: usize,
    pub values: DVector<f64>,
}

impl LocalVector {
    pub fn zeros(nbhd: &Neighborhoods, owner: usize) -> Self {
        LocalVector { owner, values: DVector::zeros(nbhd.local_dim(owner)) }
    }

    /// The sub-vector sitting in the slot of block `member`.
    pub fn block<'a>(&'a self, nbhd: &Neighborhoods, member: usize) -> DVectorView<'a, f64> {
        let r = nbhd.slot(self.owner, member);
        self.values.rows(r.start, r.len())
    }
}

/// Closed neighbourhoods of a (graph, layout) pair with precomputed slot
/// tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhoods {
    layout: BlockLayout,
    /// `members[i]` = `[i, N_i ascending]`.
    members: Vec<Vec<usize>>,
    /// `slot_offsets[i][k]` = start of `members[i][k]`'s slot in local coords.
    slot_offsets: Vec<Vec<usize>>,
    local_dims: Vec<usize>,
}

impl Neighborhoods {
    pub fn new(graph: &Graph, layout: &BlockLayout) -> Result<Self> {
        if graph.n() != layout.n_blocks() {
            return Err(Error::InvalidParameter(format!(
                "graph has {} nodes but layout has {} blocks",
                graph.n(),
                layout.n_blocks()
            )));
        }
        let n = graph.n();
        let mut members = Vec::with_capacity(n);
        let mut slot_offsets = Vec::with_capacity(n);
        let mut local_dims = Vec::with_capacity(n);
        for i in 0..n {
            let mut mem = Vec::with_capacity(1 + graph.degree(i));
            mem.push(i);
            mem.extend_from_slice(graph.neighbors(i));
            let mut offs = Vec::with_capacity(mem.len());
            let mut d = 0;
            for &j in &mem {
                offs.push(d);
                d += layout.size(j);
            }
            members.push(mem);
            slot_offsets.push(offs);
            local_dims.push(d);
        }
        Ok(Neighborhoods { layout: layout.clone(), members, slot_offsets, local_dims })
    }

    pub fn n(&self) -> usize {
        self.members.len()
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    /// Closed neighbourhood of `i`: `[i, N_i ascending]`.
    pub fn members(&self, i: usize) -> &[usize] {
        &self.members[i]
    }

    /// Dimension of node `i`'s local space.
    pub fn local_dim(&self, i: usize) -> usize {
        self.local_dims[i]
    }

    /// Position of block `member` within `members(i)`. Panics if `member`
    /// is not in the closed neighbourhood.
    pub fn position(&self, i: usize, member: usize) -> usize {
        self.try_position(i, member)
            .unwrap_or_else(|| panic!("block {member} is not in the closed neighbourhood of {i}"))
    }

    pub fn try_position(&self, i: usize, member: usize) -> Option<usize> {
        if member == i {
            return Some(0);
        }
        self.members[i][1..]
            .binary_search(&member)
            .ok()
            .map(|k| k + 1)
    }

    /// Slot of block `member` inside node `i`'s local coordinates.
    pub fn slot(&self, i: usize, member: usize) -> std::ops::Range<usize> {
        let k = self.position(i, member);
        let start = self.slot_offsets[i][k];
        start..start + self.layout.size(member)
    }

    /// Copies the closed-neighbourhood blocks of `x` into a local vector.
    pub fn gather(&self, x: &BlockVector, i: usize) -> LocalVector {
        let mut values = DVector::zeros(self.local_dims[i]);
        for (k, &j) in self.members[i].iter().enumerate() {
            let start = self.slot_offsets[i][k];
            values
                .rows_mut(start, self.layout.size(j))
                .copy_from(&x.block(&self.layout, j));
        }
        LocalVector { owner: i, values }
    }

    /// Writes every block of a local vector back into global coordinates,
    /// overwriting the destination blocks.
    pub fn scatter(&self, local: &LocalVector, x: &mut BlockVector) {
        let i = local.owner;
        for (k, &j) in self.members[i].iter().enumerate() {
            let start = self.slot_offsets[i][k];
            x.values
                .rows_mut(self.layout.offset(j), self.layout.size(j))
                .copy_from(&local.values.rows(start, self.layout.size(j)));
        }
    }

    /// Accumulates a local vector into global coordinates (used to assemble
    /// aggregated gradients).
    pub fn scatter_add(&self, owner: usize, local: &DVector<f64>, x: &mut DVector<f64>) {
        debug_assert_eq!(local.len(), self.local_dims[owner]);
        for (k, &j) in self.members[owner].iter().enumerate() {
            let start = self.slot_offsets[owner][k];
            let mut dst = x.rows_mut(self.layout.offset(j), self.layout.size(j));
            dst += local.rows(start, self.layout.size(j));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3_layout() -> (Graph, BlockLayout, Neighborhoods) {
        let g = Graph::path(3).unwrap();
        let layout = BlockLayout::new(vec![2, 1, 1]).unwrap();
        let nbhd = Neighborhoods::new(&g, &layout).unwrap();
        (g, layout, nbhd)
    }

    #[test]
    fn gather_orders_own_block_first() {
        let (_, layout, nbhd) = path3_layout();
        let x = BlockVector::from_vec(&layout, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let local = nbhd.gather(&x, 1);
        assert_eq!(local.values.as_slice(), &[3.0, 1.0, 2.0, 4.0]);
        assert_eq!(nbhd.members(1), &[1, 0, 2]);
    }

    #[test]
    fn slots_partition_local_space() {
        let g = Graph::erdos_renyi(8, 0.5, 21).unwrap();
        let layout = BlockLayout::new((0..8).map(|i| 1 + i % 3).collect()).unwrap();
        let nbhd = Neighborhoods::new(&g, &layout).unwrap();
        for i in 0..8 {
            let mut covered = vec![false; nbhd.local_dim(i)];
            for &j in nbhd.members(i) {
                for k in nbhd.slot(i, j) {
                    assert!(!covered[k], "slot overlap at node {i}, coord {k}");
                    covered[k] = true;
                }
            }
            assert!(covered.iter().all(|&c| c), "slots do not cover node {i}");
        }
    }

    #[test]
    fn gather_scatter_round_trip() {
        let (_, layout, nbhd) = path3_layout();
        let x = BlockVector::from_vec(&layout, vec![5.0, -1.0, 2.0, 7.0]).unwrap();
        let mut y = BlockVector::zeros(&layout);
        // Node 1's closed neighbourhood covers all three blocks here.
        let local = nbhd.gather(&x, 1);
        nbhd.scatter(&local, &mut y);
        assert_eq!(x, y);
    }

    #[test]
    fn scatter_add_accumulates() {
        let (_, layout, nbhd) = path3_layout();
        let mut acc = DVector::zeros(layout.total());
        let ones = DVector::from_element(nbhd.local_dim(0), 1.0);
        nbhd.scatter_add(0, &ones, &mut acc);
        nbhd.scatter_add(0, &ones, &mut acc);
        // Node 0 touches blocks 0 and 1 only.
        assert_eq!(acc.as_slice(), &[2.0, 2.0, 2.0, 0.0]);
    }

    #[test]
    fn position_rejects_strangers() {
        let (_, _, nbhd) = path3_layout();
        assert_eq!(nbhd.try_position(0, 2), None);
        assert_eq!(nbhd.position(0, 1), 1);
    }

    #[test]
    fn layout_rejects_zero_blocks() {
        assert!(BlockLayout::new(vec![2, 0, 1]).is_err());
        assert!(BlockLayout::new(vec![]).is_err());
    }

    #[test]
    fn layout_offsets() {
        let l = BlockLayout::new(vec![2, 3, 1]).unwrap();
        assert_eq!(l.block_range(1), 2..5);
        assert_eq!(l.total(), 6);
    }
}
