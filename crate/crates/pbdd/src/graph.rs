//! Undirected communication graphs.
//!
//! Nodes are `0..n`. Graphs are simple (no self-loops, no parallel edges)
//! and every constructor checks connectivity, since the decomposition
//! assumes a connected network. Random graphs come from the G(n, p) model
//! with deterministic resampling until a connected draw appears.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::rng;
use crate::Result;

/// How many disconnected G(n, p) draws to tolerate before giving up.
/// Generous: for p safely above the connectivity threshold a handful of
/// retries is already rare, and failure then signals p too small for n.
pub const GNP_RETRY_LIMIT: usize = 10_000;

/// An undirected, connected, simple graph with sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    adj: Vec<Vec<usize>>,
}

/// Serialized form: `{"n": 4, "edges": [[0,1],[1,2],...]}` with each edge
/// stored as `[i, j]`, `i < j`, sorted lexicographically.
#[derive(Debug, Serialize, Deserialize)]
struct GraphFile {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Builds a graph from undirected edges. Accepts `n >= 1`; a single
    /// node with no edges counts as connected.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("graph needs at least one node".into()));
        }
        let mut adj = vec![Vec::new(); n];
        let mut seen = std::collections::HashSet::new();
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidParameter(format!(
                    "edge ({a}, {b}) out of range for n = {n}"
                )));
            }
            if a == b {
                return Err(Error::InvalidParameter(format!("self-loop at node {a}")));
            }
            let key = (a.min(b), a.max(b));
            if !seen.insert(key) {
                continue; // ignore duplicates
            }
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        let g = Graph { n, adj };
        if !g.is_connected() {
            return Err(Error::Disconnected(format!("{n} nodes, {} edges", seen.len())));
        }
        Ok(g)
    }

    /// G(n, p): every unordered pair becomes an edge with probability `p`,
    /// resampling from the same stream until the draw is connected.
    /// Identical `(n, p, seed)` always yield the identical graph.
    pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!("erdos_renyi needs n >= 2, got {n}")));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("edge probability {p} outside [0, 1]")));
        }
        let mut rng = rng::stream(seed, 0);
        for _ in 0..GNP_RETRY_LIMIT {
            let mut edges = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng::unit_f64(&mut rng) < p {
                        edges.push((i, j));
                    }
                }
            }
            let mut adj = vec![Vec::new(); n];
            for &(i, j) in &edges {
                adj[i].push(j);
                adj[j].push(i);
            }
            let g = Graph { n, adj };
            if g.is_connected() {
                return Ok(g);
            }
        }
        Err(Error::RetryLimitExceeded { n, p, attempts: GNP_RETRY_LIMIT })
    }

    /// Path 0 - 1 - ... - (n-1).
    pub fn path(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!("path needs n >= 2, got {n}")));
        }
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
        Self::from_edges(n, &edges)
    }

    /// Complete graph on `n` nodes.
    pub fn complete(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!("complete needs n >= 2, got {n}")));
        }
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                edges.push((i, j));
            }
        }
        Self::from_edges(n, &edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Neighbours of `i`, sorted ascending.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges as `(i, j)` with `i < j`, sorted lexicographically.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for i in 0..self.n {
            for &j in &self.adj[i] {
                if i < j {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i].binary_search(&j).is_ok()
    }

    /// Breadth-first reachability from node 0.
    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return false;
        }
        let mut seen = vec![false; self.n];
        let mut queue = std::collections::VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.n
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&GraphFile { n: self.n, edges: self.edges() })
            .expect("graph serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(text)?;
        Self::from_edges(file.n, &file.edges)
    }
}

impl Serialize for Graph {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GraphFile { n: self.n, edges: self.edges() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Graph {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let file = GraphFile::deserialize(d)?;
        Graph::from_edges(file.n, &file.edges).map_err(serde::de::Error::custom)
    }
}
