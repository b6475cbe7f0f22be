//! Graphs in compressed sparse row form, per-node data and partition-local
//! views.
//!
//! Row `v` of a [`Graph`] lists `N(v)`: the sources `u` of every edge
//! `u -> v`. Message passing aggregates over a row, so the same layout
//! serves neighbour sampling, edge weighting and partitioning.

mod dataset;
mod local;
mod validate;

pub use dataset::{Dataset, DatasetMeta};
pub use local::{induce_local_partition, LocalPartition};
pub use validate::validate;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = u32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<NodeId>,
    undirected: bool,
}

impl Graph {
    /// Build a graph from `(src, dst)` pairs.
    ///
    /// Self-loops are dropped and duplicate entries collapsed. When
    /// `undirected` is set every pair is inserted in both directions.
    pub fn from_edges<I>(num_nodes: usize, edges: I, undirected: bool) -> Result<Self>
    where
        I: IntoIterator<Item = (NodeId, NodeId)>,
    {
        let mut pairs: Vec<(NodeId, NodeId)> = Vec::new();
        for (src, dst) in edges {
            if src as usize >= num_nodes || dst as usize >= num_nodes {
                return Err(Error::invalid(format!(
                    "edge ({src}, {dst}) references a node >= num_nodes ({num_nodes})"
                )));
            }
            if src == dst {
                continue;
            }
            // stored as (row, entry) = (dst, src)
            pairs.push((dst, src));
            if undirected {
                pairs.push((src, dst));
            }
        }
        pairs.sort_unstable();
        pairs.dedup();

        let mut offsets = vec![0usize; num_nodes + 1];
        for &(row, _) in &pairs {
            offsets[row as usize + 1] += 1;
        }
        for i in 0..num_nodes {
            offsets[i + 1] += offsets[i];
        }
        let neighbors = pairs.into_iter().map(|(_, src)| src).collect();
        Ok(Graph {
            offsets,
            neighbors,
            undirected,
        })
    }

    /// Wrap raw CSR arrays, checking every structural invariant.
    pub fn from_csr(offsets: Vec<usize>, neighbors: Vec<NodeId>, undirected: bool) -> Result<Self> {
        let g = Self::from_csr_unchecked(offsets, neighbors, undirected);
        match g.violations().into_iter().next() {
            Some(v) => Err(Error::Invalid(v)),
            None => Ok(g),
        }
    }

    /// Wrap raw CSR arrays without validation. Accessors may panic if the
    /// arrays are inconsistent; use [`Graph::violations`] to inspect them.
    pub fn from_csr_unchecked(offsets: Vec<usize>, neighbors: Vec<NodeId>, undirected: bool) -> Self {
        Graph {
            offsets,
            neighbors,
            undirected,
        }
    }

    /// A graph with `n` nodes and no edges.
    pub fn empty(n: usize, undirected: bool) -> Self {
        Graph {
            offsets: vec![0; n + 1],
            neighbors: Vec::new(),
            undirected,
        }
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    /// Number of directed adjacency entries.
    #[inline]
    pub fn num_edges(&self) -> usize {
        self.neighbors.len()
    }

    #[inline]
    pub fn is_undirected(&self) -> bool {
        self.undirected
    }

    #[inline]
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// The flat neighbour array; entry `i` of row `v` lives at
    /// `offsets[v] + i`.
    #[inline]
    pub fn adjacency(&self) -> &[NodeId] {
        &self.neighbors
    }

    #[inline]
    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        let v = v as usize;
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    #[inline]
    pub fn degree(&self, v: NodeId) -> usize {
        let v = v as usize;
        self.offsets[v + 1] - self.offsets[v]
    }

    #[inline]
    pub fn entry_range(&self, v: NodeId) -> std::ops::Range<usize> {
        let v = v as usize;
        self.offsets[v]..self.offsets[v + 1]
    }

    /// Index into [`Graph::adjacency`] of the entry `src -> dst`, if present.
    pub fn find_entry(&self, dst: NodeId, src: NodeId) -> Option<usize> {
        let range = self.entry_range(dst);
        let start = range.start;
        self.neighbors[range].binary_search(&src).ok().map(|i| start + i)
    }

    pub fn has_edge(&self, src: NodeId, dst: NodeId) -> bool {
        self.find_entry(dst, src).is_some()
    }

    /// All entries as `(src, dst)` pairs in CSR order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        (0..self.num_nodes() as NodeId).flat_map(move |v| self.neighbors(v).iter().map(move |&u| (u, v)))
    }

    /// Structural invariant violations, empty when the graph is well formed.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.offsets.is_empty() {
            out.push("offsets is empty".to_string());
            return out;
        }
        if self.offsets[0] != 0 {
            out.push(format!("offsets[0] = {} (expected 0)", self.offsets[0]));
        }
        if let Some(i) = self.offsets.windows(2).position(|w| w[0] > w[1]) {
            out.push(format!("offsets decrease at index {i}"));
            return out;
        }
        let n = self.num_nodes();
        if self.offsets[n] != self.neighbors.len() {
            out.push(format!(
                "offsets[num_nodes] = {} but there are {} neighbour entries",
                self.offsets[n],
                self.neighbors.len()
            ));
            return out;
        }
        for v in 0..n as NodeId {
            let row = self.neighbors(v);
            if let Some(&u) = row.iter().find(|&&u| u as usize >= n) {
                out.push(format!("node {v} has out-of-range neighbour {u}"));
            }
            if row.contains(&v) {
                out.push(format!("self-loop on node {v}"));
            }
            if row.windows(2).any(|w| w[0] >= w[1]) {
                out.push(format!("row {v} is not sorted and duplicate-free"));
            }
        }
        if self.undirected && out.is_empty() {
            for (u, v) in self.edges() {
                if !self.has_edge(v, u) {
                    out.push(format!("undirected graph has edge {u}->{v} without {v}->{u}"));
                }
            }
        }
        out
    }

    /// Undirected version of the graph (the graph itself when already
    /// undirected).
    pub fn symmetrized(&self) -> Graph {
        if self.undirected {
            return self.clone();
        }
        Graph::from_edges(self.num_nodes(), self.edges(), true).expect("edges of a valid graph are in range")
    }

    /// The subgraph induced by `nodes`, relabelled so that `nodes[i]`
    /// becomes node `i`. `local_of` maps global ids to local ids and must be
    /// consistent with `nodes`.
    pub(crate) fn induced(&self, nodes: &[NodeId], local_of: &dyn Fn(NodeId) -> Option<NodeId>) -> Graph {
        let mut offsets = Vec::with_capacity(nodes.len() + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for &v in nodes {
            let start = neighbors.len();
            neighbors.extend(self.neighbors(v).iter().filter_map(|&u| local_of(u)));
            neighbors[start..].sort_unstable();
            offsets.push(neighbors.len());
        }
        Graph {
            offsets,
            neighbors,
            undirected: self.undirected,
        }
    }
}

/// Dense per-node feature rows (`x_v`, which also seed the layer-0
/// embeddings).
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatures {
    dim: usize,
    data: Vec<f32>,
}

impl NodeFeatures {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("feature dimension must be at least 1"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::ShapeMismatch(format!(
                "{} feature values is not a multiple of dim {dim}",
                data.len()
            )));
        }
        Ok(NodeFeatures { dim, data })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn num_rows(&self) -> usize {
        self.data.len() / self.dim
    }

    #[inline]
    pub fn row(&self, v: NodeId) -> &[f32] {
        let start = v as usize * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        self.data
            .iter()
            .position(|x| !x.is_finite())
            .map(|i| (i / self.dim, i % self.dim))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    Single,
    Multi,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Labels {
    /// One class id per node.
    Single(Vec<u32>),
    /// Row-major `num_nodes x num_classes` 0/1 matrix.
    Multi(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    num_classes: usize,
    labels: Labels,
}

impl LabelSet {
    pub fn single(num_classes: usize, labels: Vec<u32>) -> Result<Self> {
        if let Some((v, &l)) = labels.iter().enumerate().find(|(_, &l)| l as usize >= num_classes) {
            return Err(Error::invalid(format!(
                "label {l} of node {v} is >= num_classes ({num_classes})"
            )));
        }
        Ok(LabelSet {
            num_classes,
            labels: Labels::Single(labels),
        })
    }

    pub fn multi(num_classes: usize, rows: Vec<u8>) -> Result<Self> {
        if num_classes == 0 || !rows.len().is_multiple_of(num_classes) {
            return Err(Error::ShapeMismatch(format!(
                "{} multi-label entries is not a multiple of {num_classes} classes",
                rows.len()
            )));
        }
        if let Some(i) = rows.iter().position(|&b| b > 1) {
            return Err(Error::invalid(format!(
                "multi-label entry ({}, {}) is {} (expected 0 or 1)",
                i / num_classes,
                i % num_classes,
                rows[i]
            )));
        }
        Ok(LabelSet {
            num_classes,
            labels: Labels::Multi(rows),
        })
    }

    #[inline]
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn mode(&self) -> LabelMode {
        match self.labels {
            Labels::Single(_) => LabelMode::Single,
            Labels::Multi(_) => LabelMode::Multi,
        }
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn num_nodes(&self) -> usize {
        match &self.labels {
            Labels::Single(l) => l.len(),
            Labels::Multi(rows) => rows.len() / self.num_classes,
        }
    }

    /// Class of `v` in single-label mode.
    ///
    /// # Panics
    /// In multi-label mode.
    #[inline]
    pub fn class_of(&self, v: NodeId) -> u32 {
        match &self.labels {
            Labels::Single(l) => l[v as usize],
            Labels::Multi(_) => panic!("class_of called on a multi-label set"),
        }
    }

    /// 0/1 indicator row of `v` in multi-label mode.
    ///
    /// # Panics
    /// In single-label mode.
    #[inline]
    pub fn row(&self, v: NodeId) -> &[u8] {
        match &self.labels {
            Labels::Multi(rows) => {
                let s = v as usize * self.num_classes;
                &rows[s..s + self.num_classes]
            }
            Labels::Single(_) => panic!("row called on a single-label set"),
        }
    }

    /// Classes that `v` belongs to, in either mode.
    pub fn positives(&self, v: NodeId) -> Vec<u32> {
        match &self.labels {
            Labels::Single(l) => vec![l[v as usize]],
            Labels::Multi(_) => self
                .row(v)
                .iter()
                .enumerate()
                .filter(|(_, &b)| b == 1)
                .map(|(c, _)| c as u32)
                .collect(),
        }
    }
}

/// Train/validation/test node lists.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitMasks {
    pub train: Vec<NodeId>,
    pub val: Vec<NodeId>,
    pub test: Vec<NodeId>,
}

impl SplitMasks {
    /// Sorts each list and checks that they are duplicate-free, pairwise
    /// disjoint and within `num_nodes`.
    pub fn new(mut train: Vec<NodeId>, mut val: Vec<NodeId>, mut test: Vec<NodeId>, num_nodes: usize) -> Result<Self> {
        let mut owner = vec![u8::MAX; num_nodes];
        for (k, list) in [&mut train, &mut val, &mut test].into_iter().enumerate() {
            list.sort_unstable();
            for &v in list.iter() {
                let slot = owner
                    .get_mut(v as usize)
                    .ok_or_else(|| Error::invalid(format!("split node {v} is >= num_nodes ({num_nodes})")))?;
                match *slot {
                    u8::MAX => *slot = k as u8,
                    prev if prev == k as u8 => {
                        return Err(Error::invalid(format!("node {v} repeated within one split")))
                    }
                    _ => return Err(Error::SplitsOverlap(v as u64)),
                }
            }
        }
        Ok(SplitMasks { train, val, test })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_graph_csr() {
        let g = Graph::from_edges(3, [(0, 1), (1, 2)], true).unwrap();
        assert_eq!(g.offsets(), &[0, 1, 3, 4]);
        assert_eq!(g.adjacency(), &[1, 0, 2, 1]);
        assert_eq!(g.num_edges(), 4);
        assert!(g.violations().is_empty());
    }

    #[test]
    fn self_loops_and_duplicates_are_dropped() {
        let g = Graph::from_edges(3, [(0, 0), (0, 1), (1, 0), (0, 1), (2, 2)], true).unwrap();
        assert_eq!(g.num_edges(), 2);
        assert_eq!(g.degree(2), 0);
    }

    #[test]
    fn directed_rows_hold_in_neighbours() {
        let g = Graph::from_edges(3, [(0, 2), (1, 2)], false).unwrap();
        assert_eq!(g.neighbors(2), &[0, 1]);
        assert!(g.neighbors(0).is_empty());
        assert!(g.has_edge(0, 2));
        assert!(!g.has_edge(2, 0));
        let s = g.symmetrized();
        assert!(s.is_undirected());
        assert_eq!(s.neighbors(0), &[2]);
    }

    #[test]
    fn out_of_range_edge_is_rejected() {
        assert!(Graph::from_edges(2, [(0, 2)], true).is_err());
    }

    #[test]
    fn asymmetric_csr_is_reported() {
        let g = Graph::from_csr_unchecked(vec![0, 1, 1], vec![1], true);
        assert_eq!(g.violations().len(), 1);
        assert!(Graph::from_csr(vec![0, 1, 1], vec![1], true).is_err());
        assert!(Graph::from_csr(vec![0, 1, 2], vec![1, 0], true).is_ok());
    }

    #[test]
    fn splits_validate() {
        let s = SplitMasks::new(vec![3, 1], vec![0], vec![2], 4).unwrap();
        assert_eq!(s.train, vec![1, 3]);
        assert!(matches!(
            SplitMasks::new(vec![1], vec![1], vec![], 4),
            Err(Error::SplitsOverlap(1))
        ));
        assert!(SplitMasks::new(vec![1, 1], vec![], vec![], 4).is_err());
        assert!(SplitMasks::new(vec![9], vec![], vec![], 4).is_err());
    }

    #[test]
    fn label_checks() {
        assert!(LabelSet::single(2, vec![0, 2]).is_err());
        assert!(LabelSet::multi(2, vec![0, 2]).is_err());
        let m = LabelSet::multi(2, vec![1, 0, 1, 1]).unwrap();
        assert_eq!(m.num_nodes(), 2);
        assert_eq!(m.positives(1), vec![0, 1]);
    }
}
