use crate::graph::{Graph, NodeId};

use super::EdgeWeights;

/// Undirected graph with integer node and edge weights, the working form of
/// every level of the multilevel partitioner.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightedGraph {
    pub(crate) xadj: Vec<usize>,
    pub(crate) adj: Vec<u32>,
    pub(crate) ewgt: Vec<i64>,
    pub(crate) vwgt: Vec<i64>,
}

impl WeightedGraph {
    /// Combine a graph and its entry weights into an undirected weighted
    /// graph with unit node weights. When both directions of an edge exist
    /// the edge weight is their rounded mean.
    pub fn from_graph(g: &Graph, w: &EdgeWeights) -> Self {
        assert_eq!(w.len(), g.num_edges(), "weights must be parallel to the adjacency");
        let n = g.num_nodes();
        let ws = w.as_slice();
        let mut pairs: Vec<(u32, u32, u64)> = Vec::with_capacity(g.num_edges());
        for v in 0..n as NodeId {
            for e in g.entry_range(v) {
                let u = g.adjacency()[e];
                pairs.push((u.min(v), u.max(v), ws[e] as u64));
            }
        }
        pairs.sort_unstable();
        let mut edges: Vec<(u32, u32, i64)> = Vec::with_capacity(pairs.len());
        let mut i = 0;
        while i < pairs.len() {
            let (a, b, w0) = pairs[i];
            let mut sum = w0;
            let mut cnt = 1;
            while i + cnt < pairs.len() && pairs[i + cnt].0 == a && pairs[i + cnt].1 == b {
                sum += pairs[i + cnt].2;
                cnt += 1;
            }
            let w = ((2 * sum + cnt as u64) / (2 * cnt as u64)).max(1);
            edges.push((a, b, w as i64));
            i += cnt;
        }
        Self::from_undirected_edges(n, vec![1; n], &edges)
    }

    /// Build from a list of unordered edges `(a, b, weight)` with `a != b`,
    /// each listed once.
    pub fn from_undirected_edges(n: usize, vwgt: Vec<i64>, edges: &[(u32, u32, i64)]) -> Self {
        assert_eq!(vwgt.len(), n);
        let mut deg = vec![0usize; n + 1];
        for &(a, b, _) in edges {
            deg[a as usize + 1] += 1;
            deg[b as usize + 1] += 1;
        }
        for i in 0..n {
            deg[i + 1] += deg[i];
        }
        let xadj = deg;
        let mut fill = xadj.clone();
        let mut adj = vec![0u32; xadj[n]];
        let mut ewgt = vec![0i64; xadj[n]];
        for &(a, b, w) in edges {
            for (s, t) in [(a, b), (b, a)] {
                let slot = fill[s as usize];
                adj[slot] = t;
                ewgt[slot] = w;
                fill[s as usize] += 1;
            }
        }
        WeightedGraph { xadj, adj, ewgt, vwgt }
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.vwgt.len()
    }

    pub fn num_edges(&self) -> usize {
        self.adj.len() / 2
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = (usize, i64)> + '_ {
        let r = self.xadj[v]..self.xadj[v + 1];
        self.adj[r.clone()]
            .iter()
            .zip(&self.ewgt[r])
            .map(|(&u, &w)| (u as usize, w))
    }

    #[inline]
    pub fn node_weight(&self, v: usize) -> i64 {
        self.vwgt[v]
    }

    pub fn node_weights(&self) -> &[i64] {
        &self.vwgt
    }

    pub fn total_node_weight(&self) -> i64 {
        self.vwgt.iter().sum()
    }

    pub fn max_node_weight(&self) -> i64 {
        self.vwgt.iter().copied().max().unwrap_or(0)
    }

    /// Total weight of edges whose endpoints are in different parts.
    pub fn cut(&self, part: &[u32]) -> i64 {
        let mut cut = 0;
        for v in 0..self.num_nodes() {
            for (u, w) in self.neighbors(v) {
                if part[u] != part[v] {
                    cut += w;
                }
            }
        }
        cut / 2
    }

    pub fn part_weights(&self, part: &[u32], num_parts: usize) -> Vec<i64> {
        let mut pw = vec![0i64; num_parts];
        for (v, &p) in part.iter().enumerate() {
            pw[p as usize] += self.vwgt[v];
        }
        pw
    }
}
