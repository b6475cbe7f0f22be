use rayon::prelude::*;

use crate::graph::{Graph, NodeFeatures, NodeId};

/// Positive integer weight per adjacency entry, parallel to
/// [`Graph::adjacency`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeWeights {
    weights: Vec<u32>,
}

impl EdgeWeights {
    /// Weight 1 on every entry.
    pub fn unit(g: &Graph) -> Self {
        EdgeWeights {
            weights: vec![1; g.num_edges()],
        }
    }

    /// Wrap raw weights; every weight must be at least 1.
    pub fn from_vec(g: &Graph, weights: Vec<u32>) -> crate::Result<Self> {
        if weights.len() != g.num_edges() {
            return Err(crate::Error::ShapeMismatch(format!(
                "{} weights for {} adjacency entries",
                weights.len(),
                g.num_edges()
            )));
        }
        if weights.contains(&0) {
            return Err(crate::Error::invalid("edge weights must be >= 1"));
        }
        Ok(EdgeWeights { weights })
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.weights.iter().map(|&w| w as u64).sum()
    }
}

/// Probability that one of `degree` neighbours lands in a uniform sample of
/// `fanout`, approximated as `1 - exp(-fanout / degree)`.
#[inline]
pub fn sample_probability(fanout: usize, degree: usize) -> f64 {
    1.0 - (-(fanout as f64) / degree as f64).exp()
}

#[inline]
fn to_weight(raw: f64) -> u32 {
    if raw.is_nan() || raw < 1.0 {
        1
    } else {
        raw.round().min(u32::MAX as f64) as u32
    }
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// Feature- and degree-aware edge weights.
///
/// For every entry `u -> v` (so `u` is in `N(v)`):
///
/// ```text
/// similarity = h_u . h_v            (raw features, no normalisation)
/// p          = 1 - exp(-K / |N(v)|)
/// weight     = max(1, round((c * similarity + p) * 100))
/// ```
///
/// `p` depends on the destination's degree, so the two directions of an
/// undirected edge usually differ; both are replaced by the rounded mean
/// (at least 1) so that the partitioner sees one weight per edge. Entries
/// whose reverse is absent keep their directed weight.
pub fn assign_edge_weights(g: &Graph, feats: &NodeFeatures, c: f64, fanout_k: usize) -> EdgeWeights {
    assert_eq!(feats.num_rows(), g.num_nodes(), "one feature row per node");
    let directed: Vec<u32> = (0..g.num_nodes() as NodeId)
        .into_par_iter()
        .flat_map_iter(|v| {
            let hv = feats.row(v);
            let p = sample_probability(fanout_k, g.degree(v));
            g.neighbors(v)
                .iter()
                .map(move |&u| to_weight((c * dot(feats.row(u), hv) + p) * 100.0))
        })
        .collect();

    let weights = (0..g.num_nodes() as NodeId)
        .into_par_iter()
        .flat_map_iter(|v| {
            let directed = &directed;
            g.entry_range(v).map(move |e| {
                let u = g.adjacency()[e];
                match g.find_entry(u, v) {
                    Some(rev) => {
                        let sum = directed[e] as u64 + directed[rev] as u64;
                        // round half up; sum/2 rounded = (sum + 1) / 2
                        sum.div_ceil(2).max(1) as u32
                    }
                    None => directed[e],
                }
            })
        })
        .collect();
    EdgeWeights { weights }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feats(rows: &[&[f32]]) -> NodeFeatures {
        NodeFeatures::new(rows[0].len(), rows.iter().flat_map(|r| r.iter().copied()).collect()).unwrap()
    }

    /// Star graph where every node has exactly `deg` neighbours is awkward
    /// to build; a complete graph K_{deg+1} gives uniform degree `deg`.
    fn complete(n: usize) -> Graph {
        let edges = (0..n as u32).flat_map(|a| (a + 1..n as u32).map(move |b| (a, b)));
        Graph::from_edges(n, edges, true).unwrap()
    }

    #[test]
    fn identical_unit_features_degree_equal_fanout() {
        let g = complete(26); // every degree is 25
        let row: Vec<f32> = vec![0.6, 0.8];
        let f = feats(&vec![row.as_slice(); 26]);
        let w = assign_edge_weights(&g, &f, 1.0, 25);
        // (1 + 1 - e^-1) * 100 = 163.212...
        assert!(w.as_slice().iter().all(|&x| x == 163), "{:?}", &w.as_slice()[..4]);
    }

    #[test]
    fn zero_c_gives_pure_degree_term() {
        let g = complete(26);
        let f = feats(&vec![&[3.0f32, -1.0][..]; 26]);
        let w = assign_edge_weights(&g, &f, 0.0, 25);
        assert!(w.as_slice().iter().all(|&x| x == 63));
    }

    #[test]
    fn orthogonal_features_on_high_degree_clamp_to_one() {
        // hub 0 with many leaves; leaves orthogonal to the hub
        let n = 2001;
        let g = Graph::from_edges(n, (1..n as u32).map(|v| (0, v)), true).unwrap();
        let mut rows = vec![&[0.0f32, 1.0][..]; n];
        rows[0] = &[1.0, 0.0];
        let w = assign_edge_weights(&g, &feats(&rows), 5.0, 1);
        // entry leaf->hub: p = 1 - exp(-1/2000) ~ 5e-4 -> raw 0.05 -> 1
        let e = g.find_entry(0, 1).unwrap();
        let rev = g.find_entry(1, 0).unwrap();
        assert_eq!(w.as_slice()[e], w.as_slice()[rev]);
        // hub->leaf: p = 1 - e^-1 -> 63; mean with 1 is 32
        assert_eq!(w.as_slice()[e], 32);
    }

    #[test]
    fn negative_similarity_clamps() {
        let g = complete(3);
        let f = feats(&[&[1.0], &[-1.0], &[1.0]]);
        let w = assign_edge_weights(&g, &f, 10.0, 25);
        assert!(w.as_slice().iter().all(|&x| x >= 1));
        assert_eq!(w.as_slice()[g.find_entry(0, 1).unwrap()], 1);
    }

    #[test]
    fn weights_are_symmetric() {
        let g = Graph::from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (1, 3)], true).unwrap();
        let f = feats(&[&[0.1, 0.5], &[0.3, 0.2], &[0.9, 0.1], &[0.4, 0.4], &[0.2, 0.7]]);
        let w = assign_edge_weights(&g, &f, 1.0, 25);
        for (u, v) in g.edges() {
            let a = w.as_slice()[g.find_entry(v, u).unwrap()];
            let b = w.as_slice()[g.find_entry(u, v).unwrap()];
            assert_eq!(a, b);
            assert!(a >= 1);
        }
    }
}
