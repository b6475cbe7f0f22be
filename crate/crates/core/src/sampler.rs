//! Class-balanced mini-epoch sampling and layered neighbour sampling.
//!
//! A training node `v` is drawn with probability proportional to
//!
//! ```text
//! ||Â(:, v)||² / CF(class(v))
//! ```
//!
//! where `CF` counts the local training nodes of each class and `Â` is a
//! degree-normalised adjacency matrix of the local graph. Two
//! normalisations are offered: [`Normalization::AsWritten`] uses
//! `D^{-1/2} A D^{1/2}`, giving `||Â(:, v)||² = Σ_{i ∈ N(v)} d_v / d_i`;
//! [`Normalization::Symmetric`] uses `D^{-1/2} A D^{-1/2}`, giving
//! `Σ_{i ∈ N(v)} 1 / (d_i d_v)`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, LabelSet, LocalPartition, NodeId};

/// Score given to training nodes without neighbours (before dividing by
/// their class frequency), so they stay sampleable.
pub const ISOLATED_SCORE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// `D^{-1/2} A D^{1/2}`
    #[default]
    AsWritten,
    /// `D^{-1/2} A D^{-1/2}`
    Symmetric,
}

/// Number of local training nodes per class. In multi-label mode a node
/// counts once for each of its positive labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassFrequencyTable {
    pub counts: Vec<u64>,
}

impl ClassFrequencyTable {
    pub fn new(labels: &LabelSet, train_global: impl IntoIterator<Item = NodeId>) -> Self {
        let mut counts = vec![0u64; labels.num_classes()];
        for v in train_global {
            for c in labels.positives(v) {
                counts[c as usize] += 1;
            }
        }
        ClassFrequencyTable { counts }
    }

    /// `CF(class(v))`. For multi-label nodes this is the smallest count
    /// among the node's positive labels; nodes without positive labels use
    /// `fallback`.
    pub fn frequency_of(&self, labels: &LabelSet, v: NodeId, fallback: u64) -> u64 {
        labels
            .positives(v)
            .into_iter()
            .map(|c| self.counts[c as usize])
            .min()
            .unwrap_or(fallback)
            .max(1)
    }
}

/// Sampling distribution over a worker's training nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleProbabilities {
    /// Local ids of the training nodes.
    pub nodes: Vec<NodeId>,
    /// Probability of each entry of `nodes`; sums to 1.
    pub probs: Vec<f64>,
}

/// `||Â(:, v)||²` for each `v` in `nodes` on an undirected graph.
pub fn column_norms_sq(g: &Graph, nodes: &[NodeId], norm: Normalization) -> Vec<f64> {
    nodes
        .iter()
        .map(|&v| {
            let dv = g.degree(v) as f64;
            g.neighbors(v)
                .iter()
                .map(|&i| {
                    let di = g.degree(i) as f64;
                    match norm {
                        Normalization::AsWritten => dv / di,
                        Normalization::Symmetric => 1.0 / (di * dv),
                    }
                })
                .sum()
        })
        .collect()
}

/// Class-balanced sampling probabilities for the training nodes of `local`.
pub fn cbs_probabilities(
    local: &LocalPartition,
    labels: &LabelSet,
    norm: Normalization,
) -> Result<SampleProbabilities> {
    let nodes = local.train().to_vec();
    if nodes.is_empty() {
        return Err(Error::invalid(format!(
            "part {} has no training nodes",
            local.part_id()
        )));
    }
    let sym;
    let g = if local.graph().is_undirected() {
        local.graph()
    } else {
        sym = local.graph().symmetrized();
        &sym
    };
    let cf = ClassFrequencyTable::new(labels, nodes.iter().map(|&v| local.global_id(v)));
    let norms = column_norms_sq(g, &nodes, norm);
    let scores: Vec<f64> = nodes
        .iter()
        .zip(&norms)
        .map(|(&v, &n2)| {
            let f = cf.frequency_of(labels, local.global_id(v), nodes.len() as u64) as f64;
            let s = if g.degree(v) == 0 { ISOLATED_SCORE } else { n2 };
            s / f
        })
        .collect();
    let total: f64 = scores.iter().sum();
    let probs = scores.into_iter().map(|s| s / total).collect();
    Ok(SampleProbabilities { nodes, probs })
}

/// Uniform probabilities over the training nodes (sampler disabled).
pub fn uniform_probabilities(local: &LocalPartition) -> SampleProbabilities {
    let n = local.train().len();
    SampleProbabilities {
        nodes: local.train().to_vec(),
        probs: vec![1.0 / n.max(1) as f64; n],
    }
}

/// `ceil(fraction * n)`, tolerant of floating-point noise.
pub fn mini_epoch_size(n: usize, fraction: f64) -> usize {
    (((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// Fenwick tree over non-negative weights, for sequential weighted draws.
struct Fenwick {
    tree: Vec<f64>,
}

impl Fenwick {
    fn new(weights: &[f64]) -> Self {
        let n = weights.len();
        let mut tree = vec![0.0; n + 1];
        for (i, &w) in weights.iter().enumerate() {
            tree[i + 1] += w;
            let j = (i + 1) + ((i + 1) & (i + 1).wrapping_neg());
            if j <= n {
                tree[j] += tree[i + 1];
            }
        }
        Fenwick { tree }
    }

    fn add(&mut self, i: usize, delta: f64) {
        let mut j = i + 1;
        while j < self.tree.len() {
            self.tree[j] += delta;
            j += j & j.wrapping_neg();
        }
    }

    /// Smallest index whose prefix sum exceeds `target`.
    fn find(&self, mut target: f64) -> usize {
        let n = self.tree.len() - 1;
        let mut pos = 0;
        let mut step = n.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= target {
                pos = next;
                target -= self.tree[next];
            }
            step >>= 1;
        }
        pos.min(n - 1)
    }
}

/// Draw `ceil(fraction * |nodes|)` distinct nodes without replacement: each
/// draw picks among the remaining nodes with probability proportional to
/// `probs`, then removes the pick. Nodes are returned in draw order.
pub fn sample_mini_epoch<R: Rng + ?Sized>(nodes: &[NodeId], probs: &[f64], fraction: f64, rng: &mut R) -> Vec<NodeId> {
    assert_eq!(nodes.len(), probs.len());
    assert!(fraction > 0.0 && fraction <= 1.0, "fraction must be in (0, 1]");
    let k = mini_epoch_size(nodes.len(), fraction);
    let mut weights = probs.to_vec();
    let mut tree = Fenwick::new(&weights);
    let mut remaining: f64 = weights.iter().sum();
    let mut out = Vec::with_capacity(k);
    for drawn in 0..k {
        if !(remaining > 1e-300) {
            // only zero-weight nodes left: take them uniformly
            let mut rest: Vec<usize> = (0..nodes.len()).filter(|&i| weights[i] >= 0.0).collect();
            rest.shuffle(rng);
            out.extend(rest.into_iter().take(k - drawn).map(|i| nodes[i]));
            break;
        }
        let mut i = tree.find(rng.random::<f64>() * remaining);
        if weights[i] <= 0.0 {
            // rounding at the right edge; step back to a live entry
            i = (0..nodes.len())
                .rev()
                .find(|&j| weights[j] > 0.0)
                .expect("positive remaining weight");
        }
        out.push(nodes[i]);
        tree.add(i, -weights[i]);
        remaining -= weights[i];
        weights[i] = -1.0;
    }
    out
}

/// Shuffle `subset` and cut it into batches of at most `batch_size`.
pub fn make_batches<R: Rng + ?Sized>(subset: &[NodeId], batch_size: usize, rng: &mut R) -> Vec<Vec<NodeId>> {
    assert!(batch_size >= 1);
    let mut nodes = subset.to_vec();
    nodes.shuffle(rng);
    nodes.chunks(batch_size).map(<[NodeId]>::to_vec).collect()
}

/// One message-passing layer of a sampled computation graph.
///
/// `src[..dst.len()] == dst`, so each destination's own previous-layer
/// embedding is available at the same position. The sampled in-neighbours
/// of destination `d` are the source positions
/// `nbr[nbr_offsets[d]..nbr_offsets[d + 1]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockLayer {
    pub dst: Vec<NodeId>,
    pub src: Vec<NodeId>,
    pub nbr_offsets: Vec<usize>,
    pub nbr: Vec<u32>,
}

impl BlockLayer {
    #[inline]
    pub fn sampled(&self, d: usize) -> &[u32] {
        &self.nbr[self.nbr_offsets[d]..self.nbr_offsets[d + 1]]
    }

    /// Sampled edges as `(src node, dst node)` pairs.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        (0..self.dst.len()).flat_map(move |d| {
            self.sampled(d)
                .iter()
                .map(move |&s| (self.src[s as usize], self.dst[d]))
        })
    }
}

/// Sampled computation graph for a batch. `layers[0]` consumes input
/// features, the last layer's destinations are the batch nodes, and
/// `layers[i].src == layers[i - 1].dst` for `i >= 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MiniBatchBlock {
    pub layers: Vec<BlockLayer>,
}

impl MiniBatchBlock {
    pub fn batch(&self) -> &[NodeId] {
        &self.layers.last().expect("at least one layer").dst
    }

    pub fn input_nodes(&self) -> &[NodeId] {
        &self.layers[0].src
    }
}

/// Sample a block for `batch` (local ids) with per-layer fanouts, input
/// layer first. Each destination keeps `min(fanout, degree)` distinct
/// in-neighbours chosen uniformly at random.
pub fn sample_block<R: Rng + ?Sized>(g: &Graph, batch: &[NodeId], fanouts: &[usize], rng: &mut R) -> MiniBatchBlock {
    build_block(g, batch, fanouts, Some(&mut RngAdapter(rng)))
}

/// Block with complete neighbourhoods (used for evaluation).
pub fn full_block(g: &Graph, batch: &[NodeId], num_layers: usize) -> MiniBatchBlock {
    build_block(g, batch, &vec![usize::MAX; num_layers], None)
}

struct RngAdapter<'a, R: Rng + ?Sized>(&'a mut R);

impl<R: Rng + ?Sized> rand::RngCore for RngAdapter<'_, R> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

fn build_block(
    g: &Graph,
    batch: &[NodeId],
    fanouts: &[usize],
    mut rng: Option<&mut dyn rand::RngCore>,
) -> MiniBatchBlock {
    assert!(!fanouts.is_empty(), "at least one layer");
    let mut position = std::collections::HashMap::<NodeId, u32>::new();
    let mut layers = Vec::with_capacity(fanouts.len());
    let mut dst: Vec<NodeId> = batch.to_vec();
    for &fanout in fanouts.iter().rev() {
        position.clear();
        let mut src = dst.clone();
        for (i, &v) in dst.iter().enumerate() {
            position.entry(v).or_insert(i as u32);
        }
        let mut nbr_offsets = Vec::with_capacity(dst.len() + 1);
        let mut nbr = Vec::new();
        nbr_offsets.push(0);
        for &v in &dst {
            let row = g.neighbors(v);
            let mut push = |u: NodeId, src: &mut Vec<NodeId>| {
                let p = *position.entry(u).or_insert_with(|| {
                    src.push(u);
                    (src.len() - 1) as u32
                });
                nbr.push(p);
            };
            if row.len() <= fanout {
                for &u in row {
                    push(u, &mut src);
                }
            } else {
                let rng = rng.as_deref_mut().expect("sampling requires an rng");
                for i in rand::seq::index::sample(rng, row.len(), fanout) {
                    push(row[i], &mut src);
                }
            }
            nbr_offsets.push(nbr.len());
        }
        layers.push(BlockLayer {
            dst: std::mem::take(&mut dst),
            src: src.clone(),
            nbr_offsets,
            nbr,
        });
        dst = src;
    }
    layers.reverse();
    MiniBatchBlock { layers }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mini_epoch_sizes() {
        assert_eq!(mini_epoch_size(3000, 0.25), 750);
        assert_eq!(mini_epoch_size(30, 0.1), 3);
        assert_eq!(mini_epoch_size(10, 0.25), 3);
        assert_eq!(mini_epoch_size(10, 1.0), 10);
    }

    #[test]
    fn full_fraction_is_a_permutation() {
        let nodes: Vec<NodeId> = (0..50).collect();
        let probs = vec![0.02; 50];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = sample_mini_epoch(&nodes, &probs, 1.0, &mut rng);
        assert_ne!(s, nodes, "draw order should differ from input order");
        s.sort_unstable();
        assert_eq!(s, nodes);
    }

    #[test]
    fn same_seed_same_subset() {
        let nodes: Vec<NodeId> = (0..100).collect();
        let probs: Vec<f64> = (1..=100).map(|i| i as f64 / 5050.0).collect();
        let a = sample_mini_epoch(&nodes, &probs, 0.25, &mut ChaCha8Rng::seed_from_u64(9));
        let b = sample_mini_epoch(&nodes, &probs, 0.25, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        assert_eq!(a.len(), 25);
        let mut d = a.clone();
        d.sort_unstable();
        d.dedup();
        assert_eq!(d.len(), 25);
    }

    #[test]
    fn batches_cover_subset() {
        let subset: Vec<NodeId> = (0..10).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = make_batches(&subset, 4, &mut rng);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 2]);
        let mut all: Vec<NodeId> = b.concat();
        all.sort_unstable();
        assert_eq!(all, subset);
        assert_eq!(make_batches(&subset, 64, &mut rng).len(), 1);
    }

    #[test]
    fn star_center_with_fanout_one() {
        let g = Graph::from_edges(6, (1..6).map(|v| (0, v)), true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = sample_block(&g, &[0], &[1], &mut rng);
        assert_eq!(b.layers[0].sampled(0).len(), 1);
        assert_eq!(b.layers[0].src.len(), 2);
    }

    #[test]
    fn full_block_holds_two_hop_neighbourhood() {
        // path 0-1-2-3-4, batch {0}
        let g = Graph::from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4)], true).unwrap();
        let b = full_block(&g, &[0], 2);
        assert_eq!(b.batch(), &[0]);
        assert_eq!(b.layers[1].src, vec![0, 1]);
        assert_eq!(b.layers[0].dst, vec![0, 1]);
        assert_eq!(b.layers[0].src, vec![0, 1, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_block(&g, &[0], &[25, 25], &mut rng), b);
    }

    #[test]
    fn fenwick_find_matches_linear_scan() {
        let w = [0.5, 0.0, 2.0, 1.5, 0.25];
        let t = Fenwick::new(&w);
        for x in [0.0, 0.49, 0.5, 2.49, 2.5, 3.99, 4.0, 4.2] {
            let mut acc = 0.0;
            let want = w
                .iter()
                .position(|&wi| {
                    acc += wi;
                    acc > x
                })
                .unwrap_or(w.len() - 1);
            assert_eq!(t.find(x), want, "x={x}");
        }
    }

    fn whole_graph_view(g: &Graph, train: Vec<NodeId>) -> LocalPartition {
        use crate::graph::{induce_local_partition, SplitMasks};
        use crate::partition::PartitionAssignment;
        let a = PartitionAssignment::new(1, vec![0; g.num_nodes()]).unwrap();
        let splits = SplitMasks::new(train, vec![], vec![], g.num_nodes()).unwrap();
        induce_local_partition(g, &a, 0, 0, &splits).unwrap()
    }

    /// Dense `||D^{-1/2} A D^{e} e_v||²` for the oracle.
    fn dense_column_norm_sq(g: &Graph, v: usize, right_exp: f64) -> f64 {
        let n = g.num_nodes();
        let d: Vec<f64> = (0..n).map(|i| g.degree(i as NodeId) as f64).collect();
        (0..n)
            .map(|i| {
                let a = if g.has_edge(i as NodeId, v as NodeId) { 1.0 } else { 0.0 };
                let x = d[i].powf(-0.5) * a * d[v].powf(right_exp);
                x * x
            })
            .sum()
    }

    #[test]
    fn toy_path_probabilities() {
        let g = Graph::from_edges(3, [(0, 1), (1, 2)], true).unwrap();
        let labels = LabelSet::single(2, vec![0, 0, 1]).unwrap();
        let local = whole_graph_view(&g, vec![0, 1, 2]);
        let norms = column_norms_sq(&g, &[0, 1, 2], Normalization::AsWritten);
        for v in 0..3 {
            assert!((norms[v] - dense_column_norm_sq(&g, v, 0.5)).abs() < 1e-12);
        }
        assert_eq!(norms, vec![0.5, 4.0, 0.5]);
        let p = cbs_probabilities(&local, &labels, Normalization::AsWritten).unwrap();
        let want = [0.25 / 2.75, 2.0 / 2.75, 0.5 / 2.75];
        for (a, b) in p.probs.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((p.probs[0] - 0.0909).abs() < 1e-4 && (p.probs[1] - 0.7273).abs() < 1e-4);

        let sym = column_norms_sq(&g, &[0, 1, 2], Normalization::Symmetric);
        for v in 0..3 {
            assert!((sym[v] - dense_column_norm_sq(&g, v, -0.5)).abs() < 1e-12);
        }
    }

    fn ring(n: usize) -> Graph {
        Graph::from_edges(n, (0..n as NodeId).map(|v| (v, (v + 1) % n as NodeId)), true).unwrap()
    }

    #[test]
    fn regular_single_class_is_uniform() {
        let g = ring(12);
        let labels = LabelSet::single(1, vec![0; 12]).unwrap();
        let local = whole_graph_view(&g, (0..12).collect());
        for norm in [Normalization::AsWritten, Normalization::Symmetric] {
            let p = cbs_probabilities(&local, &labels, norm).unwrap();
            assert!(p.probs.iter().all(|&x| (x - 1.0 / 12.0).abs() < 1e-12));
        }
    }

    #[test]
    fn ninety_ten_split_balances_class_mass() {
        let g = ring(100);
        let labels = LabelSet::single(2, (0..100).map(|v| u32::from(v % 10 == 0)).collect()).unwrap();
        let local = whole_graph_view(&g, (0..100).collect());
        let p = cbs_probabilities(&local, &labels, Normalization::AsWritten).unwrap();
        let minority: f64 = p
            .nodes
            .iter()
            .zip(&p.probs)
            .filter(|(&v, _)| v % 10 == 0)
            .map(|(_, &q)| q)
            .sum();
        assert!((minority - 0.5).abs() < 1e-9);
        assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn isolated_training_node_keeps_small_mass() {
        let g = Graph::from_edges(3, [(0, 1)], true).unwrap();
        let labels = LabelSet::single(1, vec![0; 3]).unwrap();
        let local = whole_graph_view(&g, vec![0, 1, 2]);
        let p = cbs_probabilities(&local, &labels, Normalization::AsWritten).unwrap();
        assert!(p.probs[2] > 0.0 && p.probs[2] < 1e-8);
    }

    #[test]
    fn no_training_nodes_is_an_error() {
        let g = ring(4);
        let labels = LabelSet::single(1, vec![0; 4]).unwrap();
        let local = whole_graph_view(&g, vec![]);
        assert!(cbs_probabilities(&local, &labels, Normalization::AsWritten).is_err());
    }

    #[test]
    fn multi_label_uses_rarest_positive_class() {
        // counts among train: class 0 -> 3, class 1 -> 1
        let labels = LabelSet::multi(2, vec![1, 0, 1, 0, 1, 1, 0, 0]).unwrap();
        let cf = ClassFrequencyTable::new(&labels, 0..4);
        assert_eq!(cf.counts, vec![3, 1]);
        assert_eq!(cf.frequency_of(&labels, 2, 4), 1);
        assert_eq!(cf.frequency_of(&labels, 0, 4), 3);
        assert_eq!(cf.frequency_of(&labels, 3, 4), 4);
    }

    #[test]
    fn concentrated_first_draw_frequency() {
        let nodes: Vec<NodeId> = (0..31).collect();
        let mut probs = vec![0.001; 31];
        probs[7] = 0.97;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let trials = 10_000;
        let hits = (0..trials)
            .filter(|_| sample_mini_epoch(&nodes, &probs, 1.0 / 31.0, &mut rng) == [7])
            .count();
        let rate = hits as f64 / trials as f64;
        assert!((rate - 0.97).abs() <= 0.02, "rate {rate}");
    }

    #[test]
    fn neighbour_sampling_is_uniform() {
        let g = Graph::from_edges(6, (1..6).map(|v| (0, v)), true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = [0f64; 6];
        let trials = 10_000;
        for _ in 0..trials {
            let b = sample_block(&g, &[0], &[2], &mut rng);
            for (u, _) in b.layers[0].edges() {
                counts[u as usize] += 1.0;
            }
        }
        let expected = trials as f64 * 2.0 / 5.0;
        let chi2: f64 = counts[1..].iter().map(|c| (c - expected).powi(2) / expected).sum();
        // chi-square critical value, 4 degrees of freedom, p = 0.01
        assert!(chi2 < 13.277, "chi2 {chi2}");
    }
}
