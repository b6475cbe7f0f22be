//! Edge-weighted multilevel k-way partitioning.
//!
//! [`assign_edge_weights`] turns feature similarity and neighbour-sampling
//! probability into integer edge weights; [`partition`] then minimises the
//! weighted edge cut under a node-count balance constraint using the classic
//! multilevel scheme: heavy-edge coarsening, greedy growing on the coarsest
//! graph, and FM refinement while projecting back.

mod coarsen;
mod initial;
mod refine;
mod weights;
mod wgraph;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use coarsen::{coarsen, CoarseLevel};
pub use weights::{assign_edge_weights, sample_probability, EdgeWeights};
pub use wgraph::WeightedGraph;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::io;

/// Node to part map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionAssignment {
    num_parts: usize,
    part_of: Vec<u32>,
}

impl PartitionAssignment {
    /// Every part id must be below `num_parts` and every part non-empty.
    pub fn new(num_parts: usize, part_of: Vec<u32>) -> Result<Self> {
        if num_parts == 0 {
            return Err(Error::invalid("num_parts must be at least 1"));
        }
        let mut seen = vec![false; num_parts];
        for (v, &p) in part_of.iter().enumerate() {
            match seen.get_mut(p as usize) {
                Some(s) => *s = true,
                None => {
                    return Err(Error::invalid(format!(
                        "node {v} assigned to part {p}, but there are {num_parts} parts"
                    )))
                }
            }
        }
        if let Some(p) = seen.iter().position(|s| !s) {
            return Err(Error::invalid(format!("part {p} is empty")));
        }
        Ok(PartitionAssignment { num_parts, part_of })
    }

    pub fn num_parts(&self) -> usize {
        self.num_parts
    }

    pub fn part_of(&self) -> &[u32] {
        &self.part_of
    }

    #[inline]
    pub fn part(&self, v: NodeId) -> u32 {
        self.part_of[v as usize]
    }

    /// Nodes of part `p` in ascending order.
    pub fn members(&self, p: usize) -> Vec<NodeId> {
        (0..self.part_of.len() as NodeId)
            .filter(|&v| self.part_of[v as usize] as usize == p)
            .collect()
    }

    pub fn members_all(&self) -> Vec<Vec<NodeId>> {
        let mut out = vec![Vec::new(); self.num_parts];
        for (v, &p) in self.part_of.iter().enumerate() {
            out[p as usize].push(v as NodeId);
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.num_parts];
        for &p in &self.part_of {
            s[p as usize] += 1;
        }
        s
    }

    /// `assignment.bin`: one little-endian u32 part id per node.
    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_atomic(path, &io::u32s_to_le(&self.part_of))
    }

    /// Read `assignment.bin`; the part count is the largest id plus one.
    pub fn load(path: &Path) -> Result<Self> {
        let part_of = io::read_u32_file(path)?;
        let num_parts = part_of.iter().max().map_or(0, |&m| m as usize + 1);
        Self::new(num_parts, part_of)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionerConfig {
    pub num_parts: usize,
    /// Allowed excess of the largest part over `ceil(n / num_parts)`.
    pub imbalance_epsilon: f64,
    /// Coarsening stops once the graph has at most this many nodes.
    pub coarsen_stop: usize,
    pub refine_passes: usize,
    pub seed: u64,
}

impl Default for PartitionerConfig {
    fn default() -> Self {
        PartitionerConfig {
            num_parts: 4,
            imbalance_epsilon: 0.05,
            coarsen_stop: 200,
            refine_passes: 10,
            seed: 0,
        }
    }
}

impl PartitionerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_parts == 0 {
            return Err(Error::invalid("partitioner.num_parts must be at least 1"));
        }
        if !(self.imbalance_epsilon >= 0.0) {
            return Err(Error::invalid("partitioner.imbalance_epsilon must be >= 0"));
        }
        if self.coarsen_stop == 0 {
            return Err(Error::invalid("partitioner.coarsen_stop must be at least 1"));
        }
        Ok(())
    }
}

/// Largest admissible part weight: `floor((1 + epsilon) * ceil(total / parts))`.
pub fn max_part_weight(total: i64, num_parts: usize, epsilon: f64) -> i64 {
    let even = (total + num_parts as i64 - 1) / num_parts as i64;
    (((1.0 + epsilon) * even as f64) + 1e-9).floor() as i64
}

/// Total weight of edges whose endpoints lie in different parts. Directed
/// entries are summed; undirected graphs count each edge once.
pub fn edge_cut(g: &Graph, w: &EdgeWeights, assignment: &PartitionAssignment) -> u64 {
    let ws = w.as_slice();
    let mut cut = 0u64;
    for v in 0..g.num_nodes() as NodeId {
        let pv = assignment.part(v);
        for e in g.entry_range(v) {
            if assignment.part(g.adjacency()[e]) != pv {
                cut += ws[e] as u64;
            }
        }
    }
    if g.is_undirected() {
        cut / 2
    } else {
        cut
    }
}

/// Greedy-growing initial partition of a (typically coarse) weighted graph.
pub fn initial_partition(g: &WeightedGraph, cfg: &PartitionerConfig) -> Result<PartitionAssignment> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let part = initial::grow_partition(g, cfg.num_parts, cfg.imbalance_epsilon, &mut rng)?;
    PartitionAssignment::new(cfg.num_parts, part)
}

/// FM boundary refinement of an existing assignment. The returned cut is
/// never larger than the input cut, and no part grows beyond
/// `max(cap, heaviest input part)`.
pub fn refine(
    g: &Graph,
    w: &EdgeWeights,
    assignment: &PartitionAssignment,
    cfg: &PartitionerConfig,
) -> PartitionAssignment {
    let wg = WeightedGraph::from_graph(g, w);
    let k = assignment.num_parts();
    let cap = max_part_weight(wg.total_node_weight(), k, cfg.imbalance_epsilon);
    let mut part = assignment.part_of().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    refine::fm_refine(&wg, &mut part, k, cap, cfg.refine_passes, &mut rng);
    PartitionAssignment {
        num_parts: k,
        part_of: part,
    }
}

/// Multilevel weighted k-way partitioning of `g` under weights `w`.
///
/// The largest part holds at most `(1 + epsilon) * ceil(n / num_parts)`
/// nodes. Output is deterministic for a given configuration and seed.
pub fn partition(g: &Graph, w: &EdgeWeights, cfg: &PartitionerConfig) -> Result<PartitionAssignment> {
    cfg.validate()?;
    let base = WeightedGraph::from_graph(g, w);
    let part = partition_weighted(&base, cfg)?;
    PartitionAssignment::new(cfg.num_parts, part)
}

/// Independent grow-and-refine attempts on the coarsest graph.
const COARSE_TRIALS: usize = 6;

pub(crate) fn partition_weighted(base: &WeightedGraph, cfg: &PartitionerConfig) -> Result<Vec<u32>> {
    let k = cfg.num_parts;
    let n = base.num_nodes();
    if k > n {
        return Err(Error::invalid(format!(
            "cannot split {n} nodes into {k} non-empty parts"
        )));
    }
    if k == 1 {
        return Ok(vec![0; n]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let total = base.total_node_weight();
    let cap = max_part_weight(total, k, cfg.imbalance_epsilon);
    let stop = cfg.coarsen_stop.max(8 * k);
    // cap coarse node weights so the coarsest graph can still be balanced
    let max_vwgt = ((1.5 * total as f64 / stop as f64).ceil() as i64).clamp(1, cap.max(1));

    let mut levels: Vec<CoarseLevel> = Vec::new();
    loop {
        let cur = levels.last().map_or(base, |l| &l.graph);
        if cur.num_nodes() <= stop {
            break;
        }
        let level = coarsen(cur, Some(max_vwgt), &mut rng);
        if level.graph.num_nodes() as f64 > 0.95 * cur.num_nodes() as f64 {
            break;
        }
        levels.push(level);
    }

    let coarsest = levels.last().map_or(base, |l| &l.graph);
    let mut best: Option<((i64, i64), Vec<u32>)> = None;
    for _ in 0..COARSE_TRIALS {
        let mut part = initial::grow_partition(coarsest, k, cfg.imbalance_epsilon, &mut rng)?;
        refine::rebalance(coarsest, &mut part, k, cap);
        refine::fm_refine(coarsest, &mut part, k, cap, cfg.refine_passes, &mut rng);
        let excess: i64 = coarsest.part_weights(&part, k).iter().map(|&w| (w - cap).max(0)).sum();
        let score = (excess, coarsest.cut(&part));
        if best.as_ref().is_none_or(|(s, _)| score < *s) {
            best = Some((score, part));
        }
    }
    let mut part = best.expect("at least one trial").1;

    for i in (0..levels.len()).rev() {
        let finer = if i == 0 { base } else { &levels[i - 1].graph };
        let cmap = &levels[i].cmap;
        part = cmap.iter().map(|&c| part[c as usize]).collect();
        refine::rebalance(finer, &mut part, k, cap);
        refine::fm_refine(finer, &mut part, k, cap, cfg.refine_passes, &mut rng);
    }
    Ok(part)
}
