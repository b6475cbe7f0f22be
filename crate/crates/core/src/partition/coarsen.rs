//! Heavy-edge matching and contraction.

use rand::seq::SliceRandom;
use rand::Rng;

use super::WeightedGraph;

const UNMATCHED: u32 = u32::MAX;

/// One contraction step: the coarse graph and, for every fine node, the
/// coarse node it was merged into.
#[derive(Debug, Clone)]
pub struct CoarseLevel {
    pub graph: WeightedGraph,
    pub cmap: Vec<u32>,
}

/// Visit nodes in random order and match each unmatched node with its
/// unmatched neighbour of largest edge weight, then contract the matched
/// pairs. Parallel edges created by the contraction are merged by summing
/// their weights; coarse node weights are the sums of their fine nodes.
///
/// `max_node_weight` forbids matches whose combined node weight would
/// exceed it.
pub fn coarsen<R: Rng + ?Sized>(g: &WeightedGraph, max_node_weight: Option<i64>, rng: &mut R) -> CoarseLevel {
    let n = g.num_nodes();
    let limit = max_node_weight.unwrap_or(i64::MAX);
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.shuffle(rng);

    let mut mate = vec![UNMATCHED; n];
    for &u in &order {
        let u = u as usize;
        if mate[u] != UNMATCHED {
            continue;
        }
        let mut best: Option<(usize, i64)> = None;
        for (v, w) in g.neighbors(u) {
            if v == u || mate[v] != UNMATCHED || g.vwgt[u] + g.vwgt[v] > limit {
                continue;
            }
            if best.is_none_or(|(_, bw)| w > bw) {
                best = Some((v, w));
            }
        }
        match best {
            Some((v, _)) => {
                mate[u] = v as u32;
                mate[v] = u as u32;
            }
            None => mate[u] = u as u32,
        }
    }

    let mut cmap = vec![UNMATCHED; n];
    let mut nc = 0u32;
    for u in 0..n {
        if cmap[u] == UNMATCHED {
            cmap[u] = nc;
            cmap[mate[u] as usize] = nc;
            nc += 1;
        }
    }
    let graph = contract(g, &cmap, nc as usize);
    CoarseLevel { graph, cmap }
}

/// Contract `g` along `cmap` (fine node -> coarse node).
pub(crate) fn contract(g: &WeightedGraph, cmap: &[u32], nc: usize) -> WeightedGraph {
    let mut members: Vec<Vec<u32>> = vec![Vec::new(); nc];
    let mut vwgt = vec![0i64; nc];
    for (u, &c) in cmap.iter().enumerate() {
        members[c as usize].push(u as u32);
        vwgt[c as usize] += g.vwgt[u];
    }

    let mut xadj = Vec::with_capacity(nc + 1);
    let mut adj = Vec::new();
    let mut ewgt = Vec::new();
    xadj.push(0);
    // slot[c'] = position of coarse neighbour c' in the current row
    let mut slot = vec![usize::MAX; nc];
    for c in 0..nc {
        let row_start = adj.len();
        for &u in &members[c] {
            for (v, w) in g.neighbors(u as usize) {
                let cv = cmap[v] as usize;
                if cv == c {
                    continue;
                }
                if slot[cv] == usize::MAX || slot[cv] < row_start {
                    slot[cv] = adj.len();
                    adj.push(cv as u32);
                    ewgt.push(w);
                } else {
                    ewgt[slot[cv]] += w;
                }
            }
        }
        xadj.push(adj.len());
    }
    WeightedGraph { xadj, adj, ewgt, vwgt }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn heavy_edge_is_contracted() {
        // path 0-1-2-3 with the middle edge heavy
        let g = WeightedGraph::from_undirected_edges(4, vec![1; 4], &[(0, 1, 1), (1, 2, 100), (2, 3, 1)]);
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let level = coarsen(&g, None, &mut rng);
            // if neither 0 nor 3 took a middle node, the middle nodes chose
            // each other over the light edges
            let c = &level.cmap;
            if c[0] != c[1] && c[2] != c[3] {
                assert_eq!(c[1], c[2], "seed {seed}");
            }
            assert_eq!(level.graph.total_node_weight(), 4);
        }
        // on a 3-path the heavy pair is merged unless node 2 took node 1 first
        let g = WeightedGraph::from_undirected_edges(3, vec![1; 3], &[(0, 1, 100), (1, 2, 1)]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let level = coarsen(&g, None, &mut rng);
            if level.cmap[2] != level.cmap[1] {
                assert_eq!(level.cmap[0], level.cmap[1]);
            }
        }
    }

    #[test]
    fn edgeless_graph_is_unchanged() {
        let g = WeightedGraph::from_undirected_edges(5, vec![1; 5], &[]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let level = coarsen(&g, None, &mut rng);
        assert_eq!(level.graph, g);
        assert_eq!(level.cmap, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn parallel_edges_are_summed() {
        // square 0-1-2-3-0; contracting {0,1} and {2,3} leaves one edge of
        // weight w(1,2) + w(3,0)
        let g = WeightedGraph::from_undirected_edges(4, vec![1; 4], &[(0, 1, 10), (1, 2, 2), (2, 3, 10), (3, 0, 3)]);
        let c = contract(&g, &[0, 0, 1, 1], 2);
        assert_eq!(c.vwgt, vec![2, 2]);
        assert_eq!(c.neighbors(0).collect::<Vec<_>>(), vec![(1, 5)]);
        assert_eq!(c.neighbors(1).collect::<Vec<_>>(), vec![(0, 5)]);
    }

    #[test]
    fn node_weight_limit_blocks_matches() {
        let g = WeightedGraph::from_undirected_edges(2, vec![3, 3], &[(0, 1, 5)]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let level = coarsen(&g, Some(5), &mut rng);
        assert_eq!(level.graph.num_nodes(), 2);
    }
}
