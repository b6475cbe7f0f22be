//! Greedy graph growing on the coarsest graph.

use std::collections::BinaryHeap;

use rand::Rng;

use super::{max_part_weight, WeightedGraph};
use crate::error::{Error, Result};

const NONE: u32 = u32::MAX;
const TRIALS: usize = 8;

/// Grow `num_parts` regions from random seed nodes. At every step the
/// lightest region absorbs the unassigned node with the largest total edge
/// weight into it, provided the region stays under the balance cap
/// `(1 + epsilon) * ceil(total / num_parts)`. Several random trials are run
/// and the best balanced one (lowest cut) is kept.
pub fn grow_partition<R: Rng + ?Sized>(
    g: &WeightedGraph,
    num_parts: usize,
    epsilon: f64,
    rng: &mut R,
) -> Result<Vec<u32>> {
    let n = g.num_nodes();
    if num_parts == 0 {
        return Err(Error::invalid("num_parts must be at least 1"));
    }
    if num_parts > n {
        return Err(Error::invalid(format!(
            "cannot split {n} nodes into {num_parts} non-empty parts"
        )));
    }
    let cap = max_part_weight(g.total_node_weight(), num_parts, epsilon);
    if g.max_node_weight() > cap {
        return Err(Error::InfeasibleBalance(format!(
            "a node of weight {} exceeds the part cap {cap}",
            g.max_node_weight()
        )));
    }
    if num_parts == 1 {
        return Ok(vec![0; n]);
    }

    let mut best: Option<((i64, i64), Vec<u32>)> = None;
    for _ in 0..TRIALS {
        let part = grow_once(g, num_parts, cap, rng);
        let pw = g.part_weights(&part, num_parts);
        let excess: i64 = pw.iter().map(|&w| (w - cap).max(0)).sum();
        let score = (excess, g.cut(&part));
        if best.as_ref().is_none_or(|(s, _)| score < *s) {
            best = Some((score, part));
        }
    }
    Ok(best.expect("at least one trial").1)
}

fn grow_once<R: Rng + ?Sized>(g: &WeightedGraph, num_parts: usize, cap: i64, rng: &mut R) -> Vec<u32> {
    let n = g.num_nodes();
    let mut part = vec![NONE; n];
    let mut pw = vec![0i64; num_parts];
    let mut conn = vec![0i64; num_parts * n];
    let mut heaps: Vec<BinaryHeap<(i64, u32)>> = vec![BinaryHeap::new(); num_parts];
    let mut frozen = vec![false; num_parts];
    let mut unassigned = n;

    let mut absorb =
        |v: usize, p: usize, part: &mut Vec<u32>, pw: &mut Vec<i64>, heaps: &mut Vec<BinaryHeap<(i64, u32)>>| {
            part[v] = p as u32;
            pw[p] += g.vwgt[v];
            for (u, w) in g.neighbors(v) {
                if part[u] == NONE {
                    let c = &mut conn[p * n + u];
                    *c += w;
                    heaps[p].push((*c, u as u32));
                }
            }
        };

    let seeds = rand::seq::index::sample(rng, n, num_parts);
    for (p, v) in seeds.iter().enumerate() {
        absorb(v, p, &mut part, &mut pw, &mut heaps);
        unassigned -= 1;
    }

    while unassigned > 0 {
        let Some(p) = (0..num_parts).filter(|&p| !frozen[p]).min_by_key(|&p| (pw[p], p)) else {
            // every part is full; spill the rest onto the lightest parts
            for v in 0..n {
                if part[v] == NONE {
                    let p = (0..num_parts).min_by_key(|&p| (pw[p], p)).unwrap();
                    part[v] = p as u32;
                    pw[p] += g.vwgt[v];
                }
            }
            break;
        };

        let mut chosen = None;
        while let Some((_, v)) = heaps[p].pop() {
            let v = v as usize;
            if part[v] == NONE && pw[p] + g.vwgt[v] <= cap {
                chosen = Some(v);
                break;
            }
        }
        if chosen.is_none() {
            // region exhausted: jump to a random unassigned node that fits
            let start = rng.random_range(0..n);
            chosen = (0..n)
                .map(|i| (start + i) % n)
                .find(|&v| part[v] == NONE && pw[p] + g.vwgt[v] <= cap);
        }
        match chosen {
            Some(v) => {
                absorb(v, p, &mut part, &mut pw, &mut heaps);
                unassigned -= 1;
            }
            None => frozen[p] = true,
        }
    }
    part
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn one_part_takes_everything() {
        let g = WeightedGraph::from_undirected_edges(3, vec![1; 3], &[(0, 1, 1), (1, 2, 1)]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(grow_partition(&g, 1, 0.05, &mut rng).unwrap(), vec![0, 0, 0]);
    }

    #[test]
    fn one_node_per_part() {
        let g = WeightedGraph::from_undirected_edges(4, vec![1; 4], &[(0, 1, 1), (1, 2, 1), (2, 3, 1)]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = grow_partition(&g, 4, 0.0, &mut rng).unwrap();
        p.sort_unstable();
        assert_eq!(p, vec![0, 1, 2, 3]);
    }

    #[test]
    fn heavy_node_is_infeasible() {
        let g = WeightedGraph::from_undirected_edges(3, vec![10, 1, 1], &[(0, 1, 1), (1, 2, 1)]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            grow_partition(&g, 2, 0.05, &mut rng),
            Err(Error::InfeasibleBalance(_))
        ));
    }

    #[test]
    fn too_many_parts_is_an_error() {
        let g = WeightedGraph::from_undirected_edges(2, vec![1; 2], &[(0, 1, 1)]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(grow_partition(&g, 3, 0.05, &mut rng).is_err());
    }
}
