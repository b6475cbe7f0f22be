//! Boundary refinement (Fiduccia–Mattheyses style) and balance repair.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::seq::SliceRandom;
use rand::Rng;

use super::WeightedGraph;

/// Best move of `v` out of its part: `(gain, target)`, where gain is the
/// reduction in cut weight. `None` for interior nodes or when no target
/// part can take the node under `room`.
fn best_move(
    g: &WeightedGraph,
    part: &[u32],
    pw: &[i64],
    v: usize,
    room: i64,
    scratch: &mut Vec<(u32, i64)>,
) -> Option<(i64, u32)> {
    let from = part[v];
    let wv = g.vwgt[v];
    if pw[from as usize] - wv <= 0 {
        return None;
    }
    scratch.clear();
    let mut internal = 0;
    for (u, w) in g.neighbors(v) {
        let pu = part[u];
        if pu == from {
            internal += w;
        } else if let Some(e) = scratch.iter_mut().find(|e| e.0 == pu) {
            e.1 += w;
        } else {
            scratch.push((pu, w));
        }
    }
    let mut best: Option<(i64, i64, Reverse<u32>)> = None;
    for &(t, conn) in scratch.iter() {
        if pw[t as usize] + wv > room {
            continue;
        }
        // prefer higher gain, then the lighter target, then the lower id
        let key = (conn - internal, -pw[t as usize], Reverse(t));
        if best.is_none_or(|b| key > b) {
            best = Some(key);
        }
    }
    best.map(|(gain, _, Reverse(t))| (gain, t))
}

/// Multi-pass k-way FM refinement.
///
/// Each pass moves boundary nodes one at a time in order of decreasing gain,
/// locking every moved node, and may take negative-gain moves to climb out
/// of local minima. Moves may overshoot the balance cap by at most one node
/// weight while the pass runs. At the end of a pass the move sequence is
/// rolled back to the prefix with the lowest cut among those whose heaviest
/// part is within `max(cap, heaviest part at pass start)`. The cut therefore
/// never increases and balance never degrades past the cap. Stops after
/// `passes` passes or after a pass without improvement.
pub(crate) fn fm_refine<R: Rng + ?Sized>(
    g: &WeightedGraph,
    part: &mut [u32],
    num_parts: usize,
    cap: i64,
    passes: usize,
    rng: &mut R,
) {
    let n = g.num_nodes();
    if num_parts < 2 || n == 0 {
        return;
    }
    let room = cap + g.max_node_weight();
    let stall_limit = (n / 100).clamp(25, 150);
    let mut pw = g.part_weights(part, num_parts);
    let mut scratch = Vec::new();
    let mut rank: Vec<u32> = (0..n as u32).collect();

    for _ in 0..passes {
        rank.shuffle(rng);
        let start_max = pw.iter().copied().max().unwrap();
        let admissible = cap.max(start_max);

        let mut heap: BinaryHeap<(i64, u32, u32, u32)> = BinaryHeap::new();
        for v in 0..n {
            if let Some((gain, t)) = best_move(g, part, &pw, v, room, &mut scratch) {
                heap.push((gain, rank[v], v as u32, t));
            }
        }

        let mut locked = vec![false; n];
        let mut moves: Vec<(u32, u32)> = Vec::new();
        let (mut delta, mut best_delta, mut best_len, mut best_max) = (0i64, 0i64, 0usize, start_max);
        let mut since_best = 0usize;

        while let Some((gain, _, v, t)) = heap.pop() {
            let v = v as usize;
            if locked[v] {
                continue;
            }
            match best_move(g, part, &pw, v, room, &mut scratch) {
                None => continue,
                Some((g2, t2)) if g2 != gain || t2 != t => {
                    heap.push((g2, rank[v], v as u32, t2));
                    continue;
                }
                Some(_) => {}
            }
            let from = part[v];
            part[v] = t;
            pw[from as usize] -= g.vwgt[v];
            pw[t as usize] += g.vwgt[v];
            locked[v] = true;
            delta -= gain;
            moves.push((v as u32, from));
            for (u, _) in g.neighbors(v) {
                if !locked[u] {
                    if let Some((gu, tu)) = best_move(g, part, &pw, u, room, &mut scratch) {
                        heap.push((gu, rank[u], u as u32, tu));
                    }
                }
            }

            let cur_max = pw.iter().copied().max().unwrap();
            if cur_max <= admissible && (delta < best_delta || (delta == best_delta && cur_max < best_max)) {
                best_delta = delta;
                best_len = moves.len();
                best_max = cur_max;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best > stall_limit {
                    break;
                }
            }
        }

        for &(v, from) in moves[best_len..].iter().rev() {
            let v = v as usize;
            pw[part[v] as usize] -= g.vwgt[v];
            pw[from as usize] += g.vwgt[v];
            part[v] = from;
        }
        if best_len == 0 {
            break;
        }
    }
}

/// Move nodes out of parts heavier than `cap` into parts with room,
/// choosing at each step the move that raises the cut the least. Used when a
/// projected coarse partition violates balance at a finer level.
pub(crate) fn rebalance(g: &WeightedGraph, part: &mut [u32], num_parts: usize, cap: i64) {
    let n = g.num_nodes();
    let mut pw = g.part_weights(part, num_parts);
    let mut conn = vec![0i64; num_parts];
    for _ in 0..num_parts * 4 {
        let mut heavy: Vec<usize> = (0..num_parts).filter(|&p| pw[p] > cap).collect();
        if heavy.is_empty() {
            return;
        }
        heavy.sort_by_key(|&p| Reverse(pw[p]));
        let mut moved_any = false;
        for h in heavy {
            // candidates ranked by the cut change of their best move
            let mut cands: Vec<(i64, u32)> = Vec::new();
            for v in (0..n).filter(|&v| part[v] as usize == h) {
                conn.iter_mut().for_each(|c| *c = 0);
                for (u, w) in g.neighbors(v) {
                    conn[part[u] as usize] += w;
                }
                let best = (0..num_parts)
                    .filter(|&t| t != h)
                    .map(|t| conn[t] - conn[h])
                    .max()
                    .unwrap_or(i64::MIN);
                cands.push((best, v as u32));
            }
            cands.sort_by_key(|&(gain, v)| (Reverse(gain), v));
            for (_, v) in cands {
                if pw[h] <= cap {
                    break;
                }
                let v = v as usize;
                let wv = g.vwgt[v];
                if pw[h] - wv <= 0 {
                    continue;
                }
                conn.iter_mut().for_each(|c| *c = 0);
                for (u, w) in g.neighbors(v) {
                    conn[part[u] as usize] += w;
                }
                let target = (0..num_parts)
                    .filter(|&t| t != h && pw[t] + wv <= cap)
                    .max_by_key(|&t| (conn[t], Reverse(pw[t]), Reverse(t)));
                if let Some(t) = target {
                    part[v] = t as u32;
                    pw[h] -= wv;
                    pw[t] += wv;
                    moved_any = true;
                }
            }
        }
        if !moved_any {
            return;
        }
    }
}
