use std::collections::HashMap;

use super::{Graph, NodeId, SplitMasks};
use crate::error::{Error, Result};
use crate::partition::PartitionAssignment;

/// One worker's view of the graph: the nodes it owns plus every node within
/// `halo_depth` hops of them, with the subgraph induced on that set.
///
/// Local ids number the owned nodes first (in ascending global order),
/// followed by the halo nodes, so `local < num_owned()` exactly when the
/// node is owned.
#[derive(Debug, Clone)]
pub struct LocalPartition {
    part_id: usize,
    owned: Vec<NodeId>,
    halo: Vec<NodeId>,
    graph: Graph,
    global_ids: Vec<NodeId>,
    global_to_local: HashMap<NodeId, NodeId>,
    train: Vec<NodeId>,
    val: Vec<NodeId>,
    test: Vec<NodeId>,
}

impl LocalPartition {
    pub fn part_id(&self) -> usize {
        self.part_id
    }

    /// Owned nodes, global ids.
    pub fn owned(&self) -> &[NodeId] {
        &self.owned
    }

    /// Halo nodes, global ids.
    pub fn halo(&self) -> &[NodeId] {
        &self.halo
    }

    pub fn num_owned(&self) -> usize {
        self.owned.len()
    }

    /// Subgraph induced on owned and halo nodes, in local ids.
    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    #[inline]
    pub fn global_id(&self, local: NodeId) -> NodeId {
        self.global_ids[local as usize]
    }

    /// Local-to-global id table.
    pub fn global_ids(&self) -> &[NodeId] {
        &self.global_ids
    }

    pub fn local_id(&self, global: NodeId) -> Option<NodeId> {
        self.global_to_local.get(&global).copied()
    }

    /// Owned training nodes, local ids.
    pub fn train(&self) -> &[NodeId] {
        &self.train
    }

    pub fn val(&self) -> &[NodeId] {
        &self.val
    }

    pub fn test(&self) -> &[NodeId] {
        &self.test
    }
}

/// Build the local view of `part`.
pub fn induce_local_partition(
    g: &Graph,
    assignment: &PartitionAssignment,
    part: usize,
    halo_depth: usize,
    splits: &SplitMasks,
) -> Result<LocalPartition> {
    if part >= assignment.num_parts() {
        return Err(Error::invalid(format!(
            "part {part} out of range for {} parts",
            assignment.num_parts()
        )));
    }
    if assignment.part_of().len() != g.num_nodes() {
        return Err(Error::ShapeMismatch(format!(
            "assignment covers {} nodes, graph has {}",
            assignment.part_of().len(),
            g.num_nodes()
        )));
    }

    let owned = assignment.members(part);
    let mut seen = vec![false; g.num_nodes()];
    for &v in &owned {
        seen[v as usize] = true;
    }
    let mut halo = Vec::new();
    let mut frontier = owned.clone();
    for _ in 0..halo_depth {
        let mut next = Vec::new();
        for &v in &frontier {
            for &u in g.neighbors(v) {
                if !seen[u as usize] {
                    seen[u as usize] = true;
                    next.push(u);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        halo.extend_from_slice(&next);
        frontier = next;
    }
    halo.sort_unstable();

    let global_ids: Vec<NodeId> = owned.iter().chain(halo.iter()).copied().collect();
    let global_to_local: HashMap<NodeId, NodeId> = global_ids
        .iter()
        .enumerate()
        .map(|(l, &gid)| (gid, l as NodeId))
        .collect();
    let graph = g.induced(&global_ids, &|u| global_to_local.get(&u).copied());

    let num_owned = owned.len() as NodeId;
    let localize = |ids: &[NodeId]| -> Vec<NodeId> {
        ids.iter()
            .filter_map(|v| global_to_local.get(v).copied())
            .filter(|&l| l < num_owned)
            .collect()
    };
    let train = localize(&splits.train);
    let val = localize(&splits.val);
    let test = localize(&splits.test);

    Ok(LocalPartition {
        part_id: part,
        owned,
        halo,
        graph,
        global_ids,
        global_to_local,
        train,
        val,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn split_none() -> SplitMasks {
        SplitMasks::default()
    }

    #[test]
    fn disconnected_triangles_have_no_halo() {
        let g = Graph::from_edges(6, [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)], true).unwrap();
        let a = PartitionAssignment::new(2, vec![0, 0, 0, 1, 1, 1]).unwrap();
        for p in 0..2 {
            let local = induce_local_partition(&g, &a, p, 2, &split_none()).unwrap();
            assert!(local.halo().is_empty());
            assert_eq!(local.graph().num_edges(), 6);
        }
    }

    #[test]
    fn path_split_in_half_has_one_halo_node() {
        // a-b-c-d
        let g = Graph::from_edges(4, [(0, 1), (1, 2), (2, 3)], true).unwrap();
        let a = PartitionAssignment::new(2, vec![0, 0, 1, 1]).unwrap();
        let local = induce_local_partition(&g, &a, 0, 1, &split_none()).unwrap();
        assert_eq!(local.owned(), &[0, 1]);
        assert_eq!(local.halo(), &[2]);
        // b-c edge is present in both directions
        let (b, c) = (local.local_id(1).unwrap(), local.local_id(2).unwrap());
        assert!(local.graph().has_edge(c, b));
        assert!(local.graph().has_edge(b, c));
    }

    #[test]
    fn depth_zero_keeps_only_owned_edges() {
        let g = Graph::from_edges(4, [(0, 1), (1, 2), (2, 3)], true).unwrap();
        let a = PartitionAssignment::new(2, vec![0, 0, 1, 1]).unwrap();
        let local = induce_local_partition(&g, &a, 0, 0, &split_none()).unwrap();
        assert!(local.halo().is_empty());
        assert_eq!(local.graph().num_nodes(), 2);
        assert_eq!(local.graph().num_edges(), 2);
    }

    #[test]
    fn splits_are_restricted_to_owned_nodes() {
        let g = Graph::from_edges(4, [(0, 1), (1, 2), (2, 3)], true).unwrap();
        let a = PartitionAssignment::new(2, vec![0, 0, 1, 1]).unwrap();
        let splits = SplitMasks::new(vec![0, 2], vec![1], vec![3], 4).unwrap();
        let local = induce_local_partition(&g, &a, 0, 2, &splits).unwrap();
        assert_eq!(local.train(), &[0]);
        assert_eq!(local.val(), &[1]);
        assert!(local.test().is_empty());
        for &l in local.train().iter().chain(local.val()) {
            assert!((l as usize) < local.num_owned());
        }
    }

    #[test]
    fn bad_part_is_rejected() {
        let g = Graph::from_edges(2, [(0, 1)], true).unwrap();
        let a = PartitionAssignment::new(2, vec![0, 1]).unwrap();
        assert!(induce_local_partition(&g, &a, 2, 1, &split_none()).is_err());
    }
}
