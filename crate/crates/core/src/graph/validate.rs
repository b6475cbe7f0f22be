use super::{Graph, LabelSet, Labels, NodeFeatures, SplitMasks};

/// Check a dataset's parts against each other and against their own
/// invariants. Returns one human-readable entry per violation.
pub fn validate(g: &Graph, feats: &NodeFeatures, labels: &LabelSet, splits: &SplitMasks) -> Vec<String> {
    let mut out = g.violations();
    let n = g.num_nodes();

    if feats.num_rows() != n {
        out.push(format!("{} feature rows for {n} nodes", feats.num_rows()));
    }
    if let Some((v, d)) = feats.first_non_finite() {
        out.push(format!("non-finite feature at node {v}, dim {d}"));
    }

    if labels.num_nodes() != n {
        out.push(format!("{} label rows for {n} nodes", labels.num_nodes()));
    }
    match labels.labels() {
        Labels::Single(l) => {
            if let Some(v) = l.iter().position(|&c| c as usize >= labels.num_classes()) {
                out.push(format!("label of node {v} is >= num_classes"));
            }
        }
        Labels::Multi(rows) => {
            if let Some(i) = rows.iter().position(|&b| b > 1) {
                out.push(format!("multi-label entry {i} is not 0/1"));
            }
        }
    }

    let mut owner = vec![None; n];
    for (name, list) in [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)] {
        if list.windows(2).any(|w| w[0] >= w[1]) {
            out.push(format!("{name} split is not sorted and duplicate-free"));
        }
        for &v in list {
            match owner.get_mut(v as usize) {
                None => {
                    out.push(format!("{name} split node {v} is out of range"));
                    break;
                }
                Some(Some(prev)) if *prev != name => {
                    out.push(format!("node {v} is in both {prev} and {name} splits"));
                }
                Some(slot) => *slot = Some(name),
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parts() -> (Graph, NodeFeatures, LabelSet, SplitMasks) {
        (
            Graph::from_edges(3, [(0, 1), (1, 2)], true).unwrap(),
            NodeFeatures::new(1, vec![0.0, 1.0, 2.0]).unwrap(),
            LabelSet::single(2, vec![0, 1, 1]).unwrap(),
            SplitMasks::new(vec![0], vec![1], vec![2], 3).unwrap(),
        )
    }

    #[test]
    fn consistent_dataset_is_clean() {
        let (g, f, l, s) = parts();
        assert!(validate(&g, &f, &l, &s).is_empty());
    }

    #[test]
    fn asymmetric_edge_is_one_violation() {
        let (_, f, l, s) = parts();
        // 0<-1, 1<-0, 1<-2 but no 2<-1
        let g = Graph::from_csr_unchecked(vec![0, 1, 3, 3], vec![1, 0, 2], true);
        assert_eq!(validate(&g, &f, &l, &s).len(), 1);
    }

    #[test]
    fn nan_feature_is_one_violation() {
        let (g, _, l, s) = parts();
        let f = NodeFeatures::new(1, vec![0.0, f32::NAN, 2.0]).unwrap();
        assert_eq!(validate(&g, &f, &l, &s).len(), 1);
    }

    #[test]
    fn overlapping_splits_are_reported() {
        let (g, f, l, _) = parts();
        let s = SplitMasks {
            train: vec![0, 1],
            val: vec![1],
            test: vec![],
        };
        assert_eq!(validate(&g, &f, &l, &s).len(), 1);
    }
}
