use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Graph, LabelMode, LabelSet, Labels, NodeFeatures, NodeId, SplitMasks};
use crate::error::{Error, Result};
use crate::io;

pub const META_FILE: &str = "meta.json";
pub const EDGES_FILE: &str = "edges.bin";
pub const FEATURES_FILE: &str = "features.bin";
pub const LABELS_FILE: &str = "labels.bin";
pub const SPLITS_FILE: &str = "splits.json";

/// Header stored in `meta.json`. `num_edges` counts the `(src, dst)` pairs
/// in `edges.bin`, before symmetrization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub num_nodes: usize,
    pub num_edges: usize,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub label_mode: LabelMode,
    pub undirected: bool,
}

/// A graph with its node features, labels and splits.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub graph: Graph,
    pub features: NodeFeatures,
    pub labels: LabelSet,
    pub splits: SplitMasks,
}

impl Dataset {
    /// Load a dataset directory. Undirected graphs are symmetrized, and
    /// self-loops and duplicate edges are dropped.
    pub fn load(dir: &Path) -> Result<Self> {
        let meta: DatasetMeta = io::read_json(&dir.join(META_FILE))?;
        let n = meta.num_nodes;

        let path = dir.join(EDGES_FILE);
        let bytes = io::read_bytes(&path)?;
        io::check_len(&path, &bytes, meta.num_edges as u64 * 16)?;
        let raw = io::u64s_from_le(&bytes);
        let mut pairs = Vec::with_capacity(meta.num_edges);
        for pair in raw.chunks_exact(2) {
            let (s, d) = (pair[0], pair[1]);
            if s >= n as u64 || d >= n as u64 {
                return Err(Error::invalid(format!(
                    "{}: edge ({s}, {d}) references a node >= num_nodes ({n})",
                    path.display()
                )));
            }
            pairs.push((s as NodeId, d as NodeId));
        }
        let graph = Graph::from_edges(n, pairs, meta.undirected)?;

        let path = dir.join(FEATURES_FILE);
        let bytes = io::read_bytes(&path)?;
        io::check_len(&path, &bytes, (n * meta.feature_dim * 4) as u64)?;
        let features = NodeFeatures::new(meta.feature_dim, io::f32s_from_le(&bytes))?;
        if let Some((v, d)) = features.first_non_finite() {
            return Err(Error::invalid(format!(
                "{}: non-finite feature at node {v}, dim {d}",
                path.display()
            )));
        }

        let path = dir.join(LABELS_FILE);
        let bytes = io::read_bytes(&path)?;
        let labels = match meta.label_mode {
            LabelMode::Single => {
                io::check_len(&path, &bytes, n as u64 * 4)?;
                LabelSet::single(meta.num_classes, io::u32s_from_le(&bytes))?
            }
            LabelMode::Multi => {
                io::check_len(&path, &bytes, (n * meta.num_classes) as u64)?;
                LabelSet::multi(meta.num_classes, bytes)?
            }
        };

        let raw: SplitMasks = io::read_json(&dir.join(SPLITS_FILE))?;
        let splits = SplitMasks::new(raw.train, raw.val, raw.test, n)?;

        Ok(Dataset {
            graph,
            features,
            labels,
            splits,
        })
    }

    /// Write the dataset directory, creating `dir` if needed (its parent must
    /// exist). Undirected graphs store each edge once.
    pub fn save(&self, dir: &Path) -> Result<()> {
        if !dir.exists() {
            fs::create_dir(dir).map_err(|e| Error::io(dir, e))?;
        }
        let undirected = self.graph.is_undirected();
        let pairs: Vec<u64> = self
            .graph
            .edges()
            .filter(|&(u, v)| !undirected || u < v)
            .flat_map(|(u, v)| [u as u64, v as u64])
            .collect();
        let meta = DatasetMeta {
            num_nodes: self.graph.num_nodes(),
            num_edges: pairs.len() / 2,
            feature_dim: self.features.dim(),
            num_classes: self.labels.num_classes(),
            label_mode: self.labels.mode(),
            undirected,
        };
        io::write_atomic(&dir.join(EDGES_FILE), &io::u64s_to_le(&pairs))?;
        io::write_atomic(&dir.join(FEATURES_FILE), &io::f32s_to_le(self.features.data()))?;
        let label_bytes = match self.labels.labels() {
            Labels::Single(l) => io::u32s_to_le(l),
            Labels::Multi(rows) => rows.clone(),
        };
        io::write_atomic(&dir.join(LABELS_FILE), &label_bytes)?;
        io::write_json(&dir.join(SPLITS_FILE), &self.splits)?;
        // meta last: a directory with meta.json is complete
        io::write_json(&dir.join(META_FILE), &meta)?;
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> Dataset {
        Dataset {
            graph: Graph::from_edges(3, [(0, 1), (1, 2)], true).unwrap(),
            features: NodeFeatures::new(2, vec![1.0, 0.0, 0.5, 0.5, 0.0, 1.0]).unwrap(),
            labels: LabelSet::single(2, vec![0, 0, 1]).unwrap(),
            splits: SplitMasks::new(vec![0], vec![1], vec![2], 3).unwrap(),
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = path3();
        ds.save(dir.path()).unwrap();
        let back = Dataset::load(dir.path()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.graph.offsets(), &[0, 1, 3, 4]);
    }

    #[test]
    fn short_features_is_a_size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        path3().save(dir.path()).unwrap();
        fs::write(dir.path().join(FEATURES_FILE), [0u8; 20]).unwrap();
        let err = Dataset::load(dir.path()).unwrap_err();
        assert!(matches!(err, Error::PayloadSizeMismatch { .. }));
        assert!(err.to_string().contains("payload size mismatch"));
    }

    #[test]
    fn overlapping_splits_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        path3().save(dir.path()).unwrap();
        fs::write(dir.path().join(SPLITS_FILE), r#"{"train":[0,1],"val":[],"test":[1]}"#).unwrap();
        let err = Dataset::load(dir.path()).unwrap_err();
        assert!(err.to_string().contains("splits overlap"), "{err}");
    }

    #[test]
    fn label_out_of_range_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        path3().save(dir.path()).unwrap();
        fs::write(dir.path().join(LABELS_FILE), io::u32s_to_le(&[0, 5, 1])).unwrap();
        assert!(matches!(Dataset::load(dir.path()), Err(Error::Invalid(_))));
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        path3().save(dir.path()).unwrap();
        fs::remove_file(dir.path().join(EDGES_FILE)).unwrap();
        let err = Dataset::load(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(err.to_string().contains(EDGES_FILE));
    }

    #[test]
    fn multi_label_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut ds = path3();
        ds.labels = LabelSet::multi(2, vec![1, 0, 1, 1, 0, 0]).unwrap();
        ds.save(dir.path()).unwrap();
        assert_eq!(Dataset::load(dir.path()).unwrap(), ds);
    }
}
