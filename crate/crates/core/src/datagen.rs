//! Planted-community datasets.
//!
//! Labels are drawn i.i.d. from `class_proportions`; edges follow a
//! stochastic block model. The intra-class probability of each class is
//! scaled by its size so that every class has expected intra-class degree
//! `homophily * avg_degree`; a single inter-class probability supplies the
//! remaining `(1 - homophily)` share of the `avg_degree * n / 2` expected
//! edges. Each class has a unit-norm mean feature vector (mutually
//! orthogonal when `feature_dim >= num_classes`); node features are the
//! class mean plus isotropic Gaussian noise whose expected norm is about
//! `feature_noise`.

use std::collections::HashSet;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Dataset, Graph, LabelSet, NodeFeatures, NodeId, SplitMasks};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSpec {
    pub num_nodes: usize,
    pub num_classes: usize,
    pub class_proportions: Vec<f64>,
    /// Expected fraction of edges joining same-class endpoints.
    pub homophily: f64,
    pub avg_degree: f64,
    pub feature_dim: usize,
    pub feature_noise: f64,
    pub seed: u64,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            num_nodes: 20_000,
            num_classes: 4,
            class_proportions: vec![0.7, 0.2, 0.07, 0.03],
            homophily: 0.9,
            avg_degree: 20.0,
            feature_dim: 64,
            feature_noise: 2.0,
            seed: 0,
        }
    }
}

impl GenSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(Error::invalid("datagen.num_classes must be at least 1"));
        }
        if self.class_proportions.len() != self.num_classes {
            return Err(Error::invalid(format!(
                "datagen.class_proportions has {} entries for {} classes",
                self.class_proportions.len(),
                self.num_classes
            )));
        }
        let sum: f64 = self.class_proportions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.class_proportions.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::invalid(format!(
                "datagen.class_proportions must be non-negative and sum to 1 (sum is {sum})"
            )));
        }
        if !(0.0..=1.0).contains(&self.homophily) {
            return Err(Error::invalid("datagen.homophily must be in [0, 1]"));
        }
        if self.num_nodes < self.num_classes {
            return Err(Error::invalid("datagen.num_nodes must be >= num_classes"));
        }
        if !(self.avg_degree >= 0.0) || self.avg_degree >= self.num_nodes as f64 {
            return Err(Error::invalid(format!(
                "datagen.avg_degree {} is infeasible for {} nodes",
                self.avg_degree, self.num_nodes
            )));
        }
        if self.feature_dim == 0 {
            return Err(Error::invalid("datagen.feature_dim must be at least 1"));
        }
        if !(self.feature_noise >= 0.0) {
            return Err(Error::invalid("datagen.feature_noise must be >= 0"));
        }
        Ok(())
    }
}

/// Generate a dataset; the output is a pure function of `spec`.
pub fn generate(spec: &GenSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.num_nodes;
    let l = spec.num_classes;

    let dist = WeightedIndex::new(&spec.class_proportions)
        .map_err(|e| Error::invalid(format!("datagen.class_proportions: {e}")))?;
    let labels: Vec<u32> = (0..n).map(|_| dist.sample(&mut rng) as u32).collect();
    let mut members: Vec<Vec<NodeId>> = vec![Vec::new(); l];
    for (v, &c) in labels.iter().enumerate() {
        members[c as usize].push(v as NodeId);
    }

    let edges = block_model_edges(&members, spec.avg_degree, spec.homophily, &mut rng);
    let graph = Graph::from_edges(n, edges, true)?;

    let means = class_means(l, spec.feature_dim, &mut rng);
    let sigma = spec.feature_noise / (spec.feature_dim as f64).sqrt();
    let mut data = Vec::with_capacity(n * spec.feature_dim);
    for &c in &labels {
        for &m in &means[c as usize] {
            let noise: f64 = if sigma > 0.0 {
                sigma * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            data.push((m + noise) as f32);
        }
    }
    let features = NodeFeatures::new(spec.feature_dim, data)?;

    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for class in &members {
        let mut nodes = class.clone();
        nodes.shuffle(&mut rng);
        let m = nodes.len();
        let n_train = (0.6 * m as f64).round() as usize;
        let n_val = ((0.2 * m as f64).round() as usize).min(m - n_train);
        train.extend_from_slice(&nodes[..n_train]);
        val.extend_from_slice(&nodes[n_train..n_train + n_val]);
        test.extend_from_slice(&nodes[n_train + n_val..]);
    }
    let splits = SplitMasks::new(train, val, test, n)?;

    Ok(Dataset {
        graph,
        features,
        labels: LabelSet::single(l, labels)?,
        splits,
    })
}

fn block_model_edges<R: Rng>(
    members: &[Vec<NodeId>],
    avg_degree: f64,
    homophily: f64,
    rng: &mut R,
) -> Vec<(NodeId, NodeId)> {
    let sizes: Vec<f64> = members.iter().map(|m| m.len() as f64).collect();
    let n: f64 = sizes.iter().sum();
    let target_edges = n * avg_degree / 2.0;
    let intra_pairs: f64 = sizes.iter().map(|&s| s * (s - 1.0) / 2.0).sum();
    let inter_pairs = n * (n - 1.0) / 2.0 - intra_pairs;
    // every class gets expected intra-class degree homophily * avg_degree
    let p_in: Vec<f64> = sizes
        .iter()
        .map(|&s| {
            if s > 1.0 {
                (homophily * avg_degree / (s - 1.0)).min(1.0)
            } else {
                0.0
            }
        })
        .collect();
    let p_out = if inter_pairs > 0.0 {
        ((1.0 - homophily) * target_edges / inter_pairs).min(1.0)
    } else {
        0.0
    };

    let mut edges = Vec::new();
    for a in 0..members.len() {
        for b in a..members.len() {
            let (p, pairs) = if a == b {
                let s = members[a].len() as u64;
                (p_in[a], s * s.saturating_sub(1) / 2)
            } else {
                (p_out, members[a].len() as u64 * members[b].len() as u64)
            };
            sample_block(&members[a], &members[b], a == b, pairs, p, rng, &mut edges);
        }
    }
    edges
}

/// Draw each of the `pairs` node pairs between blocks `xs` and `ys`
/// independently with probability `p`.
fn sample_block<R: Rng>(
    xs: &[NodeId],
    ys: &[NodeId],
    same: bool,
    pairs: u64,
    p: f64,
    rng: &mut R,
    out: &mut Vec<(NodeId, NodeId)>,
) {
    if pairs == 0 || p <= 0.0 {
        return;
    }
    if p > 0.25 {
        // dense block: enumerate
        for (i, &x) in xs.iter().enumerate() {
            let ys = if same { &ys[i + 1..] } else { ys };
            for &y in ys {
                if rng.random::<f64>() < p {
                    out.push((x, y));
                }
            }
        }
        return;
    }
    let k = Binomial::new(pairs, p).expect("p in (0, 1]").sample(rng);
    let mut seen: HashSet<(NodeId, NodeId)> = HashSet::with_capacity(k as usize);
    while (seen.len() as u64) < k {
        let x = xs[rng.random_range(0..xs.len())];
        let y = ys[rng.random_range(0..ys.len())];
        if x == y {
            continue;
        }
        let key = (x.min(y), x.max(y));
        if seen.insert(key) {
            out.push(key);
        }
    }
}

/// Unit-norm class means: a random orthonormal set when `dim >= classes`,
/// otherwise random distinct unit vectors.
fn class_means<R: Rng>(classes: usize, dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(classes);
    while means.len() < classes {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if classes <= dim {
            for m in &means {
                let d: f64 = v.iter().zip(m).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(m).for_each(|(a, b)| *a -= d * b);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-6 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        if means
            .iter()
            .any(|m| m.iter().zip(&v).all(|(a, b)| (a - b).abs() < 1e-9))
        {
            continue;
        }
        means.push(v);
    }
    means
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> GenSpec {
        GenSpec {
            num_nodes: 1000,
            num_classes: 4,
            class_proportions: vec![0.7, 0.2, 0.07, 0.03],
            homophily: 0.9,
            avg_degree: 10.0,
            feature_dim: 16,
            feature_noise: 0.5,
            seed,
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = generate(&small(7)).unwrap();
        let b = generate(&small(7)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate(&small(8)).unwrap());
    }

    #[test]
    fn full_homophily_has_only_intra_class_edges() {
        let ds = generate(&GenSpec {
            homophily: 1.0,
            ..small(1)
        })
        .unwrap();
        assert!(ds.graph.num_edges() > 0);
        for (u, v) in ds.graph.edges() {
            assert_eq!(ds.labels.class_of(u), ds.labels.class_of(v));
        }
    }

    #[test]
    fn zero_noise_gives_identical_class_features() {
        let ds = generate(&GenSpec {
            feature_noise: 0.0,
            ..small(2)
        })
        .unwrap();
        let mut first: Vec<Option<NodeId>> = vec![None; 4];
        for v in 0..1000 {
            let c = ds.labels.class_of(v) as usize;
            match first[c] {
                None => first[c] = Some(v),
                Some(u) => assert_eq!(ds.features.row(u), ds.features.row(v)),
            }
        }
    }

    #[test]
    fn class_means_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = class_means(4, 8, &mut rng);
        for i in 0..4 {
            for j in 0..4 {
                let d: f64 = m[i].iter().zip(&m[j]).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn splits_are_stratified() {
        let ds = generate(&small(4)).unwrap();
        let s = &ds.splits;
        assert_eq!(s.train.len() + s.val.len() + s.test.len(), 1000);
        let frac = s.train.len() as f64 / 1000.0;
        assert!((frac - 0.6).abs() < 0.01, "{frac}");
    }

    #[test]
    fn infeasible_degree_is_rejected() {
        assert!(generate(&GenSpec {
            avg_degree: 1000.0,
            ..small(0)
        })
        .is_err());
        assert!(generate(&GenSpec {
            class_proportions: vec![0.5, 0.5, 0.5, 0.5],
            ..small(0)
        })
        .is_err());
    }
}
