//! Label entropy of graph partitions and micro/weighted F1 scores.
//!
//! Entropies are in bits. In multi-label mode the entropy of a node set is
//! the sum over label dimensions of the binary entropy of that dimension's
//! positive rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{LabelSet, Labels, NodeId};
use crate::partition::PartitionAssignment;

/// Empirical label frequencies of a node set.
#[derive(Debug, Clone, PartialEq)]
pub enum LabelDistribution {
    /// Class fractions, summing to 1.
    Single(Vec<f64>),
    /// Per-dimension positive rates.
    Multi(Vec<f64>),
}

/// `-p log2 p`, with `0 log 0 = 0`.
#[inline]
fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.log2()
    } else {
        0.0
    }
}

pub fn binary_entropy(rate: f64) -> f64 {
    plogp(rate) + plogp(1.0 - rate)
}

/// Entropy in bits of a distribution.
pub fn entropy(dist: &LabelDistribution) -> f64 {
    match dist {
        LabelDistribution::Single(p) => p.iter().map(|&x| plogp(x)).sum(),
        LabelDistribution::Multi(rates) => rates.iter().map(|&r| binary_entropy(r)).sum(),
    }
}

pub fn label_distribution(labels: &LabelSet, nodes: &[NodeId]) -> Result<LabelDistribution> {
    if nodes.is_empty() {
        return Err(Error::invalid("label distribution of an empty node list"));
    }
    let mut counts = vec![0u64; labels.num_classes()];
    match labels.labels() {
        Labels::Single(l) => {
            for &v in nodes {
                counts[l[v as usize] as usize] += 1;
            }
        }
        Labels::Multi(_) => {
            for &v in nodes {
                for (c, &b) in labels.row(v).iter().enumerate() {
                    counts[c] += b as u64;
                }
            }
        }
    }
    let n = nodes.len() as f64;
    let probs = counts.into_iter().map(|c| c as f64 / n).collect();
    Ok(match labels.mode() {
        crate::graph::LabelMode::Single => LabelDistribution::Single(probs),
        crate::graph::LabelMode::Multi => LabelDistribution::Multi(probs),
    })
}

/// Per-part entropies and their size-weighted mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub per_part_entropy: Vec<f64>,
    pub per_part_sizes: Vec<usize>,
    pub total_entropy: f64,
    /// Entropy of the whole node set, for reference.
    pub graph_entropy: f64,
    pub log_base: u32,
}

pub fn total_entropy(labels: &LabelSet, assignment: &PartitionAssignment) -> EntropyReport {
    let n = assignment.part_of().len();
    let members = assignment.members_all();
    let per_part_sizes: Vec<usize> = members.iter().map(Vec::len).collect();
    let per_part_entropy: Vec<f64> = members
        .iter()
        .map(|m| label_distribution(labels, m).map(|d| entropy(&d)).unwrap_or(0.0))
        .collect();
    let total = per_part_entropy
        .iter()
        .zip(&per_part_sizes)
        .map(|(h, &s)| s as f64 / n as f64 * h)
        .sum();
    let all: Vec<NodeId> = (0..n as NodeId).collect();
    let graph_entropy = label_distribution(labels, &all).map(|d| entropy(&d)).unwrap_or(0.0);
    EntropyReport {
        per_part_entropy,
        per_part_sizes,
        total_entropy: total,
        graph_entropy,
        log_base: 2,
    }
}

/// Per-class true-positive, false-positive and false-negative counts.
///
/// Counts from several evaluations can be merged, which is how pooled
/// (cross-worker) scores are computed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: Vec<u64>,
    pub fp: Vec<u64>,
    pub fn_: Vec<u64>,
}

impl ConfusionCounts {
    pub fn new(num_classes: usize) -> Self {
        ConfusionCounts {
            tp: vec![0; num_classes],
            fp: vec![0; num_classes],
            fn_: vec![0; num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.tp.len()
    }

    pub fn add_single(&mut self, pred: u32, truth: u32) {
        if pred == truth {
            self.tp[truth as usize] += 1;
        } else {
            self.fp[pred as usize] += 1;
            self.fn_[truth as usize] += 1;
        }
    }

    /// One node's 0/1 prediction and truth rows.
    pub fn add_multi(&mut self, pred: &[u8], truth: &[u8]) {
        for (c, (&p, &t)) in pred.iter().zip(truth).enumerate() {
            match (p, t) {
                (1, 1) => self.tp[c] += 1,
                (1, 0) => self.fp[c] += 1,
                (0, 1) => self.fn_[c] += 1,
                _ => {}
            }
        }
    }

    pub fn merge(&mut self, other: &ConfusionCounts) {
        for c in 0..self.num_classes() {
            self.tp[c] += other.tp[c];
            self.fp[c] += other.fp[c];
            self.fn_[c] += other.fn_[c];
        }
    }

    fn f1(tp: u64, fp: u64, fn_: u64) -> f64 {
        let denom = 2 * tp + fp + fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        }
    }

    /// F1 from globally pooled counts; equals accuracy for single-label data.
    pub fn micro_f1(&self) -> f64 {
        Self::f1(self.tp.iter().sum(), self.fp.iter().sum(), self.fn_.iter().sum())
    }

    /// Per-class F1 weighted by each class's share of true instances.
    pub fn weighted_f1(&self) -> f64 {
        let support: Vec<u64> = (0..self.num_classes()).map(|c| self.tp[c] + self.fn_[c]).collect();
        let total: u64 = support.iter().sum();
        if total == 0 {
            return 0.0;
        }
        (0..self.num_classes())
            .map(|c| support[c] as f64 / total as f64 * Self::f1(self.tp[c], self.fp[c], self.fn_[c]))
            .sum()
    }
}

fn single_counts(pred: &[u32], truth: &[u32]) -> Result<ConfusionCounts> {
    if pred.len() != truth.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::invalid("F1 of an empty prediction set"));
    }
    let classes = pred.iter().chain(truth).max().map_or(0, |&m| m as usize + 1);
    let mut counts = ConfusionCounts::new(classes);
    for (&p, &t) in pred.iter().zip(truth) {
        counts.add_single(p, t);
    }
    Ok(counts)
}

fn multi_counts(pred: &[u8], truth: &[u8], num_classes: usize) -> Result<ConfusionCounts> {
    if pred.len() != truth.len() || num_classes == 0 || !pred.len().is_multiple_of(num_classes) {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions, {} labels, {num_classes} classes",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::invalid("F1 of an empty prediction set"));
    }
    let mut counts = ConfusionCounts::new(num_classes);
    for (p, t) in pred.chunks_exact(num_classes).zip(truth.chunks_exact(num_classes)) {
        counts.add_multi(p, t);
    }
    Ok(counts)
}

pub fn micro_f1(pred: &[u32], truth: &[u32]) -> Result<f64> {
    Ok(single_counts(pred, truth)?.micro_f1())
}

pub fn weighted_f1(pred: &[u32], truth: &[u32]) -> Result<f64> {
    Ok(single_counts(pred, truth)?.weighted_f1())
}

/// Micro-F1 over row-major 0/1 matrices.
pub fn micro_f1_multi(pred: &[u8], truth: &[u8], num_classes: usize) -> Result<f64> {
    Ok(multi_counts(pred, truth, num_classes)?.micro_f1())
}

pub fn weighted_f1_multi(pred: &[u8], truth: &[u8], num_classes: usize) -> Result<f64> {
    Ok(multi_counts(pred, truth, num_classes)?.weighted_f1())
}
