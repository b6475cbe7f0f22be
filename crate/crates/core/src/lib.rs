//! Entropy-aware distributed GraphSAGE training at desk scale.
//!
//! The crate is organised along the training pipeline:
//!
//! * [`graph`]: CSR graphs, node features, labels, splits, the on-disk
//!   dataset layout and partition-local views with halo nodes.
//! * [`datagen`]: planted-community (stochastic block model) datasets with
//!   class-correlated features and configurable class imbalance.
//! * [`partition`]: feature/degree edge weighting and a multilevel weighted
//!   k-way partitioner.
//! * [`metrics`]: label entropy of partitions and micro/weighted F1.
//! * [`sampler`]: the class-balanced mini-epoch sampler and layered
//!   neighbour sampling.
//! * [`gnn`]: two-layer GraphSAGE with exact gradients and Adam.
//! * [`trainer`]: simulated multi-worker training with a synchronous
//!   generalization phase followed by asynchronous personalization.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod datagen;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod io;
pub mod metrics;
pub mod partition;
pub mod sampler;
pub mod trainer;

pub use datagen::GenSpec;
pub use error::{Error, Result};
pub use gnn::ModelParams;
pub use graph::{Dataset, Graph, LabelMode, LabelSet, LocalPartition, NodeFeatures, NodeId, SplitMasks};
pub use partition::{EdgeWeights, PartitionAssignment, PartitionerConfig};
pub use sampler::{MiniBatchBlock, Normalization, SampleProbabilities};
pub use trainer::{EvalReport, HistoryRecord, TrainConfig};
