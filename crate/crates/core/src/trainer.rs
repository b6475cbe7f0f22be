//! Simulated multi-worker training.
//!
//! Phase 0 trains one shared model: every worker computes gradients on its
//! own batch, the gradients are averaged through a [`ReduceChannel`] in
//! worker-id order, and every replica applies the same Adam update. Phase 1
//! starts each worker from the phase-0 model and trains it alone against
//! its local data, pulled towards the phase-0 weights by a proximal term.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::{self, ModelParams, OptimizerState, Proximal, Targets};
use crate::graph::{induce_local_partition, Dataset, LabelMode, LocalPartition, NodeId};
use crate::metrics::ConfusionCounts;
use crate::partition::PartitionAssignment;
use crate::sampler::{self, Normalization, SampleProbabilities};

/// When phase 0 hands over to phase 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PhaseSwitch {
    /// After `round(phase0_max_epochs * fraction)` mini-epochs.
    FixedFraction { fraction: f64 },
    /// Once the mean per-epoch relative loss decrease over the last
    /// `window` mini-epochs drops below `threshold`.
    Auto { window: usize, threshold: f64 },
}

impl Default for PhaseSwitch {
    fn default() -> Self {
        PhaseSwitch::Auto {
            window: 5,
            threshold: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub num_workers: usize,
    pub lr: f64,
    pub hidden: usize,
    pub fanouts: Vec<usize>,
    pub batch_size: usize,
    pub fraction: f64,
    pub lambda: f64,
    pub patience: usize,
    pub phase0_max_epochs: usize,
    pub phase1_max_epochs: usize,
    pub phase_switch: PhaseSwitch,
    pub seed: u64,
    pub sampler_enabled: bool,
    pub normalization: Normalization,
    /// Skip phase 1 and ignore the phase switch.
    pub baseline: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            num_workers: 4,
            lr: 1e-3,
            hidden: gnn::DEFAULT_HIDDEN,
            fanouts: vec![25, 25],
            batch_size: 1024,
            fraction: 0.25,
            lambda: 1e-4,
            patience: 5,
            phase0_max_epochs: 100,
            phase1_max_epochs: 100,
            phase_switch: PhaseSwitch::default(),
            seed: 0,
            sampler_enabled: true,
            normalization: Normalization::AsWritten,
            baseline: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::invalid(m));
        if self.num_workers == 0 {
            return fail("num_workers must be >= 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be positive, got {}", self.lr));
        }
        if self.hidden == 0 || self.batch_size == 0 {
            return fail("hidden and batch_size must be >= 1".into());
        }
        if self.fanouts.len() != gnn::NUM_LAYERS || self.fanouts.contains(&0) {
            return fail(format!(
                "fanouts must hold {} positive counts, got {:?}",
                gnn::NUM_LAYERS,
                self.fanouts
            ));
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return fail(format!("fraction must be in (0, 1], got {}", self.fraction));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return fail(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if self.patience == 0 {
            return fail("patience must be >= 1".into());
        }
        match self.phase_switch {
            PhaseSwitch::FixedFraction { fraction } if !(0.0..=1.0).contains(&fraction) => {
                fail(format!("phase switch fraction must be in [0, 1], got {fraction}"))
            }
            PhaseSwitch::Auto { window, threshold } if window < 2 || !threshold.is_finite() => {
                fail("auto phase switch needs window >= 2 and a finite threshold".into())
            }
            _ => Ok(()),
        }
    }
}

/// Tracks the best validation score and the parameters that produced it.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    pub patience: usize,
    best_score: f64,
    best_epoch: Option<usize>,
    epochs_since_best: usize,
    best: Option<ModelParams>,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        EarlyStopper {
            patience,
            best_score: f64::NEG_INFINITY,
            best_epoch: None,
            epochs_since_best: 0,
            best: None,
        }
    }

    /// Start from a known model and score; later epochs must beat it.
    pub fn seeded(patience: usize, score: f64, params: &ModelParams) -> Self {
        EarlyStopper {
            best_score: score,
            best: Some(params.clone()),
            ..Self::new(patience)
        }
    }

    /// Record one epoch. Returns true when training should stop.
    pub fn observe(&mut self, epoch: usize, score: f64, params: &ModelParams) -> bool {
        if score > self.best_score {
            self.best_score = score;
            self.best_epoch = Some(epoch);
            self.epochs_since_best = 0;
            self.best = Some(params.clone());
        } else {
            self.epochs_since_best += 1;
        }
        self.epochs_since_best >= self.patience
    }

    pub fn best_score(&self) -> f64 {
        self.best_score
    }

    /// Epoch of the best observation, `None` if the seed was never beaten.
    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }

    pub fn epochs_since_best(&self) -> usize {
        self.epochs_since_best
    }

    pub fn into_best(self) -> Option<ModelParams> {
        self.best
    }
}

/// One worker's record for one mini-epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub phase: u8,
    pub worker_id: usize,
    pub mini_epoch: usize,
    /// Seconds since the start of the phase, on this worker's clock.
    pub wall_time: f64,
    /// Seconds spent sampling and taking optimiser steps in this mini-epoch.
    pub step_time: f64,
    pub train_loss: f64,
    pub val_micro_f1: f64,
}

/// In-memory gradient exchange. Counts every message sent through it.
#[derive(Debug, Default)]
pub struct ReduceChannel {
    messages: AtomicU64,
}

impl ReduceChannel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn messages(&self) -> u64 {
        self.messages.load(Ordering::SeqCst)
    }

    /// Element-wise mean of `grads`, summed in slice order. `None` entries
    /// are workers without a batch this iteration: they add nothing but
    /// still count in the divisor. Each entry counts as one message.
    pub fn all_reduce_mean(&self, grads: &[Option<ModelParams>]) -> Result<ModelParams> {
        let first = grads
            .iter()
            .flatten()
            .next()
            .ok_or_else(|| Error::invalid("all_reduce_mean with no gradients"))?;
        let mut sum = ModelParams::zeros(first.dims());
        for g in grads.iter().flatten() {
            if !g.same_shape(&sum) {
                return Err(Error::ShapeMismatch(format!(
                    "gradient dims {:?} vs {:?}",
                    g.dims(),
                    sum.dims()
                )));
            }
            sum.add_scaled(1.0, g);
        }
        sum.scale(1.0 / grads.len() as f64);
        self.messages.fetch_add(grads.len() as u64, Ordering::SeqCst);
        Ok(sum)
    }
}

/// Whether phase 0 should hand over to phase 1 after the epochs whose
/// mean training losses are `losses`.
pub fn switch_trigger(losses: &[f64], mode: PhaseSwitch, phase0_max_epochs: usize) -> bool {
    match mode {
        PhaseSwitch::FixedFraction { fraction } => {
            let at = (phase0_max_epochs as f64 * fraction).round() as usize;
            losses.len() >= at.max(1)
        }
        PhaseSwitch::Auto { window, threshold } => {
            if losses.len() < window || window < 2 {
                return false;
            }
            let w = &losses[losses.len() - window..];
            let first = w[0];
            if first == 0.0 {
                return true;
            }
            let per_epoch = (first - w[window - 1]) / (first.abs() * (window - 1) as f64);
            per_epoch < threshold
        }
    }
}

/// Everything one worker needs: its local view, sampling distribution and
/// evaluation targets.
#[derive(Debug, Clone)]
pub struct Worker {
    pub id: usize,
    pub local: LocalPartition,
    pub probs: SampleProbabilities,
}

/// One worker per part of `assignment`; each sees its owned nodes plus a
/// halo as deep as the model.
pub fn build_workers(ds: &Dataset, assignment: &PartitionAssignment, cfg: &TrainConfig) -> Result<Vec<Worker>> {
    cfg.validate()?;
    if assignment.num_parts() != cfg.num_workers {
        return Err(Error::ShapeMismatch(format!(
            "assignment has {} parts but num_workers is {}",
            assignment.num_parts(),
            cfg.num_workers
        )));
    }
    (0..cfg.num_workers)
        .map(|id| {
            let local = induce_local_partition(&ds.graph, assignment, id, gnn::NUM_LAYERS, &ds.splits)?;
            let probs = if cfg.sampler_enabled && !cfg.baseline {
                sampler::cbs_probabilities(&local, &ds.labels, cfg.normalization)?
            } else if local.train().is_empty() {
                return Err(Error::invalid(format!("part {id} has no training nodes")));
            } else {
                sampler::uniform_probabilities(&local)
            };
            Ok(Worker { id, local, probs })
        })
        .collect()
}

fn model_dims(ds: &Dataset, cfg: &TrainConfig) -> Vec<usize> {
    vec![ds.features.dim(), cfg.hidden, ds.labels.num_classes()]
}

fn worker_rng(seed: u64, phase: u8, worker: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + 2 * worker as u64 + u64::from(phase));
    rng
}

/// Nodes for one mini-epoch, already cut into batches.
fn mini_epoch_batches(w: &Worker, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Vec<Vec<NodeId>> {
    let subset = if cfg.sampler_enabled && !cfg.baseline {
        sampler::sample_mini_epoch(&w.probs.nodes, &w.probs.probs, cfg.fraction, rng)
    } else {
        w.probs.nodes.clone()
    };
    sampler::make_batches(&subset, cfg.batch_size, rng)
}

/// Loss and gradients for one batch of local ids.
fn batch_gradients(
    params: &ModelParams,
    ds: &Dataset,
    w: &Worker,
    batch: &[NodeId],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    prox: Option<Proximal<'_>>,
) -> Result<(f64, ModelParams)> {
    let block = sampler::sample_block(w.local.graph(), batch, &cfg.fanouts, rng);
    let x0 = gnn::gather_features(&ds.features, block.input_nodes(), |v| w.local.global_id(v));
    let trace = gnn::forward(params, &block, &x0)?;
    let targets = Targets::from_labels(&ds.labels, batch.iter().map(|&v| w.local.global_id(v)));
    Ok(gnn::backward(&trace, params, &block, &targets, prox))
}

/// Confusion counts of `params` on the given local nodes.
pub fn confusion(
    params: &ModelParams,
    ds: &Dataset,
    local: &LocalPartition,
    nodes: &[NodeId],
) -> Result<ConfusionCounts> {
    let mut counts = ConfusionCounts::new(ds.labels.num_classes());
    if nodes.is_empty() {
        return Ok(counts);
    }
    let logits = gnn::predict_logits(params, local.graph(), &ds.features, |v| local.global_id(v), nodes)?;
    match ds.labels.mode() {
        LabelMode::Single => {
            for (&v, p) in nodes.iter().zip(gnn::argmax_rows(&logits)) {
                counts.add_single(p, ds.labels.class_of(local.global_id(v)));
            }
        }
        LabelMode::Multi => {
            let pred = gnn::threshold_rows(&logits);
            for (&v, p) in nodes.iter().zip(pred.chunks_exact(ds.labels.num_classes())) {
                counts.add_multi(p, ds.labels.row(local.global_id(v)));
            }
        }
    }
    Ok(counts)
}

fn val_score(params: &ModelParams, ds: &Dataset, w: &Worker) -> Result<f64> {
    Ok(confusion(params, ds, &w.local, w.local.val())?.micro_f1())
}

/// Result of the synchronous phase.
#[derive(Debug, Clone)]
pub struct Phase0Outcome {
    /// Best parameters by mean validation micro-F1.
    pub params: ModelParams,
    pub best_score: f64,
    pub history: Vec<HistoryRecord>,
    pub epochs: usize,
    /// Synchronised steps taken; replicas were compared after each one.
    pub iterations: usize,
    pub messages: u64,
    pub wall_time: f64,
}

/// Synchronous data-parallel training with shared early stopping.
pub fn train_phase0(
    ds: &Dataset,
    workers: &[Worker],
    cfg: &TrainConfig,
    channel: &ReduceChannel,
) -> Result<Phase0Outcome> {
    let dims = model_dims(ds, cfg);
    let n = workers.len();
    let start = Instant::now();
    let mut replicas: Vec<ModelParams> = (0..n).map(|_| ModelParams::init(&dims, cfg.seed)).collect();
    let mut optims: Vec<OptimizerState> = replicas.iter().map(|p| OptimizerState::new(p, cfg.lr)).collect();
    let mut rngs: Vec<ChaCha8Rng> = (0..n).map(|i| worker_rng(cfg.seed, 0, i)).collect();
    let mut stopper = EarlyStopper::new(cfg.patience);
    let mut history = Vec::new();
    let mut epoch_losses = Vec::new();
    let mut iterations = 0;
    let mut epochs = 0;
    let messages_before = channel.messages();

    for epoch in 0..cfg.phase0_max_epochs {
        let step_start = Instant::now();
        let batches: Vec<Vec<Vec<NodeId>>> = workers
            .iter()
            .zip(&mut rngs)
            .map(|(w, rng)| mini_epoch_batches(w, cfg, rng))
            .collect();
        let rounds = batches.iter().map(Vec::len).max().unwrap_or(0);
        let mut loss_sum = vec![0.0; n];
        for it in 0..rounds {
            let results: Vec<Result<Option<(f64, ModelParams)>>> = workers
                .par_iter()
                .zip(rngs.par_iter_mut())
                .zip(replicas.par_iter())
                .map(|((w, rng), params)| match batches[w.id].get(it) {
                    Some(batch) => batch_gradients(params, ds, w, batch, cfg, rng, None).map(Some),
                    None => Ok(None),
                })
                .collect();
            let mut grads = Vec::with_capacity(n);
            for (i, r) in results.into_iter().enumerate() {
                match r? {
                    Some((loss, g)) => {
                        if !loss.is_finite() {
                            return Err(Error::Diverged { phase: 0, worker: i });
                        }
                        loss_sum[i] += loss;
                        grads.push(Some(g));
                    }
                    None => grads.push(None),
                }
            }
            let mean = channel.all_reduce_mean(&grads)?;
            replicas
                .par_iter_mut()
                .zip(optims.par_iter_mut())
                .for_each(|(p, st)| gnn::adam_step(p, &mean, st));
            iterations += 1;
            if let Some(i) = (1..n).find(|&i| !replicas[i].bit_identical(&replicas[0])) {
                return Err(Error::invalid(format!(
                    "replica {i} diverged from replica 0 after iteration {iterations}"
                )));
            }
        }
        let step_time = step_start.elapsed().as_secs_f64();

        let scores: Vec<f64> = workers
            .par_iter()
            .map(|w| val_score(&replicas[0], ds, w))
            .collect::<Result<_>>()?;
        let wall = start.elapsed().as_secs_f64();
        let mut epoch_loss = 0.0;
        for (i, w) in workers.iter().enumerate() {
            let loss = loss_sum[i] / batches[i].len().max(1) as f64;
            epoch_loss += loss / n as f64;
            history.push(HistoryRecord {
                phase: 0,
                worker_id: w.id,
                mini_epoch: epoch,
                wall_time: wall,
                step_time,
                train_loss: loss,
                val_micro_f1: scores[i],
            });
        }
        epoch_losses.push(epoch_loss);
        epochs = epoch + 1;
        let mean_score = scores.iter().sum::<f64>() / n as f64;
        let stop = stopper.observe(epoch, mean_score, &replicas[0]);
        if stop || (!cfg.baseline && switch_trigger(&epoch_losses, cfg.phase_switch, cfg.phase0_max_epochs)) {
            break;
        }
    }

    let best_score = stopper.best_score();
    let params = stopper.into_best().unwrap_or_else(|| replicas.swap_remove(0));
    Ok(Phase0Outcome {
        params,
        best_score,
        history,
        epochs,
        iterations,
        messages: channel.messages() - messages_before,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Result of the independent phase.
#[derive(Debug, Clone)]
pub struct Phase1Outcome {
    /// Best personalised parameters per worker.
    pub params: Vec<ModelParams>,
    pub best_scores: Vec<f64>,
    pub history: Vec<HistoryRecord>,
    /// Messages sent through the channel during this phase.
    pub messages: u64,
    /// Slowest worker's wall time.
    pub wall_time: f64,
}

/// Independent per-worker fine-tuning from `global`, each worker with its
/// own early stopper seeded by the global model's local validation score.
pub fn train_phase1(
    ds: &Dataset,
    workers: &[Worker],
    global: &ModelParams,
    cfg: &TrainConfig,
    channel: &ReduceChannel,
) -> Result<Phase1Outcome> {
    let messages_before = channel.messages();
    let per_worker: Vec<(ModelParams, f64, Vec<HistoryRecord>, f64)> = workers
        .par_iter()
        .map(|w| personalize(ds, w, global, cfg))
        .collect::<Result<_>>()?;
    let mut out = Phase1Outcome {
        params: Vec::with_capacity(workers.len()),
        best_scores: Vec::with_capacity(workers.len()),
        history: Vec::new(),
        messages: channel.messages() - messages_before,
        wall_time: 0.0,
    };
    for (p, score, hist, wall) in per_worker {
        out.params.push(p);
        out.best_scores.push(score);
        out.history.extend(hist);
        out.wall_time = out.wall_time.max(wall);
    }
    Ok(out)
}

fn personalize(
    ds: &Dataset,
    w: &Worker,
    global: &ModelParams,
    cfg: &TrainConfig,
) -> Result<(ModelParams, f64, Vec<HistoryRecord>, f64)> {
    let start = Instant::now();
    let mut params = global.clone();
    let mut optim = OptimizerState::new(&params, cfg.lr);
    let mut rng = worker_rng(cfg.seed, 1, w.id);
    let mut stopper = EarlyStopper::seeded(cfg.patience, val_score(global, ds, w)?, global);
    let prox = Proximal {
        lambda: cfg.lambda,
        anchor: global,
    };
    let mut history = Vec::new();
    for epoch in 0..cfg.phase1_max_epochs {
        let step_start = Instant::now();
        let batches = mini_epoch_batches(w, cfg, &mut rng);
        let mut loss_sum = 0.0;
        for batch in &batches {
            let (loss, g) = batch_gradients(&params, ds, w, batch, cfg, &mut rng, Some(prox))?;
            if !loss.is_finite() {
                return Err(Error::Diverged { phase: 1, worker: w.id });
            }
            loss_sum += loss;
            gnn::adam_step(&mut params, &g, &mut optim);
        }
        let step_time = step_start.elapsed().as_secs_f64();
        let score = val_score(&params, ds, w)?;
        history.push(HistoryRecord {
            phase: 1,
            worker_id: w.id,
            mini_epoch: epoch,
            wall_time: start.elapsed().as_secs_f64(),
            step_time,
            train_loss: loss_sum / batches.len().max(1) as f64,
            val_micro_f1: score,
        });
        if stopper.observe(epoch, score, &params) {
            break;
        }
    }
    let score = stopper.best_score();
    let best = stopper.into_best().expect("seeded stopper holds a model");
    Ok((best, score, history, start.elapsed().as_secs_f64()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerEval {
    pub worker_id: usize,
    pub num_test: usize,
    pub micro_f1: f64,
    pub weighted_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_worker: Vec<WorkerEval>,
    /// Mean of the per-worker micro-F1 scores.
    pub mean_micro_f1: f64,
    /// Micro-F1 over the pooled test predictions of all workers.
    pub micro_f1: f64,
    /// Weighted-F1 over pooled per-class counts.
    pub weighted_f1: f64,
}

/// Score `models[i]` on worker `i`'s local test nodes.
pub fn evaluate_all(ds: &Dataset, workers: &[Worker], models: &[&ModelParams]) -> Result<EvalReport> {
    if models.len() != workers.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} models for {} workers",
            models.len(),
            workers.len()
        )));
    }
    let counts: Vec<ConfusionCounts> = workers
        .par_iter()
        .zip(models.par_iter())
        .map(|(w, m)| confusion(m, ds, &w.local, w.local.test()))
        .collect::<Result<_>>()?;
    Ok(pool_counts(
        workers.iter().map(|w| (w.id, w.local.test().len())),
        &counts,
    ))
}

/// Per-worker and pooled scores from per-worker confusion counts.
pub fn pool_counts(ids: impl Iterator<Item = (usize, usize)>, counts: &[ConfusionCounts]) -> EvalReport {
    let mut pooled = ConfusionCounts::new(counts.first().map_or(0, ConfusionCounts::num_classes));
    let per_worker: Vec<WorkerEval> = ids
        .zip(counts)
        .map(|((worker_id, num_test), c)| {
            pooled.merge(c);
            WorkerEval {
                worker_id,
                num_test,
                micro_f1: c.micro_f1(),
                weighted_f1: c.weighted_f1(),
            }
        })
        .collect();
    let mean_micro_f1 = per_worker.iter().map(|w| w.micro_f1).sum::<f64>() / per_worker.len().max(1) as f64;
    EvalReport {
        per_worker,
        mean_micro_f1,
        micro_f1: pooled.micro_f1(),
        weighted_f1: pooled.weighted_f1(),
    }
}

/// Outputs of a complete training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub phase0: Phase0Outcome,
    pub phase1: Option<Phase1Outcome>,
    /// Global model on every worker's test split.
    pub global_eval: EvalReport,
    /// Personalised models on their own test splits (phase 1 runs only).
    pub personal_eval: Option<EvalReport>,
}

impl TrainOutcome {
    /// Model each worker ends up with.
    pub fn final_models(&self) -> Vec<&ModelParams> {
        match &self.phase1 {
            Some(p1) => p1.params.iter().collect(),
            None => vec![&self.phase0.params; self.global_eval.per_worker.len()],
        }
    }

    pub fn final_eval(&self) -> &EvalReport {
        self.personal_eval.as_ref().unwrap_or(&self.global_eval)
    }
}

/// Phase 0, then (unless `cfg.baseline`) phase 1, then test evaluation.
pub fn train(ds: &Dataset, assignment: &PartitionAssignment, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let workers = build_workers(ds, assignment, cfg)?;
    let channel = ReduceChannel::new();
    let phase0 = train_phase0(ds, &workers, cfg, &channel)?;
    let global_eval = evaluate_all(ds, &workers, &vec![&phase0.params; workers.len()])?;
    let (phase1, personal_eval) = if cfg.baseline {
        (None, None)
    } else {
        let p1 = train_phase1(ds, &workers, &phase0.params, cfg, &channel)?;
        let eval = evaluate_all(ds, &workers, &p1.params.iter().collect::<Vec<_>>())?;
        (Some(p1), Some(eval))
    };
    Ok(TrainOutcome {
        phase0,
        phase1,
        global_eval,
        personal_eval,
    })
}
