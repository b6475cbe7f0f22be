//! Two-layer GraphSAGE with a mean aggregator.
//!
//! Layer `i` maps `h_prev` to
//! `h_v = σ_i(W_i · [mean_{u ∈ S(v)} h_prev(u) ; h_prev(v)])`
//! where `S(v)` is the sampled neighbourhood from the block, `σ` is ReLU on
//! hidden layers and the identity on the output layer. All arithmetic is
//! `f64`.

use std::path::Path;

use ndarray::{s, Array2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, LabelSet, NodeFeatures, NodeId};
use crate::io;
use crate::sampler::{full_block, MiniBatchBlock};

pub const DEFAULT_HIDDEN: usize = 256;
pub const NUM_LAYERS: usize = 2;

/// Layer weights. `weights[i]` has shape `dims[i + 1] × 2·dims[i]`; the
/// first half of each row multiplies the neighbour mean, the second half
/// the node's own embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    dims: Vec<usize>,
    weights: Vec<Array2<f64>>,
}

impl ModelParams {
    /// Uniform init in `±sqrt(6 / (fan_in + fan_out))`.
    pub fn init(dims: &[usize], seed: u64) -> Self {
        assert!(
            dims.len() >= 2 && dims.iter().all(|&d| d > 0),
            "bad layer dims {dims:?}"
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (2 * w[0], w[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-bound..bound))
            })
            .collect();
        ModelParams {
            dims: dims.to_vec(),
            weights,
        }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let weights = dims.windows(2).map(|w| Array2::zeros((w[1], 2 * w[0]))).collect();
        ModelParams {
            dims: dims.to_vec(),
            weights,
        }
    }

    pub fn from_weights(weights: Vec<Array2<f64>>) -> Result<Self> {
        let mut dims = Vec::with_capacity(weights.len() + 1);
        for (i, w) in weights.iter().enumerate() {
            let (out, twice_in) = w.dim();
            if twice_in % 2 != 0 || twice_in == 0 || out == 0 {
                return Err(Error::ShapeMismatch(format!("layer {i} has shape {out}x{twice_in}")));
            }
            if i == 0 {
                dims.push(twice_in / 2);
            } else if dims[i] * 2 != twice_in {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i} expects input width {}, previous layer emits {}",
                    twice_in / 2,
                    dims[i]
                )));
            }
            dims.push(out);
        }
        if weights.is_empty() {
            return Err(Error::ShapeMismatch("model has no layers".into()));
        }
        Ok(ModelParams { dims, weights })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(Array2::len).sum()
    }

    /// All entries, layer by layer in row-major order.
    pub fn flatten(&self) -> Vec<f64> {
        self.weights.iter().flat_map(|w| w.iter().copied()).collect()
    }

    pub fn same_shape(&self, other: &ModelParams) -> bool {
        self.dims == other.dims
    }

    /// Equal shapes and identical bit patterns in every entry.
    pub fn bit_identical(&self, other: &ModelParams) -> bool {
        self.same_shape(other)
            && self
                .weights
                .iter()
                .zip(&other.weights)
                .all(|(a, b)| a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()))
    }

    /// `||self - other||²`.
    pub fn sq_distance(&self, other: &ModelParams) -> f64 {
        assert!(self.same_shape(other));
        self.weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| Zip::from(a).and(b).fold(0.0, |acc, x, y| acc + (x - y) * (x - y)))
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|x| x.is_finite()))
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, alpha: f64, other: &ModelParams) {
        assert!(self.same_shape(other));
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.scaled_add(alpha, b);
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for w in &mut self.weights {
            w.mapv_inplace(|x| x * alpha);
        }
    }

    /// Checkpoint layout: magic `EPCK`, u32 version, u32 layer count,
    /// u32 dims (layers + 1), then each weight matrix in row-major order as
    /// little-endian f32.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.num_params());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.num_layers() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        let values: Vec<f32> = self.flatten().into_iter().map(|x| x as f32).collect();
        out.extend_from_slice(&io::f32s_to_le(&values));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::invalid(format!("checkpoint: {msg}"));
        let word = |i: usize| -> Result<u32> {
            bytes
                .get(i * 4..i * 4 + 4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
                .ok_or_else(|| bad("truncated header"))
        };
        if bytes.get(..4) != Some(CHECKPOINT_MAGIC.as_slice()) {
            return Err(bad("bad magic"));
        }
        if word(1)? != CHECKPOINT_VERSION {
            return Err(bad("unsupported version"));
        }
        let layers = word(2)? as usize;
        if layers == 0 || layers > 16 {
            return Err(bad("bad layer count"));
        }
        let dims: Vec<usize> = (0..=layers)
            .map(|i| word(3 + i).map(|d| d as usize))
            .collect::<Result<_>>()?;
        let header = 4 * (4 + layers);
        let mut params = ModelParams::zeros(&dims);
        if bytes.len() != header + 4 * params.num_params() {
            return Err(bad("payload size does not match dims"));
        }
        let mut values = io::f32s_from_le(&bytes[header..]).into_iter();
        for w in &mut params.weights {
            for x in w.iter_mut() {
                *x = f64::from(values.next().expect("length checked"));
            }
        }
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&io::read_bytes(path)?)
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"EPCK";
const CHECKPOINT_VERSION: u32 = 1;

/// Input features for the source nodes of a block's first layer, as
/// `f64` rows. `to_global` maps block ids to rows of `feats`.
pub fn gather_features(feats: &NodeFeatures, ids: &[NodeId], to_global: impl Fn(NodeId) -> NodeId) -> Array2<f64> {
    let mut x = Array2::zeros((ids.len(), feats.dim()));
    for (mut row, &v) in x.rows_mut().into_iter().zip(ids) {
        for (dst, &src) in row.iter_mut().zip(feats.row(to_global(v))) {
            *dst = f64::from(src);
        }
    }
    x
}

/// Activations of one layer.
#[derive(Debug, Clone)]
pub struct LayerTrace {
    /// `[neighbour mean ; self]` per destination.
    pub concat: Array2<f64>,
    /// `concat · Wᵀ`
    pub pre: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub layers: Vec<LayerTrace>,
    /// Output of the last layer, one row per batch node.
    pub logits: Array2<f64>,
}

/// Run the model over `block`. `x0` holds one row per source node of the
/// first layer.
pub fn forward(params: &ModelParams, block: &MiniBatchBlock, x0: &Array2<f64>) -> Result<ForwardTrace> {
    if block.layers.len() != params.num_layers() {
        return Err(Error::ShapeMismatch(format!(
            "block has {} layers, model has {}",
            block.layers.len(),
            params.num_layers()
        )));
    }
    if x0.dim() != (block.input_nodes().len(), params.dims[0]) {
        return Err(Error::ShapeMismatch(format!(
            "input is {:?}, expected ({}, {})",
            x0.dim(),
            block.input_nodes().len(),
            params.dims[0]
        )));
    }
    let last = params.num_layers() - 1;
    let mut traces = Vec::with_capacity(params.num_layers());
    let mut h = x0.clone();
    for (i, (layer, w)) in block.layers.iter().zip(&params.weights).enumerate() {
        let width = h.ncols();
        let m = layer.dst.len();
        let mut concat = Array2::zeros((m, 2 * width));
        for d in 0..m {
            let sampled = layer.sampled(d);
            let mut row = concat.row_mut(d);
            if !sampled.is_empty() {
                let mut agg = row.slice_mut(s![..width]);
                for &src in sampled {
                    agg += &h.row(src as usize);
                }
                agg /= sampled.len() as f64;
            }
            row.slice_mut(s![width..]).assign(&h.row(d));
        }
        let pre = concat.dot(&w.t());
        h = if i < last {
            pre.mapv(|x| x.max(0.0))
        } else {
            pre.clone()
        };
        traces.push(LayerTrace { concat, pre });
    }
    Ok(ForwardTrace {
        layers: traces,
        logits: h,
    })
}

/// Training targets for the batch rows.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Single(Vec<u32>),
    /// Row-major 0/1 matrix, `batch × num_classes`.
    Multi(Array2<f64>),
}

impl Targets {
    pub fn from_labels(labels: &LabelSet, global_ids: impl IntoIterator<Item = NodeId>) -> Self {
        let ids: Vec<NodeId> = global_ids.into_iter().collect();
        match labels.mode() {
            crate::graph::LabelMode::Single => Targets::Single(ids.iter().map(|&v| labels.class_of(v)).collect()),
            crate::graph::LabelMode::Multi => {
                let l = labels.num_classes();
                Targets::Multi(Array2::from_shape_fn((ids.len(), l), |(r, c)| {
                    f64::from(labels.row(ids[r])[c])
                }))
            }
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Targets::Single(t) => t.len(),
            Targets::Multi(t) => t.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn log_sum_exp(row: ndarray::ArrayView1<f64>) -> f64 {
    let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax.
pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let lse = log_sum_exp(row.view());
        row.mapv_inplace(|x| (x - lse).exp());
    }
    out
}

/// Mean cross-entropy over the batch (softmax for single-label targets,
/// summed per-class binary cross-entropy for multi-label targets).
pub fn cross_entropy(logits: &Array2<f64>, targets: &Targets) -> f64 {
    cross_entropy_with_grad(logits, targets).0
}

/// Loss and its gradient with respect to `logits`.
pub fn cross_entropy_with_grad(logits: &Array2<f64>, targets: &Targets) -> (f64, Array2<f64>) {
    let b = logits.nrows();
    assert_eq!(b, targets.len(), "targets do not match batch");
    if b == 0 {
        return (0.0, logits.clone());
    }
    let inv = 1.0 / b as f64;
    match targets {
        Targets::Single(t) => {
            let mut grad = softmax(logits);
            let mut loss = 0.0;
            for (r, &c) in t.iter().enumerate() {
                loss += log_sum_exp(logits.row(r)) - logits[(r, c as usize)];
                grad[(r, c as usize)] -= 1.0;
            }
            grad *= inv;
            (loss * inv, grad)
        }
        Targets::Multi(y) => {
            assert_eq!(y.dim(), logits.dim());
            let mut loss = 0.0;
            let mut grad = Array2::zeros(logits.dim());
            Zip::from(&mut grad).and(logits).and(y).for_each(|g, &z, &t| {
                // -[t log σ(z) + (1-t) log(1-σ(z))] = softplus(z) - t·z
                loss += softplus(z) - t * z;
                *g = (sigmoid(z) - t) * inv;
            });
            (loss * inv, grad)
        }
    }
}

/// `λ · ||params - anchor||²`
pub fn regularizer(params: &ModelParams, anchor: &ModelParams, lambda: f64) -> f64 {
    lambda * params.sq_distance(anchor)
}

/// `base + λ · ||params - anchor||²`
pub fn regularized_loss(base: f64, params: &ModelParams, anchor: &ModelParams, lambda: f64) -> f64 {
    base + regularizer(params, anchor, lambda)
}

/// Proximal term: penalty weight and the anchor parameters.
#[derive(Debug, Clone, Copy)]
pub struct Proximal<'a> {
    pub lambda: f64,
    pub anchor: &'a ModelParams,
}

/// Gradients of the batch loss (plus the proximal term, if any) with
/// respect to every weight matrix. Returns `(loss, gradients)`.
pub fn backward(
    trace: &ForwardTrace,
    params: &ModelParams,
    block: &MiniBatchBlock,
    targets: &Targets,
    prox: Option<Proximal<'_>>,
) -> (f64, ModelParams) {
    let (mut loss, mut upstream) = cross_entropy_with_grad(&trace.logits, targets);
    let last = params.num_layers() - 1;
    let mut grads = ModelParams::zeros(&params.dims);
    for i in (0..=last).rev() {
        let lt = &trace.layers[i];
        let layer = &block.layers[i];
        let w = &params.weights[i];
        let mut dpre = upstream;
        if i < last {
            Zip::from(&mut dpre).and(&lt.pre).for_each(|g, &p| {
                if p <= 0.0 {
                    *g = 0.0;
                }
            });
        }
        grads.weights[i] = dpre.t().dot(&lt.concat);
        if i == 0 {
            break;
        }
        let dconcat = dpre.dot(w);
        let width = params.dims[i];
        let mut dh = Array2::zeros((layer.src.len(), width));
        dh.slice_mut(s![..layer.dst.len(), ..])
            .assign(&dconcat.slice(s![.., width..]));
        for d in 0..layer.dst.len() {
            let sampled = layer.sampled(d);
            if sampled.is_empty() {
                continue;
            }
            let share = dconcat.slice(s![d, ..width]).mapv(|x| x / sampled.len() as f64);
            for &src in sampled {
                let mut row = dh.row_mut(src as usize);
                row += &share;
            }
        }
        upstream = dh;
    }
    if let Some(Proximal { lambda, anchor }) = prox {
        if lambda != 0.0 {
            loss += regularizer(params, anchor, lambda);
            for ((g, p), a) in grads.weights.iter_mut().zip(&params.weights).zip(&anchor.weights) {
                Zip::from(g)
                    .and(p)
                    .and(a)
                    .for_each(|g, &p, &a| *g += 2.0 * lambda * (p - a));
            }
        }
    }
    (loss, grads)
}

/// Adam optimiser state.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl OptimizerState {
    pub fn new(params: &ModelParams, lr: f64) -> Self {
        let zeros = || params.weights.iter().map(|w| Array2::zeros(w.dim())).collect();
        OptimizerState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut ModelParams, grads: &ModelParams, state: &mut OptimizerState) {
    assert!(params.same_shape(grads));
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2, eps, lr) = (state.beta1, state.beta2, state.eps, state.lr);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (((w, g), m), v) in params
        .weights
        .iter_mut()
        .zip(&grads.weights)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        Zip::from(w).and(g).and(m).and(v).for_each(|w, &g, m, v| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        });
    }
}

/// Model outputs for `nodes` computed with complete neighbourhoods.
pub fn predict_logits(
    params: &ModelParams,
    graph: &Graph,
    feats: &NodeFeatures,
    to_global: impl Fn(NodeId) -> NodeId,
    nodes: &[NodeId],
) -> Result<Array2<f64>> {
    let block = full_block(graph, nodes, params.num_layers());
    let x0 = gather_features(feats, block.input_nodes(), to_global);
    Ok(forward(params, &block, &x0)?.logits)
}

/// Predicted class per row (first maximum wins ties).
pub fn argmax_rows(logits: &Array2<f64>) -> Vec<u32> {
    logits
        .axis_iter(Axis(0))
        .map(|row| {
            let mut best = 0;
            for (j, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = j;
                }
            }
            best as u32
        })
        .collect()
}

/// Per-class 0/1 predictions, row-major: `σ(z) ≥ 0.5`, i.e. `z ≥ 0`.
pub fn threshold_rows(logits: &Array2<f64>) -> Vec<u8> {
    logits.iter().map(|&z| u8::from(z >= 0.0)).collect()
}
