//! Online neural uncertainty estimator.
//!
//! A small tanh network maps the 4-state error vector to a feature vector
//! `Phi(x)`; the scalar estimate is `W^T Phi(x)` with `W` adapted pointwise
//! by the fast adaptation law. On a slower cadence the inner layers are
//! retrained by mini-batch gradient descent on a replay buffer of
//! self-generated labels (the estimate at record time), keeping the two
//! time scales separate: between batch updates the estimate changes only
//! through `W`.

use crate::numlin::Matrix;
use crate::rng::{CounterRng, SeqRng};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::io::{BufRead, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("replay buffer is empty")]
    EmptyBuffer,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(&'static str),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    /// out x in
    w: Matrix,
    b: Vec<f64>,
}

/// Inner layers of the estimator: everything below the adapted last layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralNet {
    layers: Vec<Layer>,
    input_dim: usize,
    feature_dim: usize,
}

impl NeuralNet {
    /// Seeded init with uniform weights in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn init(input_dim: usize, hidden: &[usize], rng: &CounterRng) -> NeuralNet {
        assert!(!hidden.is_empty(), "need at least one hidden layer");
        let mut seq = SeqRng::new(rng.stream(0x6e65745f)); // "net_"
        let mut layers = Vec::with_capacity(hidden.len());
        let mut fan_in = input_dim;
        for &width in hidden {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let data: Vec<f64> = (0..width * fan_in)
                .map(|_| seq.next_uniform(-bound, bound))
                .collect();
            let b: Vec<f64> = (0..width).map(|_| seq.next_uniform(-bound, bound)).collect();
            layers.push(Layer {
                w: Matrix::new(width, fan_in, data).expect("init weights"),
                b,
            });
            fan_in = width;
        }
        NeuralNet {
            layers,
            input_dim,
            feature_dim: fan_in,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    /// `(rows, cols)` of layer `l`'s weight matrix.
    pub fn layer_shape(&self, l: usize) -> (usize, usize) {
        (self.layers[l].w.rows(), self.layers[l].w.cols())
    }

    pub fn layer_weight(&self, l: usize, i: usize, j: usize) -> f64 {
        self.layers[l].w[(i, j)]
    }

    pub fn set_layer_weight(&mut self, l: usize, i: usize, j: usize, v: f64) {
        self.layers[l].w[(i, j)] = v;
    }

    pub fn layer_bias(&self, l: usize, i: usize) -> f64 {
        self.layers[l].b[i]
    }

    pub fn set_layer_bias(&mut self, l: usize, i: usize, v: f64) {
        self.layers[l].b[i] = v;
    }

    /// Forward pass through the inner layers: `Phi(x)`.
    pub fn features(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.input_dim, "features input dimension");
        let mut h = x.to_vec();
        for layer in &self.layers {
            let mut z = layer.w.matvec(&h);
            for (zi, bi) in z.iter_mut().zip(&layer.b) {
                *zi = (*zi + bi).tanh();
            }
            h = z;
        }
        h
    }

    /// FNV-1a hash of all inner weights; changes iff training changed them.
    pub fn inner_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |v: f64| {
            for byte in v.to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x1000_0000_01b3);
            }
        };
        for layer in &self.layers {
            for &v in layer.w.data() {
                eat(v);
            }
            for &v in &layer.b {
                eat(v);
            }
        }
        h
    }

    /// Product of layer spectral norms; a Lipschitz bound for `Phi` since
    /// tanh has unit slope bound.
    pub fn lipschitz_bound(&self) -> f64 {
        self.layers.iter().map(|l| spectral_norm(&l.w)).product()
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<(), NeuralError> {
        let mut out = String::new();
        out.push_str(&format!("lanekeep-net-v1 {} {}\n", self.input_dim, self.layers.len()));
        for layer in &self.layers {
            out.push_str(&format!("layer {} {}\n", layer.w.rows(), layer.w.cols()));
            let mut line = String::new();
            for (i, v) in layer.w.data().iter().enumerate() {
                if i > 0 {
                    line.push(' ');
                }
                line.push_str(&format!("{v}"));
            }
            out.push_str(&line);
            out.push('\n');
            let mut bline = String::new();
            for (i, v) in layer.b.iter().enumerate() {
                if i > 0 {
                    bline.push(' ');
                }
                bline.push_str(&format!("{v}"));
            }
            out.push_str(&bline);
            out.push('\n');
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(out.as_bytes())?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<NeuralNet, NeuralError> {
        let file = std::fs::File::open(path)?;
        let mut lines = std::io::BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| NeuralError::Checkpoint("missing header".into()))??;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("lanekeep-net-v1") {
            return Err(NeuralError::Checkpoint("bad magic".into()));
        }
        let input_dim: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| NeuralError::Checkpoint("bad input dim".into()))?;
        let n_layers: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| NeuralError::Checkpoint("bad layer count".into()))?;
        let mut layers = Vec::with_capacity(n_layers);
        let mut fan_in = input_dim;
        for _ in 0..n_layers {
            let shape = lines
                .next()
                .ok_or_else(|| NeuralError::Checkpoint("missing layer header".into()))??;
            let mut parts = shape.split_whitespace();
            if parts.next() != Some("layer") {
                return Err(NeuralError::Checkpoint("missing layer tag".into()));
            }
            let rows: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| NeuralError::Checkpoint("bad rows".into()))?;
            let cols: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| NeuralError::Checkpoint("bad cols".into()))?;
            if cols != fan_in {
                return Err(NeuralError::Checkpoint("inconsistent layer shapes".into()));
            }
            let parse_line = |line: Option<Result<String, std::io::Error>>,
                              n: usize|
             -> Result<Vec<f64>, NeuralError> {
                let line = line.ok_or_else(|| NeuralError::Checkpoint("missing weights".into()))??;
                let vals: Result<Vec<f64>, _> =
                    line.split_whitespace().map(|s| s.parse::<f64>()).collect();
                let vals = vals.map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
                if vals.len() != n {
                    return Err(NeuralError::Checkpoint("wrong weight count".into()));
                }
                Ok(vals)
            };
            let w = parse_line(lines.next(), rows * cols)?;
            let b = parse_line(lines.next(), rows)?;
            layers.push(Layer {
                w: Matrix::new(rows, cols, w).map_err(|e| NeuralError::Checkpoint(e.to_string()))?,
                b,
            });
            fan_in = rows;
        }
        Ok(NeuralNet {
            layers,
            input_dim,
            feature_dim: fan_in,
        })
    }
}

fn spectral_norm(m: &Matrix) -> f64 {
    // power iteration on M^T M
    let mut v = vec![1.0; m.cols()];
    let mut norm = 0.0;
    for _ in 0..200 {
        let mv = m.matvec(&v);
        let mtmv = m.transpose().matvec(&mv);
        norm = mtmv.iter().map(|x| x * x).sum::<f64>().sqrt().sqrt();
        let len = mtmv.iter().map(|x| x * x).sum::<f64>().sqrt();
        if len == 0.0 {
            return 0.0;
        }
        v = mtmv.iter().map(|x| x / len).collect();
    }
    norm
}

/// Final-layer weights, adapted pointwise by the fast law.
#[derive(Debug, Clone, PartialEq)]
pub struct LastLayer {
    pub w: Vec<f64>,
}

impl LastLayer {
    pub fn zeros(k: usize) -> Self {
        LastLayer { w: vec![0.0; k] }
    }
}

/// Scalar estimate `W^T Phi(x)`.
pub fn estimate(net: &NeuralNet, last: &LastLayer, x: &[f64]) -> Result<f64, NeuralError> {
    if last.w.len() != net.feature_dim {
        return Err(NeuralError::DimensionMismatch("last layer width"));
    }
    let phi = net.features(x);
    Ok(phi.iter().zip(&last.w).map(|(p, w)| p * w).sum())
}

/// FIFO replay buffer of `(state, label)` pairs.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: VecDeque<([f64; 4], f64)>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayBuffer {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        }
    }

    pub fn record(&mut self, x: [f64; 4], label: f64) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((x, label));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &([f64; 4], f64)> {
        self.entries.iter()
    }

    fn get(&self, i: usize) -> &([f64; 4], f64) {
        &self.entries[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    /// control steps between inner-layer updates
    pub inner_update_period: u64,
    pub epochs_per_update: usize,
    /// global gradient-norm clip
    pub grad_clip: f64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            batch_size: 32,
            learning_rate: 0.01,
            inner_update_period: 500,
            epochs_per_update: 5,
            grad_clip: 1.0,
        }
    }
}

/// Mean squared error of `W^T Phi(x)` against stored labels over the buffer.
pub fn buffer_loss(net: &NeuralNet, last: &LastLayer, buffer: &ReplayBuffer) -> f64 {
    if buffer.is_empty() {
        return 0.0;
    }
    let mut acc = 0.0;
    for (x, label) in buffer.iter() {
        let e = estimate(net, last, x).expect("dims fixed") - label;
        acc += e * e;
    }
    acc / buffer.len() as f64
}

/// Inner-layer gradients of the mean-squared batch loss.
pub struct Gradients {
    /// per-layer weight gradients
    pub w: Vec<Matrix>,
    /// per-layer bias gradients
    pub b: Vec<Vec<f64>>,
}

/// Backprop of the mean-squared batch loss through the inner layers with
/// the last layer frozen.
pub fn batch_gradients(
    net: &NeuralNet,
    last: &LastLayer,
    batch: &[([f64; 4], f64)],
) -> Gradients {
    let n_layers = net.layers.len();
    let mut grad_w: Vec<Matrix> = net
        .layers
        .iter()
        .map(|l| Matrix::zeros(l.w.rows(), l.w.cols()))
        .collect();
    let mut grad_b: Vec<Vec<f64>> = net.layers.iter().map(|l| vec![0.0; l.b.len()]).collect();
    let inv_b = 1.0 / batch.len() as f64;
    for (x, label) in batch {
        // forward, keeping activations
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
        acts.push(x.to_vec());
        for layer in &net.layers {
            let mut z = layer.w.matvec(acts.last().unwrap());
            for (zi, bi) in z.iter_mut().zip(&layer.b) {
                *zi = (*zi + bi).tanh();
            }
            acts.push(z);
        }
        let phi = acts.last().unwrap();
        let y_hat: f64 = phi.iter().zip(&last.w).map(|(p, w)| p * w).sum();
        let dl_dy = 2.0 * (y_hat - label) * inv_b;
        // delta at the feature layer: dL/dz_L = (W dl_dy) .* (1 - h^2)
        let mut delta: Vec<f64> = phi
            .iter()
            .zip(&last.w)
            .map(|(h, w)| dl_dy * w * (1.0 - h * h))
            .collect();
        for l in (0..n_layers).rev() {
            let input = &acts[l];
            for i in 0..delta.len() {
                grad_b[l][i] += delta[i];
                for j in 0..input.len() {
                    grad_w[l][(i, j)] += delta[i] * input[j];
                }
            }
            if l > 0 {
                let wt = net.layers[l].w.transpose();
                let back = wt.matvec(&delta);
                delta = back
                    .iter()
                    .zip(&acts[l])
                    .map(|(g, h)| g * (1.0 - h * h))
                    .collect();
            }
        }
    }
    Gradients { w: grad_w, b: grad_b }
}

/// Retrain the inner layers on the replay buffer. The last layer stays
/// frozen. If the full-buffer loss rises more than 10% over the call, the
/// learning rate is halved and the epochs rerun from the original weights.
pub fn train_inner(
    net: &NeuralNet,
    last: &LastLayer,
    buffer: &ReplayBuffer,
    cfg: &TrainerConfig,
    shuffle_rng: &CounterRng,
) -> Result<NeuralNet, NeuralError> {
    if buffer.is_empty() {
        return Err(NeuralError::EmptyBuffer);
    }
    if last.w.len() != net.feature_dim {
        return Err(NeuralError::DimensionMismatch("last layer width"));
    }
    let loss_before = buffer_loss(net, last, buffer);
    let mut lr = cfg.learning_rate;
    for _attempt in 0..8 {
        let mut candidate = net.clone();
        let mut seq = SeqRng::new(*shuffle_rng);
        for _epoch in 0..cfg.epochs_per_update {
            let order = seq.permutation(buffer.len());
            let mut start = 0;
            while start < order.len() {
                let end = (start + cfg.batch_size).min(order.len());
                let batch: Vec<([f64; 4], f64)> =
                    order[start..end].iter().map(|&i| *buffer.get(i)).collect();
                let mut grads = batch_gradients(&candidate, last, &batch);
                // global norm clip
                let mut norm_sq = 0.0;
                for g in &grads.w {
                    norm_sq += g.data().iter().map(|v| v * v).sum::<f64>();
                }
                for g in &grads.b {
                    norm_sq += g.iter().map(|v| v * v).sum::<f64>();
                }
                let norm = norm_sq.sqrt();
                let scale = if norm > cfg.grad_clip {
                    cfg.grad_clip / norm
                } else {
                    1.0
                };
                for (layer, (gw, gb)) in candidate
                    .layers
                    .iter_mut()
                    .zip(grads.w.iter_mut().zip(&grads.b))
                {
                    for i in 0..layer.w.rows() {
                        for j in 0..layer.w.cols() {
                            layer.w[(i, j)] -= lr * scale * gw[(i, j)];
                        }
                    }
                    for (bi, gbi) in layer.b.iter_mut().zip(gb) {
                        *bi -= lr * scale * gbi;
                    }
                }
                start = end;
            }
        }
        let loss_after = buffer_loss(&candidate, last, buffer);
        if !loss_after.is_finite() {
            return Err(NeuralError::NonFinite("training loss"));
        }
        if loss_after <= 1.1 * loss_before + 1e-15 {
            return Ok(candidate);
        }
        lr *= 0.5;
    }
    // no usable step at any rate; keep the original weights
    Ok(net.clone())
}
