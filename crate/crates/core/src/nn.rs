//! Dense layers, small perceptrons, softmax cross-entropy, Adam and
//! finite-difference gradient checks.
//!
//! Parameters live in flat `f64` buffers; layers are views holding
//! offsets into them. Weights are stored `out × in`, row-major, followed
//! by the bias. Forward and backward passes run on row-major batches.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{abs, exp, ln, sqrt, tanh};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Linear,
}

/// A fully connected layer located at `offset` in a parameter buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub offset: usize,
    pub activation: Activation,
}

impl Dense {
    pub fn param_count(&self) -> usize {
        self.out_dim * (self.in_dim + 1)
    }

    pub fn weights<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        &params[self.offset..self.offset + self.out_dim * self.in_dim]
    }

    pub fn bias<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        let b = self.offset + self.out_dim * self.in_dim;
        &params[b..b + self.out_dim]
    }

    /// `y = act(x Wᵀ + b)` for `rows` stacked inputs.
    pub fn forward(&self, params: &[f64], x: &[f64], rows: usize) -> Vec<f64> {
        debug_assert_eq!(x.len(), rows * self.in_dim);
        let (n, k) = (self.out_dim, self.in_dim);
        let mut y = Vec::with_capacity(rows * n);
        let bias = self.bias(params);
        for _ in 0..rows {
            y.extend_from_slice(bias);
        }
        if rows > 0 && k > 0 {
            let w = self.weights(params);
            // SAFETY: every pointer addresses a buffer whose extent matches the
            // given dimensions and strides.
            unsafe {
                matrixmultiply::dgemm(
                    rows, k, n, 1.0,
                    x.as_ptr(), k as isize, 1,
                    w.as_ptr(), 1, k as isize,
                    1.0,
                    y.as_mut_ptr(), n as isize, 1,
                );
            }
        }
        if self.activation == Activation::Tanh {
            y.iter_mut().for_each(|v| *v = tanh(*v));
        }
        y
    }

    /// Accumulates parameter gradients into `grads` and returns the input
    /// gradient. `y` is this layer's output, `dy` the gradient w.r.t. it.
    pub fn backward(&self, params: &[f64], x: &[f64], y: &[f64], dy: &[f64], rows: usize, grads: &mut [f64]) -> Vec<f64> {
        let (n, k) = (self.out_dim, self.in_dim);
        let dz: Vec<f64> = match self.activation {
            Activation::Tanh => dy.iter().zip(y).map(|(g, v)| g * (1.0 - v * v)).collect(),
            Activation::Linear => dy.to_vec(),
        };
        let mut dx = vec![0.0; rows * k];
        if rows == 0 {
            return dx;
        }
        let (gw, gb) = grads[self.offset..self.offset + self.param_count()].split_at_mut(n * k);
        for r in 0..rows {
            for (b, d) in gb.iter_mut().zip(&dz[r * n..(r + 1) * n]) {
                *b += d;
            }
        }
        if k == 0 {
            return dx;
        }
        let w = self.weights(params);
        // SAFETY: as in `forward`; dz is rows × n, x is rows × k, gw is n × k.
        unsafe {
            matrixmultiply::dgemm(
                n, rows, k, 1.0,
                dz.as_ptr(), 1, n as isize,
                x.as_ptr(), k as isize, 1,
                1.0,
                gw.as_mut_ptr(), k as isize, 1,
            );
            matrixmultiply::dgemm(
                rows, n, k, 1.0,
                dz.as_ptr(), n as isize, 1,
                w.as_ptr(), k as isize, 1,
                0.0,
                dx.as_mut_ptr(), k as isize, 1,
            );
        }
        dx
    }
}

/// Chain of dense layers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Per-layer inputs and outputs of a batched forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpCache {
    pub rows: usize,
    /// `acts[0]` is the input, `acts[i + 1]` the output of layer `i`.
    pub acts: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("cache holds the input")
    }
}

impl Mlp {
    /// Appends layers `dims[0] → dims[1] → …` to a parameter layout
    /// starting at `*offset`. Hidden layers use tanh; the last uses `output`.
    pub fn allocate(dims: &[usize], output: Activation, offset: &mut usize) -> Self {
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, d)| {
                let layer = Dense {
                    in_dim: d[0],
                    out_dim: d[1],
                    offset: *offset,
                    activation: if i + 2 == dims.len() { output } else { Activation::Tanh },
                };
                *offset += layer.param_count();
                layer
            })
            .collect();
        Self { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").out_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    pub fn forward(&self, params: &[f64], x: Vec<f64>, rows: usize) -> Result<MlpCache, NnError> {
        if x.len() != rows * self.in_dim() {
            return Err(NnError::Dimension {
                expected: rows * self.in_dim(),
                got: x.len(),
            });
        }
        let mut acts = vec![x];
        for layer in &self.layers {
            let y = layer.forward(params, acts.last().expect("non-empty"), rows);
            acts.push(y);
        }
        Ok(MlpCache { rows, acts })
    }

    pub fn backward(&self, params: &[f64], cache: &MlpCache, dy: &[f64], grads: &mut [f64]) -> Result<Vec<f64>, NnError> {
        if dy.len() != cache.rows * self.out_dim() {
            return Err(NnError::Dimension {
                expected: cache.rows * self.out_dim(),
                got: dy.len(),
            });
        }
        let mut g = dy.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            g = layer.backward(params, &cache.acts[i], &cache.acts[i + 1], &g, cache.rows, grads);
        }
        Ok(g)
    }
}

/// Fills the weights of `layers` with `N(0, scale²)` draws and zeroes the biases.
pub fn init_layers(params: &mut [f64], layers: &[Dense], rng: &mut ChaCha8Rng, scale: f64) {
    for l in layers {
        let nw = l.out_dim * l.in_dim;
        for v in &mut params[l.offset..l.offset + nw] {
            let z: f64 = StandardNormal.sample(rng);
            *v = z * scale;
        }
        params[l.offset + nw..l.offset + l.param_count()].fill(0.0);
    }
}

/// A perceptron owning its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OwnedMlp {
    pub mlp: Mlp,
    pub params: Vec<f64>,
}

/// `in → hidden → out` tanh perceptron with Gaussian weights.
pub fn init_mlp(in_dim: usize, hidden_dim: usize, out_dim: usize, seed: u64, scale: f64) -> OwnedMlp {
    let mut offset = 0;
    let mlp = Mlp::allocate(&[in_dim, hidden_dim, out_dim], Activation::Tanh, &mut offset);
    let mut params = vec![0.0; offset];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_layers(&mut params, &mlp.layers, &mut rng, scale);
    OwnedMlp { mlp, params }
}

/// Softmax probabilities of one logit vector.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&z| exp(z - m)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// `−log softmax(logits)[label]` and its gradient `softmax − onehot`.
pub fn softmax_xent(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>), NnError> {
    if label >= logits.len() {
        return Err(NnError::Label {
            label,
            classes: logits.len(),
        });
    }
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = logits.iter().map(|&z| exp(z - m)).sum();
    let log_z = m + ln(s);
    let loss = log_z - logits[label];
    let mut grad: Vec<f64> = logits.iter().map(|&z| exp(z - log_z)).collect();
    grad[label] -= 1.0;
    Ok((loss, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n: usize, config: AdamConfig) -> Self {
        Self {
            config,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    /// One bias-corrected Adam update.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NnError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NnError::Dimension {
                expected: self.m.len(),
                got: if params.len() != self.m.len() { params.len() } else { grads.len() },
            });
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - crate::math::powi(beta1, self.step);
        let c2 = 1.0 - crate::math::powi(beta2, self.step);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (sqrt(vh) + eps);
        }
        Ok(())
    }
}

/// Largest relative error between an analytic gradient and central
/// differences of `f` at `x`, over the coordinates in `indices`.
///
/// The relative error of one coordinate is `|a − n| / max(|a| + |n|, floor)`.
pub fn gradient_check(
    mut f: impl FnMut(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
    indices: impl IntoIterator<Item = usize>,
    eps: f64,
    floor: f64,
) -> f64 {
    let mut x = x.to_vec();
    let mut worst: f64 = 0.0;
    for i in indices {
        let orig = x[i];
        x[i] = orig + eps;
        let fp = f(&x);
        x[i] = orig - eps;
        let fm = f(&x);
        x[i] = orig;
        let numeric = (fp - fm) / (2.0 * eps);
        let denom = (abs(numeric) + abs(analytic[i])).max(floor);
        worst = worst.max(abs(numeric - analytic[i]) / denom);
    }
    worst
}

/// Per-feature affine normalizer fitted on training inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNormalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureNormalizer {
    /// Fits on `rows` stacked vectors of length `dim`; constant features keep unit scale.
    pub fn fit(data: &[f64], dim: usize) -> Self {
        let rows = if dim == 0 { 0 } else { data.len() / dim };
        let mut mean = vec![0.0; dim];
        let mut var = vec![0.0; dim];
        if rows > 0 {
            for r in data.chunks(dim) {
                for (m, v) in mean.iter_mut().zip(r) {
                    *m += v / rows as f64;
                }
            }
            for r in data.chunks(dim) {
                for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                    *s += (v - m) * (v - m) / rows as f64;
                }
            }
        }
        let std = var.into_iter().map(|v| if v > 1e-12 { sqrt(v) } else { 1.0 }).collect();
        Self { mean, std }
    }

    pub fn apply(&self, x: &mut [f64]) {
        let d = self.mean.len();
        for (i, v) in x.iter_mut().enumerate() {
            *v = (*v - self.mean[i % d]) / self.std[i % d];
        }
    }

    pub fn invert(&self, x: &mut [f64]) {
        let d = self.mean.len();
        for (i, v) in x.iter_mut().enumerate() {
            *v = *v * self.std[i % d] + self.mean[i % d];
        }
    }
}
