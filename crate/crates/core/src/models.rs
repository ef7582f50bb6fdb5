//! Small differentiable classifiers and local training.
//!
//! Parameter layout (row-major throughout):
//!
//! * linear: `W[c][d]`, then `b[c]`
//! * mlp: `W1[h][d]`, `b1[h]`, `W2[c][h]`, `b2[c]`
//!
//! The loss is the batch-mean softmax cross-entropy.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::Example;
use crate::error::{Error, Result};
use crate::params::ParamVector;
use crate::seed::{derive_seed, rng_from_seed, NO_ID};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ModelKind {
    Linear,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    #[cfg_attr(feature = "serde", serde(default))]
    pub hidden_dim: usize,
    pub num_classes: usize,
    #[cfg_attr(feature = "serde", serde(default))]
    pub activation: Activation,
}

impl ModelSpec {
    pub fn linear(input_dim: usize, num_classes: usize) -> Self {
        Self {
            kind: ModelKind::Linear,
            input_dim,
            hidden_dim: 0,
            num_classes,
            activation: Activation::Relu,
        }
    }

    pub fn mlp(input_dim: usize, hidden_dim: usize, num_classes: usize) -> Self {
        Self {
            kind: ModelKind::Mlp,
            input_dim,
            hidden_dim,
            num_classes,
            activation: Activation::Relu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.input_dim == 0 {
            return bad("model input_dim must be >= 1");
        }
        if self.num_classes < 2 {
            return bad("model num_classes must be >= 2");
        }
        match self.kind {
            ModelKind::Linear if self.hidden_dim != 0 => {
                bad("linear model requires hidden_dim = 0")
            }
            ModelKind::Mlp if self.hidden_dim == 0 => bad("mlp model requires hidden_dim >= 1"),
            _ => Ok(()),
        }
    }

    pub fn param_count(&self) -> usize {
        let (d, h, c) = (self.input_dim, self.hidden_dim, self.num_classes);
        match self.kind {
            ModelKind::Linear => d * c + c,
            ModelKind::Mlp => (d * h + h) + (h * c + c),
        }
    }

    /// `(weight_offset, fan_in, fan_out, bias_offset)` per layer.
    fn layers(&self) -> Vec<(usize, usize, usize, usize)> {
        let (d, h, c) = (self.input_dim, self.hidden_dim, self.num_classes);
        match self.kind {
            ModelKind::Linear => vec![(0, d, c, d * c)],
            ModelKind::Mlp => {
                let second = d * h + h;
                vec![(0, d, h, d * h), (second, h, c, second + h * c)]
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate: 0.001,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            local_epochs: 10,
            batch_size: 32,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        // learning_rate = 0 is allowed: it is a useful no-op for tests.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and >= 0");
        }
        if !(self.adam_beta1 > 0.0
            && self.adam_beta1 < 1.0
            && self.adam_beta2 > 0.0
            && self.adam_beta2 < 1.0)
        {
            return bad("adam betas must lie in (0, 1)");
        }
        if !(self.adam_epsilon > 0.0 && self.adam_epsilon.is_finite()) {
            return bad("adam_epsilon must be finite and > 0");
        }
        if self.local_epochs == 0 || self.batch_size == 0 {
            return bad("local_epochs and batch_size must be >= 1");
        }
        Ok(())
    }
}

/// Xavier-uniform weights, zero biases.
pub fn init_params(spec: &ModelSpec, seed: u64) -> ParamVector {
    let mut rng = rng_from_seed(derive_seed(seed, NO_ID, NO_ID, NO_ID, "init"));
    let mut p = vec![0.0; spec.param_count()];
    for (w_off, fan_in, fan_out, _) in spec.layers() {
        let s = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
        for w in &mut p[w_off..w_off + fan_in * fan_out] {
            *w = rng.random_range(-s..=s);
        }
    }
    ParamVector::new(p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: ParamVector,
    pub correct: usize,
}

/// In-place log-softmax; returns nothing, leaves `log p` in `logits`.
fn log_softmax(logits: &mut [f64]) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s = logits.iter().fold(0.0, |acc, &l| acc + libm::exp(l - m));
    let lse = m + libm::log(s);
    for l in logits {
        *l -= lse;
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Forward pass for one example. Returns the logits and, for the mlp, the
/// hidden pre-activations.
fn forward(spec: &ModelSpec, p: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (d, h, c) = (spec.input_dim, spec.hidden_dim, spec.num_classes);
    let affine = |w: &[f64], b: &[f64], input: &[f64], rows: usize, cols: usize| -> Vec<f64> {
        (0..rows)
            .map(|r| {
                let row = &w[r * cols..(r + 1) * cols];
                row.iter()
                    .zip(input)
                    .fold(b[r], |acc, (wi, xi)| acc + wi * xi)
            })
            .collect()
    };
    match spec.kind {
        ModelKind::Linear => (affine(&p[..d * c], &p[d * c..], x, c, d), Vec::new()),
        ModelKind::Mlp => {
            let o = d * h + h;
            let z1 = affine(&p[..d * h], &p[d * h..o], x, h, d);
            let a: Vec<f64> = z1.iter().map(|&z| if z > 0.0 { z } else { 0.0 }).collect();
            (affine(&p[o..o + h * c], &p[o + h * c..], &a, c, h), z1)
        }
    }
}

fn check_example(spec: &ModelSpec, e: &Example) -> Result<()> {
    if e.features.len() != spec.input_dim {
        return Err(Error::FeatureLength {
            got: e.features.len(),
            expected: spec.input_dim,
        });
    }
    if e.label >= spec.num_classes {
        return Err(Error::LabelOutOfRange {
            label: e.label,
            num_classes: spec.num_classes,
        });
    }
    Ok(())
}

/// Loss, gradient and correct count over the examples yielded by `batch`.
fn loss_grad_iter<'a>(
    spec: &ModelSpec,
    params: &ParamVector,
    batch: impl ExactSizeIterator<Item = &'a Example>,
) -> Result<LossGrad> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::Empty("batch"));
    }
    if params.dim() != spec.param_count() {
        return Err(Error::DimensionMismatch {
            left: params.dim(),
            right: spec.param_count(),
        });
    }
    if !params.is_finite() {
        return Err(Error::NonFiniteParams);
    }
    let p = params.as_slice();
    let (d, h, c) = (spec.input_dim, spec.hidden_dim, spec.num_classes);
    let mut grad = vec![0.0; p.len()];
    let mut loss = 0.0;
    let mut correct = 0;
    let mut dlogits = vec![0.0; c];

    for e in batch {
        check_example(spec, e)?;
        let x = &e.features;
        let (mut logits, z1) = forward(spec, p, x);
        if argmax(&logits) == e.label {
            correct += 1;
        }
        log_softmax(&mut logits);
        loss -= logits[e.label];
        for k in 0..c {
            dlogits[k] = libm::exp(logits[k]) - if k == e.label { 1.0 } else { 0.0 };
        }
        match spec.kind {
            ModelKind::Linear => {
                for k in 0..c {
                    let g = &mut grad[k * d..(k + 1) * d];
                    for (gi, xi) in g.iter_mut().zip(x) {
                        *gi += dlogits[k] * xi;
                    }
                    grad[d * c + k] += dlogits[k];
                }
            }
            ModelKind::Mlp => {
                let o = d * h + h;
                let w2 = &p[o..o + h * c];
                for k in 0..c {
                    for j in 0..h {
                        let a = if z1[j] > 0.0 { z1[j] } else { 0.0 };
                        grad[o + k * h + j] += dlogits[k] * a;
                    }
                    grad[o + h * c + k] += dlogits[k];
                }
                for j in 0..h {
                    if z1[j] <= 0.0 {
                        continue;
                    }
                    let dz = (0..c).fold(0.0, |acc, k| acc + w2[k * h + j] * dlogits[k]);
                    let g = &mut grad[j * d..(j + 1) * d];
                    for (gi, xi) in g.iter_mut().zip(x) {
                        *gi += dz * xi;
                    }
                    grad[d * h + j] += dz;
                }
            }
        }
    }

    let inv = 1.0 / n as f64;
    for g in &mut grad {
        *g *= inv;
    }
    Ok(LossGrad {
        loss: loss * inv,
        grad: ParamVector::new(grad),
        correct,
    })
}

pub fn forward_loss_grad(
    spec: &ModelSpec,
    params: &ParamVector,
    batch: &[Example],
) -> Result<LossGrad> {
    loss_grad_iter(spec, params, batch.iter())
}

/// Class probabilities for one example.
pub fn predict_proba(spec: &ModelSpec, params: &ParamVector, features: &[f64]) -> Vec<f64> {
    let (mut logits, _) = forward(spec, params.as_slice(), features);
    log_softmax(&mut logits);
    logits.iter().map(|&l| libm::exp(l)).collect()
}

pub fn predict(spec: &ModelSpec, params: &ParamVector, features: &[f64]) -> usize {
    argmax(&forward(spec, params.as_slice(), features).0)
}

/// Trains from `start` on `data` for `opt.local_epochs` passes of shuffled
/// mini-batches. The shuffle for epoch `e` is seeded by
/// `derive_seed(seed, e, NO_ID, NO_ID, "shuffle")`.
pub fn train_local(
    spec: &ModelSpec,
    start: &ParamVector,
    data: &[Example],
    opt: &OptimizerConfig,
    seed: u64,
) -> Result<ParamVector> {
    if data.is_empty() {
        return Err(Error::Empty("client training data"));
    }
    let mut p = start.clone();
    let dim = p.dim();
    let (mut m, mut v) = (vec![0.0; dim], vec![0.0; dim]);
    let mut step: i32 = 0;
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 0..opt.local_epochs {
        let mut rng = rng_from_seed(derive_seed(seed, epoch as u64, NO_ID, NO_ID, "shuffle"));
        order.sort_unstable();
        order.shuffle(&mut rng);
        for chunk in order.chunks(opt.batch_size) {
            let lg = loss_grad_iter(spec, &p, chunk.iter().map(|&i| &data[i]))?;
            if !lg.loss.is_finite() || !lg.grad.is_finite() {
                return Err(Error::NonFiniteParams);
            }
            let g = lg.grad.as_slice();
            let w = p.as_mut_slice();
            match opt.kind {
                OptimizerKind::Sgd => {
                    for (wi, gi) in w.iter_mut().zip(g) {
                        *wi -= opt.learning_rate * gi;
                    }
                }
                OptimizerKind::Adam => {
                    step += 1;
                    let (b1, b2) = (opt.adam_beta1, opt.adam_beta2);
                    let c1 = 1.0 - libm::pow(b1, step as f64);
                    let c2 = 1.0 - libm::pow(b2, step as f64);
                    for i in 0..dim {
                        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        w[i] -= opt.learning_rate * m_hat / (libm::sqrt(v_hat) + opt.adam_epsilon);
                    }
                }
            }
        }
    }
    if !p.is_finite() {
        return Err(Error::NonFiniteParams);
    }
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
}

/// Mean cross-entropy and accuracy over `data`.
pub fn evaluate(spec: &ModelSpec, params: &ParamVector, data: &[Example]) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::Empty("evaluation data"));
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for e in data {
        check_example(spec, e)?;
        let (mut logits, _) = forward(spec, params.as_slice(), &e.features);
        if argmax(&logits) == e.label {
            correct += 1;
        }
        log_softmax(&mut logits);
        loss -= logits[e.label];
    }
    let n = data.len() as f64;
    Ok(Evaluation {
        loss: loss / n,
        accuracy: correct as f64 / n,
    })
}

/// Argmax predictions, in input order.
pub fn predictions(spec: &ModelSpec, params: &ParamVector, data: &[Example]) -> Vec<usize> {
    data.iter()
        .map(|e| predict(spec, params, &e.features))
        .collect()
}
