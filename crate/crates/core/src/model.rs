//! Multilayer perceptrons with ReLU hidden layers and a softmax output,
//! trained on mean cross-entropy.
//!
//! Parameters live in one flat [`ParamVector`]. Layer `l` occupies a
//! row-major `out × in` weight block followed by its `out` biases.

use std::ops::Deref;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Batch;
use crate::error::{Error, Result};
use crate::rng::{stream, Domain};

/// Flat model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        match self.0.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::Numeric(format!(
                "{what} has non-finite coordinate {i} ({})",
                self.0[i]
            ))),
        }
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    pub fn norm_squared(&self) -> f64 {
        self.dot(&self.0)
    }
}

impl Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    weights: usize,
    biases: usize,
}

/// Layer widths `[d_x, h_1, ..., C]` plus an optional L2 penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    widths: Vec<usize>,
    l2: f64,
    layers: Vec<Layer>,
    dim: usize,
}

impl ModelSpec {
    pub fn new(widths: Vec<usize>) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::config(
                "model.layers",
                "need input and output widths (at least one linear layer)",
            ));
        }
        if widths.contains(&0) {
            return Err(Error::config("model.layers", "layer widths must be positive"));
        }
        let mut layers = Vec::with_capacity(widths.len() - 1);
        let mut offset = 0;
        for pair in widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            layers.push(Layer {
                fan_in,
                fan_out,
                weights: offset,
                biases: offset + fan_in * fan_out,
            });
            offset += fan_in * fan_out + fan_out;
        }
        Ok(Self {
            widths,
            l2: 0.0,
            layers,
            dim: offset,
        })
    }

    /// Adds `l2 / 2 * ||w||^2` to the risk.
    pub fn with_l2(mut self, l2: f64) -> Result<Self> {
        if !(l2 >= 0.0 && l2.is_finite()) {
            return Err(Error::config("model.l2", "must be a non-negative number"));
        }
        self.l2 = l2;
        Ok(self)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn class_count(&self) -> usize {
        *self.widths.last().expect("at least two widths")
    }

    pub fn l2(&self) -> f64 {
        self.l2
    }

    /// Total number of weights and biases.
    pub fn dim(&self) -> usize {
        self.dim
    }

    fn check(&self, w: &[f64], batch: &Batch<'_>) -> Result<()> {
        if w.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: w.len(),
            });
        }
        if batch.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        if let Some(x) = batch.features.iter().find(|x| x.len() != self.input_dim()) {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        if let Some(&y) = batch.labels.iter().find(|&&y| y >= self.class_count()) {
            return Err(Error::Contract(format!(
                "label {y} out of range for {} classes",
                self.class_count()
            )));
        }
        Ok(())
    }

    // Fills `acts[0..=L]`: input, hidden post-activations, logits.
    fn forward(&self, w: &[f64], x: &[f64], acts: &mut [Vec<f64>]) {
        acts[0].copy_from_slice(x);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (prev, next) = acts.split_at_mut(l + 1);
            let input = &prev[l];
            let out = &mut next[0];
            for j in 0..layer.fan_out {
                let row = &w[layer.weights + j * layer.fan_in..layer.weights + (j + 1) * layer.fan_in];
                let z = w[layer.biases + j] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
                out[j] = if l < last { z.max(0.0) } else { z };
            }
        }
    }

    fn buffers(&self) -> Vec<Vec<f64>> {
        self.widths.iter().map(|&n| vec![0.0; n]).collect()
    }
}

/// Initial parameters drawn from `stream(seed, Init, 0)`.
pub fn init_params(spec: &ModelSpec, seed: u64, scale: f64) -> Result<ParamVector> {
    init_params_with(spec, &mut stream(seed, Domain::Init, 0), scale)
}

/// Weights `~ N(0, scale^2 / fan_in)`, biases zero.
pub fn init_params_with<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R, scale: f64) -> Result<ParamVector> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::config("model.init_scale", "must be positive"));
    }
    let mut w = vec![0.0; spec.dim];
    for layer in &spec.layers {
        let sd = scale / (layer.fan_in as f64).sqrt();
        for v in &mut w[layer.weights..layer.biases] {
            let z: f64 = StandardNormal.sample(rng);
            *v = sd * z;
        }
    }
    Ok(ParamVector(w))
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

// `log_sum_exp(z) - z[y]`, accurate when the true class dominates.
fn cross_entropy(z: &[f64], y: usize) -> f64 {
    let top = argmax(z);
    let max = z[top];
    if !max.is_finite() {
        return f64::NAN;
    }
    let rest: f64 = z
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != top)
        .map(|(_, v)| (v - max).exp())
        .sum();
    (max - z[y]) + rest.ln_1p()
}

fn l2_penalty(spec: &ModelSpec, w: &[f64]) -> f64 {
    if spec.l2 == 0.0 {
        0.0
    } else {
        0.5 * spec.l2 * w.iter().map(|v| v * v).sum::<f64>()
    }
}

/// Mean cross-entropy of `w` over `batch` (plus the L2 term, if any).
pub fn risk(spec: &ModelSpec, w: &[f64], batch: &Batch<'_>) -> Result<f64> {
    spec.check(w, batch)?;
    let mut acts = spec.buffers();
    let mut total = 0.0;
    for (x, &y) in batch.features.iter().zip(&batch.labels) {
        spec.forward(w, x, &mut acts);
        let logits = acts.last().expect("output layer");
        total += cross_entropy(logits, y);
    }
    let r = total / batch.len() as f64 + l2_penalty(spec, w);
    if !r.is_finite() {
        return Err(Error::Numeric(format!("risk evaluated to {r}")));
    }
    // rounding in log-sum-exp can leave a tiny negative value
    Ok(r.max(0.0))
}

/// Backpropagation gradient of [`risk`] with respect to `w`.
pub fn grad(spec: &ModelSpec, w: &[f64], batch: &Batch<'_>) -> Result<ParamVector> {
    spec.check(w, batch)?;
    let mut acts = spec.buffers();
    let mut deltas = spec.buffers();
    let mut g = vec![0.0; spec.dim];
    let n_layers = spec.layers.len();

    for (x, &y) in batch.features.iter().zip(&batch.labels) {
        spec.forward(w, x, &mut acts);

        // softmax minus one-hot
        let logits = &acts[n_layers];
        let lse = log_sum_exp(logits);
        let out = &mut deltas[n_layers];
        for (d, &z) in out.iter_mut().zip(logits) {
            *d = (z - lse).exp();
        }
        out[y] -= 1.0;

        for l in (0..n_layers).rev() {
            let layer = spec.layers[l];
            let (lower, upper) = deltas.split_at_mut(l + 1);
            let delta = &upper[0];
            let input = &acts[l];
            for j in 0..layer.fan_out {
                let dj = delta[j];
                if dj == 0.0 {
                    continue;
                }
                let row = &mut g[layer.weights + j * layer.fan_in..layer.weights + (j + 1) * layer.fan_in];
                for (gv, a) in row.iter_mut().zip(input) {
                    *gv += dj * a;
                }
                g[layer.biases + j] += dj;
            }
            if l > 0 {
                let below = &mut lower[l];
                below.iter_mut().for_each(|v| *v = 0.0);
                for j in 0..layer.fan_out {
                    let dj = delta[j];
                    if dj == 0.0 {
                        continue;
                    }
                    let row = &w[layer.weights + j * layer.fan_in..layer.weights + (j + 1) * layer.fan_in];
                    for (b, wv) in below.iter_mut().zip(row) {
                        *b += dj * wv;
                    }
                }
                // ReLU'(z) = 1 iff the activation is positive; 0 at z = 0
                for (b, &a) in below.iter_mut().zip(&acts[l]) {
                    if a <= 0.0 {
                        *b = 0.0;
                    }
                }
            }
        }
    }

    let n = batch.len() as f64;
    for (gv, wv) in g.iter_mut().zip(w) {
        *gv = *gv / n + spec.l2 * wv;
    }
    let g = ParamVector(g);
    g.ensure_finite("gradient")?;
    Ok(g)
}

/// Class scores of one sample.
pub fn logits(spec: &ModelSpec, w: &[f64], x: &[f64]) -> Vec<f64> {
    let mut acts = spec.buffers();
    spec.forward(w, x, &mut acts);
    acts.pop().expect("output layer")
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Fraction of samples whose argmax prediction equals the label.
pub fn accuracy(spec: &ModelSpec, w: &[f64], batch: &Batch<'_>) -> Result<f64> {
    spec.check(w, batch)?;
    let mut acts = spec.buffers();
    let mut correct = 0usize;
    for (x, &y) in batch.features.iter().zip(&batch.labels) {
        spec.forward(w, x, &mut acts);
        if argmax(&acts[spec.layers.len()]) == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / batch.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam,
}

/// Step-size and moment hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }

    pub fn adam(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        // lr = 0 is accepted: it freezes local learning
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::config("optimizer.lr", "must be a non-negative number"));
        }
        if self.kind == OptimizerKind::Adam {
            if !(0.0..1.0).contains(&self.beta1) {
                return Err(Error::config("optimizer.beta1", "must lie in [0, 1)"));
            }
            if !(0.0..1.0).contains(&self.beta2) {
                return Err(Error::config("optimizer.beta2", "must lie in [0, 1)"));
            }
            if !(self.eps > 0.0 && self.eps.is_finite()) {
                return Err(Error::config("optimizer.eps", "must be positive"));
            }
        }
        Ok(())
    }
}

/// Per-worker optimizer state; never shared between workers.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    config: OptimizerConfig,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    steps: u64,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, dim: usize) -> Result<Self> {
        config.validate()?;
        let moments = if config.kind == OptimizerKind::Adam { dim } else { 0 };
        Ok(Self {
            config,
            first_moment: vec![0.0; moments],
            second_moment: vec![0.0; moments],
            steps: 0,
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }
}

/// One local update: `w - lr * g` for SGD, bias-corrected Adam otherwise.
pub fn local_step(state: &mut OptimizerState, w: &[f64], g: &[f64]) -> Result<ParamVector> {
    if w.len() != g.len() {
        return Err(Error::DimensionMismatch {
            expected: w.len(),
            found: g.len(),
        });
    }
    let lr = state.config.lr;
    let next: Vec<f64> = match state.config.kind {
        OptimizerKind::Sgd => w.iter().zip(g).map(|(wi, gi)| wi - lr * gi).collect(),
        OptimizerKind::Adam => {
            if state.first_moment.len() != w.len() {
                return Err(Error::DimensionMismatch {
                    expected: state.first_moment.len(),
                    found: w.len(),
                });
            }
            let OptimizerConfig { beta1, beta2, eps, .. } = state.config;
            state.steps += 1;
            let t = state.steps as i32;
            let c1 = 1.0 - beta1.powi(t);
            let c2 = 1.0 - beta2.powi(t);
            w.iter()
                .zip(g)
                .zip(state.first_moment.iter_mut().zip(state.second_moment.iter_mut()))
                .map(|((wi, gi), (m, v))| {
                    *m = beta1 * *m + (1.0 - beta1) * gi;
                    *v = beta2 * *v + (1.0 - beta2) * gi * gi;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    wi - lr * m_hat / (v_hat.sqrt() + eps)
                })
                .collect()
        }
    };
    let next = ParamVector(next);
    next.ensure_finite("local update")?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use proptest::prelude::*;
    use rand::Rng;

    fn toy_batch(spec: &ModelSpec, n: usize, seed: u64) -> Dataset {
        let mut rng = stream(seed, Domain::Verification, 99);
        let rows = (0..n)
            .map(|_| (0..spec.input_dim()).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let labels = (0..n).map(|_| rng.random_range(0..spec.class_count())).collect();
        Dataset::new(rows, labels, spec.class_count()).unwrap()
    }

    fn fd_grad(spec: &ModelSpec, w: &[f64], batch: &Batch<'_>, h: f64) -> Vec<f64> {
        let mut w = w.to_vec();
        (0..w.len())
            .map(|i| {
                let orig = w[i];
                w[i] = orig + h;
                let up = risk(spec, &w, batch).unwrap();
                w[i] = orig - h;
                let down = risk(spec, &w, batch).unwrap();
                w[i] = orig;
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-3))
            .fold(0.0, f64::max)
    }

    #[test]
    fn parameter_count() {
        assert_eq!(ModelSpec::new(vec![2, 3, 2]).unwrap().dim(), 17);
        assert!(ModelSpec::new(vec![3]).is_err());
        assert!(ModelSpec::new(vec![3, 0, 2]).is_err());
    }

    #[test]
    fn init_is_deterministic_and_biases_zero() {
        let spec = ModelSpec::new(vec![2, 3, 2]).unwrap();
        let a = init_params(&spec, 5, 1.0).unwrap();
        assert_eq!(a, init_params(&spec, 5, 1.0).unwrap());
        assert_ne!(a, init_params(&spec, 6, 1.0).unwrap());
        assert_eq!(&a.as_slice()[6..9], &[0.0; 3]);
        assert_eq!(&a.as_slice()[15..17], &[0.0; 2]);
        assert!(init_params(&spec, 5, 0.0).is_err());
    }

    #[test]
    fn tiny_init_gives_uniform_softmax() {
        let spec = ModelSpec::new(vec![4, 6, 3]).unwrap();
        let w = init_params(&spec, 1, 1e-8).unwrap();
        let ds = toy_batch(&spec, 8, 1);
        let r = risk(&spec, &w, &ds.all()).unwrap();
        assert!((r - 3f64.ln()).abs() < 1e-7);
    }

    #[test]
    fn zero_params_risk_is_log_c() {
        for c in [2, 3, 7] {
            let spec = ModelSpec::new(vec![3, 5, c]).unwrap();
            let ds = toy_batch(&spec, 6, c as u64);
            let r = risk(&spec, &ParamVector::zeros(spec.dim()), &ds.all()).unwrap();
            assert!((r - (c as f64).ln()).abs() <= 1e-15);
        }
    }

    #[test]
    fn saturated_logit_gap_drives_risk_to_zero() {
        // single linear layer, x = [1], class 1 bias huge
        let spec = ModelSpec::new(vec![1, 2]).unwrap();
        let ds = Dataset::new(vec![vec![1.0]], vec![1], 2).unwrap();
        let mut prev = f64::INFINITY;
        for gap in [1.0, 10.0, 100.0, 800.0] {
            let w = [0.0, 0.0, 0.0, gap];
            let r = risk(&spec, &w, &ds.all()).unwrap();
            assert!(r < prev);
            prev = r;
        }
        assert!(prev < 1e-300);
    }

    #[test]
    fn batched_risk_equals_per_sample_mean() {
        let spec = ModelSpec::new(vec![3, 4, 3]).unwrap();
        let w = init_params(&spec, 3, 1.0).unwrap();
        let ds = toy_batch(&spec, 5, 2);
        let batched = risk(&spec, &w, &ds.all()).unwrap();
        let looped: f64 = (0..5).map(|i| risk(&spec, &w, &ds.batch(&[i])).unwrap()).sum::<f64>() / 5.0;
        assert!((batched - looped).abs() < 1e-10);
    }

    #[test]
    fn gradient_matches_finite_differences_small_model() {
        let spec = ModelSpec::new(vec![2, 4, 3]).unwrap();
        for seed in 0..5 {
            let w = init_params(&spec, seed, 1.0).unwrap();
            let ds = toy_batch(&spec, 6, seed);
            let g = grad(&spec, &w, &ds.all()).unwrap();
            let fd = fd_grad(&spec, &w, &ds.all(), 1e-5);
            assert!(max_rel_err(&g, &fd) <= 1e-4, "seed {seed}");
        }
    }

    #[test]
    fn gradient_with_l2_and_deep_model() {
        let spec = ModelSpec::new(vec![3, 5, 4, 2]).unwrap().with_l2(0.1).unwrap();
        // non-zero biases keep pre-activations away from the ReLU kink
        let w: Vec<f64> = init_params(&spec, 11, 1.0)
            .unwrap()
            .iter()
            .enumerate()
            .map(|(i, v)| v + 0.05 + 0.01 * (i % 5) as f64)
            .collect();
        let ds = toy_batch(&spec, 7, 4);
        let g = grad(&spec, &w, &ds.all()).unwrap();
        let fd = fd_grad(&spec, &w, &ds.all(), 1e-5);
        assert!(max_rel_err(&g, &fd) <= 1e-4);
    }

    #[test]
    fn gradient_vanishes_when_training_separable_singleton() {
        let spec = ModelSpec::new(vec![2, 2]).unwrap();
        let ds = Dataset::new(vec![vec![1.0, -1.0]], vec![0], 2).unwrap();
        let mut w = ParamVector::zeros(spec.dim());
        let mut state = OptimizerState::new(OptimizerConfig::sgd(1.0), spec.dim()).unwrap();
        let first = grad(&spec, &w, &ds.all()).unwrap().norm_squared();
        for _ in 0..2000 {
            let g = grad(&spec, &w, &ds.all()).unwrap();
            w = local_step(&mut state, &w, &g).unwrap();
        }
        let last = grad(&spec, &w, &ds.all()).unwrap().norm_squared();
        assert!(last < first * 1e-6, "{first} -> {last}");
    }

    #[test]
    fn duplicated_sample_gives_same_gradient() {
        let spec = ModelSpec::new(vec![2, 3, 2]).unwrap();
        let w = init_params(&spec, 2, 1.0).unwrap();
        let ds = toy_batch(&spec, 1, 0);
        let once = grad(&spec, &w, &ds.batch(&[0])).unwrap();
        let twice = grad(&spec, &w, &ds.batch(&[0, 0])).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn sgd_step_arithmetic() {
        let mut s = OptimizerState::new(OptimizerConfig::sgd(0.5), 2).unwrap();
        assert_eq!(local_step(&mut s, &[1.0, -1.0], &[2.0, 2.0]).unwrap().as_slice(), &[0.0, -2.0]);
        assert_eq!(local_step(&mut s, &[1.0, -1.0], &[0.0, 0.0]).unwrap().as_slice(), &[1.0, -1.0]);
        assert!(matches!(
            local_step(&mut s, &[1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        // m_hat = g, v_hat = g^2, so the update is lr * g / (|g| + eps)
        let mut s = OptimizerState::new(OptimizerConfig::adam(0.02), 1).unwrap();
        let next = local_step(&mut s, &[0.0], &[1.0]).unwrap();
        let expected = -0.02 * 1.0 / (1.0 + 1e-8);
        assert!((next[0] - expected).abs() < 1e-15);
        assert_eq!(s.steps(), 1);
    }

    #[test]
    fn adam_tracks_moments_across_steps() {
        let cfg = OptimizerConfig::adam(0.1);
        let mut s = OptimizerState::new(cfg, 1).unwrap();
        let w1 = local_step(&mut s, &[0.0], &[1.0]).unwrap();
        let w2 = local_step(&mut s, &w1, &[-1.0]).unwrap();
        // hand-computed second iterate
        let m = 0.9 * 0.1 - 0.1;
        let v = 0.999 * 0.001 + 0.001 * 1.0;
        let m_hat = m / (1.0 - 0.81);
        let v_hat = v / (1.0 - 0.999f64.powi(2));
        let expected = w1[0] - 0.1 * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((w2[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn non_finite_update_is_reported() {
        let mut s = OptimizerState::new(OptimizerConfig::sgd(1.0), 1).unwrap();
        assert!(matches!(
            local_step(&mut s, &[f64::MAX], &[-f64::MAX]),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn accuracy_ties_go_to_class_zero() {
        let spec = ModelSpec::new(vec![2, 3, 2]).unwrap();
        let ds = Dataset::new(
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 2.0], vec![1.0, 1.0]],
            vec![0, 1, 1, 0],
            2,
        )
        .unwrap();
        let acc = accuracy(&spec, &ParamVector::zeros(spec.dim()), &ds.all()).unwrap();
        assert_eq!(acc, 0.5);
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }

    #[test]
    fn accuracy_of_perfect_separator_and_loop_oracle() {
        let spec = ModelSpec::new(vec![1, 2]).unwrap();
        let ds = Dataset::new(vec![vec![-1.0], vec![-2.0], vec![1.5], vec![3.0]], vec![0, 0, 1, 1], 2).unwrap();
        // logit_0 = -x, logit_1 = x
        let w = [-1.0, 1.0, 0.0, 0.0];
        assert_eq!(accuracy(&spec, &w, &ds.all()).unwrap(), 1.0);

        let spec = ModelSpec::new(vec![3, 4, 3]).unwrap();
        let w = init_params(&spec, 9, 2.0).unwrap();
        let ds = toy_batch(&spec, 40, 9);
        let looped = (0..ds.len())
            .filter(|&i| argmax(&logits(&spec, &w, ds.row(i))) == ds.label(i))
            .count() as f64
            / ds.len() as f64;
        assert_eq!(accuracy(&spec, &w, &ds.all()).unwrap(), looped);
    }

    #[test]
    fn contract_errors() {
        let spec = ModelSpec::new(vec![2, 2]).unwrap();
        let ds = Dataset::new(vec![vec![1.0, 0.0]], vec![1], 2).unwrap();
        assert!(matches!(risk(&spec, &[0.0; 3], &ds.all()), Err(Error::DimensionMismatch { .. })));
        let empty = ds.batch(&[]);
        assert!(risk(&spec, &[0.0; 6], &empty).is_err());
        assert!(matches!(
            risk(&spec, &[f64::INFINITY, 0.0, 0.0, 0.0, 0.0, 0.0], &ds.all()),
            Err(Error::Numeric(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn risk_is_permutation_invariant(seed in any::<u64>(), rot in 0usize..7) {
            let spec = ModelSpec::new(vec![3, 4, 2]).unwrap();
            let w = init_params(&spec, seed, 1.0).unwrap();
            let ds = toy_batch(&spec, 7, seed);
            let idx: Vec<usize> = (0..7).map(|i| (i + rot) % 7).rev().collect();
            let a = risk(&spec, &w, &ds.all()).unwrap();
            let b = risk(&spec, &w, &ds.batch(&idx)).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }

        #[test]
        fn sgd_step_is_linear_in_gradient(
            g1 in proptest::collection::vec(-5.0f64..5.0, 4),
            g2 in proptest::collection::vec(-5.0f64..5.0, 4),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let w = [0.3, -0.7, 1.1, 0.0];
            let mu = 0.05;
            let mut s = OptimizerState::new(OptimizerConfig::sgd(mu), 4).unwrap();
            let combo: Vec<f64> = g1.iter().zip(&g2).map(|(x, y)| a * x + b * y).collect();
            let next = local_step(&mut s, &w, &combo).unwrap();
            for i in 0..4 {
                prop_assert!((next[i] - (w[i] - mu * combo[i])).abs() < 1e-12);
            }
        }
    }
}
