// SPDX-License-Identifier: Apache-2.0

//! Dense feed-forward regressor: two rectified hidden layers and a linear
//! output, trained with mean-squared error and bias-corrected Adam.
//!
//! Inputs are a window of consecutive, min-max normalized readings laid out
//! step-major (`[s0@t0, s1@t0, .., s0@t1, ..]`); the output is the next step
//! of every series.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::seed;

pub const DEFAULT_WINDOW: usize = 3;
pub const WIDTH_GRID: [usize; 3] = [64, 128, 256];
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Min-max scaling of one series. A constant series maps to 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    pub fn fit(values: &[f64]) -> Self {
        let (min, max) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        Self { min, max }
    }

    pub fn identity() -> Self {
        Self { min: 0.0, max: 1.0 }
    }

    pub fn normalize(&self, v: f64) -> f64 {
        if self.max > self.min {
            (v - self.min) / (self.max - self.min)
        } else {
            0.0
        }
    }

    pub fn denormalize(&self, v: f64) -> f64 {
        if self.max > self.min {
            self.min + v * (self.max - self.min)
        } else {
            self.min
        }
    }
}

/// One training pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

/// Fully connected layer, weights row-major with shape `[inputs, outputs]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub shape: [usize; 2],
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl DenseLayer {
    fn glorot(inputs: usize, outputs: usize, rng: &mut seed::Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        Self {
            shape: [inputs, outputs],
            weights: (0..inputs * outputs).map(|_| rng.random_range(-limit..=limit)).collect(),
            biases: vec![0.0; outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.shape[0]
    }

    pub fn outputs(&self) -> usize {
        self.shape[1]
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.biases);
        let n_out = self.outputs();
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &self.weights[i * n_out..(i + 1) * n_out];
            for (o, w) in out.iter_mut().zip(row) {
                *o += xi * w;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNetModel {
    pub window_len: usize,
    /// Scaling of each predicted series; the input layer width is
    /// `window_len * series_scaling.len()`.
    pub series_scaling: Vec<MinMax>,
    pub layers: Vec<DenseLayer>,
}

/// Bias-corrected Adam moments over the flattened parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(param_count: usize) -> Self {
        Self { m: vec![0.0; param_count], v: vec![0.0; param_count], step: 0 }
    }

    /// Applies one Adam update to `params` in place.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64], learning_rate: f64) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - ADAM_BETA1.powi(t);
        let bc2 = 1.0 - ADAM_BETA2.powi(t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
        }
    }
}

impl DenseNetModel {
    /// Univariate forecaster: window of 3 → `width` → `width` → 1.
    pub fn init(hidden_width: usize, rng_seed: u64) -> Self {
        if !WIDTH_GRID.contains(&hidden_width) {
            log::warn!("hidden width {hidden_width} is outside the tuned grid {WIDTH_GRID:?}");
        }
        Self::with_shape(DEFAULT_WINDOW, 1, &[hidden_width, hidden_width], rng_seed)
    }

    /// Arbitrary window length, series count and hidden widths.
    pub fn with_shape(window_len: usize, n_series: usize, hidden: &[usize], rng_seed: u64) -> Self {
        let mut dims = vec![window_len * n_series];
        dims.extend_from_slice(hidden);
        dims.push(n_series);
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, d)| {
                let mut rng = seed::rng(seed::derive_indexed(rng_seed, "densenet/layer", i));
                DenseLayer::glorot(d[0], d[1], &mut rng)
            })
            .collect();
        Self { window_len, series_scaling: vec![MinMax::identity(); n_series], layers }
    }

    pub fn from_layers(window_len: usize, series_scaling: Vec<MinMax>, layers: Vec<DenseLayer>) -> Result<Self, ModelError> {
        let m = Self { window_len, series_scaling, layers };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let first = self.layers.first().ok_or_else(|| ModelError::InvalidParameter("no layers".into()))?;
        if first.inputs() != self.input_dim() {
            return Err(ModelError::InvalidParameter("input layer does not match window".into()));
        }
        for pair in self.layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(ModelError::InvalidParameter("layer shapes do not chain".into()));
            }
        }
        for l in &self.layers {
            if l.weights.len() != l.inputs() * l.outputs() || l.biases.len() != l.outputs() {
                return Err(ModelError::InvalidParameter("layer buffer size mismatch".into()));
            }
        }
        if self.layers.last().map(DenseLayer::outputs) != Some(self.n_series()) {
            return Err(ModelError::InvalidParameter("output layer does not match series count".into()));
        }
        if self.params().iter().any(|p| !p.is_finite()) {
            return Err(ModelError::NonFiniteInput);
        }
        Ok(())
    }

    pub fn n_series(&self) -> usize {
        self.series_scaling.len()
    }

    pub fn input_dim(&self) -> usize {
        self.window_len * self.n_series()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Flattened parameters, per layer weights then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count(), "parameter vector length");
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&params[off..off + nw]);
            off += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&params[off..off + nb]);
            off += nb;
        }
    }

    fn check_input(&self, input: &[f64]) -> Result<(), ModelError> {
        if input.len() != self.input_dim() {
            return Err(ModelError::DimensionMismatch { expected: self.input_dim(), got: input.len() });
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteInput);
        }
        Ok(())
    }

    /// Prediction in normalized units.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.check_input(input)?;
        let mut acts = self.activations(input);
        Ok(acts.pop().expect("at least one layer"))
    }

    /// Per-layer post-activation values; the first entry is the input.
    fn activations(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.apply(acts.last().expect("non-empty"), &mut z);
            if i < last {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    /// Mean squared error over the batch and its flat gradient.
    pub fn loss_and_gradient(&self, batch: &[Sample]) -> Result<(f64, Vec<f64>), ModelError> {
        if batch.is_empty() {
            return Err(ModelError::EmptyData);
        }
        let n_out = self.n_series();
        for s in batch {
            self.check_input(&s.input)?;
            if s.target.len() != n_out {
                return Err(ModelError::DimensionMismatch { expected: n_out, got: s.target.len() });
            }
        }
        let scale = 1.0 / (batch.len() * n_out) as f64;
        let mut grads: Vec<(Vec<f64>, Vec<f64>)> =
            self.layers.iter().map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.biases.len()])).collect();
        let mut loss = 0.0;
        let last = self.layers.len() - 1;

        for s in batch {
            let acts = self.activations(&s.input);
            let pred = &acts[acts.len() - 1];
            // dL/dz at the output (identity activation)
            let mut delta: Vec<f64> = pred
                .iter()
                .zip(&s.target)
                .map(|(p, t)| {
                    loss += (p - t) * (p - t);
                    2.0 * (p - t) * scale
                })
                .collect();
            for li in (0..=last).rev() {
                let layer = &self.layers[li];
                let a_in = &acts[li];
                let n_o = layer.outputs();
                let (gw, gb) = &mut grads[li];
                for (b, d) in gb.iter_mut().zip(&delta) {
                    *b += d;
                }
                for (i, &x) in a_in.iter().enumerate() {
                    if x == 0.0 {
                        continue;
                    }
                    for (g, d) in gw[i * n_o..(i + 1) * n_o].iter_mut().zip(&delta) {
                        *g += x * d;
                    }
                }
                if li > 0 {
                    // back through the weights, then the rectifier of layer li-1
                    delta = (0..layer.inputs())
                        .map(|i| {
                            if a_in[i] <= 0.0 {
                                return 0.0;
                            }
                            layer.weights[i * n_o..(i + 1) * n_o].iter().zip(&delta).map(|(w, d)| w * d).sum()
                        })
                        .collect();
                }
            }
        }
        let mut flat = Vec::with_capacity(self.param_count());
        for (gw, gb) in grads {
            flat.extend(gw);
            flat.extend(gb);
        }
        Ok((loss * scale, flat))
    }

    /// One Adam step on a batch; returns the pre-update batch loss. On a
    /// non-finite loss the model is left untouched.
    pub fn train_step(&mut self, batch: &[Sample], learning_rate: f64, adam: &mut AdamState) -> Result<f64, ModelError> {
        if !(learning_rate > 0.0) {
            return Err(ModelError::InvalidParameter(format!("learning rate must be > 0, got {learning_rate}")));
        }
        let (loss, grads) = self.loss_and_gradient(batch)?;
        if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(ModelError::NonFiniteLoss);
        }
        let mut params = self.params();
        adam.update(&mut params, &grads, learning_rate);
        if params.iter().any(|p| !p.is_finite()) {
            return Err(ModelError::NonFiniteLoss);
        }
        self.set_params(&params);
        Ok(loss)
    }

    /// Normalizes a physical-unit window (step-major) for this model.
    pub fn normalize_window(&self, physical: &[f64]) -> Vec<f64> {
        let k = self.n_series();
        physical.iter().enumerate().map(|(i, &v)| self.series_scaling[i % k].normalize(v)).collect()
    }

    /// One-step prediction in physical units.
    pub fn predict_physical(&self, physical_window: &[f64]) -> Result<Vec<f64>, ModelError> {
        let out = self.forward(&self.normalize_window(physical_window))?;
        Ok(out.iter().zip(&self.series_scaling).map(|(v, s)| s.denormalize(*v)).collect())
    }

    /// Iterated forecast for a univariate model: each prediction is appended
    /// to the window for the next step. Physical units in and out.
    pub fn forecast(&self, history: &[f64], horizon: usize) -> Result<Vec<f64>, ModelError> {
        if self.n_series() != 1 {
            return Err(ModelError::InvalidParameter("iterated forecast needs a univariate model".into()));
        }
        if history.len() < self.window_len {
            return Err(ModelError::DimensionMismatch { expected: self.window_len, got: history.len() });
        }
        let scale = self.series_scaling[0];
        let mut window: Vec<f64> = history[history.len() - self.window_len..].iter().map(|&v| scale.normalize(v)).collect();
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let next = self.forward(&window)?[0];
            out.push(scale.denormalize(next));
            window.remove(0);
            window.push(next);
        }
        Ok(out)
    }
}
