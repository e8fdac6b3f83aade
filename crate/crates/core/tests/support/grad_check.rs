// SPDX-License-Identifier: Apache-2.0

//! Analytic densenet gradients against central finite differences.

use edgespace_core::ml::densenet::Sample;
use edgespace_core::ml::DenseNetModel;

fn central_difference(m: &DenseNetModel, batch: &[Sample], i: usize, h: f64) -> f64 {
    let base = m.params();
    let mut plus = m.clone();
    let mut p = base.clone();
    p[i] += h;
    plus.set_params(&p);
    let mut minus = m.clone();
    p[i] = base[i] - h;
    minus.set_params(&p);
    (plus.loss_and_gradient(batch).unwrap().0 - minus.loss_and_gradient(batch).unwrap().0) / (2.0 * h)
}

/// A small network whose parameters are nudged off zero so no
/// pre-activation sits within the step of a ReLU kink.
pub fn jittered_model(seed: u64) -> DenseNetModel {
    let mut m = DenseNetModel::with_shape(3, 1, &[6, 6], seed);
    let mut state = seed | 1;
    let jittered: Vec<f64> = m
        .params()
        .iter()
        .map(|p| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            p + 0.1 * ((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5)
        })
        .collect();
    m.set_params(&jittered);
    m
}

/// Largest relative error over every parameter.
pub fn max_relative_error(m: &DenseNetModel, batch: &[Sample]) -> f64 {
    let (_, grad) = m.loss_and_gradient(batch).unwrap();
    let mut worst: f64 = 0.0;
    for (i, g) in grad.iter().enumerate() {
        let fd = central_difference(m, batch, i, 1e-5);
        worst = worst.max((g - fd).abs() / g.abs().max(fd.abs()).max(1e-6));
    }
    worst
}
