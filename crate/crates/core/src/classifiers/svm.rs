//! Linear SVM trained by deterministic stochastic subgradient descent on the
//! weighted, L2-regularized hinge loss
//!
//! ```text
//! J(w, b) = (l2 / 2) * (|w|^2 + b^2) + sum_i s_i * max(0, 1 - t_i * (w.x_i + b)),   t_i = +-1
//! ```
//!
//! Dividing by `n` gives the averaged form with `lambda = l2 / n`, which is
//! stepped with `eta_t = 1 / (lambda * t)`. The bias is an extra constant
//! feature, so it is regularized with the weights.
//!
//! Each epoch visits rows in an order keyed by `(seed, epoch, row content)`:
//! the schedule is fixed for a given seed and does not depend on the order in
//! which rows were supplied.

use super::{Dataset, LinearModel, SvmParams};
use crate::rng::splitmix64;

pub fn objective(model: &LinearModel, data: &Dataset<'_>, l2: f64) -> f64 {
    let reg = 0.5 * l2 * (model.coefficients.iter().map(|w| w * w).sum::<f64>() + model.intercept * model.intercept);
    let loss: f64 = data
        .rows
        .iter()
        .zip(data.labels)
        .zip(&data.weights)
        .map(|((row, &y), &s)| {
            let t = if y { 1.0 } else { -1.0 };
            s * (1.0 - t * model.margin(row)).max(0.0)
        })
        .sum();
    reg + loss
}

fn row_key(data: &Dataset<'_>, i: usize) -> u64 {
    let mut h = splitmix64(data.labels[i] as u64 ^ data.weights[i].to_bits());
    for &(j, x) in data.rows[i].entries() {
        h = splitmix64(h ^ j as u64);
        h = splitmix64(h ^ x.to_bits());
    }
    h
}

#[derive(Debug, Clone)]
struct Scaled {
    scale: f64,
    v: Vec<f64>,
}

pub fn fit(data: &Dataset<'_>, params: &SvmParams, seed: u64) -> LinearModel {
    let n = data.len();
    let dim = data.dimension;
    let lambda = params.l2 / n as f64;
    let keys: Vec<u64> = (0..n).map(|i| row_key(data, i)).collect();

    // w = scale * v, with v[dim] the bias weight.
    let mut w = Scaled { scale: 1.0, v: vec![0.0; dim + 1] };
    let mut t: u64 = 0;
    for epoch in 0..params.epochs {
        let epoch_key = splitmix64(seed ^ splitmix64(epoch as u64 + 1));
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| (splitmix64(keys[i] ^ epoch_key), keys[i]));
        for i in order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let row = &data.rows[i];
            let target = if data.labels[i] { 1.0 } else { -1.0 };
            let margin = w.scale * (row.dot(&w.v[..dim]) + w.v[dim]);
            let shrink = 1.0 - eta * lambda;
            if shrink <= 0.0 {
                w.v.iter_mut().for_each(|x| *x = 0.0);
                w.scale = 1.0;
            } else {
                w.scale *= shrink;
            }
            if target * margin < 1.0 {
                let step = eta * data.weights[i] * target / w.scale;
                for &(j, x) in row.entries() {
                    w.v[j as usize] += step * x;
                }
                w.v[dim] += step;
            }
            if w.scale < 1e-100 {
                let s = w.scale;
                w.v.iter_mut().for_each(|x| *x *= s);
                w.scale = 1.0;
            }
        }
    }
    let mut coefficients: Vec<f64> = w.v.iter().map(|x| x * w.scale).collect();
    let intercept = coefficients.pop().unwrap_or(0.0);
    LinearModel { coefficients, intercept }
}
