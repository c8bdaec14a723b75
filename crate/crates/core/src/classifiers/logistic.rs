//! Weighted, L2-regularized logistic regression.
//!
//! Objective over weights `w` and unpenalized intercept `b`:
//!
//! ```text
//! f(w, b) = sum_i s_i * [softplus(z_i) - y_i * z_i] + (l2 / 2) * |w|^2,   z_i = w.x_i + b
//! ```
//!
//! minimized with L-BFGS until the Euclidean gradient norm drops to the
//! tolerance or the iteration cap is hit.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{sigmoid, softplus, Dataset, LogisticParams};
use crate::textfeat::SparseVector;

/// Coefficients plus intercept; shared by logistic regression and the SVM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn margin(&self, row: &SparseVector) -> f64 {
        row.dot(&self.coefficients) + self.intercept
    }

    /// Sigmoid of the margin. For the SVM this is an uncalibrated score.
    pub fn probability(&self, row: &SparseVector) -> f64 {
        sigmoid(self.margin(row))
    }
}

pub fn objective(coefficients: &[f64], intercept: f64, data: &Dataset<'_>, l2: f64) -> f64 {
    let mut loss = 0.0;
    for ((row, &y), &s) in data.rows.iter().zip(data.labels).zip(&data.weights) {
        let z = row.dot(coefficients) + intercept;
        loss += s * (softplus(z) - if y { z } else { 0.0 });
    }
    loss + 0.5 * l2 * coefficients.iter().map(|w| w * w).sum::<f64>()
}

/// Gradient with respect to `(coefficients, intercept)`.
pub fn gradient(coefficients: &[f64], intercept: f64, data: &Dataset<'_>, l2: f64) -> (Vec<f64>, f64) {
    let mut grad: Vec<f64> = coefficients.iter().map(|w| l2 * w).collect();
    let mut grad_b = 0.0;
    for ((row, &y), &s) in data.rows.iter().zip(data.labels).zip(&data.weights) {
        let z = row.dot(coefficients) + intercept;
        let r = s * (sigmoid(z) - if y { 1.0 } else { 0.0 });
        for &(j, x) in row.entries() {
            grad[j as usize] += r * x;
        }
        grad_b += r;
    }
    (grad, grad_b)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Packs `(w, b)` as one vector with the intercept last.
fn eval(theta: &[f64], data: &Dataset<'_>, l2: f64) -> (f64, Vec<f64>) {
    let d = theta.len() - 1;
    let (w, b) = (&theta[..d], theta[d]);
    let f = objective(w, b, data, l2);
    let (mut g, gb) = gradient(w, b, data, l2);
    g.push(gb);
    (f, g)
}

const HISTORY: usize = 10;

/// Returns the fitted model and whether the tolerance was reached.
pub fn fit(data: &Dataset<'_>, params: &LogisticParams) -> (LinearModel, bool) {
    let dim = data.dimension;
    let mut theta = vec![0.0; dim + 1];
    let (mut f, mut g) = eval(&theta, data, params.l2);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(HISTORY);
    let mut converged = false;

    for _ in 0..params.max_iter {
        if dot(&g, &g).sqrt() <= params.tolerance {
            converged = true;
            break;
        }
        // Two-loop recursion for the search direction.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        } else {
            let scale = 1.0 / dot(&g, &g).sqrt().max(1.0);
            q.iter_mut().for_each(|v| *v *= scale);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let beta = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - beta) * si;
            }
        }
        let mut direction: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &direction);
        if slope >= 0.0 {
            history.clear();
            direction = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }

        // Backtracking line search on the Armijo condition. Once the
        // objective is flat to rounding, Armijo cannot rank candidates, so a
        // step is accepted only if it shrinks the gradient.
        let mut step = 1.0;
        let mut accepted = None;
        let g_norm = dot(&g, &g).sqrt();
        for _ in 0..60 {
            let candidate: Vec<f64> = theta.iter().zip(&direction).map(|(t, d)| t + step * d).collect();
            let (fc, gc) = eval(&candidate, data, params.l2);
            let flat = (fc - f).abs() <= 8.0 * f64::EPSILON * f.abs().max(1.0);
            let ok = if flat { dot(&gc, &gc).sqrt() < g_norm } else { fc <= f + 1e-4 * step * slope };
            if ok {
                accepted = Some((candidate, fc, gc));
                break;
            }
            step *= 0.5;
        }
        let Some((next, f_next, g_next)) = accepted else { break };
        let s: Vec<f64> = next.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_next.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            if history.len() == HISTORY {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        theta = next;
        f = f_next;
        g = g_next;
    }
    if !converged && dot(&g, &g).sqrt() <= params.tolerance {
        converged = true;
    }
    let intercept = theta.pop().unwrap_or(0.0);
    (LinearModel { coefficients: theta, intercept }, converged)
}
