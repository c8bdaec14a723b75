//! Stagewise gradient boosting on the weighted logistic loss.
//!
//! Raw score `F(x) = base + learning_rate * sum_m tree_m(x)`. Each stage fits
//! a depth-limited regression tree to the residuals `y - p` (sample weights
//! `s` folded in), then replaces every leaf with the Newton step
//! `sum s (y - p) / sum s p (1 - p)` over the rows that reach it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{self, Tree, TreeInput, TreeParams};
use super::{sigmoid, softplus, BoostingParams, Dataset};
use crate::textfeat::SparseVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedTrees {
    pub base_score: f64,
    pub learning_rate: f64,
    pub stages: Vec<Tree>,
    pub importances: Vec<f64>,
}

impl BoostedTrees {
    pub fn raw_score(&self, row: &SparseVector) -> f64 {
        self.base_score + self.learning_rate * self.stages.iter().map(|t| t.predict(row)).sum::<f64>()
    }

    pub fn probability(&self, row: &SparseVector) -> f64 {
        sigmoid(self.raw_score(row))
    }
}

/// `sum_i s_i * [softplus(F_i) - y_i * F_i]`
pub fn loss(raw: &[f64], targets: &[f64], weights: &[f64]) -> f64 {
    raw.iter().zip(targets).zip(weights).map(|((&f, &y), &s)| s * (softplus(f) - y * f)).sum()
}

/// Gradient of [`loss`] with respect to each raw score: `s_i * (p_i - y_i)`.
pub fn loss_gradient(raw: &[f64], targets: &[f64], weights: &[f64]) -> Vec<f64> {
    raw.iter().zip(targets).zip(weights).map(|((&f, &y), &s)| s * (sigmoid(f) - y)).collect()
}

/// Diagonal Hessian of [`loss`]: `s_i * p_i * (1 - p_i)`.
pub fn loss_hessian(raw: &[f64], weights: &[f64]) -> Vec<f64> {
    raw.iter().zip(weights).map(|(&f, &s)| {
        let p = sigmoid(f);
        s * p * (1.0 - p)
    }).collect()
}

pub fn fit(data: &Dataset<'_>, params: &BoostingParams) -> BoostedTrees {
    let n = data.len();
    let targets = data.targets();
    let weights = &data.weights;
    let pos: f64 = targets.iter().zip(weights).map(|(y, s)| y * s).sum();
    let neg: f64 = weights.iter().sum::<f64>() - pos;
    let base_score = (pos / neg).ln();
    let tree_params = TreeParams { max_depth: Some(params.max_depth), min_samples_split: params.min_samples_split, max_features: None };
    // No feature subsampling, so this stream is never drawn from.
    let mut unused = ChaCha8Rng::seed_from_u64(0);

    let mut raw = vec![base_score; n];
    let mut importances = vec![0.0; data.dimension];
    let mut stages = Vec::with_capacity(params.n_stages);
    for _ in 0..params.n_stages {
        let grad = loss_gradient(&raw, &targets, weights);
        let hess = loss_hessian(&raw, weights);
        let residual: Vec<f64> = targets.iter().zip(&raw).map(|(y, &f)| y - sigmoid(f)).collect();
        let input = TreeInput { rows: data.rows, targets: &residual, weights, dimension: data.dimension };
        let tree = tree::grow(&input, &tree_params, &mut unused, &mut importances, |members| {
            let (mut num, mut den) = (0.0, 0.0);
            for &i in members {
                num -= grad[i as usize];
                den += hess[i as usize];
            }
            if den.abs() < 1e-150 { 0.0 } else { num / den }
        });
        for (f, row) in raw.iter_mut().zip(data.rows) {
            *f += params.learning_rate * tree.predict(row);
        }
        stages.push(tree);
    }
    let total: f64 = importances.iter().sum();
    if total > 0.0 {
        importances.iter_mut().for_each(|v| *v /= total);
    }
    BoostedTrees { base_score, learning_rate: params.learning_rate, stages, importances }
}
