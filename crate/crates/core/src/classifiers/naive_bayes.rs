//! Multinomial Naive Bayes with Laplace (additive) smoothing.
//!
//! Likelihoods are `(N_cj + alpha) / (N_c + alpha * V)` over the (possibly
//! fractional) feature mass of each class. The standard formulation has no
//! per-sample weight, so class weighting shifts each class log-prior by
//! `ln(weight(c))`; the likelihoods are left untouched.

use serde::{Deserialize, Serialize};

use super::{ClassScores, ClassWeights, Dataset, NaiveBayesParams};
use crate::textfeat::SparseVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayes {
    /// `[incorrect, correct]`, prior shift included.
    pub class_log_prior: [f64; 2],
    pub feature_log_prob: [Vec<f64>; 2],
}

pub fn fit(data: &Dataset<'_>, weights: &ClassWeights, params: &NaiveBayesParams) -> NaiveBayes {
    let dim = data.dimension;
    let mut mass = [vec![0.0; dim], vec![0.0; dim]];
    let mut class_count = [0usize; 2];
    for (row, &y) in data.rows.iter().zip(data.labels) {
        let c = y as usize;
        class_count[c] += 1;
        for &(j, x) in row.entries() {
            mass[c][j as usize] += x;
        }
    }
    let n = data.len() as f64;
    let class_log_prior = [0, 1].map(|c| (class_count[c] as f64 / n).ln() + weights.get(c == 1).ln());
    let feature_log_prob = mass.map(|m| {
        let total: f64 = m.iter().sum::<f64>() + params.alpha * dim as f64;
        m.iter().map(|&x| ((x + params.alpha) / total).ln()).collect()
    });
    NaiveBayes { class_log_prior, feature_log_prob }
}

impl NaiveBayes {
    pub fn joint_log_likelihood(&self, row: &SparseVector) -> [f64; 2] {
        [0, 1].map(|c| self.class_log_prior[c] + row.dot(&self.feature_log_prob[c]))
    }

    pub fn posteriors(&self, row: &SparseVector) -> ClassScores {
        let [a, b] = self.joint_log_likelihood(row);
        let m = a.max(b);
        let (ea, eb) = ((a - m).exp(), (b - m).exp());
        let z = ea + eb;
        ClassScores { incorrect: ea / z, correct: eb / z }
    }

    pub fn log_likelihood_ratios(&self) -> Vec<f64> {
        self.feature_log_prob[1].iter().zip(&self.feature_log_prob[0]).map(|(p1, p0)| p1 - p0).collect()
    }
}
