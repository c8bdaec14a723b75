//! Bagged forest of Gini trees with square-root feature subsampling.
//!
//! Tree `t` draws its bootstrap from stream `(seed, Bootstrap, t)` and its
//! per-node feature subsets from `(seed, FeatureSubset, t)`, so the fitted
//! forest is the same for any number of worker threads. Each training row
//! carries weight `multiplicity * class_weight`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tree::{self, Tree, TreeInput, TreeParams};
use super::{Dataset, ForestParams};
use crate::par;
use crate::rng::{self, Purpose};
use crate::textfeat::SparseVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<Tree>,
    /// Mean of per-tree normalized impurity decreases.
    pub importances: Vec<f64>,
}

impl RandomForest {
    /// Fraction of trees voting `correct`. A tree whose leaf sits exactly at
    /// 0.5 votes `incorrect`.
    pub fn vote_fraction(&self, row: &SparseVector) -> f64 {
        let votes = self.trees.iter().filter(|t| t.predict(row) > 0.5).count();
        votes as f64 / self.trees.len() as f64
    }
}

pub fn max_features_for(dimension: usize) -> usize {
    ((dimension as f64).sqrt().floor() as usize).max(1)
}

pub fn fit(data: &Dataset<'_>, params: &ForestParams, seed: u64) -> RandomForest {
    let n = data.len();
    let targets = data.targets();
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_split: params.min_samples_split,
        max_features: Some(max_features_for(data.dimension)),
    };
    let fitted: Vec<(Tree, Vec<f64>)> = par::map_range(params.n_trees, |t| {
        let mut boot = rng::stream(seed, Purpose::Bootstrap, t as u64);
        let mut counts = vec![0u32; n];
        for _ in 0..n {
            counts[boot.random_range(0..n)] += 1;
        }
        let weights: Vec<f64> = counts.iter().zip(&data.weights).map(|(&c, &w)| c as f64 * w).collect();
        let input = TreeInput { rows: data.rows, targets: &targets, weights: &weights, dimension: data.dimension };
        let mut features = rng::stream(seed, Purpose::FeatureSubset, t as u64);
        let mut importances = vec![0.0; data.dimension];
        let tree = tree::grow(&input, &tree_params, &mut features, &mut importances, |members| {
            let (mut w, mut s) = (0.0, 0.0);
            for &i in members {
                w += weights[i as usize];
                s += weights[i as usize] * targets[i as usize];
            }
            s / w
        });
        let total: f64 = importances.iter().sum();
        if total > 0.0 {
            importances.iter_mut().for_each(|v| *v /= total);
        }
        (tree, importances)
    });
    let mut importances = vec![0.0; data.dimension];
    for (_, imp) in &fitted {
        for (acc, v) in importances.iter_mut().zip(imp) {
            *acc += v;
        }
    }
    let k = fitted.len() as f64;
    importances.iter_mut().for_each(|v| *v /= k);
    RandomForest { trees: fitted.into_iter().map(|(t, _)| t).collect(), importances }
}
