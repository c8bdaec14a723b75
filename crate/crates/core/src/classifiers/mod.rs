//! The five class-weighted verification classifiers.
//!
//! All algorithms share one contract: rows are [`SparseVector`]s of a fixed
//! dimension, labels are `is_correct` booleans, class order is
//! `[incorrect = 0, correct = 1]`, and `predict` is the argmax of
//! `predict_scores` with ties going to `incorrect`.

pub mod boosting;
pub mod forest;
pub mod logistic;
pub mod naive_bayes;
pub mod svm;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textfeat::{SparseVector, TfidfModel};

pub use boosting::BoostedTrees;
pub use forest::RandomForest;
pub use logistic::LinearModel;
pub use naive_bayes::NaiveBayes;

pub const CLASS_ORDER: [&str; 2] = ["incorrect", "correct"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    LogisticRegression,
    RandomForest,
    LinearSvm,
    GradientBoosting,
    MultinomialNaiveBayes,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::LogisticRegression,
        Algorithm::RandomForest,
        Algorithm::LinearSvm,
        Algorithm::GradientBoosting,
        Algorithm::MultinomialNaiveBayes,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::LogisticRegression => "logistic-regression",
            Algorithm::RandomForest => "random-forest",
            Algorithm::LinearSvm => "linear-svm",
            Algorithm::GradientBoosting => "gradient-boosting",
            Algorithm::MultinomialNaiveBayes => "multinomial-naive-bayes",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Algorithm::LogisticRegression => "Logistic Regression",
            Algorithm::RandomForest => "Random Forest",
            Algorithm::LinearSvm => "Linear SVM",
            Algorithm::GradientBoosting => "Gradient Boosting",
            Algorithm::MultinomialNaiveBayes => "Naive Bayes",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub l2: f64,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams { l2: 1.0, tolerance: 1e-6, max_iter: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub l2: f64,
    pub epochs: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams { l2: 1.0, epochs: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows trees until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { n_trees: 100, max_depth: None, min_samples_split: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostingParams {
    pub n_stages: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_split: usize,
}

impl Default for BoostingParams {
    fn default() -> Self {
        BoostingParams { n_stages: 100, learning_rate: 0.1, max_depth: 3, min_samples_split: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesParams {
    pub alpha: f64,
}

impl Default for NaiveBayesParams {
    fn default() -> Self {
        NaiveBayesParams { alpha: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub seed: u64,
    #[serde(default)]
    pub logistic: LogisticParams,
    #[serde(default)]
    pub svm: SvmParams,
    #[serde(default)]
    pub forest: ForestParams,
    #[serde(default)]
    pub boosting: BoostingParams,
    #[serde(default)]
    pub naive_bayes: NaiveBayesParams,
}

impl TrainConfig {
    pub fn new(algorithm: Algorithm, seed: u64) -> Self {
        TrainConfig {
            algorithm,
            seed,
            logistic: LogisticParams::default(),
            svm: SvmParams::default(),
            forest: ForestParams::default(),
            boosting: BoostingParams::default(),
            naive_bayes: NaiveBayesParams::default(),
        }
    }

    pub fn with_algorithm(&self, algorithm: Algorithm) -> Self {
        TrainConfig { algorithm, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be a positive finite number, got {v}")))
            }
        };
        let nonzero = |name: &str, v: usize| {
            if v > 0 { Ok(()) } else { Err(Error::InvalidConfig(format!("{name} must be positive"))) }
        };
        positive("logistic.l2", self.logistic.l2)?;
        positive("logistic.tolerance", self.logistic.tolerance)?;
        nonzero("logistic.max_iter", self.logistic.max_iter)?;
        positive("svm.l2", self.svm.l2)?;
        nonzero("svm.epochs", self.svm.epochs)?;
        nonzero("forest.n_trees", self.forest.n_trees)?;
        if let Some(d) = self.forest.max_depth {
            nonzero("forest.max_depth", d)?;
        }
        if self.forest.min_samples_split < 2 {
            return Err(Error::InvalidConfig("forest.min_samples_split must be at least 2".into()));
        }
        nonzero("boosting.n_stages", self.boosting.n_stages)?;
        positive("boosting.learning_rate", self.boosting.learning_rate)?;
        nonzero("boosting.max_depth", self.boosting.max_depth)?;
        if self.boosting.min_samples_split < 2 {
            return Err(Error::InvalidConfig("boosting.min_samples_split must be at least 2".into()));
        }
        positive("naive_bayes.alpha", self.naive_bayes.alpha)
    }
}

/// Per-class sample weights, `N / (K * N_c)` over the classes present.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub incorrect: Option<f64>,
    pub correct: Option<f64>,
}

impl ClassWeights {
    pub fn uniform() -> Self {
        ClassWeights { incorrect: Some(1.0), correct: Some(1.0) }
    }

    /// Weight applied to a sample of the given class; absent classes weigh 1.
    pub fn get(&self, is_correct: bool) -> f64 {
        let w = if is_correct { self.correct } else { self.incorrect };
        w.unwrap_or(1.0)
    }

    pub fn is_single_class(&self) -> bool {
        self.incorrect.is_none() || self.correct.is_none()
    }

    pub fn sample_weights(&self, labels: &[bool]) -> Vec<f64> {
        labels.iter().map(|&y| self.get(y)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeightOutcome {
    pub weights: ClassWeights,
    pub warning: Option<String>,
}

pub fn compute_class_weights(labels: &[bool]) -> Result<ClassWeightOutcome> {
    if labels.is_empty() {
        return Err(Error::EmptyLabels);
    }
    let n = labels.len() as f64;
    let n_correct = labels.iter().filter(|&&y| y).count();
    let n_incorrect = labels.len() - n_correct;
    let k = (n_correct > 0) as usize + (n_incorrect > 0) as usize;
    let weight = |count: usize| (count > 0).then(|| n / (k as f64 * count as f64));
    let weights = ClassWeights { incorrect: weight(n_incorrect), correct: weight(n_correct) };
    let warning = (k == 1).then(|| "SingleClass: only one class present; weight 1.0 assigned".to_string());
    Ok(ClassWeightOutcome { weights, warning })
}

/// Scores in class order `[incorrect, correct]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub incorrect: f64,
    pub correct: f64,
}

impl ClassScores {
    pub fn from_correct_probability(p: f64) -> Self {
        ClassScores { incorrect: 1.0 - p, correct: p }
    }

    /// Argmax with ties resolved to `incorrect`.
    pub fn prediction(&self) -> bool {
        self.correct > self.incorrect
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelParams {
    Linear(LinearModel),
    Forest(RandomForest),
    Boosted(BoostedTrees),
    NaiveBayes(NaiveBayes),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub algorithm: Algorithm,
    pub config: TrainConfig,
    pub dimension: usize,
    pub classes: [String; 2],
    pub class_weights: ClassWeights,
    pub params: ModelParams,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Validated training rows with per-sample weights.
pub struct Dataset<'a> {
    pub rows: &'a [SparseVector],
    pub labels: &'a [bool],
    pub weights: Vec<f64>,
    pub dimension: usize,
}

impl<'a> Dataset<'a> {
    pub fn new(rows: &'a [SparseVector], labels: &'a [bool], class_weights: &ClassWeights) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::LengthMismatch { left: labels.len(), right: rows.len() });
        }
        if rows.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        let dimension = rows[0].dimension();
        check_dimension(rows, dimension)?;
        Ok(Dataset { rows, labels, weights: class_weights.sample_weights(labels), dimension })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.labels.iter().map(|&y| if y { 1.0 } else { 0.0 }).collect()
    }
}

fn check_dimension(rows: &[SparseVector], expected: usize) -> Result<()> {
    match rows.iter().find(|r| r.dimension() != expected) {
        Some(r) => Err(Error::DimensionMismatch { expected, found: r.dimension() }),
        None => Ok(()),
    }
}

pub fn train(
    features: &[SparseVector],
    labels: &[bool],
    config: &TrainConfig,
    weights: &ClassWeights,
) -> Result<TrainedModel> {
    config.validate()?;
    let data = Dataset::new(features, labels, weights)?;
    let n_correct = labels.iter().filter(|&&y| y).count();
    if data.len() < 2 || n_correct == 0 || n_correct == labels.len() {
        return Err(Error::SingleClassTraining);
    }
    let mut warnings = Vec::new();
    let params = match config.algorithm {
        Algorithm::LogisticRegression => {
            let (model, converged) = logistic::fit(&data, &config.logistic);
            if !converged {
                warnings.push(format!(
                    "NonConvergence: gradient norm above {} after {} iterations",
                    config.logistic.tolerance, config.logistic.max_iter
                ));
            }
            ModelParams::Linear(model)
        }
        Algorithm::LinearSvm => ModelParams::Linear(svm::fit(&data, &config.svm, config.seed)),
        Algorithm::RandomForest => ModelParams::Forest(forest::fit(&data, &config.forest, config.seed)),
        Algorithm::GradientBoosting => ModelParams::Boosted(boosting::fit(&data, &config.boosting)),
        Algorithm::MultinomialNaiveBayes => {
            ModelParams::NaiveBayes(naive_bayes::fit(&data, weights, &config.naive_bayes))
        }
    };
    Ok(TrainedModel {
        algorithm: config.algorithm,
        config: config.clone(),
        dimension: data.dimension,
        classes: CLASS_ORDER.map(str::to_string),
        class_weights: *weights,
        params,
        warnings,
    })
}

impl TrainedModel {
    pub fn score_row(&self, row: &SparseVector) -> ClassScores {
        match &self.params {
            ModelParams::Linear(m) => ClassScores::from_correct_probability(m.probability(row)),
            ModelParams::Forest(f) => ClassScores::from_correct_probability(f.vote_fraction(row)),
            ModelParams::Boosted(b) => ClassScores::from_correct_probability(b.probability(row)),
            ModelParams::NaiveBayes(nb) => nb.posteriors(row),
        }
    }

    fn check(&self, features: &[SparseVector]) -> Result<()> {
        check_dimension(features, self.dimension)
    }
}

pub fn predict_scores(model: &TrainedModel, features: &[SparseVector]) -> Result<Vec<ClassScores>> {
    model.check(features)?;
    Ok(features.iter().map(|r| model.score_row(r)).collect())
}

pub fn predict(model: &TrainedModel, features: &[SparseVector]) -> Result<Vec<bool>> {
    Ok(predict_scores(model, features)?.iter().map(ClassScores::prediction).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankingKind {
    /// Signed linear weights; positive favours `correct`.
    SignedCoefficient,
    /// Normalized impurity decrease; unsigned, so the negative list is empty.
    ImpurityImportance,
    /// Naive Bayes `ln P(t|correct) - ln P(t|incorrect)`.
    LogLikelihoodRatio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub kind: RankingKind,
    pub positive: Vec<(String, f64)>,
    pub negative: Vec<(String, f64)>,
}

fn rank(scores: &[f64], vocab: &TfidfModel, n: usize, kind: RankingKind, signed: bool) -> FeatureRanking {
    let term = |i: usize| vocab.term(i).unwrap_or("<unknown>").to_string();
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let positive = idx.iter().filter(|&&i| scores[i] > 0.0).take(n).map(|&i| (term(i), scores[i])).collect();
    let negative = if signed {
        idx.iter().rev().filter(|&&i| scores[i] < 0.0).take(n).map(|&i| (term(i), scores[i])).collect()
    } else {
        Vec::new()
    };
    FeatureRanking { kind, positive, negative }
}

/// Highest-magnitude features in each direction, mapped back to tokens.
/// Naive Bayes has no such weights; use [`log_likelihood_ratio_ranking`].
pub fn top_features(model: &TrainedModel, vocab: &TfidfModel, n: usize) -> Result<FeatureRanking> {
    if vocab.dimension() != model.dimension {
        return Err(Error::DimensionMismatch { expected: model.dimension, found: vocab.dimension() });
    }
    match &model.params {
        ModelParams::Linear(m) => Ok(rank(&m.coefficients, vocab, n, RankingKind::SignedCoefficient, true)),
        ModelParams::Forest(f) => Ok(rank(&f.importances, vocab, n, RankingKind::ImpurityImportance, false)),
        ModelParams::Boosted(b) => Ok(rank(&b.importances, vocab, n, RankingKind::ImpurityImportance, false)),
        ModelParams::NaiveBayes(_) => Err(Error::UnsupportedAlgorithm(model.algorithm.to_string())),
    }
}

pub fn log_likelihood_ratio_ranking(model: &TrainedModel, vocab: &TfidfModel, n: usize) -> Result<FeatureRanking> {
    match &model.params {
        ModelParams::NaiveBayes(nb) => {
            if vocab.dimension() != model.dimension {
                return Err(Error::DimensionMismatch { expected: model.dimension, found: vocab.dimension() });
            }
            Ok(rank(&nb.log_likelihood_ratios(), vocab, n, RankingKind::LogLikelihoodRatio, true))
        }
        _ => Err(Error::UnsupportedAlgorithm(model.algorithm.to_string())),
    }
}

/// Feature ranking appropriate to the model: weights or importances where
/// available, the Naive Bayes likelihood ratio otherwise.
pub fn feature_ranking(model: &TrainedModel, vocab: &TfidfModel, n: usize) -> Result<FeatureRanking> {
    match model.algorithm {
        Algorithm::MultinomialNaiveBayes => log_likelihood_ratio_ranking(model, vocab, n),
        _ => top_features(model, vocab, n),
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() }
}
