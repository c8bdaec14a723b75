//! Construct-specific verifiers with label-based routing.
//!
//! The training corpus is partitioned by predicted construct. The `k` most
//! frequent constructs each get a dedicated vectorizer and classifier fitted
//! on their own partition only; every other record, and every construct whose
//! partition is too small or single-class, is served by a generalist trained
//! on the full corpus.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::classifiers::{self, ClassScores, TrainConfig, TrainedModel};
use crate::corpus::{partition_by_construct, AnnotationRecord, ConstructLabel, Corpus};
use crate::error::{Error, Result};
use crate::par;
use crate::textfeat::{fit_tfidf_with, tokenize, StopWords, TfidfModel, DEFAULT_MAX_FEATURES};

pub const MIN_SPECIALIST_SIZE: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextConfig {
    pub max_features: usize,
    pub stopwords: StopWords,
}

impl Default for TextConfig {
    fn default() -> Self {
        TextConfig { max_features: DEFAULT_MAX_FEATURES, stopwords: StopWords::english() }
    }
}

/// A vectorizer bound to the classifier trained in its feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct Verifier {
    pub vectorizer: TfidfModel,
    pub model: TrainedModel,
    pub warnings: Vec<String>,
}

impl Verifier {
    /// Fits TF-IDF on the corpus rationales, then a balanced-weight classifier.
    pub fn fit(train: &Corpus, config: &TrainConfig, text: &TextConfig) -> Result<Verifier> {
        if train.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let docs: Vec<_> = train.rationales().map(|r| tokenize(r, &text.stopwords)).collect();
        let vectorizer = fit_tfidf_with(&docs, text.max_features, text.stopwords.clone())?;
        let features: Vec<_> = docs.iter().map(|d| vectorizer.transform(d)).collect();
        let labels = train.labels();
        let weights = classifiers::compute_class_weights(&labels)?;
        let mut warnings: Vec<String> = weights.warning.into_iter().collect();
        let model = classifiers::train(&features, &labels, config, &weights.weights)?;
        warnings.extend(model.warnings.iter().cloned());
        Ok(Verifier { vectorizer, model, warnings })
    }

    pub fn score(&self, rationale: &str) -> ClassScores {
        self.model.score_row(&self.vectorizer.transform_text(rationale))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "path", content = "construct", rename_all = "lowercase")]
pub enum ServedBy {
    Specialist(ConstructLabel),
    Generalist,
}

impl std::fmt::Display for ServedBy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ServedBy::Specialist(c) => write!(f, "specialist({c})"),
            ServedBy::Generalist => f.write_str("generalist"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutedPrediction {
    pub prediction: bool,
    pub scores: ClassScores,
    pub served_by: ServedBy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkipReason {
    TooSmall { size: usize, minimum: usize },
    SingleClass { size: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedConstruct {
    pub construct: ConstructLabel,
    pub reason: SkipReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpecialistEnsemble {
    pub specialists: BTreeMap<ConstructLabel, Verifier>,
    pub generalist: Verifier,
    pub k: usize,
    /// Training partition size per specialist construct.
    pub partition_sizes: BTreeMap<ConstructLabel, usize>,
    pub skipped: Vec<SkippedConstruct>,
}

#[derive(Debug, Clone)]
pub struct SpecialistOptions {
    pub min_size: usize,
    pub text: TextConfig,
}

impl Default for SpecialistOptions {
    fn default() -> Self {
        SpecialistOptions { min_size: MIN_SPECIALIST_SIZE, text: TextConfig::default() }
    }
}

/// The `k` largest partitions, ties broken by label name.
pub fn top_constructs(partitions: &BTreeMap<ConstructLabel, Corpus>, k: usize) -> Vec<ConstructLabel> {
    let mut ranked: Vec<(&ConstructLabel, usize)> = partitions.iter().map(|(c, p)| (c, p.len())).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.as_str().cmp(b.0.as_str())));
    ranked.into_iter().take(k).map(|(c, _)| c.clone()).collect()
}

pub fn fit_specialists(train: &Corpus, k: usize, config: &TrainConfig) -> Result<SpecialistEnsemble> {
    fit_specialists_with(train, k, config, &SpecialistOptions::default())
}

pub fn fit_specialists_with(
    train: &Corpus,
    k: usize,
    config: &TrainConfig,
    options: &SpecialistOptions,
) -> Result<SpecialistEnsemble> {
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let partitions = partition_by_construct(train);
    let chosen = top_constructs(&partitions, k);

    let mut eligible = Vec::new();
    let mut skipped = Vec::new();
    for c in chosen {
        let part = &partitions[&c];
        let counts = part.class_counts();
        if part.len() < options.min_size {
            skipped.push(SkippedConstruct {
                construct: c,
                reason: SkipReason::TooSmall { size: part.len(), minimum: options.min_size },
            });
        } else if counts.correct == 0 || counts.incorrect == 0 {
            skipped.push(SkippedConstruct { construct: c, reason: SkipReason::SingleClass { size: part.len() } });
        } else {
            eligible.push(c);
        }
    }

    // Specialists and the generalist are independent fits.
    let jobs: Vec<Option<&ConstructLabel>> = eligible.iter().map(Some).chain(std::iter::once(None)).collect();
    let mut fitted = par::map_slice(&jobs, |job| match job {
        Some(c) => Verifier::fit(&partitions[*c], config, &options.text),
        None => Verifier::fit(train, config, &options.text),
    });
    let generalist = fitted.pop().expect("generalist job")?;
    let mut specialists = BTreeMap::new();
    let mut partition_sizes = BTreeMap::new();
    for (c, v) in eligible.into_iter().zip(fitted) {
        partition_sizes.insert(c.clone(), partitions[&c].len());
        specialists.insert(c, v?);
    }
    Ok(SpecialistEnsemble { specialists, generalist, k, partition_sizes, skipped })
}

impl SpecialistEnsemble {
    pub fn generalist_only(generalist: Verifier) -> Self {
        SpecialistEnsemble {
            specialists: BTreeMap::new(),
            generalist,
            k: 0,
            partition_sizes: BTreeMap::new(),
            skipped: Vec::new(),
        }
    }

    pub fn route(&self, construct: &ConstructLabel) -> (&Verifier, ServedBy) {
        match self.specialists.get(construct) {
            Some(v) => (v, ServedBy::Specialist(construct.clone())),
            None => (&self.generalist, ServedBy::Generalist),
        }
    }

    pub fn warnings(&self) -> Vec<String> {
        self.skipped
            .iter()
            .map(|s| match &s.reason {
                SkipReason::TooSmall { size, minimum } => {
                    format!("{}: partition of {size} records is below the minimum {minimum}; served by the generalist", s.construct)
                }
                SkipReason::SingleClass { size } => {
                    format!("{}: partition of {size} records has a single class; served by the generalist", s.construct)
                }
            })
            .collect()
    }
}

pub fn route_predict(ensemble: &SpecialistEnsemble, record: &AnnotationRecord) -> RoutedPrediction {
    route_text(ensemble, &record.predicted_construct, &record.rationale)
}

pub fn route_text(ensemble: &SpecialistEnsemble, construct: &ConstructLabel, rationale: &str) -> RoutedPrediction {
    let (verifier, served_by) = ensemble.route(construct);
    let scores = verifier.score(rationale);
    RoutedPrediction { prediction: scores.prediction(), scores, served_by }
}
