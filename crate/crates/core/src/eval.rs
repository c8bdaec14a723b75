//! Confusion matrices, precision/recall/F1, bootstrap intervals and sliced
//! reports.
//!
//! The positive class for headline metrics is `is_correct = true`. Metrics for
//! the incorrect class and macro averages are always reported alongside.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotationRecord, Corpus};
use crate::error::{Error, Result};
use crate::par;
use crate::rng::{self, Purpose};
use crate::router::{route_predict, ServedBy, SpecialistEnsemble, Verifier};
use crate::stats;

pub const DEFAULT_N_BOOT: usize = 1000;
pub const MIN_BOOTSTRAP: usize = 100;
pub const MIN_BOOTSTRAP_SAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn n(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn record(&mut self, truth: bool, pred: bool) {
        match (truth, pred) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fn_ += 1,
        }
    }

    /// The same counts with the incorrect class taken as positive.
    pub fn flipped(&self) -> Self {
        ConfusionMatrix { tp: self.tn, fp: self.fn_, tn: self.tp, fn_: self.fp }
    }
}

impl std::ops::Add for ConfusionMatrix {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        ConfusionMatrix { tp: self.tp + o.tp, fp: self.fp + o.fp, tn: self.tn + o.tn, fn_: self.fn_ + o.fn_ }
    }
}

pub fn confusion(y_true: &[bool], y_pred: &[bool]) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch { left: y_true.len(), right: y_pred.len() });
    }
    if y_true.is_empty() {
        return Err(Error::EmptyLabels);
    }
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        cm.record(t, p);
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Number of records whose true label is this class.
    pub support: usize,
    /// Set when `tp + fp = 0`; precision is then reported as 0.
    pub precision_undefined: bool,
    /// Set when `tp + fn = 0`; recall is then reported as 0.
    pub recall_undefined: bool,
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 { (0.0, true) } else { (num as f64 / den as f64, false) }
}

pub fn f1_from(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) }
}

impl ClassMetrics {
    fn positive(cm: &ConfusionMatrix) -> Self {
        let (precision, precision_undefined) = ratio(cm.tp, cm.tp + cm.fp);
        let (recall, recall_undefined) = ratio(cm.tp, cm.tp + cm.fn_);
        ClassMetrics {
            precision,
            recall,
            f1: f1_from(precision, recall),
            support: cm.tp + cm.fn_,
            precision_undefined,
            recall_undefined,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// Headline metrics, positive class `correct`.
    pub correct: ClassMetrics,
    pub incorrect: ClassMetrics,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

impl Metrics {
    pub fn precision(&self) -> f64 {
        self.correct.precision
    }
    pub fn recall(&self) -> f64 {
        self.correct.recall
    }
    pub fn f1(&self) -> f64 {
        self.correct.f1
    }
}

pub fn metrics(cm: &ConfusionMatrix) -> Metrics {
    let correct = ClassMetrics::positive(cm);
    let incorrect = ClassMetrics::positive(&cm.flipped());
    let (accuracy, _) = ratio(cm.tp + cm.tn, cm.n());
    Metrics {
        accuracy,
        correct,
        incorrect,
        macro_precision: (correct.precision + incorrect.precision) / 2.0,
        macro_recall: (correct.recall + incorrect.recall) / 2.0,
        macro_f1: (correct.f1 + incorrect.f1) / 2.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
    pub level: f64,
}

impl Interval {
    pub fn half_width(&self) -> f64 {
        (self.high - self.low) / 2.0
    }
}

/// Percentile bootstrap (95%) of the positive-class F1 over paired
/// resampling of `(truth, prediction)` rows. Replicate `b` draws from stream
/// `(seed, MetricBootstrap, b)`.
pub fn bootstrap_f1_ci(y_true: &[bool], y_pred: &[bool], n_boot: usize, seed: u64) -> Result<Interval> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch { left: y_true.len(), right: y_pred.len() });
    }
    let n = y_true.len();
    if n < MIN_BOOTSTRAP_SAMPLES {
        return Err(Error::TooFewSamples { n, min: MIN_BOOTSTRAP_SAMPLES });
    }
    if n_boot < MIN_BOOTSTRAP {
        return Err(Error::InvalidConfig(format!("n_boot must be at least {MIN_BOOTSTRAP}, got {n_boot}")));
    }
    let mut f1s = par::map_range(n_boot, |b| {
        let mut rng = rng::stream(seed, Purpose::MetricBootstrap, b as u64);
        let mut cm = ConfusionMatrix::default();
        for _ in 0..n {
            let i = rng.random_range(0..n);
            cm.record(y_true[i], y_pred[i]);
        }
        metrics(&cm).f1()
    });
    f1s.sort_by(f64::total_cmp);
    let (low, high) = stats::percentile_interval(&f1s, 0.95);
    Ok(Interval { low, high, level: 0.95 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceDimension {
    Algorithm,
    SourceModel,
    Construct,
    ServedBy,
}

impl SliceDimension {
    pub const ALL: [SliceDimension; 4] =
        [SliceDimension::Algorithm, SliceDimension::SourceModel, SliceDimension::Construct, SliceDimension::ServedBy];

    pub fn as_str(self) -> &'static str {
        match self {
            SliceDimension::Algorithm => "algorithm",
            SliceDimension::SourceModel => "source_model",
            SliceDimension::Construct => "construct",
            SliceDimension::ServedBy => "served_by",
        }
    }
}

impl FromStr for SliceDimension {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SliceDimension::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| Error::UnknownSlice(s.to_string()))
    }
}

/// A model's decision on one test record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub record_id: String,
    pub algorithm: String,
    pub source_model: String,
    pub construct: String,
    pub served_by: String,
    pub truth: bool,
    pub prediction: bool,
    /// Probability-like score for the `correct` class.
    pub score: f64,
}

impl PredictionRow {
    fn key(&self, dim: SliceDimension) -> &str {
        match dim {
            SliceDimension::Algorithm => &self.algorithm,
            SliceDimension::SourceModel => &self.source_model,
            SliceDimension::Construct => &self.construct,
            SliceDimension::ServedBy => &self.served_by,
        }
    }
}

/// Either a single verifier or a routed ensemble.
#[derive(Debug, Clone, Copy)]
pub enum Predictor<'a> {
    Single(&'a Verifier),
    Routed(&'a SpecialistEnsemble),
}

impl Predictor<'_> {
    pub fn algorithm(&self) -> &'static str {
        match self {
            Predictor::Single(v) => v.model.algorithm.as_str(),
            Predictor::Routed(e) => e.generalist.model.algorithm.as_str(),
        }
    }

    pub fn predict(&self, record: &AnnotationRecord) -> (bool, f64, ServedBy) {
        match self {
            Predictor::Single(v) => {
                let s = v.score(&record.rationale);
                (s.prediction(), s.correct, ServedBy::Generalist)
            }
            Predictor::Routed(e) => {
                let r = route_predict(e, record);
                (r.prediction, r.scores.correct, r.served_by)
            }
        }
    }
}

/// Predictions for every test record, in corpus order.
pub fn predict_corpus(test: &Corpus, predictor: Predictor<'_>) -> Result<Vec<PredictionRow>> {
    if test.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let algorithm = predictor.algorithm();
    Ok(par::map_slice(&test.records, |r| {
        let (prediction, score, served_by) = predictor.predict(r);
        PredictionRow {
            record_id: r.record_id.clone(),
            algorithm: algorithm.to_string(),
            source_model: r.source_model.clone(),
            construct: r.predicted_construct.to_string(),
            served_by: served_by.to_string(),
            truth: r.is_correct,
            prediction,
            score,
        }
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceKey {
    /// `"all"` for the unsliced report.
    pub dimension: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub slice: SliceKey,
    pub n: usize,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
    /// 95% bootstrap interval of the headline F1; absent below ten records.
    pub f1_ci: Option<Interval>,
    pub f1_ci_half_width: Option<f64>,
}

pub fn report_for(rows: &[&PredictionRow], slice: SliceKey, n_boot: usize, seed: u64) -> Result<EvaluationReport> {
    let truth: Vec<bool> = rows.iter().map(|r| r.truth).collect();
    let pred: Vec<bool> = rows.iter().map(|r| r.prediction).collect();
    let cm = confusion(&truth, &pred)?;
    let f1_ci = if rows.len() >= MIN_BOOTSTRAP_SAMPLES { Some(bootstrap_f1_ci(&truth, &pred, n_boot, seed)?) } else { None };
    Ok(EvaluationReport {
        slice,
        n: rows.len(),
        confusion: cm,
        metrics: metrics(&cm),
        f1_ci,
        f1_ci_half_width: f1_ci.map(|c| c.half_width()),
    })
}

/// The unsliced report followed by one report per value of each requested
/// dimension, values in lexicographic order.
pub fn reports_from_rows(
    rows: &[PredictionRow],
    slices: &[SliceDimension],
    n_boot: usize,
    seed: u64,
) -> Result<Vec<EvaluationReport>> {
    let all: Vec<&PredictionRow> = rows.iter().collect();
    let mut out = vec![report_for(&all, SliceKey { dimension: "all".into(), value: "all".into() }, n_boot, seed)?];
    for &dim in slices {
        let mut groups: BTreeMap<&str, Vec<&PredictionRow>> = BTreeMap::new();
        for r in rows {
            groups.entry(r.key(dim)).or_default().push(r);
        }
        for (value, members) in groups {
            let key = SliceKey { dimension: dim.as_str().into(), value: value.into() };
            out.push(report_for(&members, key, n_boot, seed)?);
        }
    }
    Ok(out)
}

pub fn evaluate_sliced(
    test: &Corpus,
    predictor: Predictor<'_>,
    slices: &[SliceDimension],
    n_boot: usize,
    seed: u64,
) -> Result<Vec<EvaluationReport>> {
    let rows = predict_corpus(test, predictor)?;
    reports_from_rows(&rows, slices, n_boot, seed)
}

/// Generalist and routed F1 on the test records of one construct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructComparison {
    pub construct: String,
    pub n: usize,
    pub has_specialist: bool,
    pub generalist_f1: f64,
    pub specialist_f1: f64,
    /// `specialist_f1 - generalist_f1`.
    pub delta: f64,
    pub generalist_accuracy: f64,
    pub specialist_accuracy: f64,
}

/// Pairs generalist-only and routed predictions per construct over the test
/// split. For constructs without a specialist both columns come from the
/// generalist.
pub fn compare_generalist_specialist(test: &Corpus, ensemble: &SpecialistEnsemble) -> Result<Vec<ConstructComparison>> {
    let routed = predict_corpus(test, Predictor::Routed(ensemble))?;
    let general = predict_corpus(test, Predictor::Single(&ensemble.generalist))?;
    let mut groups: BTreeMap<&str, (ConfusionMatrix, ConfusionMatrix, usize, bool)> = BTreeMap::new();
    for (r, g) in routed.iter().zip(&general) {
        let e = groups.entry(r.construct.as_str()).or_default();
        e.0.record(r.truth, r.prediction);
        e.1.record(g.truth, g.prediction);
        e.2 += 1;
        e.3 |= r.served_by != "generalist";
    }
    Ok(groups
        .into_iter()
        .map(|(construct, (spec, gen, n, has_specialist))| {
            let (s, g) = (metrics(&spec), metrics(&gen));
            ConstructComparison {
                construct: construct.to_string(),
                n,
                has_specialist,
                generalist_f1: g.f1(),
                specialist_f1: s.f1(),
                delta: s.f1() - g.f1(),
                generalist_accuracy: g.accuracy,
                specialist_accuracy: s.accuracy,
            }
        })
        .collect())
}

/// One benchmark row in the classic precision / recall / F1 / accuracy
/// layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub model: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub f1_half_width: Option<f64>,
    pub accuracy: f64,
}

impl BenchmarkRow {
    pub fn from_report(model: &str, report: &EvaluationReport) -> Self {
        BenchmarkRow {
            model: model.to_string(),
            precision: report.metrics.precision(),
            recall: report.metrics.recall(),
            f1: report.metrics.f1(),
            f1_half_width: report.f1_ci_half_width,
            accuracy: report.metrics.accuracy,
        }
    }
}

pub fn benchmark_markdown(rows: &[BenchmarkRow], n: usize) -> String {
    let mut s = format!("Evaluation on the held-out test set (N={n})\n\n");
    s.push_str("| Model | Precision | Recall | F1 | Accuracy |\n");
    s.push_str("|---|---:|---:|---:|---:|\n");
    for r in rows {
        let f1 = match r.f1_half_width {
            Some(h) => format!("{:.3} (± {:.3})", r.f1, h),
            None => format!("{:.3}", r.f1),
        };
        let _ = writeln!(s, "| {} | {:.3} | {:.3} | {} | {:.3} |", r.model, r.precision, r.recall, f1, r.accuracy);
    }
    s
}

/// Reports of one model (or routed ensemble) over a test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEvaluation {
    pub model: String,
    pub reports: Vec<EvaluationReport>,
}

pub fn reports_csv(evaluations: &[ModelEvaluation]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "model", "dimension", "value", "n", "tp", "fp", "tn", "fn", "accuracy", "precision", "recall", "f1", "f1_ci_low",
        "f1_ci_high", "incorrect_precision", "incorrect_recall", "incorrect_f1", "macro_f1",
    ])?;
    for r in evaluations.iter().flat_map(|e| e.reports.iter().map(move |r| (e.model.as_str(), r))) {
        let (model, r) = r;
        let m = &r.metrics;
        let ci = |f: fn(&Interval) -> f64| r.f1_ci.as_ref().map(|c| f(c).to_string()).unwrap_or_default();
        w.write_record([
            model.to_string(),
            r.slice.dimension.clone(),
            r.slice.value.clone(),
            r.n.to_string(),
            r.confusion.tp.to_string(),
            r.confusion.fp.to_string(),
            r.confusion.tn.to_string(),
            r.confusion.fn_.to_string(),
            m.accuracy.to_string(),
            m.correct.precision.to_string(),
            m.correct.recall.to_string(),
            m.correct.f1.to_string(),
            ci(|c| c.low),
            ci(|c| c.high),
            m.incorrect.precision.to_string(),
            m.incorrect.recall.to_string(),
            m.incorrect.f1.to_string(),
            m.macro_f1.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Published Random Forest operating point used as a compatibility target.
pub const REFERENCE_FOREST_F1: f64 = 0.830;
pub const REFERENCE_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionCheck {
    pub model: String,
    pub reference_f1: f64,
    pub observed_f1: f64,
    pub tolerance: f64,
    pub deviation: f64,
    pub flagged: bool,
}

/// Compares the Random Forest row against the reference F1. This is a
/// compatibility check for corpora with matching marginals, not a promise of
/// reproduction.
pub fn reference_regression_check(rows: &[BenchmarkRow]) -> Option<RegressionCheck> {
    let rf = rows.iter().find(|r| r.model == crate::Algorithm::RandomForest.display_name())?;
    let deviation = (rf.f1 - REFERENCE_FOREST_F1).abs();
    Some(RegressionCheck {
        model: rf.model.clone(),
        reference_f1: REFERENCE_FOREST_F1,
        observed_f1: rf.f1,
        tolerance: REFERENCE_TOLERANCE,
        deviation,
        flagged: deviation > REFERENCE_TOLERANCE,
    })
}
