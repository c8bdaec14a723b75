//! File-level commands: split, train, eval, linguistics, triage.
//!
//! Each command writes its outputs plus `run_config.json`, a fully resolved
//! echo of the options it ran with. Reports contain no timestamps, so a
//! rerun with the same inputs and seeds produces identical bytes.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::artifact::{self, write_bytes, write_json, Artifacts};
use crate::classifiers::{Algorithm, TrainConfig};
use crate::corpus::{load_corpus, stratified_split, ClassCounts, ConstructLabel, Corpus, CorpusFormat, IngestSummary};
use crate::error::{Error, Result};
use crate::eval::{
    self, benchmark_markdown, BenchmarkRow, ConstructComparison, ModelEvaluation, Predictor, RegressionCheck,
    SliceDimension,
};
use crate::linguistics::{self, GroupComparison, Lexicon, LengthReport};
use crate::par;
use crate::router::{fit_specialists_with, route_text, SpecialistEnsemble, SpecialistOptions, TextConfig, Verifier};
use crate::textfeat::DEFAULT_MAX_FEATURES;

pub const RUN_CONFIG_FILE: &str = "run_config.json";
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_TEST_FRACTION: f64 = 0.2;
pub const DEFAULT_TAU: f64 = 0.5;

/// Resolved options of one command, written beside its outputs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub version: String,
    pub parallel: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<CorpusFormat>,
    pub output_dir: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub algorithms: Option<Vec<Algorithm>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_features: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub specialists: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_specialist_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_dir: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_boot: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slices: Option<Vec<SliceDimension>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

impl RunConfig {
    fn new(command: &str, output_dir: &Path) -> Self {
        RunConfig {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            parallel: par::is_parallel(),
            output_dir: display(output_dir),
            ..Default::default()
        }
    }

    fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(RUN_CONFIG_FILE), self)
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn resolve_format(input: &Path, format: Option<CorpusFormat>) -> CorpusFormat {
    format.unwrap_or_else(|| CorpusFormat::from_path(input))
}

#[derive(Debug, Clone)]
pub struct SplitOptions {
    pub input: PathBuf,
    pub format: Option<CorpusFormat>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub test_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub ingest: IngestSummary,
    pub seed: u64,
    pub test_fraction: f64,
    pub train: ClassCounts,
    pub test: ClassCounts,
    pub train_file: String,
    pub test_file: String,
}

pub fn run_split(opts: &SplitOptions) -> Result<SplitSummary> {
    let format = resolve_format(&opts.input, opts.format);
    let (corpus, ingest) = load_corpus(&opts.input, format)?;
    let (train, test) = stratified_split(&corpus, opts.test_fraction, opts.seed)?;
    let dir = &opts.output_dir;
    train.save_jsonl(&dir_file(dir, "train.jsonl")?)?;
    test.save_jsonl(&dir.join("test.jsonl"))?;
    let summary = SplitSummary {
        ingest,
        seed: opts.seed,
        test_fraction: opts.test_fraction,
        train: train.class_counts(),
        test: test.class_counts(),
        train_file: "train.jsonl".into(),
        test_file: "test.jsonl".into(),
    };
    write_json(&dir.join("split_summary.json"), &summary)?;
    RunConfig {
        input: Some(display(&opts.input)),
        format: Some(format),
        seed: Some(opts.seed),
        test_fraction: Some(opts.test_fraction),
        ..RunConfig::new("split", dir)
    }
    .write(dir)?;
    Ok(summary)
}

/// Creates `dir` and returns `dir/name`.
fn dir_file(dir: &Path, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(dir.join(name))
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub input: PathBuf,
    pub format: Option<CorpusFormat>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub all: bool,
    /// Fit an ensemble with this many construct specialists.
    pub specialists: Option<usize>,
    pub trees: Option<usize>,
    pub max_features: usize,
    pub min_specialist_size: usize,
}

impl TrainOptions {
    pub fn new(input: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        TrainOptions {
            input: input.into(),
            format: None,
            output_dir: output_dir.into(),
            seed: DEFAULT_SEED,
            algorithm: Algorithm::RandomForest,
            all: false,
            specialists: None,
            trees: None,
            max_features: DEFAULT_MAX_FEATURES,
            min_specialist_size: crate::router::MIN_SPECIALIST_SIZE,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let mut config = TrainConfig::new(self.algorithm, self.seed);
        if let Some(t) = self.trees {
            config.forest.n_trees = t;
        }
        config
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedEntry {
    pub algorithm: Algorithm,
    pub role: artifact::Role,
    pub construct: Option<ConstructLabel>,
    pub file: String,
    pub payload_digest: String,
    pub vocabulary_size: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub train_size: usize,
    pub class_counts: ClassCounts,
    pub models: Vec<TrainedEntry>,
    pub warnings: Vec<String>,
}

pub fn run_train(opts: &TrainOptions) -> Result<TrainSummary> {
    if opts.all && opts.specialists.is_some() {
        return Err(Error::InvalidConfig("--all and --specialists cannot be combined".into()));
    }
    let format = resolve_format(&opts.input, opts.format);
    let (corpus, _) = load_corpus(&opts.input, format)?;
    if corpus.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let counts = corpus.class_counts();
    if counts.correct == 0 || counts.incorrect == 0 {
        return Err(Error::SingleClassTraining);
    }
    let base = opts.train_config();
    base.validate()?;
    let text = TextConfig { max_features: opts.max_features, ..TextConfig::default() };
    let algorithms: Vec<Algorithm> = if opts.all { Algorithm::ALL.to_vec() } else { vec![opts.algorithm] };
    let dir = &opts.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let (manifest, verifiers, warnings): (artifact::Manifest, Vec<(Option<ConstructLabel>, &Verifier)>, Vec<String>);
    let fitted_models;
    let ensemble;
    match opts.specialists {
        Some(k) => {
            let options = SpecialistOptions { min_size: opts.min_specialist_size, text: text.clone() };
            ensemble = fit_specialists_with(&corpus, k, &base, &options)?;
            manifest = artifact::save_ensemble(dir, &ensemble)?;
            verifiers = std::iter::once((None, &ensemble.generalist))
                .chain(ensemble.specialists.iter().map(|(c, v)| (Some(c.clone()), v)))
                .collect();
            warnings = ensemble.warnings();
        }
        None => {
            let configs: Vec<TrainConfig> = algorithms.iter().map(|&a| base.with_algorithm(a)).collect();
            fitted_models =
                par::map_slice(&configs, |c| Verifier::fit(&corpus, c, &text)).into_iter().collect::<Result<Vec<_>>>()?;
            manifest = artifact::save_model_set(dir, &fitted_models)?;
            verifiers = fitted_models.iter().map(|v| (None, v)).collect();
            warnings = Vec::new();
        }
    }
    let models = manifest
        .entries
        .iter()
        .zip(&verifiers)
        .map(|(e, (construct, v))| TrainedEntry {
            algorithm: v.model.algorithm,
            role: e.role,
            construct: construct.clone(),
            file: e.file.clone(),
            payload_digest: e.payload_digest.clone(),
            vocabulary_size: v.vectorizer.dimension(),
            warnings: v.warnings.clone(),
        })
        .collect();
    let summary = TrainSummary { train_size: corpus.len(), class_counts: counts, models, warnings };
    write_json(&dir.join("train_summary.json"), &summary)?;
    RunConfig {
        input: Some(display(&opts.input)),
        format: Some(format),
        seed: Some(opts.seed),
        algorithms: Some(algorithms),
        train: Some(base),
        max_features: Some(opts.max_features),
        specialists: opts.specialists,
        min_specialist_size: opts.specialists.map(|_| opts.min_specialist_size),
        ..RunConfig::new("train", dir)
    }
    .write(dir)?;
    Ok(summary)
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub input: PathBuf,
    pub format: Option<CorpusFormat>,
    pub model_dir: PathBuf,
    pub output_dir: PathBuf,
    pub n_boot: usize,
    pub seed: u64,
    pub slices: Vec<SliceDimension>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub n: usize,
    pub class_counts: ClassCounts,
    pub evaluations: Vec<ModelEvaluation>,
    pub benchmark: Vec<BenchmarkRow>,
    /// Present when a Random Forest row exists.
    pub reference_check: Option<RegressionCheck>,
    /// Generalist vs routed F1 per construct; present for ensembles.
    pub comparison: Option<Vec<ConstructComparison>>,
}

pub fn run_eval(opts: &EvalOptions) -> Result<EvalOutput> {
    let format = resolve_format(&opts.input, opts.format);
    let (test, _) = load_corpus(&opts.input, format)?;
    if test.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let artifacts = artifact::load_artifacts(&opts.model_dir)?;
    let output = evaluate_artifacts(&test, &artifacts, &opts.slices, opts.n_boot, opts.seed)?;
    let dir = &opts.output_dir;
    write_json(&dir_file(dir, "eval_report.json")?, &output)?;
    write_bytes(&dir.join("eval_report.csv"), eval::reports_csv(&output.evaluations)?.as_bytes())?;
    let mut md = benchmark_markdown(&output.benchmark, output.n);
    if let Some(check) = &output.reference_check {
        md.push_str(&format!(
            "\nReference check ({}): F1 {:.3} vs {:.3}, deviation {:.3}, tolerance {:.2}: {}\n",
            check.model,
            check.observed_f1,
            check.reference_f1,
            check.deviation,
            check.tolerance,
            if check.flagged { "FLAGGED" } else { "ok" }
        ));
    }
    write_bytes(&dir.join("eval_report.md"), md.as_bytes())?;
    RunConfig {
        input: Some(display(&opts.input)),
        format: Some(format),
        seed: Some(opts.seed),
        model_dir: Some(display(&opts.model_dir)),
        n_boot: Some(opts.n_boot),
        slices: Some(opts.slices.clone()),
        ..RunConfig::new("eval", dir)
    }
    .write(dir)?;
    Ok(output)
}

pub fn evaluate_artifacts(
    test: &Corpus,
    artifacts: &Artifacts,
    slices: &[SliceDimension],
    n_boot: usize,
    seed: u64,
) -> Result<EvalOutput> {
    let mut evaluations = Vec::new();
    let mut benchmark = Vec::new();
    let mut comparison = None;
    match artifacts {
        Artifacts::Models(models) => {
            for v in models {
                let reports = eval::evaluate_sliced(test, Predictor::Single(v), slices, n_boot, seed)?;
                let name = v.model.algorithm.display_name();
                benchmark.push(BenchmarkRow::from_report(name, &reports[0]));
                evaluations.push(ModelEvaluation { model: v.model.algorithm.as_str().into(), reports });
            }
        }
        Artifacts::Ensemble(ensemble) => {
            let algorithm = ensemble.generalist.model.algorithm;
            let general = eval::evaluate_sliced(test, Predictor::Single(&ensemble.generalist), slices, n_boot, seed)?;
            let routed = eval::evaluate_sliced(test, Predictor::Routed(ensemble), slices, n_boot, seed)?;
            benchmark.push(BenchmarkRow::from_report(algorithm.display_name(), &general[0]));
            benchmark.push(BenchmarkRow::from_report(&format!("{} (routed)", algorithm.display_name()), &routed[0]));
            evaluations.push(ModelEvaluation { model: format!("{}:generalist", algorithm.as_str()), reports: general });
            evaluations.push(ModelEvaluation { model: format!("{}:routed", algorithm.as_str()), reports: routed });
            comparison = Some(eval::compare_generalist_specialist(test, ensemble)?);
        }
    }
    Ok(EvalOutput {
        n: test.len(),
        class_counts: test.class_counts(),
        reference_check: eval::reference_regression_check(&benchmark),
        evaluations,
        benchmark,
        comparison,
    })
}

#[derive(Debug, Clone)]
pub struct LinguisticsOptions {
    pub input: PathBuf,
    pub format: Option<CorpusFormat>,
    pub lexicon: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub n_boot: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinguisticsOutput {
    pub n: usize,
    pub categories: Vec<String>,
    pub empty_rationales: usize,
    pub comparisons: Vec<GroupComparison>,
    pub lengths_by_construct: LengthReport,
    pub lengths_pooled: LengthReport,
}

pub fn run_linguistics(opts: &LinguisticsOptions) -> Result<LinguisticsOutput> {
    let format = resolve_format(&opts.input, opts.format);
    let (corpus, _) = load_corpus(&opts.input, format)?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let lexicon = match &opts.lexicon {
        Some(p) => Lexicon::load(p)?,
        None => Lexicon::default_markers(),
    };
    let profiles = linguistics::profile_corpus(&corpus, &lexicon);
    let comparisons = linguistics::compare_all(&corpus, &lexicon, opts.n_boot, opts.seed)?;
    let output = LinguisticsOutput {
        n: corpus.len(),
        categories: lexicon.names().into_iter().map(String::from).collect(),
        empty_rationales: profiles.iter().filter(|p| p.empty).count(),
        comparisons,
        lengths_by_construct: linguistics::length_stats(&corpus, true)?,
        lengths_pooled: linguistics::length_stats(&corpus, false)?,
    };
    let dir = &opts.output_dir;
    write_json(&dir_file(dir, "linguistics_report.json")?, &output)?;
    write_bytes(&dir.join("densities.csv"), densities_csv(&corpus, &lexicon, &profiles)?.as_bytes())?;
    write_bytes(&dir.join("group_comparisons.csv"), comparisons_csv(&output.comparisons)?.as_bytes())?;
    write_bytes(&dir.join("length_boxplot.csv"), boxplot_csv(&output)?.as_bytes())?;
    RunConfig {
        input: Some(display(&opts.input)),
        format: Some(format),
        seed: Some(opts.seed),
        n_boot: Some(opts.n_boot),
        lexicon: Some(opts.lexicon.as_deref().map(display).unwrap_or_else(|| "<default>".into())),
        ..RunConfig::new("linguistics", dir)
    }
    .write(dir)?;
    Ok(output)
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn densities_csv(corpus: &Corpus, lexicon: &Lexicon, profiles: &[linguistics::DensityProfile]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["record_id", "construct", "source_model", "is_correct", "word_count"];
    header.extend(lexicon.names());
    w.write_record(&header)?;
    for (r, p) in corpus.records.iter().zip(profiles) {
        let mut row = vec![
            r.record_id.clone(),
            r.predicted_construct.to_string(),
            r.source_model.clone(),
            r.is_correct.to_string(),
            p.word_count.to_string(),
        ];
        row.extend(p.categories.iter().map(|c| c.density.to_string()));
        w.write_record(&row)?;
    }
    finish_csv(w)
}

fn comparisons_csv(comparisons: &[GroupComparison]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "category", "mean_correct", "mean_incorrect", "difference", "ci_low", "ci_high", "t", "df", "p_value",
        "p_holm", "n_correct", "n_incorrect",
    ])?;
    for g in comparisons {
        w.write_record([
            g.category.clone(),
            g.mean_correct.to_string(),
            g.mean_incorrect.to_string(),
            g.difference.to_string(),
            g.ci_low.to_string(),
            g.ci_high.to_string(),
            g.t.to_string(),
            g.df.to_string(),
            g.p_value.to_string(),
            g.p_holm.to_string(),
            g.n_correct.to_string(),
            g.n_incorrect.to_string(),
        ])?;
    }
    finish_csv(w)
}

fn boxplot_csv(output: &LinguisticsOutput) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["construct", "group", "n", "min", "q1", "median", "q3", "max", "mean"])?;
    for g in output.lengths_pooled.groups.iter().chain(&output.lengths_by_construct.groups) {
        let s = &g.summary;
        w.write_record([
            g.construct.as_ref().map(|c| c.to_string()).unwrap_or_else(|| "all".into()),
            if g.is_correct { "correct" } else { "incorrect" }.to_string(),
            g.n.to_string(),
            s.min.to_string(),
            s.q1.to_string(),
            s.median.to_string(),
            s.q3.to_string(),
            s.max.to_string(),
            g.mean.to_string(),
        ])?;
    }
    finish_csv(w)
}

#[derive(Debug, Clone)]
pub struct TriageOptions {
    pub input: PathBuf,
    pub model_dir: PathBuf,
    pub tau: f64,
    /// Picks one model from a multi-model directory; defaults to Random
    /// Forest when present, else the first listed.
    pub algorithm: Option<Algorithm>,
    pub chunk_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriageDecision {
    pub record_id: String,
    pub score: f64,
    pub decision: Decision,
    pub served_by: String,
    pub empty_rationale: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Flag,
}

/// Accept only when the score strictly exceeds `tau`.
pub fn decide(score: f64, tau: f64) -> Decision {
    if score > tau { Decision::Accept } else { Decision::Flag }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriageSummary {
    pub records: usize,
    pub accepted: usize,
    pub flagged: usize,
    pub tau: f64,
}

struct TriageInput {
    record_id: String,
    construct: ConstructLabel,
    rationale: String,
}

fn parse_triage_line(line: &str, line_no: usize) -> Result<TriageInput> {
    let malformed = |reason: String| Error::MalformedRow { line: line_no, reason };
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
    let field = |k: &str| -> Result<String> {
        match value.get(k) {
            Some(serde_json::Value::String(s)) => Ok(s.clone()),
            Some(serde_json::Value::Null) | None => Err(malformed(format!("missing key {k:?}"))),
            Some(other) => Ok(other.to_string()),
        }
    };
    Ok(TriageInput {
        record_id: field("record_id")?,
        construct: ConstructLabel::parse(&field("predicted_construct")?, true)?,
        rationale: field("rationale")?,
    })
}

fn select_ensemble(artifacts: Artifacts, algorithm: Option<Algorithm>) -> Result<SpecialistEnsemble> {
    match artifacts {
        Artifacts::Ensemble(e) => Ok(e),
        Artifacts::Models(models) => {
            let wanted = algorithm.or_else(|| {
                models.iter().any(|m| m.model.algorithm == Algorithm::RandomForest).then_some(Algorithm::RandomForest)
            });
            let chosen = match wanted {
                Some(a) => models
                    .into_iter()
                    .find(|m| m.model.algorithm == a)
                    .ok_or_else(|| Error::InvalidConfig(format!("no {a} model in the artifact directory")))?,
                None => models.into_iter().next().expect("non-empty model set"),
            };
            Ok(SpecialistEnsemble::generalist_only(chosen))
        }
    }
}

/// Streams decisions as JSON lines, in input order, scoring each chunk in
/// parallel. Blank lines are skipped.
pub fn run_triage<W: Write>(opts: &TriageOptions, mut out: W) -> Result<TriageSummary> {
    if !(0.0..=1.0).contains(&opts.tau) {
        return Err(Error::InvalidConfig(format!("tau must lie in [0, 1], got {}", opts.tau)));
    }
    let ensemble = select_ensemble(artifact::load_artifacts(&opts.model_dir)?, opts.algorithm)?;
    let file = File::open(&opts.input).map_err(|e| Error::io(&opts.input, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let mut summary = TriageSummary { records: 0, accepted: 0, flagged: 0, tau: opts.tau };
    let chunk_size = opts.chunk_size.max(1);
    loop {
        let mut chunk = Vec::with_capacity(chunk_size);
        for (i, line) in lines.by_ref() {
            let line = line.map_err(|e| Error::io(&opts.input, e))?;
            if line.trim().is_empty() {
                continue;
            }
            chunk.push(parse_triage_line(&line, i + 1)?);
            if chunk.len() == chunk_size {
                break;
            }
        }
        if chunk.is_empty() {
            break;
        }
        let decisions = par::map_slice(&chunk, |r| {
            let routed = route_text(&ensemble, &r.construct, &r.rationale);
            let empty = r.rationale.trim().is_empty();
            let score = routed.scores.correct;
            TriageDecision {
                record_id: r.record_id.clone(),
                score,
                decision: if empty { Decision::Flag } else { decide(score, opts.tau) },
                served_by: routed.served_by.to_string(),
                empty_rationale: empty,
            }
        });
        for d in decisions {
            summary.records += 1;
            match d.decision {
                Decision::Accept => summary.accepted += 1,
                Decision::Flag => summary.flagged += 1,
            }
            let path = Path::new("<output>");
            serde_json::to_writer(&mut out, &d)?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(summary)
}
