//! Synthetic corpora with planted signal, for tests, benches and demos.
//!
//! * [`planted_hedge_corpus`]: incorrect rationales carry hedge tokens
//!   ("might", "could") far more often than correct ones.
//! * [`planted_vocabulary_corpus`]: each construct has its own correctness
//!   token; one construct is rare, and its token also shows up as noise in
//!   the incorrect rationales of the common constructs, so a single global
//!   model learns the wrong sign for it.
//! * [`operating_point_predictions`]: truth/prediction vectors with exact
//!   prevalence, precision and recall.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{AnnotationRecord, ConstructLabel, Corpus, Provenance};
use crate::rng::{self, Purpose};

pub const SOURCE_MODELS: [&str; 4] = ["source-a", "source-b", "source-c", "source-d"];

/// Share of correct records used by the generators.
pub const CORRECT_PREVALENCE: f64 = 0.54;

const FILLER: [&str; 40] = [
    "teacher", "student", "utterance", "class", "lesson", "answer", "question", "repeats", "says", "idea",
    "fraction", "number", "group", "explains", "asks", "response", "problem", "model", "work", "turn",
    "discussion", "context", "statement", "point", "words", "reply", "board", "example", "solution", "step",
    "earlier", "partner", "method", "reason", "share", "table", "count", "value", "shape", "line",
];

const HEDGES: [&str; 2] = ["might", "could"];

fn filler_clause(rng: &mut ChaCha8Rng, words: usize) -> Vec<&'static str> {
    (0..words).map(|_| FILLER[rng.random_range(0..FILLER.len())]).collect()
}

fn record(i: usize, construct: ConstructLabel, rationale: String, is_correct: bool) -> AnnotationRecord {
    AnnotationRecord {
        record_id: format!("syn-{i:06}"),
        utterance_id: format!("utt-{i:06}"),
        predicted_construct: construct,
        rationale,
        source_model: SOURCE_MODELS[i % SOURCE_MODELS.len()].to_string(),
        is_correct,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HedgeOptions {
    /// Independent clauses per rationale; each may carry one hedge.
    pub clauses: usize,
    pub p_hedge_incorrect: f64,
    pub p_hedge_correct: f64,
}

impl Default for HedgeOptions {
    fn default() -> Self {
        HedgeOptions { clauses: 4, p_hedge_incorrect: 0.8, p_hedge_correct: 0.1 }
    }
}

pub fn planted_hedge_corpus(n: usize, seed: u64) -> Corpus {
    planted_hedge_corpus_with(n, seed, HedgeOptions::default())
}

/// Every clause independently includes a hedge with probability
/// `p_hedge_incorrect` (incorrect records) or `p_hedge_correct` (correct).
pub fn planted_hedge_corpus_with(n: usize, seed: u64, opts: HedgeOptions) -> Corpus {
    let records = (0..n)
        .map(|i| {
            let mut rng = rng::stream(seed, Purpose::Synthetic, i as u64);
            let is_correct = rng.random_bool(CORRECT_PREVALENCE);
            let p = if is_correct { opts.p_hedge_correct } else { opts.p_hedge_incorrect };
            let construct = ConstructLabel::TALK_MOVES[rng.random_range(0..ConstructLabel::TALK_MOVES.len())].clone();
            let clauses: Vec<String> = (0..opts.clauses)
                .map(|_| {
                    let mut words = filler_clause(&mut rng, 5);
                    if rng.random_bool(p) {
                        let at = rng.random_range(0..=words.len());
                        words.insert(at, HEDGES[rng.random_range(0..HEDGES.len())]);
                    }
                    words.join(" ")
                })
                .collect();
            record(i, construct, format!("{}.", clauses.join(", ")), is_correct)
        })
        .collect();
    Corpus::new(records, Provenance::new("synthetic:planted-hedge"))
}

/// The construct given 5% of the records in the planted-vocabulary corpus.
pub const RARE_CONSTRUCT: ConstructLabel = ConstructLabel::GettingStudentsToRelate;
pub const RARE_SHARE: f64 = 0.05;

/// Correctness token for a construct: `cue` followed by its slug letters.
pub fn correctness_token(c: &ConstructLabel) -> String {
    format!("cue{}", c.slug().replace(['-', '_'], "").to_lowercase())
}

/// Records are drawn with the rare construct at [`RARE_SHARE`] and the other
/// five Talk Moves sharing the rest evenly. Correct records of construct `c`
/// contain `correctness_token(c)` with probability 0.9 (0.1 for incorrect).
/// Incorrect records of the common constructs also contain the rare
/// construct's token with probability 0.6.
pub fn planted_vocabulary_corpus(n: usize, seed: u64) -> Corpus {
    let common: Vec<ConstructLabel> =
        ConstructLabel::TALK_MOVES.iter().filter(|c| **c != RARE_CONSTRUCT).cloned().collect();
    let rare_token = correctness_token(&RARE_CONSTRUCT);
    let records = (0..n)
        .map(|i| {
            let mut rng = rng::stream(seed, Purpose::Synthetic, i as u64);
            let construct =
                if rng.random_bool(RARE_SHARE) { RARE_CONSTRUCT } else { common[rng.random_range(0..common.len())].clone() };
            let is_correct = rng.random_bool(CORRECT_PREVALENCE);
            let mut words: Vec<String> = filler_clause(&mut rng, 12).into_iter().map(String::from).collect();
            let own = correctness_token(&construct);
            let mut insert = |rng: &mut ChaCha8Rng, tok: &str| {
                let at = rng.random_range(0..=words.len());
                words.insert(at, tok.to_string());
            };
            if rng.random_bool(if is_correct { 0.9 } else { 0.1 }) {
                insert(&mut rng, &own);
            }
            if construct != RARE_CONSTRUCT && !is_correct && rng.random_bool(0.6) {
                insert(&mut rng, &rare_token);
            }
            record(i, construct, words.join(" "), is_correct)
        })
        .collect();
    Corpus::new(records, Provenance::new("synthetic:planted-vocabulary"))
}

/// Truth and prediction vectors of length `n` whose confusion matrix hits
/// the requested prevalence, precision and recall up to rounding. Row order
/// is shuffled with the given seed.
pub fn operating_point_predictions(
    n: usize,
    prevalence: f64,
    precision: f64,
    recall: f64,
    seed: u64,
) -> (Vec<bool>, Vec<bool>) {
    let positives = (n as f64 * prevalence).round() as usize;
    let tp = (recall * positives as f64).round() as usize;
    let predicted_positive = ((tp as f64 / precision).round() as usize).min(n - positives + tp);
    let fp = predicted_positive - tp;
    let fn_ = positives - tp;
    let tn = n - tp - fp - fn_;
    let mut rows: Vec<(bool, bool)> = std::iter::repeat_n((true, true), tp)
        .chain(std::iter::repeat_n((false, true), fp))
        .chain(std::iter::repeat_n((true, false), fn_))
        .chain(std::iter::repeat_n((false, false), tn))
        .collect();
    rows.shuffle(&mut rng::stream(seed, Purpose::Synthetic, u64::MAX));
    rows.into_iter().unzip()
}
