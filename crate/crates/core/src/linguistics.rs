//! Lexicon-based profiling of rationales.
//!
//! A lexicon maps category names to word patterns. A pattern is either a
//! literal token or a stem ending in `*` that matches every token starting
//! with the stem. Density is matches per 100 words, where the word count
//! includes stop-words. A token may count toward several categories.
//!
//! Lexicon files look like:
//!
//! ```text
//! # comment
//! [Causation]
//! because, therefore, caus*
//! ```

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ConstructLabel, Corpus};
use crate::error::{Error, Result};
use crate::par;
use crate::rng::{self, Purpose};
use crate::stats::{self, FiveNumber};
use crate::textfeat::{tokenize, StopWords};

const DEFAULT_LEXICON: &str = include_str!("../resources/default_lexicon.toml");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pattern {
    Literal(String),
    Prefix(String),
}

impl Pattern {
    pub fn matches(&self, token: &str) -> bool {
        match self {
            Pattern::Literal(w) => token == w,
            Pattern::Prefix(stem) => token.starts_with(stem.as_str()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub name: String,
    pub patterns: Vec<Pattern>,
}

impl Category {
    pub fn matches(&self, token: &str) -> bool {
        self.patterns.iter().any(|p| p.matches(token))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    pub categories: Vec<Category>,
}

fn parse_pattern(raw: &str, line: usize) -> Result<Pattern> {
    let p = raw.to_lowercase();
    let (stem, wildcard) = match p.strip_suffix('*') {
        Some(stem) => (stem.to_string(), true),
        None => (p.clone(), false),
    };
    if stem.is_empty() {
        return Err(Error::MalformedLexicon { line, reason: format!("pattern {raw:?} has an empty stem") });
    }
    if stem.contains('*') {
        return Err(Error::MalformedLexicon { line, reason: format!("wildcard must be terminal in {raw:?}") });
    }
    if !stem.chars().all(|c| c.is_alphanumeric() || c == '\'') {
        return Err(Error::MalformedLexicon { line, reason: format!("pattern {raw:?} is not a single word") });
    }
    Ok(if wildcard { Pattern::Prefix(stem) } else { Pattern::Literal(stem) })
}

impl Lexicon {
    /// The shipped marker lexicon: Causation, Differentiation,
    /// Tentativeness, Insight.
    pub fn default_markers() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("bundled lexicon parses")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut categories: Vec<(usize, Category)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::MalformedLexicon { line, reason: "unterminated section header".into() })?
                    .trim();
                if name.is_empty() {
                    return Err(Error::MalformedLexicon { line, reason: "empty category name".into() });
                }
                if categories.iter().any(|(_, c)| c.name == name) {
                    return Err(Error::DuplicateCategory(name.to_string()));
                }
                categories.push((line, Category { name: name.to_string(), patterns: Vec::new() }));
                continue;
            }
            let (_, current) = categories
                .last_mut()
                .ok_or_else(|| Error::MalformedLexicon { line, reason: "pattern outside of a [Category] section".into() })?;
            for part in trimmed.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                let pattern = parse_pattern(part, line)?;
                if !current.patterns.contains(&pattern) {
                    current.patterns.push(pattern);
                }
            }
        }
        if let Some((line, c)) = categories.iter().find(|(_, c)| c.patterns.is_empty()) {
            return Err(Error::MalformedLexicon { line: *line, reason: format!("category {:?} has no patterns", c.name) });
        }
        if categories.is_empty() {
            return Err(Error::MalformedLexicon { line: 0, reason: "no categories defined".into() });
        }
        Ok(Lexicon { categories: categories.into_iter().map(|(_, c)| c).collect() })
    }

    pub fn category(&self, name: &str) -> Option<&Category> {
        self.categories.iter().find(|c| c.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.categories.iter().map(|c| c.name.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryDensity {
    pub category: String,
    pub matches: usize,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile {
    pub record_id: Option<String>,
    pub word_count: usize,
    /// Set when the text has no words; all densities are then 0.
    pub empty: bool,
    pub categories: Vec<CategoryDensity>,
}

impl DensityProfile {
    pub fn get(&self, category: &str) -> Option<f64> {
        self.categories.iter().find(|c| c.category == category).map(|c| c.density)
    }
}

pub fn word_count(text: &str) -> usize {
    tokenize(text, &StopWords::none()).len()
}

pub fn density(text: &str, lexicon: &Lexicon) -> DensityProfile {
    let tokens = tokenize(text, &StopWords::none());
    let n = tokens.len();
    let categories = lexicon
        .categories
        .iter()
        .map(|cat| {
            let matches = tokens.tokens().iter().filter(|t| cat.matches(t)).count();
            let density = if n == 0 { 0.0 } else { 100.0 * matches as f64 / n as f64 };
            CategoryDensity { category: cat.name.clone(), matches, density }
        })
        .collect();
    DensityProfile { record_id: None, word_count: n, empty: n == 0, categories }
}

/// Densities for every record, in record order.
pub fn profile_corpus(corpus: &Corpus, lexicon: &Lexicon) -> Vec<DensityProfile> {
    par::map_slice(&corpus.records, |r| DensityProfile { record_id: Some(r.record_id.clone()), ..density(&r.rationale, lexicon) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    pub category: String,
    pub mean_correct: f64,
    pub mean_incorrect: f64,
    /// `mean_correct - mean_incorrect`.
    pub difference: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
    /// Holm-adjusted across the categories compared together.
    pub p_holm: f64,
    pub n_correct: usize,
    pub n_incorrect: usize,
}

pub const MIN_BOOTSTRAP: usize = 100;

/// Welch test plus percentile-bootstrap CI (95%) on the difference of
/// means. Each group is resampled independently; replicate `b` uses stream
/// `(seed, GroupBootstrap, b)`. The interval is widened to include the point
/// difference if the percentile interval misses it.
pub fn compare_samples(
    category: &str,
    correct: &[f64],
    incorrect: &[f64],
    n_boot: usize,
    seed: u64,
) -> Result<GroupComparison> {
    if n_boot < MIN_BOOTSTRAP {
        return Err(Error::InvalidConfig(format!("n_boot must be at least {MIN_BOOTSTRAP}, got {n_boot}")));
    }
    if correct.is_empty() || incorrect.is_empty() {
        return Err(Error::SingleGroup);
    }
    let smallest = correct.len().min(incorrect.len());
    if smallest < 2 {
        return Err(Error::TooFewSamples { n: smallest, min: 2 });
    }
    let test = stats::welch_t_test(correct, incorrect);
    let (mc, mi) = (stats::mean(correct), stats::mean(incorrect));
    let difference = mc - mi;
    let mut replicates = par::map_range(n_boot, |b| {
        let mut rng = rng::stream(seed, Purpose::GroupBootstrap, b as u64);
        let mut resample_mean = |xs: &[f64]| {
            let n = xs.len();
            (0..n).map(|_| xs[rng.random_range(0..n)]).sum::<f64>() / n as f64
        };
        let a = resample_mean(correct);
        let b = resample_mean(incorrect);
        a - b
    });
    replicates.sort_by(f64::total_cmp);
    let (lo, hi) = stats::percentile_interval(&replicates, 0.95);
    Ok(GroupComparison {
        category: category.to_string(),
        mean_correct: mc,
        mean_incorrect: mi,
        difference,
        ci_low: lo.min(difference),
        ci_high: hi.max(difference),
        t: test.t,
        df: test.df,
        p_value: test.p_value,
        p_holm: test.p_value,
        n_correct: correct.len(),
        n_incorrect: incorrect.len(),
    })
}

fn split_by_correctness(corpus: &Corpus, profiles: &[DensityProfile], category: &str) -> (Vec<f64>, Vec<f64>) {
    let mut correct = Vec::new();
    let mut incorrect = Vec::new();
    for (r, p) in corpus.records.iter().zip(profiles) {
        let d = p.get(category).unwrap_or(0.0);
        if r.is_correct { correct.push(d) } else { incorrect.push(d) }
    }
    (correct, incorrect)
}

pub fn compare_groups(
    corpus: &Corpus,
    lexicon: &Lexicon,
    category: &str,
    n_boot: usize,
    seed: u64,
) -> Result<GroupComparison> {
    let cat = lexicon
        .category(category)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown lexicon category {category:?}")))?;
    let single = Lexicon { categories: vec![cat.clone()] };
    let profiles = profile_corpus(corpus, &single);
    let (c, i) = split_by_correctness(corpus, &profiles, category);
    compare_samples(category, &c, &i, n_boot, seed)
}

/// One comparison per lexicon category, with Holm-adjusted p-values.
pub fn compare_all(corpus: &Corpus, lexicon: &Lexicon, n_boot: usize, seed: u64) -> Result<Vec<GroupComparison>> {
    let profiles = profile_corpus(corpus, lexicon);
    let mut out = Vec::with_capacity(lexicon.categories.len());
    for cat in &lexicon.categories {
        let (c, i) = split_by_correctness(corpus, &profiles, &cat.name);
        out.push(compare_samples(&cat.name, &c, &i, n_boot, seed)?);
    }
    let adjusted = stats::holm_adjust(&out.iter().map(|g| g.p_value).collect::<Vec<_>>());
    for (g, p) in out.iter_mut().zip(adjusted) {
        g.p_holm = p;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthGroup {
    /// `None` when lengths are pooled over constructs.
    pub construct: Option<ConstructLabel>,
    pub is_correct: bool,
    pub n: usize,
    pub mean: f64,
    pub summary: FiveNumber,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthTest {
    pub construct: Option<ConstructLabel>,
    pub n_correct: usize,
    pub n_incorrect: usize,
    pub median_correct: Option<f64>,
    pub median_incorrect: Option<f64>,
    pub u: Option<f64>,
    /// Omitted when either side has fewer than two rationales.
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthReport {
    pub groups: Vec<LengthGroup>,
    pub tests: Vec<LengthTest>,
}

pub fn length_stats(corpus: &Corpus, group_by_construct: bool) -> Result<LengthReport> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let lengths: Vec<f64> = par::map_slice(&corpus.records, |r| word_count(&r.rationale) as f64);
    let keys: Vec<Option<ConstructLabel>> = if group_by_construct {
        let mut ks: Vec<_> = corpus.records.iter().map(|r| Some(r.predicted_construct.clone())).collect();
        ks.sort();
        ks.dedup();
        ks
    } else {
        vec![None]
    };
    let mut groups = Vec::new();
    let mut tests = Vec::new();
    for key in keys {
        let mut sides: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        for (r, &len) in corpus.records.iter().zip(&lengths) {
            if key.as_ref().is_none_or(|k| *k == r.predicted_construct) {
                sides[r.is_correct as usize].push(len);
            }
        }
        for is_correct in [true, false] {
            let xs = &sides[is_correct as usize];
            if !xs.is_empty() {
                groups.push(LengthGroup {
                    construct: key.clone(),
                    is_correct,
                    n: xs.len(),
                    mean: stats::mean(xs),
                    summary: stats::five_number(xs),
                });
            }
        }
        let [inc, cor] = &sides;
        let test = (cor.len() >= 2 && inc.len() >= 2).then(|| stats::mann_whitney(cor, inc));
        tests.push(LengthTest {
            construct: key,
            n_correct: cor.len(),
            n_incorrect: inc.len(),
            median_correct: (!cor.is_empty()).then(|| stats::quantile(cor, 0.5)),
            median_incorrect: (!inc.is_empty()).then(|| stats::quantile(inc, 0.5)),
            u: test.map(|t| t.u),
            p_value: test.map(|t| t.p_value),
        });
    }
    Ok(LengthReport { groups, tests })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::AnnotationRecord;

    #[test]
    fn parses_default_and_custom_lexicons() {
        let lex = Lexicon::default_markers();
        assert_eq!(lex.names(), ["Causation", "Differentiation", "Tentativeness", "Insight"]);
        let lex = Lexicon::parse("[causation]\nbecause, therefore, implies\n").unwrap();
        assert_eq!(lex.categories[0].patterns.len(), 3);
    }

    #[test]
    fn lexicon_errors() {
        assert!(matches!(Lexicon::parse("[a]\n[b]\nx\n"), Err(Error::MalformedLexicon { line: 1, .. })));
        assert!(matches!(Lexicon::parse("[a]\nx\n[a]\ny\n"), Err(Error::DuplicateCategory(_))));
        assert!(matches!(Lexicon::parse("x, y\n"), Err(Error::MalformedLexicon { line: 1, .. })));
        assert!(matches!(Lexicon::parse("[a]\nca*s\n"), Err(Error::MalformedLexicon { line: 2, .. })));
        assert!(matches!(Lexicon::parse("[a]\n*\n"), Err(Error::MalformedLexicon { .. })));
        assert!(matches!(Lexicon::parse("[a]\ntwo words\n"), Err(Error::MalformedLexicon { .. })));
        assert!(matches!(Lexicon::parse("# nothing\n"), Err(Error::MalformedLexicon { .. })));
        assert!(matches!(Lexicon::parse("[]\nx\n"), Err(Error::MalformedLexicon { .. })));
    }

    #[test]
    fn wildcard_semantics() {
        let lex = Lexicon::parse("[c]\ncaus*\n").unwrap();
        let cat = &lex.categories[0];
        for t in ["causes", "causal", "caused", "caus"] {
            assert!(cat.matches(t));
        }
        assert!(!cat.matches("because"));
    }

    #[test]
    fn density_formula() {
        let lex = Lexicon::default_markers();
        let text = "the teacher asks because the student said so and therefore we move on to the next step of the lesson now ok";
        assert_eq!(word_count(text), 22);
        let text = "teacher asks because student said so and therefore we move on to next step of the lesson now ok fine";
        assert_eq!(word_count(text), 20);
        let p = density(text, &lex);
        assert_eq!(p.get("Causation"), Some(10.0));
        let empty = density("", &lex);
        assert!(empty.empty && empty.categories.iter().all(|c| c.density == 0.0));
    }

    #[test]
    fn density_is_invariant_to_self_concatenation() {
        let lex = Lexicon::default_markers();
        let text = "It might be a revoicing move, but I think the teacher could be restating because of the wording.";
        let once = density(text, &lex);
        let twice = density(&format!("{text} {text}"), &lex);
        for (a, b) in once.categories.iter().zip(&twice.categories) {
            assert!((a.density - b.density).abs() < 1e-12);
        }
    }

    fn rec(i: usize, label: ConstructLabel, text: &str, ok: bool) -> AnnotationRecord {
        AnnotationRecord {
            record_id: format!("r{i}"),
            utterance_id: String::new(),
            predicted_construct: label,
            rationale: text.into(),
            source_model: "m".into(),
            is_correct: ok,
        }
    }

    #[test]
    fn identical_groups_compare_equal() {
        let texts = ["it might work", "because of that", "we think so", "plain words here", "could be but maybe"];
        let mut records = Vec::new();
        for (i, t) in texts.iter().enumerate() {
            records.push(rec(2 * i, ConstructLabel::Restating, t, true));
            records.push(rec(2 * i + 1, ConstructLabel::Restating, t, false));
        }
        let corpus = Corpus::from_records(records).unwrap();
        let lex = Lexicon::default_markers();
        for g in compare_all(&corpus, &lex, 200, 3).unwrap() {
            assert_eq!(g.difference, 0.0);
            assert!((g.p_value - 1.0).abs() < 1e-12);
            assert!(g.ci_low <= 0.0 && g.ci_high >= 0.0);
        }
        let a = compare_groups(&corpus, &lex, "Tentativeness", 150, 9).unwrap();
        let b = compare_groups(&corpus, &lex, "Tentativeness", 150, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn comparison_errors() {
        let corpus = Corpus::from_records(vec![rec(0, ConstructLabel::None, "x", true), rec(1, ConstructLabel::None, "y", true)]).unwrap();
        let lex = Lexicon::default_markers();
        assert!(matches!(compare_groups(&corpus, &lex, "Insight", 100, 0), Err(Error::SingleGroup)));
        assert!(matches!(compare_groups(&corpus, &lex, "Insight", 10, 0), Err(Error::InvalidConfig(_))));
        assert!(matches!(compare_groups(&corpus, &lex, "Nope", 100, 0), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn length_quartiles_and_symmetry() {
        let corpus = Corpus::from_records(vec![
            rec(0, ConstructLabel::Restating, "a b", true),
            rec(1, ConstructLabel::Restating, "a b c d", true),
            rec(2, ConstructLabel::Restating, "a b c d e f", true),
            rec(3, ConstructLabel::Restating, "a b", false),
            rec(4, ConstructLabel::Restating, "a b c d", false),
            rec(5, ConstructLabel::Restating, "a b c d e f", false),
            rec(6, ConstructLabel::Revoicing, "one", true),
        ])
        .unwrap();
        let report = length_stats(&corpus, true).unwrap();
        let g = report.groups.iter().find(|g| g.construct == Some(ConstructLabel::Restating) && g.is_correct).unwrap();
        assert_eq!((g.summary.q1, g.summary.median, g.summary.q3), (3.0, 4.0, 5.0));
        let t = report.tests.iter().find(|t| t.construct == Some(ConstructLabel::Restating)).unwrap();
        assert!((t.p_value.unwrap() - 1.0).abs() < 1e-12);
        let t = report.tests.iter().find(|t| t.construct == Some(ConstructLabel::Revoicing)).unwrap();
        assert_eq!(t.p_value, None);
        assert_eq!(t.n_correct, 1);
        let pooled = length_stats(&corpus, false).unwrap();
        assert_eq!(pooled.tests.len(), 1);
    }
}
