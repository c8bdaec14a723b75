//! Tokenization and the TF-IDF unigram feature space.
//!
//! Tokens are maximal runs of Unicode letters, digits and apostrophes in the
//! lowercased text. Typographic apostrophes (U+2019) are folded to `'`, and
//! apostrophes at either end of a run are stripped, so `'hello'` becomes
//! `hello` and `student's` stays intact. Numerals are kept as tokens.
//!
//! Weights use raw term counts, smoothed idf `ln((1 + D) / (1 + df)) + 1`, and
//! L2 normalization.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const DEFAULT_MAX_FEATURES: usize = 3227;
pub const TFIDF_FORMAT_VERSION: u32 = 1;
pub const TOKENIZER_RULE: &str =
    "lowercase; maximal runs of unicode alphanumerics and apostrophes; edge apostrophes stripped";

const DEFAULT_STOPWORDS: &str = include_str!("../resources/english_stopwords.txt");

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StopWords(BTreeSet<String>);

impl StopWords {
    pub fn none() -> Self {
        StopWords(BTreeSet::new())
    }

    pub fn english() -> Self {
        Self::parse(DEFAULT_STOPWORDS)
    }

    /// One word per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Self {
        StopWords(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase)
                .collect(),
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for StopWords {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        StopWords(iter.into_iter().map(|s| s.into().to_lowercase()).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenStream(Vec<String>);

impl TokenStream {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.0
    }
}

impl<S: Into<String>> FromIterator<S> for TokenStream {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        TokenStream(iter.into_iter().map(Into::into).collect())
    }
}

fn is_token_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\''
}

pub fn tokenize(text: &str, stopwords: &StopWords) -> TokenStream {
    let lowered = text.to_lowercase().replace('\u{2019}', "'");
    lowered
        .split(|c: char| !is_token_char(c))
        .map(|t| t.trim_matches('\''))
        .filter(|t| !t.is_empty() && !stopwords.contains(t))
        .map(str::to_string)
        .collect()
}

/// Sparse row with strictly increasing indices and finite, non-negative,
/// non-zero weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    dimension: usize,
    entries: Vec<(u32, f64)>,
}

impl SparseVector {
    pub fn new(dimension: usize, mut entries: Vec<(u32, f64)>) -> Result<Self> {
        entries.retain(|&(_, w)| w != 0.0);
        for (k, &(i, w)) in entries.iter().enumerate() {
            if (i as usize) >= dimension {
                return Err(Error::DimensionMismatch { expected: dimension, found: i as usize + 1 });
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidConfig(format!("sparse weight {w} at column {i} is not finite and non-negative")));
            }
            if k > 0 && entries[k - 1].0 >= i {
                return Err(Error::InvalidConfig("sparse indices must be strictly increasing".into()));
            }
        }
        Ok(SparseVector { dimension, entries })
    }

    pub fn zero(dimension: usize) -> Self {
        SparseVector { dimension, entries: Vec::new() }
    }

    pub fn from_dense(values: &[f64]) -> Result<Self> {
        let entries = values.iter().enumerate().map(|(i, &w)| (i as u32, w)).collect();
        Self::new(values.len(), entries)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// All-OOV and empty documents transform to the zero vector.
    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: usize) -> f64 {
        match self.entries.binary_search_by_key(&(index as u32), |&(i, _)| i) {
            Ok(k) => self.entries[k].1,
            Err(_) => 0.0,
        }
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, w)| w * dense[i as usize]).sum()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension];
        for &(i, w) in &self.entries {
            out[i as usize] = w;
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TfidfRepr {
    format_version: u32,
    tokenizer: String,
    max_features: usize,
    document_count: usize,
    terms: Vec<String>,
    idf: Vec<f64>,
    stopwords: StopWords,
}

/// Fitted vocabulary and idf weights. Column order is lexicographic in the
/// retained terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TfidfRepr", into = "TfidfRepr")]
pub struct TfidfModel {
    terms: Vec<String>,
    idf: Vec<f64>,
    max_features: usize,
    document_count: usize,
    stopwords: StopWords,
    index: HashMap<String, usize>,
}

impl TryFrom<TfidfRepr> for TfidfModel {
    type Error = String;

    fn try_from(r: TfidfRepr) -> std::result::Result<Self, String> {
        if r.format_version != TFIDF_FORMAT_VERSION {
            return Err(format!("unsupported tf-idf format version {}", r.format_version));
        }
        if r.terms.len() != r.idf.len() {
            return Err("terms and idf lengths differ".into());
        }
        if r.idf.iter().any(|&w| !(w.is_finite() && w > 0.0)) {
            return Err("idf weights must be finite and positive".into());
        }
        let index: HashMap<String, usize> = r.terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        if index.len() != r.terms.len() {
            return Err("duplicate vocabulary term".into());
        }
        Ok(TfidfModel {
            terms: r.terms,
            idf: r.idf,
            max_features: r.max_features,
            document_count: r.document_count,
            stopwords: r.stopwords,
            index,
        })
    }
}

impl From<TfidfModel> for TfidfRepr {
    fn from(m: TfidfModel) -> Self {
        TfidfRepr {
            format_version: TFIDF_FORMAT_VERSION,
            tokenizer: TOKENIZER_RULE.to_string(),
            max_features: m.max_features,
            document_count: m.document_count,
            terms: m.terms,
            idf: m.idf,
            stopwords: m.stopwords,
        }
    }
}

/// Keeps the `max_features` tokens with the highest document frequency
/// (ties broken lexicographically).
pub fn fit_tfidf(train_docs: &[TokenStream], max_features: usize) -> Result<TfidfModel> {
    fit_tfidf_with(train_docs, max_features, StopWords::none())
}

/// Same as [`fit_tfidf`], recording the stop-word set the documents were
/// tokenized with so raw text can be transformed later.
pub fn fit_tfidf_with(train_docs: &[TokenStream], max_features: usize, stopwords: StopWords) -> Result<TfidfModel> {
    if train_docs.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if max_features == 0 {
        return Err(Error::InvalidConfig("max_features must be positive".into()));
    }
    let mut df: HashMap<&str, usize> = HashMap::new();
    for doc in train_docs {
        let unique: BTreeSet<&str> = doc.tokens().iter().map(String::as_str).collect();
        for t in unique {
            *df.entry(t).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = df.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(max_features);
    ranked.sort_by(|a, b| a.0.cmp(b.0));

    let d = train_docs.len() as f64;
    let terms: Vec<String> = ranked.iter().map(|(t, _)| t.to_string()).collect();
    let idf = ranked.iter().map(|&(_, n)| ((1.0 + d) / (1.0 + n as f64)).ln() + 1.0).collect();
    let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    Ok(TfidfModel { terms, idf, max_features, document_count: train_docs.len(), stopwords, index })
}

impl TfidfModel {
    pub fn dimension(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn max_features(&self) -> usize {
        self.max_features
    }

    pub fn document_count(&self) -> usize {
        self.document_count
    }

    pub fn stopwords(&self) -> &StopWords {
        &self.stopwords
    }

    pub fn column(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn term(&self, column: usize) -> Option<&str> {
        self.terms.get(column).map(String::as_str)
    }

    pub fn idf_of(&self, token: &str) -> Option<f64> {
        self.column(token).map(|c| self.idf[c])
    }

    /// Count × idf over in-vocabulary tokens, then L2-normalized.
    pub fn transform(&self, doc: &TokenStream) -> SparseVector {
        let mut counts: HashMap<usize, f64> = HashMap::new();
        for t in doc.tokens() {
            if let Some(c) = self.column(t) {
                *counts.entry(c).or_insert(0.0) += 1.0;
            }
        }
        let mut entries: Vec<(u32, f64)> = counts.into_iter().map(|(c, n)| (c as u32, n * self.idf[c])).collect();
        entries.sort_by_key(|&(c, _)| c);
        let norm = entries.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            for e in &mut entries {
                e.1 /= norm;
            }
        }
        SparseVector { dimension: self.dimension(), entries }
    }

    /// Tokenizes with the stop-word set recorded at fit time.
    pub fn transform_text(&self, text: &str) -> SparseVector {
        self.transform(&tokenize(text, &self.stopwords))
    }

    pub fn transform_all<'a, I: IntoIterator<Item = &'a str>>(&self, texts: I) -> Vec<SparseVector> {
        texts.into_iter().map(|t| self.transform_text(t)).collect()
    }

    /// SHA-256 over the canonical JSON serialization.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("tf-idf model serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}
