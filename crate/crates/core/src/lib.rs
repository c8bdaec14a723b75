//! Rationale-based verification of LLM annotation labels.
//!
//! Given an LLM's predicted construct label and the short rationale it wrote
//! to justify it, the crate predicts whether the label is correct. The
//! pipeline is lexical end to end: rationales are encoded as TF-IDF unigram
//! vectors, five class-weighted classifiers are trained on them, and
//! optional per-construct specialists are consulted by label-based routing.
//! A lexicon module profiles rationales by marker-category density.
//!
//! Data-parallel loops (forest trees, bootstrap replicates, specialist
//! fitting, per-record densities) run on rayon when the `parallel` feature is
//! enabled (the default) and sequentially otherwise. Every stochastic draw is
//! keyed by `(seed, purpose, index)` so results do not depend on the worker
//! count.

pub mod artifact;
pub mod classifiers;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod linguistics;
pub mod par;
pub mod pipeline;
pub mod rng;
pub mod router;
pub mod stats;
pub mod synthetic;
pub mod textfeat;

pub use classifiers::{Algorithm, TrainConfig, TrainedModel};
pub use corpus::{AnnotationRecord, ConstructLabel, Corpus};
pub use error::{Error, Result};
pub use router::SpecialistEnsemble;
pub use textfeat::{SparseVector, TfidfModel};
