use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("unknown construct label: {0:?}")]
    UnknownLabel(String),
    #[error("test fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("label list is empty")]
    EmptyLabels,
    #[error("feature dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("training data must contain both classes (SingleClassTraining)")]
    SingleClassTraining,
    #[error("length mismatch: {left} truth labels vs {right} predictions")]
    LengthMismatch { left: usize, right: usize },
    #[error("too few samples: need at least {min}, got {n}")]
    TooFewSamples { n: usize, min: usize },
    #[error("operation not supported for {0}")]
    UnsupportedAlgorithm(String),
    #[error("malformed lexicon at line {line}: {reason}")]
    MalformedLexicon { line: usize, reason: String },
    #[error("duplicate lexicon category: {0}")]
    DuplicateCategory(String),
    #[error("group comparison needs both correct and incorrect records")]
    SingleGroup,
    #[error("unknown slice: {0}")]
    UnknownSlice(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("artifact integrity failure: {0}")]
    Integrity(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::FileNotFound(path)
        } else {
            Error::Io { path, source }
        }
    }

    /// Process exit code: 2 for I/O and parse failures, 3 for data-contract
    /// violations, 4 for artifact integrity failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::FileNotFound(_)
            | Error::Io { .. }
            | Error::MalformedRow { .. }
            | Error::UnknownLabel(_)
            | Error::MalformedLexicon { .. }
            | Error::DuplicateCategory(_)
            | Error::Json(_)
            | Error::Csv(_) => 2,
            Error::Integrity(_) => 4,
            _ => 3,
        }
    }
}
