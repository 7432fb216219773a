use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record at line {line} of {path}: {message}")]
    Malformed {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("duplicate document id {0:?}")]
    DuplicateId(String),
    #[error("document {0:?} has empty text (use --allow-empty to permit)")]
    EmptyText(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("degenerate corpus: every document is empty after preprocessing")]
    DegenerateCorpus,
    #[error("token {token:?} is not in the vocabulary")]
    OutOfVocabulary { token: String },
    #[error("fingerprint mismatch for {what}: expected {expected}, found {found}")]
    FingerprintMismatch {
        what: &'static str,
        expected: String,
        found: String,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("position out of range: document {doc}, token {pos}")]
    OutOfRange { doc: usize, pos: usize },
    #[error("too few documents: {0}")]
    TooFewDocuments(String),
    #[error("unknown topic {topic} (model has {k} topics)")]
    UnknownTopic { topic: usize, k: usize },
    #[error("unknown coder {0:?}")]
    UnknownCoder(String),
    #[error("codebook: {0}")]
    Codebook(String),
    #[error("retained topics without a theme: {0:?}")]
    UnthemedTopics(Vec<usize>),
    #[error("missing prerequisite artifact {0}")]
    MissingArtifact(PathBuf),
    #[error("unsupported artifact format version {0}")]
    FormatVersion(u32),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable code used by the CLI, HTTP API and C ABI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Malformed { .. } => "malformed",
            Error::DuplicateId(_) => "duplicate_id",
            Error::EmptyText(_) => "empty_text",
            Error::EmptyCorpus => "empty_corpus",
            Error::DegenerateCorpus => "degenerate_corpus",
            Error::OutOfVocabulary { .. } => "out_of_vocabulary",
            Error::FingerprintMismatch { .. } => "fingerprint_mismatch",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::OutOfRange { .. } => "out_of_range",
            Error::TooFewDocuments(_) => "too_few_documents",
            Error::UnknownTopic { .. } => "unknown_topic",
            Error::UnknownCoder(_) => "unknown_coder",
            Error::Codebook(_) => "codebook",
            Error::UnthemedTopics(_) => "unthemed_topics",
            Error::MissingArtifact(_) => "missing_artifact",
            Error::FormatVersion(_) => "format_version",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
