use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the segmentation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid UTF-8 at line {line}")]
    Utf8 { line: usize },

    #[error("empty word in segmented input")]
    EmptyWord,

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("empty input")]
    EmptyInput,

    #[error("fewer than 2 distinct words survive min_count={min_count}")]
    DegenerateVocab { min_count: usize },

    #[error("invalid n-gram order {0} (expected 2..=5)")]
    InvalidOrder(usize),

    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error("order mismatch: {0}")]
    OrderMismatch(String),

    #[error("block {block}: declared {declared} rows, found {found}")]
    RowCountMismatch {
        block: usize,
        declared: usize,
        found: usize,
    },

    #[error("unsupported feature template version {0}")]
    TemplateVersion(u32),

    #[error("lambda > 0 requires a language model")]
    LmMissing,

    #[error("sentence of {0} characters exceeds the brute-force limit of 12")]
    TooLong(usize),

    #[error("sentence {sentence_index}: gold and predicted text differ")]
    LengthMismatch { sentence_index: usize },

    #[error("gold has {gold} sentences, prediction has {pred}")]
    SentenceCountMismatch { gold: usize, pred: usize },

    #[error("emission rows ({rows}) do not match character count ({chars})")]
    ShapeMismatch { rows: usize, chars: usize },

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(line: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
