use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid world spec: {0}")]
    InvalidSpec(String),

    #[error("word {word:?} is not in the vocabulary of language {language}")]
    UnknownWord { word: String, language: String },

    #[error("unknown language {0}")]
    UnknownLanguage(String),

    #[error("invalid model config: {0}")]
    InvalidConfig(String),

    #[error("sequence of length {len} exceeds the context window of {max}")]
    ContextOverflow { len: usize, max: usize },

    #[error("loss mask selects no positions")]
    EmptyLossMask,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite gradient in tensor {0}")]
    NonFiniteGradient(String),

    #[error("unsupported checkpoint format: {0}")]
    FormatVersionMismatch(String),

    #[error("vocabulary hash mismatch: expected {expected}, found {found}")]
    VocabHashMismatch { expected: String, found: String },

    #[error("ensemble has no members")]
    EmptyEnsemble,

    #[error("dataset is empty: {0}")]
    EmptyDataset(String),

    #[error("evaluation set is empty")]
    EmptyEvalSet,

    #[error("input is empty")]
    EmptyInput,

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("paired differences have zero variance")]
    DegenerateVariance,

    #[error("hypothesis and reference counts differ ({hyps} vs {refs})")]
    LengthMismatch { hyps: usize, refs: usize },

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },

    #[error("{path}: invalid UTF-8 on line {line}")]
    Encoding { path: String, line: usize },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { field: field.into(), message: message.into() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
