use std::io;
use std::path::Path;

use thiserror::Error;

use crate::autodiff::TensorError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("missing section: {0}")]
    MissingSection(String),
    #[error("multiple unalignable {0} sections")]
    AmbiguousSections(String),
    #[error("malformed record at line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("body part {0:?} does not occur in the corpus")]
    UnknownBodyPart(String),
    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),

    #[error("token id {id} out of range for vocabulary of size {size}")]
    IdOutOfRange { id: usize, size: usize },
    #[error("malformed vector file line {0}")]
    MalformedLine(usize),
    #[error("vector dimension {found} does not match table dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("malformed vocabulary file: {0}")]
    MalformedVocab(String),

    #[error("input sequence is empty")]
    EmptySequence,
    #[error("attention over zero states")]
    EmptyStates,
    #[error("report has no findings tokens")]
    EmptyFindings,
    #[error("length mismatch: {steps} decoder steps vs {targets} targets")]
    LengthMismatch { steps: usize, targets: usize },
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),

    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("vocabulary mismatch: checkpoint {checkpoint:016x}, corpus {corpus:016x}")]
    VocabMismatch { checkpoint: u64, corpus: u64 },

    #[error("no sentences to summarize")]
    EmptyInput,
    #[error("empty list of pairs")]
    EmptyList,
    #[error("unknown method {0:?}")]
    UnknownMethod(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Stable machine-readable name of the error kind.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Tensor(TensorError::ShapeMismatch { .. }) => "ShapeMismatch",
            Error::Tensor(TensorError::NotScalar(_)) => "NotScalar",
            Error::Tensor(TensorError::NonFinite(_)) => "NonFinite",
            Error::Tensor(TensorError::IndexOutOfRange { .. }) => "IndexOutOfRange",
            Error::Tensor(TensorError::UnsupportedRank(_)) => "UnsupportedRank",
            Error::MissingSection(_) => "MissingSection",
            Error::AmbiguousSections(_) => "AmbiguousSections",
            Error::MalformedRecord { .. } => "MalformedRecord",
            Error::EmptyCorpus => "EmptyCorpus",
            Error::UnknownBodyPart(_) => "UnknownBodyPart",
            Error::InvalidRatios(_) => "InvalidRatios",
            Error::IdOutOfRange { .. } => "IdOutOfRange",
            Error::MalformedLine(_) => "MalformedLine",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::MalformedVocab(_) => "MalformedVocab",
            Error::EmptySequence => "EmptySequence",
            Error::EmptyStates => "EmptyStates",
            Error::EmptyFindings => "EmptyFindings",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::EmptySplit(_) => "EmptySplit",
            Error::Checkpoint(_) => "CheckpointError",
            Error::VocabMismatch { .. } => "VocabMismatch",
            Error::EmptyInput => "EmptyInput",
            Error::EmptyList => "EmptyList",
            Error::UnknownMethod(_) => "UnknownMethod",
            Error::Io { .. } => "IoError",
            Error::Json(_) => "JsonError",
        }
    }
}
