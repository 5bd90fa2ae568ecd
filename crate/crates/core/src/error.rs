use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the training and prediction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("corpus contains no alphanumeric tokens")]
    EmptyVocabulary,
    #[error("line {0}: expected `label<TAB>text` with both fields non-empty")]
    MalformedLine(usize),
    #[error("{}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("partition count must be at least 1")]
    InvalidPartitionCount,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cosine distance is undefined for a zero vector")]
    ZeroVector,
    #[error("training corpus contains a single class")]
    SingleClassCorpus,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("probability vectors have different lengths: {expected} vs {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("ensemble averaging takes exactly 5 score vectors, got {0}")]
    WrongArity(usize),
    #[error("not a probability distribution: {0}")]
    InvalidDistribution(String),
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("class {label} has {count} examples, fewer than {folds} folds")]
    InsufficientClassCount {
        label: String,
        count: usize,
        folds: usize,
    },
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("unsupported archive format version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupted archive: {0}")]
    CorruptArchive(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
