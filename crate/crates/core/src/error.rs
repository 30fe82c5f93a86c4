use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}: line {line}: {message}")]
    Malformed {
        file: String,
        line: u64,
        message: String,
    },

    #[error("duplicate record_id {id:?} at line {line}")]
    DuplicateRecord { id: String, line: u64 },

    #[error("invalid ICD-10 code {0:?}")]
    InvalidIcd10(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate cohort: {positives} positive and {negatives} negative samples (need at least 2 of each)")]
    DegenerateCohort { positives: usize, negatives: usize },

    #[error("both classes must be present")]
    SingleClass,

    #[error("shape mismatch: expected {expected} columns, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("non-finite feature value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("AUC undefined: labels contain a single class")]
    AucUndefined,

    #[error("{op} is not supported for {kind} models")]
    UnsupportedModel { op: &'static str, kind: String },

    #[error("unrecognized format: missing SEPM magic header")]
    UnrecognizedFormat,

    #[error("unsupported version: model file version {found}, this build reads up to {supported}")]
    UnsupportedVersion { found: u16, supported: u16 },

    #[error("corrupted model file: {0}")]
    CorruptedModel(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("infeasible synthetic configuration: {0}")]
    Synth(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
