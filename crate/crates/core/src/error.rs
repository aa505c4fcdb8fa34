use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in row {row}")]
    NonFinite { row: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("CTC infeasible: {frames} frames cannot emit a label path needing at least {required}")]
    CtcInfeasible { frames: usize, required: usize },

    #[error("no CTC path collapses to the labels")]
    NoValidPath,

    #[error("brute-force instance too large: {paths} paths exceeds {limit}")]
    TooLarge { paths: u128, limit: u128 },

    #[error("non-finite loss")]
    NonFiniteLoss,

    #[error("unknown word {0:?}")]
    UnknownWord(String),

    #[error("missing teacher logits for a loss with a teacher-student term")]
    MissingTeacher,

    #[error("vocabulary mismatch: teacher {teacher}, student {student}")]
    VocabularyMismatch { teacher: usize, student: usize },

    #[error("unsupported checkpoint format version {0}")]
    FormatVersion(u32),

    #[error("corrupt file {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },

    #[error("unknown loss recipe {0:?}")]
    Recipe(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
