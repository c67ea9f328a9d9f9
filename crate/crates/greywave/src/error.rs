//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: csv error: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}:{line}: malformed row: {message}")]
    MalformedRow {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}:{line}: rating {value} out of scale [{min}, {max}]")]
    RatingOutOfScale {
        path: PathBuf,
        line: u64,
        value: i64,
        min: i32,
        max: i32,
    },

    #[error("{path}: no ratings found")]
    EmptyDataset { path: PathBuf },

    #[error("rating {value} out of scale [{min}, {max}]")]
    RatingOutOfRange { value: i32, min: i32, max: i32 },

    #[error("unknown user id `{0}`")]
    UnknownUser(String),

    #[error("unknown item id `{0}`")]
    UnknownItem(String),

    #[error("sample size {requested} exceeds user count {available}")]
    SampleTooLarge { requested: usize, available: usize },

    #[error("matrix has no ratings")]
    EmptyMatrix,

    #[error("{kind} item pool has {available} items, need {requested}")]
    PoolTooSmall {
        kind: String,
        requested: usize,
        available: usize,
    },

    #[error("filler pool exhausted: need {requested} items, have {available}")]
    FillerExhausted { requested: usize, available: usize },

    #[error("attack size {0} yields zero attackers")]
    ZeroAttackers(f64),

    #[error("invalid attack spec: {0}")]
    InvalidAttackSpec(String),

    #[error("signal of length {len} is shorter than the {filter}-tap filter")]
    SignalTooShort { len: usize, filter: usize },

    #[error("decomposition level {level} too deep for signal of length {len}")]
    LevelTooDeep { level: usize, len: usize },

    #[error("approximation/detail length mismatch: {approx} vs {detail}")]
    LengthMismatch { approx: usize, detail: usize },

    #[error("empty input signal")]
    EmptySignal,

    #[error("need at least 2 users, got {0}")]
    TooFewUsers(usize),

    #[error("non-finite feature value for user `{0}`")]
    NonFiniteFeature(String),

    #[error("set of attacker profiles is empty")]
    EmptyAttackerSet,

    #[error("set of genuine profiles is empty")]
    EmptyGenuineSet,

    #[error("no prediction pairs")]
    EmptyPairs,

    #[error("holdout selected no ratings")]
    EmptyHoldout,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: json error: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}
