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

    #[error("malformed JSON in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("invalid keep range [{lo}, {hi}]")]
    InvalidRange { lo: f64, hi: f64 },

    #[error("invalid value: {0}")]
    Invalid(String),

    #[error("sample {sample_id:?} is missing statistic {stat:?}")]
    MissingStat { sample_id: String, stat: String },

    #[error("statistic {stat:?} is produced by both {first:?} and {second:?}")]
    StatCollision {
        stat: String,
        first: String,
        second: String,
    },

    #[error("asset {path}: {reason}")]
    Asset { path: PathBuf, reason: String },

    #[error("perplexity is undefined for text with zero tokens")]
    UndefinedPerplexity,

    #[error("scorer {command:?} exited with {status}: {stderr_tail}")]
    ScorerFailed {
        command: String,
        status: String,
        stderr_tail: String,
    },

    #[error("scorer output is missing id {0:?}")]
    ScorerMissingId(String),

    #[error("scorer protocol violation: {0}")]
    ScorerProtocol(String),

    #[error("unknown mapper {0:?}")]
    UnknownMapper(String),

    #[error("metric names differ: {left:?} vs {right:?}")]
    MetricMismatch {
        left: Vec<String>,
        right: Vec<String>,
    },

    #[error("baseline metrics sum to zero")]
    ZeroBaseline,

    #[error("series {label:?} has length {len}, expected {expected}")]
    LengthMismatch {
        label: String,
        len: usize,
        expected: usize,
    },

    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },

    #[error("cluster count {k} out of range for {items} items")]
    ClusterCount { k: usize, items: usize },

    #[error("max_order {max_order} exceeds the {available} ranked operators")]
    MaxOrder { max_order: usize, available: usize },

    #[error("no frozen boundaries for operator {0:?}")]
    MissingBoundaries(String),

    #[error("pyramid over {requested} operators exceeds the configured maximum of {max}")]
    PyramidTooLarge { requested: usize, max: usize },

    #[error("pyramid is empty")]
    EmptyPyramid,

    #[error("requested {requested} samples but only {available} are available")]
    NotEnoughSamples { requested: usize, available: usize },

    #[error("trainer exited with {status}: {stderr_tail}")]
    TrainerFailed { status: String, stderr_tail: String },

    #[error("trainer protocol violation: {0}")]
    TrainerProtocol(String),

    #[error("{0}")]
    Config(String),

    #[error("unknown hook {0:?}")]
    UnknownHook(String),

    #[error("unknown capability factory {0:?}")]
    UnknownFactory(String),

    #[error("duplicate job id {0:?}")]
    DuplicateJob(String),

    #[error("ledger error: {0}")]
    Ledger(String),

    #[error("parameter grid is empty")]
    EmptyGrid,

    #[error("iteration chain error: {0}")]
    Chain(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}
