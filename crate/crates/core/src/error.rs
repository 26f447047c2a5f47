use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch, {left} vs {right}")]
    Shape {
        op: &'static str,
        left: String,
        right: String,
    },

    #[error("input window is empty")]
    EmptyWindow,

    #[error("non-finite gradient in parameter block `{block}`")]
    NonFiniteGradient { block: String },

    #[error("unknown optimizer `{name}` (expected one of: adam, nag, momentum)")]
    UnknownOptimizer { name: String },

    #[error("unknown cell `{name}` (expected one of: lstm, gru)")]
    UnknownCell { name: String },

    #[error("invalid hyperparameter {field} = {value}: must satisfy {bound}")]
    Hyperparameter {
        field: &'static str,
        value: f64,
        bound: &'static str,
    },

    #[error("invalid training configuration: {0}")]
    Config(String),

    #[error("csv: {0}")]
    Csv(String),

    #[error("csv: missing required column `{0}`")]
    MissingColumn(String),

    #[error("csv: no data rows")]
    NoDataRows,

    #[error("csv line {line}: duplicate date {date}")]
    DuplicateDate { date: String, line: u64 },

    #[error("cannot repair series: {0}")]
    Repair(String),

    #[error("degenerate scaling range: min {min} equals max {max}")]
    DegenerateRange { min: f64, max: f64 },

    #[error("series of length {len} is too short for lookback {lookback}")]
    SeriesTooShort { len: usize, lookback: usize },

    #[error("invalid split fractions: {0}")]
    Split(String),

    #[error("{name} partition has {len} points, needs at least {needed} (lookback + 1)")]
    PartitionTooSmall {
        name: &'static str,
        len: usize,
        needed: usize,
    },

    #[error("non-finite loss at epoch {epoch}, sample {sample}")]
    NonFiniteLoss { epoch: usize, sample: usize },

    #[error("non-finite gradient in parameter block `{block}` at epoch {epoch}, sample {sample}")]
    Diverged {
        block: String,
        epoch: usize,
        sample: usize,
    },

    #[error("length mismatch: {left} predictions vs {right} targets")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input")]
    Empty,

    #[error("negative loss {0} has no logarithm")]
    NegativeLoss(f64),

    #[error("snapshot line {line}: {msg}")]
    Snapshot { line: usize, msg: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
