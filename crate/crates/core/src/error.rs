use thiserror::Error;

/// Errors produced by dataset handling, losses, metrics, and training.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: parse error: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("record '{id}': feature dimension {got} does not match dataset dimension {expected}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        got: usize,
    },

    #[error("duplicate record id '{id}'")]
    DuplicateId { id: String },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("{what} contains a non-finite value")]
    NonFinite { what: String },

    #[error("{field}: {msg}")]
    InvalidConfig { field: String, msg: String },

    #[error("split '{split}' received zero records although its fraction is positive")]
    EmptySplit { split: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("{metric} is undefined: {reason}")]
    UndefinedMetric { metric: String, reason: String },

    #[error("batch of size {n} is too small for a rank loss without cached comparisons")]
    BatchTooSmall { n: usize },

    #[error("activation trace is stale: model parameters changed since the forward pass")]
    StaleTrace,

    #[error("input point is within {distance:.3e} of a loss kink; need at least {required:.3e}")]
    KinkProximity { distance: f64, required: f64 },

    #[error("selection returned zero records")]
    EmptySelection,

    #[error("pseudo-label pool is empty")]
    EmptyPool,

    #[error("group '{group}' is empty")]
    EmptyGroup { group: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
