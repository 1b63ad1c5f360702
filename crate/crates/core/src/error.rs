use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("no valid candle rows in {path} ({dropped} rows dropped)")]
    NoValidRows { path: PathBuf, dropped: usize },

    #[error("{count} duplicate timestamps in input (first: {first})")]
    DuplicateTimestamps { count: usize, first: i64 },

    #[error("input too short: need at least {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("cannot normalize a constant series (min = max = {0})")]
    ConstantSeries(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("singular regression matrix: {0}")]
    Singular(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error("episode already finished")]
    EpisodeDone,

    #[error("action index {0} out of range")]
    ActionOutOfRange(usize),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
