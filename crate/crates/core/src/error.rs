use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite sample at index {index}")]
    NonFinite { index: usize },

    #[error("model is not stable: spectral radius {radius}")]
    Unstable { radius: f64 },

    #[error("DC gain is zero, cannot normalize")]
    ZeroDcGain,

    #[error("invalid model `{name}`: {reason}")]
    InvalidModel { name: String, reason: String },

    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("invalid input schedule: {0}")]
    InvalidInput(String),

    #[error("empty signal")]
    EmptySignal,

    #[error("regressor matrix is rank deficient (rank {rank} < {params} parameters); try lower model orders")]
    RankDeficient { rank: usize, params: usize },

    #[error("{path}:{line}: {reason}")]
    Parse { path: PathBuf, line: u64, reason: String },

    #[error("sample periods differ: {0} vs {1}")]
    PeriodMismatch(f64, f64),

    #[error("index ranges do not overlap")]
    DisjointRanges,

    #[error("degenerate response: all-zero step response over the fit window")]
    DegenerateResponse,

    #[error("{0}")]
    Validation(String),

    #[error("{path}: {source}")]
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

    /// True for errors caused by the filesystem rather than by bad data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
