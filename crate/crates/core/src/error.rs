use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by grid construction, model evaluation, data ingestion and
/// scenario validation. Numerical loops never fail; they report degeneracy
/// through return values instead.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid dimension: {0}")]
    InvalidDimension(String),

    #[error("viewpoint index ({elev}, {azim}) out of range for {n_elev}x{n_azim} grid")]
    IndexOutOfRange {
        elev: usize,
        azim: usize,
        n_elev: usize,
        n_azim: usize,
    },

    #[error("theta has {got} coefficients but the {basis} basis needs {expected}")]
    ThetaLength {
        basis: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("singular parameters: {0}")]
    SingularParameters(String),

    #[error("invalid prior bounds: {0}")]
    InvalidBounds(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },

    #[error("no records to replay")]
    EmptyRecords,

    #[error("need at least {needed} samples to fit, got {got}")]
    InsufficientRows { needed: usize, got: usize },

    #[error("design matrix is rank deficient (condition number {condition:.3e}); the sampling grid is probably degenerate for this basis")]
    RankDeficient { condition: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
