use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate: zero Sharpe")]
    ZeroSharpe,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("quantile level must lie strictly inside (0, 1), got {0}")]
    QuantileOutOfRange(f64),

    #[error("non-finite update at iteration {iteration}; parameters: {snapshot}")]
    NonFinite { iteration: usize, snapshot: String },

    #[error("ill-conditioned kernel")]
    IllConditionedKernel,

    #[error("no critic model for grid time {0}")]
    MissingCritic(f64),

    #[error("optimizer failed to converge from every start: {0}")]
    OptimizerFailed(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}
