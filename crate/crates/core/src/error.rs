use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("impossible observation {obs} at step {step}")]
    ImpossibleObservation { step: usize, obs: usize },
    #[error("unreachable history at step {step}")]
    Unreachable { step: usize },
    #[error("no policy row at step {step} for key {key}")]
    MissingRow { step: usize, key: String },
    #[error("enumeration needs {needed} entries, cap is {cap}")]
    CapExceeded { needed: u128, cap: u128 },
    #[error("truncation left no well-visited state at step {step}")]
    Truncation { step: usize },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("linear program failed: {0}")]
    Lp(String),
    #[error("oracle inequality violated: {0}")]
    Oracle(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
