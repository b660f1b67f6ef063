use thiserror::Error;

/// Errors raised by the sampler and its supporting modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unstable system: rho = {rho:.6} >= 1 (need lambda / (c mu) < 1)")]
    Unstable { rho: f64 },

    #[error("unsupported walk: {0}")]
    Unsupported(String),

    #[error("simultaneous events at time {time}; replication aborted")]
    Tie { time: f64 },

    #[error("resource cap exceeded: {0}")]
    ResourceCap(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
