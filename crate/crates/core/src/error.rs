use thiserror::Error;

/// Errors raised by model construction, inference and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical failure at iteration {iteration} in block {block}: {detail}")]
    Numerical {
        iteration: usize,
        block: String,
        detail: String,
    },

    #[error("envelope violation: intensity {value} exceeds bound {bound} at ({x}, {y})")]
    Envelope { value: f64, bound: f64, x: f64, y: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
