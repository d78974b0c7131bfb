use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("input value {value} at {location} is not binary")]
    NonBinaryInput { location: String, value: u8 },

    #[error("invalid model: {}", .0.join("; "))]
    InvalidModel(Vec<String>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("realized inputs violate the burden constraints: {0}")]
    InfeasiblePast(String),

    #[error(
        "instance too large for exhaustive enumeration: {candidates} candidates (limit {limit})"
    )]
    TooLarge { candidates: f64, limit: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
