use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("pose ({x:.3}, {y:.3}) is outside the map")]
    OutOfBounds { x: f64, y: f64 },
    #[error("no path between start and goal")]
    NoPath,
    #[error("invalid planner input: {0}")]
    PlanInput(String),
    #[error("optimization diverged: {0}")]
    Diverged(String),
    #[error("prediction unavailable: {0}")]
    PredictionUnavailable(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("metrics unavailable: {0}")]
    MetricsUnavailable(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    /// Process exit code for the CLI: 1 for bad input, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Format(_)
            | Error::Validation(_)
            | Error::OutOfBounds { .. }
            | Error::Config(_)
            | Error::Usage(_)
            | Error::Io(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
