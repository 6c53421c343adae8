use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no sign change on [{lo}, {hi}] while solving for {what}")]
    NoBracket { what: String, lo: f64, hi: f64 },

    #[error("threshold construction failed: {0}")]
    Threshold(String),

    #[error("time step {dt:e} exceeds the stability bound {max_dt:e}")]
    StepTooLarge { dt: f64, max_dt: f64 },

    #[error("rods overlap: shifted centers must be strictly increasing (rod {index})")]
    OverlappingRods { index: usize },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("config: {0}")]
    ConfigMissing(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
