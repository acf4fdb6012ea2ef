use std::path::PathBuf;

use crate::dynamics::Frame;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("non-finite state or wrench")]
    NonFinite,
    #[error("wrench frame mismatch: expected {expected:?}, got {got:?}")]
    FrameMismatch { expected: Frame, got: Frame },
    #[error("arclength {s} outside terrain span [{start}, {end}]")]
    OutOfBounds { s: f64, start: f64, end: f64 },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("training failed: {0}")]
    Training(String),
    #[error("divergent loss during policy update")]
    Divergent,
    #[error("empty sliding phase in episode log")]
    EmptySlidingPhase,
    #[error("checkpoint version {found} not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("corrupt checkpoint {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
