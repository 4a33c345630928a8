use alloc::string::String;
use thiserror::Error;

/// Errors surfaced by the core library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid data: {0}")]
    Data(String),
    /// A NaN or Inf was produced mid-run; `step` is the offending step index.
    #[error("numerical failure at step {step}: {what}")]
    Numerical { step: u64, what: String },
    #[error("training failure: {0}")]
    Training(String),
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<(), CoreError> {
    if expected == got {
        Ok(())
    } else {
        Err(CoreError::Shape { expected, got })
    }
}
