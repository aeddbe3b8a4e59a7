//! Error type shared by every module of the library.

use thiserror::Error;

/// Errors raised by library operations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum AilError {
    #[error("invalid score vector: {0}")]
    InvalidScore(String),
    #[error("action {action} out of range for K = {k}")]
    ActionOutOfRange { action: usize, k: usize },
    #[error("unknown context {context} (domain size {size})")]
    UnknownContext { context: usize, size: usize },
    #[error("unknown member {member} (class size {size})")]
    UnknownMember { member: usize, size: usize },
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("mismatch: {0}")]
    Mismatch(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("search exceeds resource cap: {0}")]
    ResourceCap(String),
}

pub type Result<T> = std::result::Result<T, AilError>;

pub(crate) fn invalid(msg: impl Into<String>) -> AilError {
    AilError::InvalidParameter(msg.into())
}

pub(crate) fn mismatch(msg: impl Into<String>) -> AilError {
    AilError::Mismatch(msg.into())
}
