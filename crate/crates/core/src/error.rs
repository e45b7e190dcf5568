use std::time::Duration;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied arguments that violate an operation's preconditions.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// A file or serialized region did not match the expected layout.
    #[error("format error: {0}")]
    Format(String),

    #[error("rank {target} has no visible region named {name:?}")]
    RegionNotFound { target: usize, name: String },

    #[error("rank {rank}: barrier timed out after {timeout:?} (mismatched barrier counts?)")]
    Deadlock { rank: usize, timeout: Duration },

    #[error("rank {rank} aborted: another rank failed")]
    WorldAborted { rank: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}
