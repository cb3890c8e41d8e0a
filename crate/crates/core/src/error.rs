use thiserror::Error;

/// Errors surfaced by every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied arguments that violate an operation's precondition.
    #[error("usage error: {0}")]
    Usage(String),
    /// Input exceeds a size cap of an exhaustive routine.
    #[error("resource limit exceeded: {0}")]
    Resource(String),
    /// An internal guarantee failed. Seeing this means there is a bug.
    #[error("invariant violated: {0}")]
    Invariant(String),
    /// The end-to-end solver produced an allocation that failed its audit.
    #[error("audit failed: {reason}")]
    Audit { reason: String, dump: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

pub(crate) fn resource(msg: impl Into<String>) -> Error {
    Error::Resource(msg.into())
}

pub(crate) fn invariant(msg: impl Into<String>) -> Error {
    Error::Invariant(msg.into())
}
