use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation (e.g. a diagonal pair).
    #[error("domain error: {0}")]
    Domain(String),
    /// A request exceeds the range the available data can answer reliably.
    #[error("range error: {0}")]
    Range(String),
    /// Bad preset name, malformed group file or missing configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// The operation is not defined for this kind of group.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// The predicted table size exceeds the configured cap.
    #[error("memory guard: predicted {predicted} entries exceeds the cap of {cap}")]
    MemoryGuard { predicted: u64, cap: u64 },
    /// A value violates a type invariant.
    #[error("invalid value: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
