use thiserror::Error;

/// Library error type. Every fallible operation narrows its failure to one of
/// these variants so callers (CLI, scanner, Python bindings) can route them
/// uniformly.
#[derive(Debug, Error)]
pub enum Error {
    /// An element, coordinate vector, or table has the wrong shape for the
    /// group it is used with.
    #[error("shape error: {0}")]
    Shape(String),

    /// A scalar argument is outside its documented domain.
    #[error("argument error: {0}")]
    Argument(String),

    /// An enumeration would exceed a hard combinatorial budget.
    /// Carries the offending size so the caller can report it.
    #[error("budget exceeded in {what}: size {size} > limit {limit}")]
    Budget {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    /// Two quantities that are equal by an algebraic identity disagreed past
    /// tolerance. This always indicates a normalization bug, never bad data.
    #[error("identity audit failure in {what}: residual {residual:e} > {tolerance:e}")]
    IdentityAudit {
        what: &'static str,
        residual: f64,
        tolerance: f64,
    },

    /// Objects from two different groups were mixed.
    #[error("group mismatch: {0}")]
    GroupMismatch(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;
