use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter or policy violates its documented range.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A formula was evaluated outside its mathematical domain.
    #[error("numerical domain error: {0}")]
    Domain(String),

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: u64, got: u64 },

    /// Estimation broke down, e.g. Alice and Bob are fully decorrelated.
    #[error("degenerate estimate: {0}")]
    Degenerate(String),

    #[error("failed to allocate storage for {requested} pulses")]
    Allocation { requested: usize },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
