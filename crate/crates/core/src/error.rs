use thiserror::Error;

/// Errors raised by the simulation and analysis layers.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an operation's precondition.
    #[error("usage error: {0}")]
    Usage(String),

    /// A protocol definition could not be turned into a well-formed protocol.
    #[error("protocol load error: {0}")]
    Load(String),

    /// Exhaustive enumeration would exceed the configured state-space budget.
    #[error("state-space budget exceeded: |Q|^n = {states}^{n} = {size} > budget {budget}")]
    Budget {
        states: usize,
        n: usize,
        size: f64,
        budget: u64,
    },

    /// Some reachable configuration cannot reach the hitting-time target.
    #[error("target is not reached with probability 1: {0}")]
    NonAbsorbing(String),

    /// Malformed interaction-log or other serialized input.
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}
