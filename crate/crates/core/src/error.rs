use alloc::string::String;
use alloc::vec::Vec;

/// Errors produced by the selection core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("degenerate gains: {0}")]
    DegenerateGains(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("singular system: condition estimate {condition:e} exceeds {limit:e}")]
    Singular { condition: f64, limit: f64 },
    #[error("subset search too large: C({n},{k}) = {count} exceeds {limit}")]
    SearchTooLarge {
        n: usize,
        k: usize,
        count: u128,
        limit: u128,
    },
    #[error("generation failed: {0}")]
    Generation(String),
}

impl Error {
    /// True for failures caused by numerics rather than by the caller's input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_) | Error::Singular { .. } | Error::DegenerateGains(_)
        )
    }
}

pub type Result<T> = core::result::Result<T, Error>;
