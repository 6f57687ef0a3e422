use thiserror::Error;

/// Errors raised by tree construction, environments and the simulators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid tree: {0}")]
    InvalidSpec(String),
    #[error("leaf count overflows u64")]
    Overflow,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("lookup failed: {0}")]
    Lookup(String),
    #[error("environment is not summable: {0}")]
    Divergence(String),
    #[error("clock mass exhausted: requested {requested}, generated {available}")]
    HorizonExhausted { requested: f64, available: f64 },
    #[error("memory cap exceeded: {needed} values requested, cap is {cap}")]
    MemoryCap { needed: u64, cap: u64 },
    #[error("trajectories do not match structurally: {0}")]
    NoMatch(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
