use thiserror::Error;

/// Errors produced by the amplification toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("factor index {index} out of range for a {factors}-factor space")]
    FactorIndex { index: usize, factors: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("occupation {n} exceeds cutoff {cutoff}")]
    ExceedsCutoff { n: u64, cutoff: usize },

    #[error("invalid probability vector: {0}")]
    InvalidDistribution(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("gain must satisfy {requirement}, got {gain}")]
    InvalidGain { gain: f64, requirement: &'static str },

    #[error("gain {gain} is not an integer power of step gain {step_gain}")]
    NotAPower { gain: u64, step_gain: u64 },

    #[error("reservoir cannot supply {required} excitations, only {available} available")]
    InsufficientReservoir { required: u64, available: u64 },

    #[error("truncation leakage {leakage:e} over the top {levels} levels exceeds {limit:e}")]
    TruncationLeakage { leakage: f64, levels: usize, limit: f64 },

    #[error("transfer pair violates |T|^2 + |R|^2 = 1 by {deviation:e}{}", row.map(|r| format!(" (row {r})")).unwrap_or_default())]
    NonUnitary { deviation: f64, row: Option<usize> },

    #[error("malformed table: {0}")]
    Table(String),
}

pub type Result<T> = std::result::Result<T, Error>;
