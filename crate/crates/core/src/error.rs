use thiserror::Error;

/// Errors raised across the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("Hilbert space mismatch: {left:?} vs {right:?}")]
    SpaceMismatch { left: Vec<usize>, right: Vec<usize> },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular configuration: {0}")]
    Singularity(String),

    #[error("population {0} implies inversion (must be < 0.5)")]
    PopulationInversion(f64),

    #[error("integration failure at t = {time} ns: {reason}; try a smaller dt")]
    IntegrationFailure { time: f64, reason: String },

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("resource guard: {0}")]
    ResourceGuard(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("peak seeding failed: {0}")]
    Seeding(String),

    #[error("unphysical fit: {0}")]
    Unphysical(String),

    #[error("frequency {omega} rad/s outside tabulated range [{lo}, {hi}]")]
    Extrapolation { omega: f64, lo: f64, hi: f64 },

    #[error("lossless network: Re Y = {0} at the mode frequency")]
    LosslessNetwork(f64),

    #[error("ordering error: {0}")]
    Ordering(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
