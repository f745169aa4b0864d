use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A value lies outside the physical domain of a model equation.
    #[error("domain error: {0}")]
    Domain(String),
    /// An input lies outside its admissible range.
    #[error("range error: {0}")]
    Range(String),
    /// A configuration value violates an invariant.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    /// An iterative solver did not converge.
    #[error("no convergence after {iterations} iterations: {what}")]
    Convergence { what: String, iterations: usize },
    /// Two distinct products produce indistinguishable readout levels.
    #[error("degenerate level table: products {0} and {1} are within 1 uV")]
    Degenerate(u32, u32),
    /// Rejection sampling could not produce a valid device.
    #[error("parameter resampling exhausted after {0} attempts")]
    ResampleExhausted(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
