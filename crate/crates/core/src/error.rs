use thiserror::Error;

/// Errors raised by the analytical and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value violates its invariants.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The port count leaves less than the minimum coding blocklength.
    #[error("infeasible port count {n}: effective blocklength {blocklength} is below the minimum {l_min}")]
    InfeasiblePortCount {
        n: usize,
        blocklength: f64,
        l_min: u32,
    },

    /// No port count satisfies the frame and reliability constraints.
    #[error("no feasible solution: {0}")]
    NoFeasibleSolution(String),

    /// An iterative method failed to converge or overflowed.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The channel model is inconsistent (e.g. a covariance that is not PSD).
    #[error("model error: {0}")]
    Model(String),

    /// A power-law fit produced a non-physical exponent.
    #[error("model fit error: {0}")]
    ModelFit(String),

    /// Mismatched inputs, e.g. a sampling mode without the required channel form.
    #[error("usage error: {0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, Error>;
