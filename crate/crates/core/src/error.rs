use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("layout mismatch: expected {expected} variables, found {found}")]
    LayoutMismatch { expected: usize, found: usize },

    #[error("unknown variable {0}")]
    UnknownVariable(String),

    #[error("invalid Hamiltonian: {0}")]
    InvalidHamiltonian(String),

    #[error("unknown scenario {0:?}; expected one of one-axis, one-gas-two-beams, two-separate, two-sequential, two-entangled, six-gas-vector")]
    UnknownScenario(String),

    #[error("numerical conditioning: {0}")]
    NumericalConditioning(String),

    #[error("covariance is not in two-mode standard form (residual {residual:.3e} > tolerance {tolerance:.3e})")]
    NotStandardForm { residual: f64, tolerance: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite value encountered at step {step}")]
    NonFinite { step: u64 },
}
