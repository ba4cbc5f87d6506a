use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EchoError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("dense propagator refused for N = {n}: limit is N <= {limit}")]
    DenseTooLarge { n: usize, limit: usize },

    #[error("state not normalized: norm^2 = {norm_sqr:.3e} (tolerance {tol:.1e})")]
    NotNormalized { norm_sqr: f64, tol: f64 },

    #[error("step budget exceeded: run needs {estimated} Floquet steps, budget is {budget}")]
    StepBudgetExceeded { estimated: u64, budget: u64 },

    #[error("insufficient points in fit window [{t_lo}, {t_hi}]: found {found}, need {needed}")]
    InsufficientPoints {
        t_lo: f64,
        t_hi: f64,
        found: usize,
        needed: usize,
    },

    #[error("invalid fit input: {0}")]
    InvalidFitInput(String),
}

pub type Result<T> = std::result::Result<T, EchoError>;
