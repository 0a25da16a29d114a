use thiserror::Error;

use crate::model::DiagnosticsReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// `<z_j, xi>` (or a pathwise exponent) went past the configured cap.
    #[error("exponent {exponent} exceeds cap {cap}{}", atom.map(|a| format!(" at atom {a}")).unwrap_or_default())]
    ExponentOverflow {
        atom: Option<usize>,
        exponent: f64,
        cap: f64,
    },

    #[error("rate of atom {atom} is negative ({rate}) at state {state:?}")]
    NegativeRate {
        atom: usize,
        rate: f64,
        state: Vec<f64>,
    },

    #[error("rate of atom {atom} ({rate}) exceeds the dominating bound {bound} at state {state:?}")]
    RateBoundExceeded {
        atom: usize,
        rate: f64,
        bound: f64,
        state: Vec<f64>,
    },

    /// The velocity lies outside the effective domain of the Legendre transform,
    /// i.e. the transform is `+inf` there.
    #[error("velocity {alpha:?} is outside the domain of the Legendre transform (escape direction {direction:?})")]
    NonSteep {
        alpha: Vec<f64>,
        direction: Vec<f64>,
    },

    #[error("support point budget of {cap} exceeded")]
    BudgetExceeded { cap: usize },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("path {path} exceeded the event cap of {cap}")]
    EventCapExceeded { path: u64, cap: usize },

    /// Rows whose relative standard error exceeds the configured limit.
    #[error("insufficient samples at h = {h:?}")]
    InsufficientSamples { h: Vec<f64> },

    #[error("hypothesis violation: {}", .0.violation_summary())]
    HypothesisViolation(Box<DiagnosticsReport>),
}

impl Error {
    /// Stable machine-readable code, used in emitted reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidKernel(_) => "invalid_kernel",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::ExponentOverflow { .. } => "exponent_overflow",
            Error::NegativeRate { .. } => "negative_rate",
            Error::RateBoundExceeded { .. } => "rate_bound_exceeded",
            Error::NonSteep { .. } => "non_steep",
            Error::BudgetExceeded { .. } => "budget_exceeded",
            Error::Infeasible(_) => "infeasible",
            Error::EventCapExceeded { .. } => "event_cap_exceeded",
            Error::InsufficientSamples { .. } => "insufficient_samples",
            Error::HypothesisViolation(_) => "hypothesis_violation",
        }
    }
}
