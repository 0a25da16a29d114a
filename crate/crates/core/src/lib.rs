//! Numerical toolkit for small-noise large deviations of scaled jump processes.
//!
//! A [`JumpKernel`] fixes the Hamiltonian `H(x, xi)`. From it the crate computes
//! the local rate `L(x, alpha)` and its tangent-plane minorants ([`conjugate`]),
//! path actions and the rate function `l(x, y)` ([`action`]), Monte Carlo
//! estimates for the process generated by `(1/h) L^h` ([`simulate`]), and
//! Chernoff-type exit bounds together with the upper-bound report ([`bounds`]).

pub mod action;
pub mod bounds;
pub mod conjugate;
mod error;
mod ext;
pub mod model;
pub mod simulate;
mod target;

pub use action::{
    action_of_path, dp_oracle, minimize_action, rate_to_set, ActionOptions, LatticeSpec, PathAction, PolygonalPath,
    RateFunctionResult, RateToSetOptions, SetRateResult,
};
pub use bounds::{
    chernoff_exit_bound, ldp_report, skeleton_contract_bound, skeleton_event_estimate, ChernoffBound, DirectionSet,
    LdpOptions, LdpReport, SkeletonConfig, TiltPolicy,
};
pub use conjugate::{build_minorant, l1_rate, legendre, try_legendre, ConjugateResult, PiecewiseMinorant, RateProfile};
pub use error::{Error, Result};
pub use ext::ExtendedReal;
pub use model::{check_hypotheses, Atom, DiagnosticsReport, HypothesisProbe, JumpKernel, RateExpr};
pub use simulate::{
    estimate_semigroup, martingale_check, sample_path, sample_tilted, McEstimate, SimConfig, TiltConfig, Trajectory,
};
pub use target::{Observable, TargetSet};
