//! Legendre–Fenchel conjugation of the jump Hamiltonian.
//!
//! `L(x, alpha) = sup_xi <alpha, xi> - H(x, xi)` is the running cost of moving
//! with velocity `alpha` from state `x`. It is finite exactly on the open convex
//! hull of the range of `grad_xi H(x, .)`; outside it the Newton ascent diverges
//! and the transform is reported as `+inf` (`Error::NonSteep`).

mod legendre;
mod minorant;

pub use legendre::{l1_rate, legendre, legendre_with, try_legendre, ConjugateResult, NewtonOptions, RateProfile};
pub use minorant::{build_minorant, build_minorant_with, MinorantOptions, PiecewiseMinorant};
