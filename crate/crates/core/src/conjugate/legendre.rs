use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ext::ExtendedReal;
use crate::model::{DominatingHamiltonian, JumpKernel};

/// Stopping rules for the Newton ascent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Converged when `|grad H(xi) - alpha| <= tol * (1 + |alpha|)`.
    pub tol: f64,
    pub max_iter: usize,
    /// A maximizer estimate beyond this norm is read as divergence.
    pub max_norm: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tol: 1e-10, max_iter: 60, max_norm: 1e3 }
    }
}

/// `L(x, alpha) = sup_xi <alpha, xi> - H(x, xi)` together with its maximizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjugateResult {
    pub value: f64,
    /// `xi*`; also the gradient of `L(x, .)` at `alpha`.
    pub maximizer: Vec<f64>,
    /// Hessian of `L(x, .)` at `alpha`: the inverse Hessian of `H(x, .)` at `xi*`.
    pub curvature: DMatrix<f64>,
    pub iterations: usize,
    pub residual: f64,
}

impl ConjugateResult {
    /// Smallest eigenvalue of `curvature`.
    pub fn min_curvature(&self) -> f64 {
        self.curvature.clone().symmetric_eigenvalues().min()
    }
}

pub fn legendre(kernel: &JumpKernel, x: &[f64], alpha: &[f64]) -> Result<ConjugateResult> {
    legendre_with(kernel, x, alpha, &NewtonOptions::default())
}

/// Like [`legendre`], but maps `NonSteep` (an infinite transform) to `None`.
pub fn try_legendre(kernel: &JumpKernel, x: &[f64], alpha: &[f64]) -> Result<Option<ConjugateResult>> {
    match legendre(kernel, x, alpha) {
        Ok(r) => Ok(Some(r)),
        Err(Error::NonSteep { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Damped Newton ascent on the strictly concave `xi -> <alpha, xi> - H(x, xi)`,
/// started at `xi = 0`, halving the step until the objective increases.
pub fn legendre_with(
    kernel: &JumpKernel,
    x: &[f64],
    alpha: &[f64],
    opts: &NewtonOptions,
) -> Result<ConjugateResult> {
    let d = kernel.dim;
    if x.len() != d || alpha.len() != d {
        return Err(Error::InvalidArgument(format!(
            "state/velocity dimension mismatch: kernel dim {d}, x {}, alpha {}",
            x.len(),
            alpha.len()
        )));
    }
    if alpha.iter().chain(x).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite state or velocity".into()));
    }
    let a = DVector::from_column_slice(alpha);
    let tol = opts.tol * (1.0 + a.norm());
    let non_steep = |dir: &DVector<f64>| {
        let n = dir.norm();
        let direction = if n > 0.0 { (dir / n).iter().copied().collect() } else { vec![0.0; d] };
        Error::NonSteep { alpha: alpha.to_vec(), direction }
    };

    let mut xi = DVector::<f64>::zeros(d);
    let (h0, mut g, mut hess) = kernel.hamiltonian_all(x, xi.as_slice())?;
    let mut phi = a.dot(&xi) - h0;

    for it in 0..opts.max_iter {
        let resid = &g - &a;
        let rn = resid.norm();
        if rn <= tol {
            return Ok(finish(xi, phi, &hess, it, rn));
        }

        let ascent = &a - &g;
        let eig = hess.clone().symmetric_eigen();
        let lam_max = eig.eigenvalues.max().max(0.0);
        let mut step = DVector::<f64>::zeros(d);
        for (i, &lam) in eig.eigenvalues.iter().enumerate() {
            let v = eig.eigenvectors.column(i);
            let comp = v.dot(&ascent);
            if lam > 1e-13 * lam_max && lam > 1e-300 {
                step.axpy(comp / lam, &v, 1.0);
            } else if comp.abs() > tol {
                // H is flat along v while the objective keeps rising: L = +inf.
                return Err(non_steep(&(v * comp.signum())));
            }
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = &xi + &step * t;
            if cand.norm() > opts.max_norm {
                return Err(non_steep(&cand));
            }
            match kernel.hamiltonian_all(x, cand.as_slice()) {
                Ok((hc, gc, hsc)) => {
                    let phic = a.dot(&cand) - hc;
                    let rc = (&gc - &a).norm();
                    let flat = phic >= phi - 4.0 * f64::EPSILON * (1.0 + phi.abs());
                    if phic > phi || (flat && rc < rn) {
                        accepted = Some((cand, gc, hsc, phic));
                        break;
                    }
                }
                Err(Error::ExponentOverflow { .. }) => {}
                Err(e) => return Err(e),
            }
            t *= 0.5;
        }
        match accepted {
            Some((c, gc, hsc, phic)) => {
                xi = c;
                g = gc;
                hess = hsc;
                phi = phic;
            }
            None if rn <= 1e-7 * (1.0 + a.norm()) => {
                return Ok(finish(xi, phi, &hess, it, rn));
            }
            None => return Err(non_steep(&step)),
        }
    }
    let rn = (&g - &a).norm();
    if rn <= tol {
        return Ok(finish(xi, phi, &hess, opts.max_iter, rn));
    }
    Err(non_steep(&xi))
}

fn finish(xi: DVector<f64>, phi: f64, hess: &DMatrix<f64>, iterations: usize, residual: f64) -> ConjugateResult {
    let d = xi.len();
    let eig = hess.clone().symmetric_eigen();
    let lam_max = eig.eigenvalues.max().max(0.0);
    let mut curvature = DMatrix::zeros(d, d);
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        // pseudo-inverse: directions where H is flat carry no curvature
        if lam > 1e-13 * lam_max && lam > 1e-300 {
            let v = eig.eigenvectors.column(i);
            curvature.ger(1.0 / lam, &v, &v, 1.0);
        }
    }
    ConjugateResult {
        value: phi.max(0.0),
        maximizer: xi.iter().copied().collect(),
        curvature,
        iterations,
        residual,
    }
}

/// The conjugate `L_1` of the dominating Hamiltonian `H_1`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateProfile {
    pub dominating: DominatingHamiltonian,
}

impl RateProfile {
    pub fn new(dominating: DominatingHamiltonian) -> Self {
        RateProfile { dominating }
    }

    pub fn from_kernel(kernel: &JumpKernel) -> Self {
        RateProfile::new(DominatingHamiltonian::from_kernel(kernel))
    }

    pub fn dim(&self) -> usize {
        self.dominating.kernel().dim
    }
}

/// `L_1(alpha)`, with `+inf` wherever the transform diverges.
pub fn l1_rate(profile: &RateProfile, alpha: &[f64]) -> ExtendedReal {
    let k = profile.dominating.kernel();
    let origin = vec![0.0; k.dim];
    match legendre(k, &origin, alpha) {
        Ok(r) => ExtendedReal::Finite(r.value),
        Err(_) => ExtendedReal::PosInf,
    }
}
