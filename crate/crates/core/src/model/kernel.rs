use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::rate::{dot, RateExpr};
use crate::error::{Error, Result};

/// Default cap on arguments passed to `exp`.
pub const DEFAULT_EXPONENT_CAP: f64 = 700.0;

/// One jump atom: displacement `z` fired at intensity `rate(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub z: Vec<f64>,
    pub rate: RateExpr,
}

/// A finite-activity, state-dependent jump kernel `mu_x = sum_j lambda_j(x) delta_{z_j}`.
///
/// The JSON form is `{"dim": d, "atoms": [{"z": [..], "rate": {..}}], "rate_bound": r}`.
/// Kernels with densities must be quadratured into atoms before use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpKernel {
    pub dim: usize,
    pub atoms: Vec<Atom>,
    /// Uniform bound on every atom rate; used for thinning and validated at probes.
    pub rate_bound: f64,
    #[serde(skip, default = "default_cap")]
    exponent_cap: f64,
}

fn default_cap() -> f64 {
    DEFAULT_EXPONENT_CAP
}

impl JumpKernel {
    pub fn new(dim: usize, atoms: Vec<Atom>, rate_bound: f64) -> Result<Self> {
        let k = JumpKernel { dim, atoms, rate_bound, exponent_cap: DEFAULT_EXPONENT_CAP };
        k.validate()?;
        Ok(k)
    }

    /// Single atom `z = 1` with constant rate `rate` in one dimension.
    pub fn unit_jump(rate: f64) -> Self {
        JumpKernel::new(1, vec![Atom { z: vec![1.0], rate: RateExpr::constant(rate) }], rate)
            .expect("unit jump kernel")
    }

    /// Atoms `z = +1` and `z = -1`, each with constant rate `rate`.
    pub fn symmetric_unit(rate: f64) -> Self {
        JumpKernel::new(
            1,
            vec![
                Atom { z: vec![1.0], rate: RateExpr::constant(rate) },
                Atom { z: vec![-1.0], rate: RateExpr::constant(rate) },
            ],
            rate,
        )
        .expect("symmetric kernel")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let k: JumpKernel =
            serde_json::from_str(s).map_err(|e| Error::InvalidKernel(e.to_string()))?;
        k.validate()?;
        Ok(k)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("kernel serializes")
    }

    pub fn with_exponent_cap(mut self, cap: f64) -> Self {
        self.exponent_cap = cap;
        self
    }

    pub fn exponent_cap(&self) -> f64 {
        self.exponent_cap
    }

    /// Structural checks. Rates that are bounded in closed form are checked
    /// against `rate_bound` and for nonnegativity here; affine rates can only
    /// be checked at probe points.
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidKernel("dim must be positive".into()));
        }
        if !(self.rate_bound.is_finite() && self.rate_bound >= 0.0) {
            return Err(Error::InvalidKernel(format!(
                "rate_bound must be finite and nonnegative, got {}",
                self.rate_bound
            )));
        }
        if self.atoms.is_empty() {
            return Err(Error::InvalidKernel("kernel has no atoms".into()));
        }
        for (j, atom) in self.atoms.iter().enumerate() {
            if atom.z.len() != self.dim {
                return Err(Error::InvalidKernel(format!(
                    "atom {j}: z has length {}, expected {}",
                    atom.z.len(),
                    self.dim
                )));
            }
            if atom.z.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidKernel(format!("atom {j}: z is not finite")));
            }
            if let Some(n) = atom.rate.coeff_dim() {
                if n != self.dim {
                    return Err(Error::InvalidKernel(format!(
                        "atom {j}: rate coefficients have length {n}, expected {}",
                        self.dim
                    )));
                }
            }
            if let Some(lo) = atom.rate.inf() {
                if lo < 0.0 {
                    return Err(Error::InvalidKernel(format!(
                        "atom {j}: rate attains negative value {lo}"
                    )));
                }
            }
            if let Some(hi) = atom.rate.sup() {
                if hi > self.rate_bound * (1.0 + 1e-12) {
                    return Err(Error::InvalidKernel(format!(
                        "atom {j}: rate supremum {hi} exceeds rate_bound {}",
                        self.rate_bound
                    )));
                }
            }
        }
        if self.atoms.iter().all(|a| a.z.iter().all(|&c| c == 0.0)) {
            return Err(Error::InvalidKernel("every atom has zero displacement".into()));
        }
        Ok(())
    }

    pub fn is_state_independent(&self) -> bool {
        self.atoms.iter().all(|a| a.rate.is_constant())
    }

    /// Atom rates at `x`, rejecting negative values.
    pub fn rates(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.atoms.len());
        for (j, atom) in self.atoms.iter().enumerate() {
            let r = atom.rate.eval(x);
            if !(r >= 0.0) {
                return Err(Error::NegativeRate { atom: j, rate: r, state: x.to_vec() });
            }
            out.push(r);
        }
        Ok(out)
    }

    fn exponents(&self, xi: &[f64]) -> Result<Vec<f64>> {
        self.atoms
            .iter()
            .enumerate()
            .map(|(j, a)| {
                let u = dot(&a.z, xi);
                if u > self.exponent_cap || u.is_nan() {
                    Err(Error::ExponentOverflow { atom: Some(j), exponent: u, cap: self.exponent_cap })
                } else {
                    Ok(u)
                }
            })
            .collect()
    }

    /// `H(x, xi) = sum_j lambda_j(x) (exp<z_j, xi> - 1 - <z_j, xi>)`.
    pub fn hamiltonian(&self, x: &[f64], xi: &[f64]) -> Result<f64> {
        let rates = self.rates(x)?;
        self.hamiltonian_with_rates(&rates, xi)
    }

    pub(crate) fn hamiltonian_with_rates(&self, rates: &[f64], xi: &[f64]) -> Result<f64> {
        let us = self.exponents(xi)?;
        Ok(rates.iter().zip(&us).map(|(r, &u)| r * exp_remainder(u)).sum())
    }

    /// Gradient and Hessian of `H(x, .)` at `xi`.
    pub fn hamiltonian_derivatives(
        &self,
        x: &[f64],
        xi: &[f64],
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let rates = self.rates(x)?;
        let us = self.exponents(xi)?;
        let d = self.dim;
        let mut grad = DVector::zeros(d);
        let mut hess = DMatrix::zeros(d, d);
        for ((atom, r), u) in self.atoms.iter().zip(&rates).zip(&us) {
            let z = DVector::from_column_slice(&atom.z);
            grad.axpy(r * u.exp_m1(), &z, 1.0);
            hess.ger(r * u.exp(), &z, &z, 1.0);
        }
        Ok((grad, hess))
    }

    /// Value, gradient and Hessian together; one rate evaluation.
    pub(crate) fn hamiltonian_all(
        &self,
        x: &[f64],
        xi: &[f64],
    ) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
        let rates = self.rates(x)?;
        let us = self.exponents(xi)?;
        let d = self.dim;
        let mut value = 0.0;
        let mut grad = DVector::zeros(d);
        let mut hess = DMatrix::zeros(d, d);
        for ((atom, r), &u) in self.atoms.iter().zip(&rates).zip(&us) {
            if *r == 0.0 {
                continue;
            }
            value += r * exp_remainder(u);
            let z = DVector::from_column_slice(&atom.z);
            grad.axpy(r * u.exp_m1(), &z, 1.0);
            hess.ger(r * u.exp(), &z, &z, 1.0);
        }
        Ok((value, grad, hess))
    }

    /// Compensator drift `-sum_j lambda_j(x) z_j` given the rates at `x`.
    pub(crate) fn drift_with_rates(&self, rates: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (atom, r) in self.atoms.iter().zip(rates) {
            for (o, z) in out.iter_mut().zip(&atom.z) {
                *o -= r * z;
            }
        }
    }
}

/// `e^u - 1 - u`, accurate near zero and never negative.
pub(crate) fn exp_remainder(u: f64) -> f64 {
    if u.abs() < 1e-3 {
        let u2 = u * u;
        u2 * (0.5 + u * (1.0 / 6.0 + u * (1.0 / 24.0 + u * (1.0 / 120.0 + u / 720.0))))
    } else {
        u.exp_m1() - u
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn sigmoid_kernel() -> JumpKernel {
        JumpKernel::new(
            2,
            vec![
                Atom {
                    z: vec![1.0, 0.5],
                    rate: RateExpr::Sigmoid { c0: 1.0, c1: 0.5, a: vec![1.0, -0.5], b: 0.2 },
                },
                Atom { z: vec![-0.3, 1.0], rate: RateExpr::constant(0.8) },
                Atom { z: vec![0.0, -1.0], rate: RateExpr::Affine { c0: 0.5, a: vec![0.1, 0.0] } },
            ],
            1.5,
        )
        .unwrap()
    }

    #[test]
    fn zero_covector_gives_zero() {
        let k = sigmoid_kernel();
        assert_eq!(k.hamiltonian(&[0.3, -0.2], &[0.0, 0.0]).unwrap(), 0.0);
        let (g, _) = k.hamiltonian_derivatives(&[0.3, -0.2], &[0.0, 0.0]).unwrap();
        assert!(g.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn unit_jump_closed_forms() {
        let k = JumpKernel::unit_jump(1.0);
        let h = k.hamiltonian(&[0.0], &[1.0]).unwrap();
        assert!((h - (E - 2.0)).abs() < 1e-15);
        let (g, hess) = k.hamiltonian_derivatives(&[0.0], &[1.0]).unwrap();
        assert!((g[0] - (E - 1.0)).abs() < 1e-15);
        assert!((hess[(0, 0)] - E).abs() < 1e-15);
    }

    #[test]
    fn symmetric_is_cosh_minus_one() {
        let k = JumpKernel::symmetric_unit(0.5);
        for xi in [-2.0, -0.3, 1.0, 3.0] {
            let h = k.hamiltonian(&[0.0], &[xi]).unwrap();
            assert!((h - (f64::cosh(xi) - 1.0)).abs() < 1e-13, "xi={xi}");
        }
        let h1 = k.hamiltonian(&[0.0], &[1.0]).unwrap();
        assert!((h1 - 0.5430806348152437).abs() < 1e-12);
    }

    #[test]
    fn exponent_cap_reports_atom() {
        let k = JumpKernel::symmetric_unit(0.5);
        match k.hamiltonian(&[0.0], &[-701.0]) {
            Err(Error::ExponentOverflow { atom: Some(1), .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let capped = JumpKernel::unit_jump(1.0).with_exponent_cap(5.0);
        assert!(capped.hamiltonian(&[0.0], &[6.0]).is_err());
    }

    #[test]
    fn negative_rate_rejected_at_evaluation() {
        let k = JumpKernel::new(
            1,
            vec![Atom { z: vec![1.0], rate: RateExpr::Affine { c0: 0.5, a: vec![1.0] } }],
            2.0,
        )
        .unwrap();
        assert!(k.hamiltonian(&[0.0], &[0.1]).is_ok());
        assert!(matches!(k.hamiltonian(&[-1.0], &[0.1]), Err(Error::NegativeRate { atom: 0, .. })));
    }

    #[test]
    fn structural_validation() {
        let zero = Atom { z: vec![0.0], rate: RateExpr::constant(1.0) };
        assert!(JumpKernel::new(1, vec![zero], 1.0).is_err());
        let too_fast = Atom { z: vec![1.0], rate: RateExpr::constant(2.0) };
        assert!(JumpKernel::new(1, vec![too_fast], 1.0).is_err());
        let wrong_dim = Atom { z: vec![1.0, 0.0], rate: RateExpr::constant(1.0) };
        assert!(JumpKernel::new(1, vec![wrong_dim], 1.0).is_err());
        let neg_sig = Atom {
            z: vec![1.0],
            rate: RateExpr::Sigmoid { c0: 0.2, c1: -0.5, a: vec![1.0], b: 0.0 },
        };
        assert!(JumpKernel::new(1, vec![neg_sig], 1.0).is_err());
    }

    #[test]
    fn hessian_matches_finite_difference() {
        let k = sigmoid_kernel();
        let x = [0.4, -1.1];
        let xi = [0.7, -0.35];
        let (_, hess) = k.hamiltonian_derivatives(&x, &xi).unwrap();
        let eps = 1e-6;
        for c in 0..2 {
            let mut p = xi;
            let mut m = xi;
            p[c] += eps;
            m[c] -= eps;
            let (gp, _) = k.hamiltonian_derivatives(&x, &p).unwrap();
            let (gm, _) = k.hamiltonian_derivatives(&x, &m).unwrap();
            for r in 0..2 {
                let fd = (gp[r] - gm[r]) / (2.0 * eps);
                assert!((fd - hess[(r, c)]).abs() <= 1e-5 * hess[(r, c)].abs().max(1.0));
            }
        }
    }

    #[test]
    fn exp_remainder_is_continuous_at_switch() {
        for u in [-1e-3, 1e-3] {
            let a = exp_remainder(u * (1.0 - 1e-12));
            let b = u.exp_m1() - u;
            assert!((a - b).abs() < 1e-15);
        }
        assert!(exp_remainder(-1e-9) > 0.0);
    }
}
