//! Jump kernels and their Hamiltonian
//! `H(x, xi) = sum_j lambda_j(x) (exp<z_j, xi> - 1 - <z_j, xi>)`.

mod diagnostics;
pub(crate) mod kernel;
pub(crate) mod rate;

pub use diagnostics::{
    check_hypotheses, DiagnosticsReport, HypothesisProbe, ModulusEntry, RayCheck, Violation,
};
pub use kernel::{Atom, JumpKernel, DEFAULT_EXPONENT_CAP};
pub use rate::RateExpr;

/// The uniform bound `H_1(xi) >= H(x, xi)`, realized as the Hamiltonian of a
/// state-independent kernel whose atom rates are `sup_x lambda_j(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DominatingHamiltonian {
    kernel: JumpKernel,
}

impl DominatingHamiltonian {
    /// Atom-wise supremum of the rates; rates unbounded in closed form fall back
    /// to the kernel's `rate_bound`.
    pub fn from_kernel(kernel: &JumpKernel) -> Self {
        let atoms = kernel
            .atoms
            .iter()
            .map(|a| Atom {
                z: a.z.clone(),
                rate: RateExpr::constant(a.rate.sup().unwrap_or(kernel.rate_bound)),
            })
            .collect();
        let dominated = JumpKernel::new(kernel.dim, atoms, kernel.rate_bound)
            .expect("dominating kernel inherits validity")
            .with_exponent_cap(kernel.exponent_cap());
        DominatingHamiltonian { kernel: dominated }
    }

    /// Use a caller-built state-independent kernel as `H_1`.
    pub fn from_state_independent(kernel: JumpKernel) -> crate::Result<Self> {
        if !kernel.is_state_independent() {
            return Err(crate::Error::InvalidKernel(
                "dominating Hamiltonian must come from a state-independent kernel".into(),
            ));
        }
        Ok(DominatingHamiltonian { kernel })
    }

    pub fn kernel(&self) -> &JumpKernel {
        &self.kernel
    }

    pub fn h1(&self, xi: &[f64]) -> crate::Result<f64> {
        self.kernel.hamiltonian(&vec![0.0; self.kernel.dim], xi)
    }
}
