//! Shared kernels for the benchmarks.

use wflab_core::{Atom, JumpKernel, RateExpr};

pub fn unit_jump() -> JumpKernel {
    JumpKernel::unit_jump(1.0)
}

/// One upward atom whose rate moves from 1 to 1.5 across the origin.
pub fn sigmoid() -> JumpKernel {
    let rate = RateExpr::Sigmoid { c0: 1.0, c1: 0.5, a: vec![1.0], b: 0.0 };
    JumpKernel::new(1, vec![Atom { z: vec![1.0], rate }], 1.5).expect("valid kernel")
}

pub fn planar() -> JumpKernel {
    let atoms = vec![
        Atom { z: vec![1.0, 0.0], rate: RateExpr::Sigmoid { c0: 0.5, c1: 1.0, a: vec![1.0, -0.5], b: 0.2 } },
        Atom { z: vec![-0.5, 1.0], rate: RateExpr::constant(0.7) },
        Atom { z: vec![0.0, -1.0], rate: RateExpr::constant(0.4) },
    ];
    JumpKernel::new(2, atoms, 1.5).expect("valid kernel")
}

/// Kernels by name, as listed in the benchmark ids.
pub fn kernels() -> Vec<(&'static str, JumpKernel)> {
    vec![("unit_jump", unit_jump()), ("sigmoid", sigmoid()), ("planar", planar())]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_valid() {
        for (_, k) in kernels() {
            k.validate().unwrap();
        }
    }
}
