use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::legendre::try_legendre;
use crate::error::{Error, Result};
use crate::model::kernel::JumpKernel;
use crate::model::rate::dot;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinorantOptions {
    /// Cells per axis of the starting lattice over `[-R, R]^d`.
    pub coarse_cells: usize,
    pub max_support: usize,
    /// Verification grid is this many times finer than the finest cell.
    pub verify_factor: usize,
    /// Rounds of "add the worst verification point" before giving up.
    pub verify_rounds: usize,
}

impl Default for MinorantOptions {
    fn default() -> Self {
        MinorantOptions { coarse_cells: 4, max_support: 4096, verify_factor: 10, verify_rounds: 64 }
    }
}

/// `L'(alpha) = max_i <beta_i, alpha> - H(x, beta_i)`: a finite envelope of
/// tangent planes of `L(x, .)`, never above `L` and within `gap_target` of it
/// on the (feasible part of the) ball `|alpha| <= radius`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseMinorant {
    pub x: Vec<f64>,
    pub support_points: Vec<Vec<f64>>,
    pub slopes: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    pub gap_target: f64,
    pub radius: f64,
    /// Largest and smallest `L - L'` seen on the verification grid.
    pub verified_max_gap: f64,
    pub verified_min_gap: f64,
    pub verification_points: usize,
}

impl PiecewiseMinorant {
    pub fn eval(&self, alpha: &[f64]) -> f64 {
        self.slopes
            .iter()
            .zip(&self.intercepts)
            .map(|(b, c)| dot(b, alpha) + c)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn len(&self) -> usize {
        self.support_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support_points.is_empty()
    }

    /// Tangent envelope at caller-chosen support points. Infeasible points are
    /// skipped; no gap target is enforced.
    pub fn from_support_points(kernel: &JumpKernel, x: &[f64], points: &[Vec<f64>]) -> Result<Self> {
        let mut m = PiecewiseMinorant {
            x: x.to_vec(),
            support_points: vec![],
            slopes: vec![],
            intercepts: vec![],
            gap_target: f64::INFINITY,
            radius: 0.0,
            verified_max_gap: f64::NAN,
            verified_min_gap: f64::NAN,
            verification_points: 0,
        };
        for p in points {
            m.try_add(kernel, p)?;
        }
        Ok(m)
    }

    fn try_add(&mut self, kernel: &JumpKernel, alpha: &[f64]) -> Result<bool> {
        let Some(r) = try_legendre(kernel, &self.x, alpha)? else {
            return Ok(false);
        };
        let intercept = -kernel.hamiltonian(&self.x, &r.maximizer)?;
        self.support_points.push(alpha.to_vec());
        self.slopes.push(r.maximizer);
        self.intercepts.push(intercept);
        Ok(true)
    }
}

#[derive(Clone)]
struct Cell {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Cell {
    fn vertices(&self) -> Vec<Vec<f64>> {
        let d = self.lo.len();
        (0..1usize << d)
            .map(|mask| (0..d).map(|k| if mask >> k & 1 == 1 { self.hi[k] } else { self.lo[k] }).collect())
            .collect()
    }

    /// Points at fractions {1/4, 1/2, 3/4} along each axis.
    fn probes(&self) -> Vec<Vec<f64>> {
        let d = self.lo.len();
        let fr = [0.5, 0.25, 0.75];
        let mut out = Vec::new();
        let total = 3usize.pow(d as u32);
        for mut idx in 0..total {
            let mut p = Vec::with_capacity(d);
            for k in 0..d {
                let f = fr[idx % 3];
                idx /= 3;
                p.push(self.lo[k] + f * (self.hi[k] - self.lo[k]));
            }
            out.push(p);
        }
        out
    }

    fn split(&self) -> Vec<Cell> {
        let d = self.lo.len();
        let mid: Vec<f64> = self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect();
        (0..1usize << d)
            .map(|mask| {
                let mut lo = self.lo.clone();
                let mut hi = self.hi.clone();
                for k in 0..d {
                    if mask >> k & 1 == 1 {
                        lo[k] = mid[k];
                    } else {
                        hi[k] = mid[k];
                    }
                }
                Cell { lo, hi }
            })
            .collect()
    }

    fn meets_ball(&self, radius: f64) -> bool {
        let d2: f64 = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| {
                let c = 0.0f64.clamp(*a, *b);
                c * c
            })
            .sum();
        d2 <= radius * radius
    }

    fn width(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).fold(0.0, f64::max)
    }
}

fn key(p: &[f64]) -> Vec<u64> {
    p.iter().map(|v| (v + 0.0).to_bits()).collect()
}

/// Adaptive tangent-envelope construction. Starts from a coarse lattice over the
/// ball `|alpha| <= radius` and bisects every cell in which `L - L'` exceeds `chi`
/// at a probe point, then verifies on a grid ten times finer than the finest
/// cell, adding any offending verification point as a new support point.
///
/// Velocities where `L = +inf` are skipped: there the envelope is trivially a
/// minorant and the gap requirement is vacuous.
pub fn build_minorant(kernel: &JumpKernel, x: &[f64], radius: f64, chi: f64) -> Result<PiecewiseMinorant> {
    build_minorant_with(kernel, x, radius, chi, &MinorantOptions::default())
}

pub fn build_minorant_with(
    kernel: &JumpKernel,
    x: &[f64],
    radius: f64,
    chi: f64,
    opts: &MinorantOptions,
) -> Result<PiecewiseMinorant> {
    if !(radius > 0.0 && radius.is_finite()) || !(chi > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "minorant needs radius > 0 and chi > 0 (got {radius}, {chi})"
        )));
    }
    let d = kernel.dim;
    if x.len() != d {
        return Err(Error::InvalidArgument("state dimension mismatch".into()));
    }
    let mut m = PiecewiseMinorant::from_support_points(kernel, x, &[])?;
    m.gap_target = chi;
    m.radius = radius;
    let mut seen: HashSet<Vec<u64>> = HashSet::new();

    let mut add = |m: &mut PiecewiseMinorant, p: &[f64]| -> Result<()> {
        if seen.insert(key(p)) {
            m.try_add(kernel, p)?;
            if m.len() > opts.max_support {
                return Err(Error::BudgetExceeded { cap: opts.max_support });
            }
        }
        Ok(())
    };

    // coarse lattice
    let n = opts.coarse_cells.max(1);
    let h = 2.0 * radius / n as f64;
    let mut queue: Vec<Cell> = Vec::new();
    for mut idx in 0..n.pow(d as u32) {
        let mut lo = Vec::with_capacity(d);
        for _ in 0..d {
            lo.push(-radius + (idx % n) as f64 * h);
            idx /= n;
        }
        let hi = lo.iter().map(|v| v + h).collect();
        let cell = Cell { lo, hi };
        if cell.meets_ball(radius) {
            queue.push(cell);
        }
    }
    // the origin is always feasible and anchors the envelope at its minimum
    add(&mut m, &vec![0.0; d])?;
    for c in &queue {
        for v in c.vertices() {
            add(&mut m, &v)?;
        }
    }

    let mut finest = h;
    while let Some(cell) = queue.pop() {
        let mut needs_split = false;
        for p in cell.probes() {
            if dot(&p, &p) > radius * radius {
                continue;
            }
            if let Some(r) = try_legendre(kernel, x, &p)? {
                if r.value - m.eval(&p) > chi {
                    needs_split = true;
                    break;
                }
            }
        }
        if !needs_split || cell.width() < 1e-12 * radius {
            continue;
        }
        for child in cell.split() {
            if child.meets_ball(radius) {
                for v in child.vertices() {
                    add(&mut m, &v)?;
                }
                finest = finest.min(child.width());
                queue.push(child);
            }
        }
    }

    // verification on a finer uniform grid; the floor keeps edges of the
    // domain, where no cell vertex may be feasible, resolved
    let (floor_per_axis, cap_per_axis) = match d {
        1 => (4_001, 40_001),
        2 => (201, 401),
        _ => (21, 41),
    };
    let per_axis = ((2.0 * radius / finest).ceil() as usize * opts.verify_factor + 1)
        .max(floor_per_axis)
        .min(cap_per_axis);
    let step = 2.0 * radius / (per_axis - 1) as f64;
    let mut grid: Vec<(Vec<f64>, f64)> = Vec::new();
    for mut idx in 0..per_axis.pow(d as u32) {
        let mut p = Vec::with_capacity(d);
        for _ in 0..d {
            p.push(-radius + (idx % per_axis) as f64 * step);
            idx /= per_axis;
        }
        if dot(&p, &p) > radius * radius * (1.0 + 1e-12) {
            continue;
        }
        if let Some(r) = try_legendre(kernel, x, &p)? {
            grid.push((p, r.value));
        }
    }

    for _ in 0..opts.verify_rounds {
        let (mut worst_gap, mut min_gap) = (f64::NEG_INFINITY, f64::INFINITY);
        for (p, l) in &grid {
            let gap = l - m.eval(p);
            min_gap = min_gap.min(gap);
            worst_gap = worst_gap.max(gap);
        }
        m.verified_max_gap = worst_gap;
        m.verified_min_gap = min_gap;
        m.verification_points = grid.len();
        if worst_gap <= chi {
            return Ok(m);
        }
        // add every offender whose gap is within a factor of the worst
        let offenders: Vec<Vec<f64>> = grid
            .iter()
            .filter(|(p, l)| l - m.eval(p) > chi.max(0.5 * worst_gap))
            .map(|(p, _)| p.clone())
            .collect();
        for p in offenders {
            add(&mut m, &p)?;
        }
    }
    Err(Error::BudgetExceeded { cap: opts.max_support })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conjugate::legendre;

    #[test]
    fn single_support_at_origin_is_zero() {
        let k = JumpKernel::symmetric_unit(0.5);
        let m = PiecewiseMinorant::from_support_points(&k, &[0.0], &[vec![0.0]]).unwrap();
        for a in [-3.0, -0.1, 0.0, 2.0] {
            assert_eq!(m.eval(&[a]), 0.0);
        }
    }

    #[test]
    fn unit_jump_gap_on_feasible_part() {
        let k = JumpKernel::unit_jump(1.0);
        let m = build_minorant(&k, &[0.0], 3.0, 0.05).unwrap();
        assert!(m.verified_max_gap <= 0.05);
        assert!(m.verified_min_gap >= -1e-9);
        let mut a = -0.9;
        while a <= 3.0 {
            let l = legendre(&k, &[0.0], &[a]).unwrap().value;
            let gap = l - m.eval(&[a]);
            assert!((-1e-9..=0.05).contains(&gap), "alpha={a} gap={gap}");
            a += 0.001;
        }
    }

    #[test]
    fn fenchel_equality_at_support_points() {
        let k = JumpKernel::symmetric_unit(0.5);
        let m = build_minorant(&k, &[0.0], 2.0, 0.01).unwrap();
        for ((a, b), c) in m.support_points.iter().zip(&m.slopes).zip(&m.intercepts) {
            let l = legendre(&k, &[0.0], a).unwrap().value;
            assert!((l - (dot(b, a) + c)).abs() < 1e-8);
        }
    }

    #[test]
    fn two_dimensional_envelope() {
        use crate::model::{Atom, RateExpr};
        let k = JumpKernel::new(
            2,
            vec![
                Atom { z: vec![1.0, 0.0], rate: RateExpr::constant(0.5) },
                Atom { z: vec![-1.0, 0.0], rate: RateExpr::constant(0.5) },
                Atom { z: vec![0.0, 1.0], rate: RateExpr::constant(0.5) },
                Atom { z: vec![0.0, -1.0], rate: RateExpr::constant(0.5) },
            ],
            0.5,
        )
        .unwrap();
        let m = build_minorant(&k, &[0.0, 0.0], 1.0, 0.05).unwrap();
        assert!(m.verified_max_gap <= 0.05);
        assert!(m.verified_min_gap >= -1e-9);
    }

    #[test]
    fn rejects_bad_parameters() {
        let k = JumpKernel::unit_jump(1.0);
        assert!(build_minorant(&k, &[0.0], 0.0, 0.1).is_err());
        assert!(build_minorant(&k, &[0.0], 1.0, 0.0).is_err());
    }

    #[test]
    fn budget_is_enforced() {
        let k = JumpKernel::unit_jump(1.0);
        let opts = MinorantOptions { max_support: 3, ..Default::default() };
        assert!(matches!(
            build_minorant_with(&k, &[0.0], 3.0, 1e-4, &opts),
            Err(Error::BudgetExceeded { cap: 3 })
        ));
    }
}
