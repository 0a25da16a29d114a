//! Chernoff exit bounds built on the dominating rate `L_1`, skeleton statistics
//! for the polygonal chain sampled at `t_k = k dt`, and the upper-bound report
//! comparing `h log P_1^h[1_O](x0)` with `-inf_{y in O} l(x0, y)`.

mod report;

use serde::{Deserialize, Serialize};

pub use report::{ldp_report, Estimator, LdpOptions, LdpReport, LdpRow, RowStatus, TiltPolicy, Tolerance};

use crate::conjugate::{l1_rate, RateProfile};
use crate::error::{Error, Result};
use crate::ext::ExtendedReal;
use crate::model::JumpKernel;
use crate::simulate::{sample_skeletons, McEstimate, SimConfig};

/// Directions `R_i`, all of norm `radius`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionSet {
    pub radius: f64,
    pub directions: Vec<Vec<f64>>,
}

impl DirectionSet {
    pub fn new(directions: Vec<Vec<f64>>) -> Result<Self> {
        let first = directions.first().ok_or_else(|| Error::InvalidArgument("empty direction set".into()))?;
        let radius = norm(first);
        let d = first.len();
        for r in &directions {
            if r.len() != d || (norm(r) - radius).abs() > 1e-12 * (1.0 + radius) || !(radius > 0.0) {
                return Err(Error::InvalidArgument(format!("directions must share one positive norm, got {r:?}")));
            }
        }
        Ok(DirectionSet { radius, directions })
    }

    /// `+-R e_k` for each axis.
    pub fn axes(dim: usize, radius: f64) -> Self {
        let mut directions = Vec::with_capacity(2 * dim);
        for k in 0..dim {
            for s in [1.0, -1.0] {
                let mut v = vec![0.0; dim];
                v[k] = s * radius;
                directions.push(v);
            }
        }
        DirectionSet { radius, directions }
    }

    pub fn dim(&self) -> usize {
        self.directions[0].len()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChernoffTerm {
    pub direction: Vec<f64>,
    /// `L_1(R_i / t)`.
    pub l1: ExtendedReal,
    pub term: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChernoffBound {
    pub t: f64,
    pub h: f64,
    pub total: f64,
    pub terms: Vec<ChernoffTerm>,
}

/// `sum_i exp(-t L_1(R_i / t) / h)`; directions with `L_1 = +inf` contribute 0.
pub fn chernoff_exit_bound(profile: &RateProfile, t: f64, h: f64, dirs: &DirectionSet) -> Result<ChernoffBound> {
    if !(t > 0.0 && h > 0.0 && t.is_finite() && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("t and h must be positive, got t = {t}, h = {h}")));
    }
    if dirs.dim() != profile.dim() {
        return Err(Error::InvalidArgument("direction dimension does not match the rate profile".into()));
    }
    let terms: Vec<ChernoffTerm> = dirs
        .directions
        .iter()
        .map(|r| {
            let alpha: Vec<f64> = r.iter().map(|v| v / t).collect();
            let l1 = l1_rate(profile, &alpha);
            let term = match l1 {
                ExtendedReal::Finite(v) => (-t * v / h).exp(),
                ExtendedReal::PosInf => 0.0,
            };
            ChernoffTerm { direction: r.clone(), l1, term }
        })
        .collect();
    let total = terms.iter().map(|c| c.term).sum();
    Ok(ChernoffBound { t, h, total, terms })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkeletonConfig {
    pub delta_t: f64,
    /// Largest allowed increment between consecutive skeleton points.
    pub delta: f64,
    /// Confinement radius around the start.
    pub radius: f64,
}

impl SkeletonConfig {
    /// Number of skeleton steps over `horizon`.
    pub fn steps(&self, horizon: f64) -> Result<usize> {
        if !(self.delta_t > 0.0 && self.delta_t <= 1.0) {
            return Err(Error::InvalidArgument(format!("delta_t must lie in (0, 1], got {}", self.delta_t)));
        }
        if !(self.delta > 0.0) || !(self.radius > 0.0) {
            return Err(Error::InvalidArgument("delta and radius must be positive".into()));
        }
        let n = (horizon / self.delta_t).round();
        if n < 1.0 || (n * self.delta_t - horizon).abs() > 1e-9 * horizon.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "horizon {horizon} is not a whole number of skeleton steps {}",
                self.delta_t
            )));
        }
        Ok(n as usize)
    }
}

/// Estimates the probability that the skeleton `(X_{t_1}, ..., X_{t_n})` leaves
/// `E`: some point farther than `radius` from `x0`, or some increment (including
/// the first, from `x0`) longer than `delta`.
pub fn skeleton_event_estimate(kernel: &JumpKernel, cfg: &SimConfig, skel: &SkeletonConfig) -> Result<McEstimate> {
    let n = skel.steps(cfg.horizon)?;
    let checkpoints: Vec<f64> = (1..=n).map(|k| k as f64 * skel.delta_t).map(|t| t.min(cfg.horizon)).collect();
    let x0 = cfg.x0.clone();
    sample_skeletons(kernel, cfg, &checkpoints, |pts| {
        let mut prev = x0.as_slice();
        for p in pts {
            let step: Vec<f64> = p.iter().zip(prev).map(|(a, b)| a - b).collect();
            let off: Vec<f64> = p.iter().zip(&x0).map(|(a, b)| a - b).collect();
            if norm(&step) > skel.delta || norm(&off) > skel.radius {
                return 1.0;
            }
            prev = p;
        }
        0.0
    })
}

/// Union bound for [`skeleton_event_estimate`]: `n` single-step exits at radius
/// `delta` over `delta_t`, plus an exit at radius `radius` at every `t_k`.
/// In dimension one this is a rigorous bound; with axis directions in higher
/// dimension it controls exits from cubes rather than balls.
pub fn skeleton_contract_bound(profile: &RateProfile, skel: &SkeletonConfig, h: f64, horizon: f64) -> Result<f64> {
    let n = skel.steps(horizon)?;
    let d = profile.dim();
    let step = chernoff_exit_bound(profile, skel.delta_t, h, &DirectionSet::axes(d, skel.delta))?.total;
    let mut total = n as f64 * step;
    if skel.radius.is_finite() {
        for k in 1..=n {
            let t = k as f64 * skel.delta_t;
            total += chernoff_exit_bound(profile, t, h, &DirectionSet::axes(d, skel.radius))?.total;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Atom, RateExpr};

    #[test]
    fn unit_jump_exit_bound() {
        let p = RateProfile::from_kernel(&JumpKernel::unit_jump(1.0));
        let dirs = DirectionSet::axes(1, 1.0);
        let b = chernoff_exit_bound(&p, 0.1, 1.0, &dirs).unwrap();
        let l = 11.0 * 11f64.ln() - 10.0;
        assert!((b.total - (-0.1 * l).exp()).abs() < 1e-10);
        assert!((b.total - 0.1944).abs() < 1e-4);
        assert_eq!(b.terms[1].l1, ExtendedReal::PosInf);
        assert_eq!(b.terms[1].term, 0.0);
        let small = chernoff_exit_bound(&p, 0.1, 0.1, &dirs).unwrap();
        assert!((small.total - (-l).exp()).abs() < 1e-18);
    }

    #[test]
    fn bound_shrinks_with_h() {
        let p = RateProfile::from_kernel(&JumpKernel::symmetric_unit(0.5));
        let dirs = DirectionSet::axes(1, 1.0);
        let mut last = f64::INFINITY;
        for h in [1.0, 0.5, 0.2, 0.1, 0.05] {
            let b = chernoff_exit_bound(&p, 0.2, h, &dirs).unwrap().total;
            assert!(b <= last);
            last = b;
        }
    }

    #[test]
    fn unreachable_shell_gives_zero() {
        let k = JumpKernel::new(1, vec![Atom { z: vec![1.0], rate: RateExpr::constant(0.0) }], 0.0).unwrap();
        let p = RateProfile::from_kernel(&k);
        let b = chernoff_exit_bound(&p, 0.1, 1.0, &DirectionSet::axes(1, 1.0)).unwrap();
        assert_eq!(b.total, 0.0);
    }

    #[test]
    fn direction_sets_validate() {
        assert!(DirectionSet::new(vec![vec![1.0, 0.0], vec![0.0, 2.0]]).is_err());
        assert!(DirectionSet::new(vec![]).is_err());
        let s = DirectionSet::new(vec![vec![0.6, 0.8], vec![-1.0, 0.0]]).unwrap();
        assert!((s.radius - 1.0).abs() < 1e-15);
    }

    #[test]
    fn skeleton_of_a_frozen_process_stays_in_e() {
        let k = JumpKernel::new(1, vec![Atom { z: vec![1.0], rate: RateExpr::constant(0.0) }], 0.0).unwrap();
        let cfg = SimConfig::new(0.1, 1.0, vec![0.0], 100, 1);
        let skel = SkeletonConfig { delta_t: 0.1, delta: 0.01, radius: 0.01 };
        assert_eq!(skeleton_event_estimate(&k, &cfg, &skel).unwrap().mean, 0.0);
        let wide = SkeletonConfig { delta_t: 0.25, delta: f64::INFINITY, radius: f64::INFINITY };
        let est = skeleton_event_estimate(&JumpKernel::unit_jump(1.0), &cfg, &wide).unwrap();
        assert_eq!(est.mean, 0.0);
        assert!(SkeletonConfig { delta_t: 0.3, delta: 1.0, radius: 1.0 }.steps(1.0).is_err());
    }
}
