use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::action::{rate_to_set, RateToSetOptions};
use crate::conjugate::try_legendre;
use crate::error::{Error, Result};
use crate::ext::ExtendedReal;
use crate::model::JumpKernel;
use crate::simulate::{estimate_semigroup, sample_tilted, McEstimate, SimConfig, TiltConfig};
use crate::target::{Observable, TargetSet};

/// `tolerance(h) = base + slope * h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub base: f64,
    pub slope: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { base: 0.15, slope: 2.0 }
    }
}

impl Tolerance {
    pub fn at(&self, h: f64) -> f64 {
        self.base + self.slope * h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TiltPolicy {
    Always,
    Never,
    /// Plain sampling for `h >= plain_min_h`, tilted below.
    Auto { plain_min_h: f64 },
}

impl Default for TiltPolicy {
    fn default() -> Self {
        TiltPolicy::Auto { plain_min_h: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Plain,
    Tilted,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Plain => "plain",
            Estimator::Tilted => "tilted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    /// `stderr / p_hat` above the limit.
    InsufficientSamples,
    /// No path reached the target; `upper_bound` carries `3 / n`.
    Unreachable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdpRow {
    pub h: f64,
    pub p_hat: f64,
    pub stderr: f64,
    /// `h ln p_hat`, absent when `p_hat = 0`.
    pub h_log_p: Option<f64>,
    pub estimator: Estimator,
    pub n: usize,
    pub seed: u64,
    pub status: RowStatus,
    /// One-sided 95% upper confidence bound when `p_hat = 0`.
    pub upper_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdpReport {
    pub model_id: String,
    pub x0: Vec<f64>,
    pub target: TargetSet,
    pub target_description: String,
    /// `inf_{y in O} l(x0, y)`; `+inf` when no point of the target is reachable.
    pub variational_bound: ExtendedReal,
    pub argmin: Vec<f64>,
    pub tilt: Vec<f64>,
    pub tolerance: Tolerance,
    pub rows: Vec<LdpRow>,
    pub verdict: bool,
}

impl LdpReport {
    fn margin(&self, row: &LdpRow) -> Option<f64> {
        row.h_log_p.map(|v| -self.variational_bound.to_f64() + self.tolerance.at(row.h) - v)
    }

    /// `h,p_hat,stderr,h_log_p,bound,margin,estimator`; `bound` is `-variational_bound`.
    /// Floats use the shortest round-trip form, with an exponent for tiny values.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("h,p_hat,stderr,h_log_p,bound,margin,estimator\n");
        let bound = match self.variational_bound {
            ExtendedReal::Finite(v) => format!("{:?}", -v),
            ExtendedReal::PosInf => String::from("-inf"),
        };
        for r in &self.rows {
            let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
            let _ = writeln!(
                out,
                "{:?},{:?},{:?},{},{},{},{}",
                r.h,
                r.p_hat,
                r.stderr,
                opt(r.h_log_p),
                bound,
                opt(self.margin(r)),
                r.estimator.as_str()
            );
        }
        out
    }

    /// Whether `|h log p_hat + variational_bound|` shrinks strictly along the rows
    /// (rows without an estimate are skipped).
    pub fn approaches_bound_monotonically(&self) -> bool {
        let gaps: Vec<f64> =
            self.rows.iter().filter_map(|r| r.h_log_p).map(|v| (v + self.variational_bound.to_f64()).abs()).collect();
        gaps.windows(2).all(|w| w[1] < w[0])
    }

    /// `Err(InsufficientSamples)` listing flagged rows.
    pub fn check_samples(&self) -> Result<()> {
        let bad: Vec<f64> =
            self.rows.iter().filter(|r| r.status == RowStatus::InsufficientSamples).map(|r| r.h).collect();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InsufficientSamples { h: bad })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LdpOptions {
    pub paths: usize,
    pub seed: u64,
    pub tilt_policy: TiltPolicy,
    pub tolerance: Tolerance,
    /// Rows with `stderr / p_hat` above this are flagged.
    pub max_relative_stderr: f64,
    pub rate: RateToSetOptions,
    pub model_id: String,
}

impl Default for LdpOptions {
    fn default() -> Self {
        LdpOptions {
            paths: 100_000,
            seed: 0,
            tilt_policy: TiltPolicy::default(),
            tolerance: Tolerance::default(),
            max_relative_stderr: 0.5,
            rate: RateToSetOptions::default(),
            model_id: String::from("model"),
        }
    }
}

/// Seed of row `index`: distinct rows get unrelated streams.
fn row_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Estimates `P_1^h[1_O](x0)` for each `h` and compares `h log p_hat` with the
/// variational bound `-inf_{y in O} l(x0, y)` at horizon 1.
pub fn ldp_report(
    kernel: &JumpKernel,
    x0: &[f64],
    target: &TargetSet,
    h_list: &[f64],
    opts: &LdpOptions,
) -> Result<LdpReport> {
    if h_list.is_empty() || h_list.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(Error::InvalidArgument("h_list must be nonempty and positive".into()));
    }
    if h_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("h_list must be strictly decreasing".into()));
    }
    if opts.paths == 0 {
        return Err(Error::InvalidArgument("paths must be at least 1".into()));
    }
    let mut rate_opts = opts.rate.clone();
    rate_opts.action.horizon = 1.0;
    let (bound, argmin) = match rate_to_set(kernel, x0, target, &rate_opts) {
        Ok(r) => (ExtendedReal::Finite(r.value), r.argmin),
        Err(Error::Infeasible(msg)) => {
            log::warn!("target is unreachable: {msg}");
            (ExtendedReal::PosInf, target.project(x0))
        }
        Err(e) => return Err(e),
    };

    // unreachable targets are sampled without a tilt
    let velocity: Vec<f64> = argmin.iter().zip(x0).map(|(y, x)| y - x).collect();
    let tilt = match (bound, try_legendre(kernel, x0, &velocity)?) {
        (ExtendedReal::Finite(_), Some(r)) => r.maximizer,
        _ => vec![0.0; kernel.dim],
    };
    let tilt_cfg = TiltConfig::new(tilt.clone(), x0.to_vec());
    let f = Observable::Indicator { target: target.clone() };

    let mut rows = Vec::with_capacity(h_list.len());
    for (i, &h) in h_list.iter().enumerate() {
        let seed = row_seed(opts.seed, i);
        let cfg = SimConfig::new(h, 1.0, x0.to_vec(), opts.paths, seed);
        let estimator = match opts.tilt_policy {
            TiltPolicy::Always => Estimator::Tilted,
            TiltPolicy::Never => Estimator::Plain,
            TiltPolicy::Auto { plain_min_h } if h >= plain_min_h => Estimator::Plain,
            TiltPolicy::Auto { .. } => Estimator::Tilted,
        };
        let est: McEstimate = match estimator {
            Estimator::Plain => estimate_semigroup(kernel, &cfg, &f)?,
            Estimator::Tilted => sample_tilted(kernel, &cfg, &tilt_cfg, &f)?,
        };
        let (h_log_p, status, upper_bound) = if est.mean > 0.0 {
            let status = if est.stderr / est.mean > opts.max_relative_stderr {
                RowStatus::InsufficientSamples
            } else {
                RowStatus::Ok
            };
            (Some(h * est.mean.ln()), status, None)
        } else {
            (None, RowStatus::Unreachable, Some(3.0 / est.n as f64))
        };
        rows.push(LdpRow {
            h,
            p_hat: est.mean,
            stderr: est.stderr,
            h_log_p,
            estimator,
            n: est.n,
            seed,
            status,
            upper_bound,
        });
    }

    let verdict = rows
        .iter()
        .filter_map(|r| r.h_log_p.map(|v| (r.h, v)))
        .all(|(h, v)| v <= -bound.to_f64() + opts.tolerance.at(h));
    Ok(LdpReport {
        model_id: opts.model_id.clone(),
        x0: x0.to_vec(),
        target: target.clone(),
        target_description: target.describe(),
        variational_bound: bound,
        argmin,
        tilt,
        tolerance: opts.tolerance,
        rows,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::ActionOptions;
    use crate::model::{Atom, RateExpr};

    fn quick() -> LdpOptions {
        LdpOptions {
            paths: 2000,
            seed: 3,
            rate: RateToSetOptions {
                action: ActionOptions { segments: 8, restarts: 2, ..Default::default() },
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn start_inside_target_is_trivial() {
        let k = JumpKernel::symmetric_unit(1.0);
        let r = ldp_report(&k, &[0.0], &TargetSet::interval(-1.0, 1.0), &[0.5, 0.2], &quick()).unwrap();
        assert_eq!(r.variational_bound, ExtendedReal::Finite(0.0));
        assert!(r.verdict);
        assert!(r.rows.iter().all(|row| row.h_log_p.unwrap() <= 0.0));
    }

    #[test]
    fn frozen_process_rows_are_unreachable() {
        let k = JumpKernel::new(1, vec![Atom { z: vec![1.0], rate: RateExpr::constant(0.0) }], 0.0).unwrap();
        let r = ldp_report(&k, &[0.0], &TargetSet::interval(1.0, 2.0), &[0.5, 0.1], &quick()).unwrap();
        assert_eq!(r.variational_bound, ExtendedReal::PosInf);
        assert!(r.rows.iter().all(|row| row.status == RowStatus::Unreachable && row.p_hat == 0.0));
        assert!(r.verdict);
        assert!(r.to_csv().contains(",-inf,"));
    }

    #[test]
    fn unreachable_rows_carry_an_upper_bound() {
        let k = JumpKernel::unit_jump(1.0);
        let mut opts = quick();
        opts.paths = 50;
        opts.tilt_policy = TiltPolicy::Never;
        let r = ldp_report(&k, &[0.0], &TargetSet::interval(3.0, 3.5), &[0.05], &opts).unwrap();
        let row = &r.rows[0];
        assert_eq!(row.status, RowStatus::Unreachable);
        assert_eq!(row.upper_bound, Some(3.0 / 50.0));
        assert!(r.verdict);
        let csv = r.to_csv();
        assert!(csv.starts_with("h,p_hat,stderr,h_log_p,bound,margin,estimator\n0.05,0.0,0.0,,"));
        assert!(csv.ends_with(",,plain\n"));
    }

    #[test]
    fn h_log_p_is_recomputable() {
        let k = JumpKernel::unit_jump(1.0);
        let r = ldp_report(&k, &[0.0], &TargetSet::interval(1.5, 2.5), &[0.2, 0.1], &quick()).unwrap();
        for row in &r.rows {
            assert_eq!(row.h_log_p, Some(row.h * row.p_hat.ln()));
            assert_eq!(row.estimator, Estimator::Tilted);
        }
        assert!((r.tilt[0] - 2.5f64.ln()).abs() < 1e-8);
    }

    #[test]
    fn h_list_must_decrease() {
        let k = JumpKernel::unit_jump(1.0);
        assert!(ldp_report(&k, &[0.0], &TargetSet::interval(1.5, 2.5), &[0.1, 0.2], &quick()).is_err());
    }
}
