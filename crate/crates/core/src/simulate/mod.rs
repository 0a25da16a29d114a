//! Monte Carlo for the semigroup `P_t^h`: plain estimates, the exponential
//! martingale check, and exponentially tilted importance sampling.
//!
//! Every path draws from its own counter-based stream (`seed`, path index), and
//! per-path results are reduced in path-index order, so estimates are
//! bit-identical for any number of worker threads.

mod engine;

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use engine::path_rng;
use engine::{Engine, EventKind};

use crate::error::{Error, Result};
use crate::model::rate::dot;
use crate::model::JumpKernel;
use crate::target::Observable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub h: f64,
    pub horizon: f64,
    pub x0: Vec<f64>,
    pub n_paths: usize,
    pub seed: u64,
    /// Cap on candidate events per path; derived from the expected count when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_events: Option<usize>,
    /// Substeps have length at most `h / (substep_factor * rate_bound)`.
    #[serde(default = "default_substep_factor")]
    pub substep_factor: f64,
}

fn default_substep_factor() -> f64 {
    10.0
}

impl SimConfig {
    pub fn new(h: f64, horizon: f64, x0: Vec<f64>, n_paths: usize, seed: u64) -> Self {
        SimConfig { h, horizon, x0, n_paths, seed, max_events: None, substep_factor: 10.0 }
    }

    pub fn validate(&self, kernel: &JumpKernel) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::InvalidArgument(format!("h must be positive, got {}", self.h)));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon must be nonnegative, got {}", self.horizon)));
        }
        if self.n_paths == 0 {
            return Err(Error::InvalidArgument("n_paths must be at least 1".into()));
        }
        if self.x0.len() != kernel.dim || self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("x0 must be a finite state of the kernel's dimension".into()));
        }
        if !(self.substep_factor >= 1.0) {
            return Err(Error::InvalidArgument("substep_factor must be at least 1".into()));
        }
        Ok(())
    }

    fn engine<'a>(&'a self, kernel: &'a JumpKernel, tilt: Option<&'a [f64]>) -> Engine<'a> {
        let mut e = Engine::new(kernel, self.h, self.horizon, &self.x0, 0);
        e.substep_factor = self.substep_factor;
        e.tilt = tilt;
        let expected = e.expected_candidates();
        e.max_events = match self.max_events {
            Some(cap) => {
                let floor = 2.0 * kernel.rate_bound * self.horizon * kernel.atoms.len() as f64 / self.h;
                if (cap as f64) < floor {
                    log::warn!("max_events {cap} is below twice the expected candidate count ({floor:.0})");
                }
                cap
            }
            None => (4.0 * expected + 10.0 * expected.sqrt() + 100.0).ceil() as usize,
        };
        e
    }
}

/// Tilt covector `C`, and the state at which it was computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiltConfig {
    pub c: Vec<f64>,
    pub freeze_point: Vec<f64>,
}

impl TiltConfig {
    pub fn new(c: Vec<f64>, freeze_point: Vec<f64>) -> Self {
        TiltConfig { c, freeze_point }
    }

    fn validate(&self, kernel: &JumpKernel) -> Result<()> {
        if self.c.len() != kernel.dim || self.c.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("tilt covector must be finite with the kernel's dimension".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    /// Completed paths the estimate is based on.
    pub n: usize,
    pub seed: u64,
    /// Paths aborted at the event cap; excluded from `n`.
    pub aborted: usize,
}

impl McEstimate {
    /// Mean and standard error of per-path values reduced in order; `None` marks an aborted path.
    pub fn from_samples(values: &[Option<f64>], seed: u64) -> Result<Self> {
        let done: Vec<f64> = values.iter().flatten().copied().collect();
        let aborted = values.len() - done.len();
        if done.is_empty() {
            return Err(Error::EventCapExceeded { path: 0, cap: 0 });
        }
        if aborted > 0 {
            log::warn!("{aborted} of {} paths hit the event cap", values.len());
        }
        let n = done.len();
        let mean = done.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let ss: f64 = done.iter().map(|v| (v - mean) * (v - mean)).sum();
            (ss / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        Ok(McEstimate { mean, stderr, n, seed, aborted })
    }
}

/// One simulated path: the start, every accepted jump, and the end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Atom fired at each recorded time (`None` for the start and end points).
    pub atoms: Vec<Option<usize>>,
    pub aborted: bool,
}

/// Simulates path `path_index` of the run described by `cfg`.
pub fn sample_path(kernel: &JumpKernel, cfg: &SimConfig, path_index: u64) -> Result<Trajectory> {
    cfg.validate(kernel)?;
    let engine = cfg.engine(kernel, None);
    let mut traj = Trajectory { times: vec![], states: vec![], atoms: vec![], aborted: false };
    let mut rng = path_rng(cfg.seed, path_index);
    let end = engine.run(&mut rng, |t, x, kind| {
        traj.times.push(t);
        traj.states.push(x.to_vec());
        traj.atoms.push(match kind {
            EventKind::Jump(j) => Some(j),
            EventKind::Start | EventKind::End => None,
        });
    })?;
    if end.is_none() {
        traj.aborted = true;
        return Err(Error::EventCapExceeded { path: path_index, cap: engine.max_events });
    }
    Ok(traj)
}

/// CSV dump of the first `count` paths: `path_id,event_time,x_1..x_d,event_atom`.
pub fn trajectories_csv(kernel: &JumpKernel, cfg: &SimConfig, count: usize) -> Result<String> {
    let mut out = String::from("path_id,event_time");
    for k in 1..=kernel.dim {
        let _ = write!(out, ",x_{k}");
    }
    out.push_str(",event_atom\n");
    for p in 0..count as u64 {
        let traj = sample_path(kernel, cfg, p)?;
        for ((t, x), a) in traj.times.iter().zip(&traj.states).zip(&traj.atoms) {
            let _ = write!(out, "{p},{t}");
            for v in x {
                let _ = write!(out, ",{v}");
            }
            match a {
                Some(j) => {
                    let _ = writeln!(out, ",{j}");
                }
                None => out.push_str(",\n"),
            }
        }
    }
    Ok(out)
}

fn collect_paths<F>(cfg: &SimConfig, per_path: F) -> Result<McEstimate>
where
    F: Fn(u64) -> Result<Option<f64>> + Sync,
{
    let values: Vec<Result<Option<f64>>> =
        (0..cfg.n_paths as u64).into_par_iter().map(&per_path).collect();
    let values: Vec<Option<f64>> = values.into_iter().collect::<Result<_>>()?;
    McEstimate::from_samples(&values, cfg.seed)
}

/// Plain Monte Carlo estimate of `P_t^h f (x0)`.
pub fn estimate_semigroup(kernel: &JumpKernel, cfg: &SimConfig, f: &Observable) -> Result<McEstimate> {
    cfg.validate(kernel)?;
    let engine = cfg.engine(kernel, None);
    collect_paths(cfg, |i| {
        let mut rng = path_rng(cfg.seed, i);
        Ok(engine.run(&mut rng, |_, _, _| {})?.map(|end| f.eval(&end.state)))
    })
}

/// `(<C, X_t - x0> - int_0^t H(X_s, C) ds) / h`, checked against the exponent cap.
fn martingale_exponent(kernel: &JumpKernel, cfg: &SimConfig, c: &[f64], state: &[f64], integral: f64) -> Result<f64> {
    let disp: Vec<f64> = state.iter().zip(&cfg.x0).map(|(a, b)| a - b).collect();
    let e = (dot(c, &disp) - integral) / cfg.h;
    if e.abs() > kernel.exponent_cap() || e.is_nan() {
        return Err(Error::ExponentOverflow { atom: None, exponent: e, cap: kernel.exponent_cap() });
    }
    Ok(e)
}

/// Estimates `E exp((<C, X_t - x0> - int_0^t H(X_s, C) ds) / h)`, which equals 1.
pub fn martingale_check(kernel: &JumpKernel, cfg: &SimConfig, tilt: &TiltConfig) -> Result<McEstimate> {
    cfg.validate(kernel)?;
    tilt.validate(kernel)?;
    let mut engine = cfg.engine(kernel, None);
    engine.track = Some(&tilt.c);
    collect_paths(cfg, |i| {
        let mut rng = path_rng(cfg.seed, i);
        match engine.run(&mut rng, |_, _, _| {})? {
            Some(end) => Ok(Some(martingale_exponent(kernel, cfg, &tilt.c, &end.state, end.h_integral)?.exp())),
            None => Ok(None),
        }
    })
}

/// Importance-sampled estimate of `P_t^h f (x0)`: atom rates are multiplied by
/// `e^{<z_j, C>}` (drift unchanged) and each path is weighted by the inverse
/// exponential martingale.
pub fn sample_tilted(kernel: &JumpKernel, cfg: &SimConfig, tilt: &TiltConfig, f: &Observable) -> Result<McEstimate> {
    cfg.validate(kernel)?;
    tilt.validate(kernel)?;
    let factors = Engine::tilt_factors(kernel, &tilt.c)?;
    let mut engine = cfg.engine(kernel, Some(&factors));
    engine.track = Some(&tilt.c);
    collect_paths(cfg, |i| {
        let mut rng = path_rng(cfg.seed, i);
        match engine.run(&mut rng, |_, _, _| {})? {
            Some(end) => {
                let fx = f.eval(&end.state);
                if fx == 0.0 {
                    return Ok(Some(0.0));
                }
                let e = martingale_exponent(kernel, cfg, &tilt.c, &end.state, end.h_integral)?;
                Ok(Some(fx * (-e).exp()))
            }
            None => Ok(None),
        }
    })
}

/// States at `checkpoints` (sorted, in `(0, horizon]`) on every path; `None` for
/// aborted paths. Used by the skeleton estimates.
pub(crate) fn sample_skeletons<F>(kernel: &JumpKernel, cfg: &SimConfig, checkpoints: &[f64], per_path: F) -> Result<McEstimate>
where
    F: Fn(&[Vec<f64>]) -> f64 + Sync,
{
    cfg.validate(kernel)?;
    let mut engine = cfg.engine(kernel, None);
    engine.checkpoints = checkpoints;
    collect_paths(cfg, |i| {
        let mut rng = path_rng(cfg.seed, i);
        Ok(engine.run(&mut rng, |_, _, _| {})?.map(|end| per_path(&end.recorded)))
    })
}
