//! Discretized action of polygonal paths and the rate function
//! `l(x, y) = inf { S(phi) : phi(0) = x, phi(T) = y }`, computed by minimum-action
//! optimization over the interior knots, plus a brute-force dynamic-programming
//! oracle on a state lattice for small dimensions.

mod lbfgs;
mod path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use path::{action_of_path, PathAction, PolygonalPath};

use crate::conjugate::try_legendre;
use crate::error::{Error, Result};
use crate::ext::ExtendedReal;
use crate::model::JumpKernel;
use crate::simulate::path_rng;
use crate::target::TargetSet;
use lbfgs::{LbfgsOptions, LbfgsOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActionOptions {
    /// Number of segments `N`.
    pub segments: usize,
    /// Starting paths: the straight line, then `restarts - 1` perturbed copies.
    pub restarts: usize,
    /// Perturbation amplitude relative to `|y - x|`.
    pub perturbation: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub horizon: f64,
}

impl Default for ActionOptions {
    fn default() -> Self {
        ActionOptions { segments: 50, restarts: 8, perturbation: 0.1, max_iter: 2000, seed: 0, horizon: 1.0 }
    }
}

impl ActionOptions {
    fn validate(&self) -> Result<()> {
        if self.segments < 2 {
            return Err(Error::InvalidArgument("at least 2 segments are required".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidArgument("at least one restart is required".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.perturbation >= 0.0 && self.perturbation.is_finite()) {
            return Err(Error::InvalidArgument("perturbation must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub index: usize,
    /// Action of the starting path; `None` when it is infinite.
    pub initial: Option<f64>,
    pub value: Option<f64>,
    pub iterations: usize,
    pub gradient_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFunctionResult {
    pub value: f64,
    pub path: PolygonalPath,
    /// Restarts that started from a path of finite action.
    pub restarts_used: usize,
    pub gradient_norm_at_exit: f64,
    pub best_restart: usize,
    pub restarts: Vec<RestartSummary>,
}

/// Central difference of `H(., xi)` at `x`.
fn state_gradient(kernel: &JumpKernel, x: &[f64], xi: &[f64], out: &mut [f64]) -> Result<()> {
    let mut p = x.to_vec();
    for k in 0..x.len() {
        let step = 1e-5 * (1.0 + x[k].abs());
        p[k] = x[k] + step;
        let up = kernel.hamiltonian(&p, xi)?;
        p[k] = x[k] - step;
        let down = kernel.hamiltonian(&p, xi)?;
        p[k] = x[k];
        out[k] = (up - down) / (2.0 * step);
    }
    Ok(())
}

struct ActionObjective<'a> {
    kernel: &'a JumpKernel,
    x: &'a [f64],
    y: &'a [f64],
    segments: usize,
    dt: f64,
}

impl ActionObjective<'_> {
    fn knot<'b>(&'b self, interior: &'b [f64], k: usize) -> &'b [f64] {
        let d = self.x.len();
        if k == 0 {
            self.x
        } else if k == self.segments {
            self.y
        } else {
            &interior[(k - 1) * d..k * d]
        }
    }

    /// Action and its gradient in the interior knots; `None` when infinite.
    fn eval(&self, interior: &[f64]) -> Result<Option<(f64, Vec<f64>)>> {
        match self.eval_inner(interior) {
            Err(Error::ExponentOverflow { .. }) => Ok(None),
            r => r,
        }
    }

    fn eval_inner(&self, interior: &[f64]) -> Result<Option<(f64, Vec<f64>)>> {
        let d = self.x.len();
        let n = self.segments;
        let state_free = self.kernel.is_state_independent();
        let mut grad = vec![0.0; (n - 1) * d];
        let mut total = 0.0;
        let mut dx = vec![0.0; d];
        let mut prev_xi: Vec<f64> = vec![];
        for i in 0..n {
            let a = self.knot(interior, i);
            let b = self.knot(interior, i + 1);
            let v: Vec<f64> = b.iter().zip(a).map(|(q, p)| (q - p) / self.dt).collect();
            let Some(r) = try_legendre(self.kernel, a, &v)? else {
                return Ok(None);
            };
            total += self.dt * r.value;
            if i > 0 {
                // knot i enters segment i-1 through the velocity and segment i
                // through both arguments; dL/dx = -dH/dx at the maximizer
                let g = &mut grad[(i - 1) * d..i * d];
                if !state_free {
                    state_gradient(self.kernel, a, &r.maximizer, &mut dx)?;
                }
                for k in 0..d {
                    g[k] = prev_xi[k] - r.maximizer[k];
                    if !state_free {
                        g[k] -= self.dt * dx[k];
                    }
                }
            }
            prev_xi = r.maximizer;
        }
        Ok(Some((total, grad)))
    }
}

fn perturbed_start(x: &[f64], y: &[f64], opts: &ActionOptions, restart: usize) -> Vec<f64> {
    let d = x.len();
    let n = opts.segments;
    let straight = PolygonalPath::straight(x, y, n, opts.horizon);
    let mut interior: Vec<f64> = straight.knots[1..n].iter().flatten().copied().collect();
    if restart == 0 {
        return interior;
    }
    let span = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let amp = opts.perturbation * span;
    let mut rng = path_rng(opts.seed, restart as u64);
    let modes: Vec<Vec<f64>> = (0..3).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    for k in 1..n {
        let s = k as f64 / n as f64;
        for (m, w) in modes.iter().enumerate() {
            let f = (m + 1) as f64;
            let shape = amp * (f * std::f64::consts::PI * s).sin() / f;
            for c in 0..d {
                interior[(k - 1) * d + c] += shape * w[c];
            }
        }
    }
    interior
}

fn assemble(x: &[f64], y: &[f64], interior: &[f64], horizon: f64) -> PolygonalPath {
    let mut knots = vec![x.to_vec()];
    knots.extend(interior.chunks(x.len()).map(|c| c.to_vec()));
    knots.push(y.to_vec());
    PolygonalPath { horizon, knots }
}

/// Estimates `l(x, y)` by quasi-Newton descent of the discretized action over
/// the interior knots, from the straight line and from smooth random
/// perturbations of it; the best restart wins (lowest index on ties).
pub fn minimize_action(kernel: &JumpKernel, x: &[f64], y: &[f64], opts: &ActionOptions) -> Result<RateFunctionResult> {
    opts.validate()?;
    let d = kernel.dim;
    if x.len() != d || y.len() != d || x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("endpoints must be finite states of the kernel's dimension".into()));
    }
    if x == y {
        let path = PolygonalPath::straight(x, y, opts.segments, opts.horizon);
        let summary = RestartSummary { index: 0, initial: Some(0.0), value: Some(0.0), iterations: 0, gradient_norm: Some(0.0) };
        return Ok(RateFunctionResult {
            value: 0.0,
            path,
            restarts_used: 1,
            gradient_norm_at_exit: 0.0,
            best_restart: 0,
            restarts: vec![summary],
        });
    }
    let objective = ActionObjective { kernel, x, y, segments: opts.segments, dt: opts.horizon / opts.segments as f64 };
    let lopts = LbfgsOptions { memory: 8, max_iter: opts.max_iter, gtol: 1e-7 };

    let runs: Vec<Result<(RestartSummary, Option<LbfgsOutcome>)>> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| {
            let start = perturbed_start(x, y, opts, r);
            let initial = objective.eval(&start)?.map(|(v, _)| v);
            let out = if initial.is_some() { lbfgs::minimize(|z| objective.eval(z), start, &lopts)? } else { None };
            let summary = RestartSummary {
                index: r,
                initial,
                value: out.as_ref().map(|o| o.value),
                iterations: out.as_ref().map_or(0, |o| o.iterations),
                gradient_norm: out.as_ref().map(|o| o.grad_norm),
            };
            Ok((summary, out))
        })
        .collect();

    let mut summaries = Vec::with_capacity(opts.restarts);
    let mut best: Option<(usize, LbfgsOutcome)> = None;
    for run in runs {
        let (summary, out) = run?;
        if let Some(o) = out {
            if best.as_ref().map_or(true, |(_, b)| o.value < b.value) {
                best = Some((summary.index, o));
            }
        }
        summaries.push(summary);
    }
    let Some((best_restart, out)) = best else {
        return Err(Error::Infeasible(format!("no starting path from {x:?} to {y:?} has finite action")));
    };
    let restarts_used = summaries.iter().filter(|s| s.initial.is_some()).count();
    Ok(RateFunctionResult {
        value: out.value.max(0.0),
        path: assemble(x, y, &out.x, opts.horizon),
        restarts_used,
        gradient_norm_at_exit: out.grad_norm,
        best_restart,
        restarts: summaries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RateToSetOptions {
    pub action: ActionOptions,
    /// Scan points per axis over the bounding box of the target's closure.
    pub grid_per_axis: usize,
    /// Pattern-search rounds around the best scan point, halving the step each round.
    pub polish_rounds: usize,
}

impl Default for RateToSetOptions {
    fn default() -> Self {
        RateToSetOptions { action: ActionOptions::default(), grid_per_axis: 9, polish_rounds: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetRateResult {
    pub value: f64,
    pub argmin: Vec<f64>,
    pub path: PolygonalPath,
    pub restarts_used: usize,
    pub gradient_norm_at_exit: f64,
    /// Endpoints for which the action was minimized.
    pub evaluations: usize,
}

/// Estimates `inf_{y in closure(target)} l(x, y)`: straight-line-started
/// minimizations over a grid on the closure, a coordinate pattern search around
/// the best grid point, then a full multi-restart minimization at the winner.
pub fn rate_to_set(kernel: &JumpKernel, x: &[f64], target: &TargetSet, opts: &RateToSetOptions) -> Result<SetRateResult> {
    opts.action.validate()?;
    target.validate(kernel.dim)?;
    if x.len() != kernel.dim {
        return Err(Error::InvalidArgument("start point dimension does not match kernel".into()));
    }
    if target.contains_closed(x) {
        return Ok(SetRateResult {
            value: 0.0,
            argmin: x.to_vec(),
            path: PolygonalPath::straight(x, x, opts.action.segments, opts.action.horizon),
            restarts_used: 1,
            gradient_norm_at_exit: 0.0,
            evaluations: 0,
        });
    }
    let scan_opts = ActionOptions { restarts: 1, ..opts.action.clone() };
    let value_at = |y: &[f64]| -> Result<Option<f64>> {
        match minimize_action(kernel, x, y, &scan_opts) {
            Ok(r) => Ok(Some(r.value)),
            Err(Error::Infeasible(_)) => Ok(None),
            Err(e) => Err(e),
        }
    };

    let grid = target.closure_grid(opts.grid_per_axis.max(2));
    let values: Vec<Result<Option<f64>>> = grid.par_iter().map(|y| value_at(y)).collect();
    let mut evaluations = grid.len();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for (y, v) in grid.iter().zip(values) {
        if let Some(v) = v? {
            if best.as_ref().map_or(true, |(_, b)| v < *b) {
                best = Some((y.clone(), v));
            }
        }
    }
    let Some((mut y_best, mut v_best)) = best else {
        return Err(Error::Infeasible(format!("no point of {} is reachable from {x:?}", target.describe())));
    };

    let (lo, hi) = target.bounds();
    let n = opts.grid_per_axis.max(2) as f64 - 1.0;
    let mut steps: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| (b - a) / n).collect();
    for _ in 0..opts.polish_rounds {
        steps.iter_mut().for_each(|s| *s *= 0.5);
        let mut cands = Vec::with_capacity(2 * kernel.dim);
        for k in 0..kernel.dim {
            for sign in [-1.0, 1.0] {
                let mut c = y_best.clone();
                c[k] += sign * steps[k];
                let c = target.project(&c);
                if c != y_best {
                    cands.push(c);
                }
            }
        }
        evaluations += cands.len();
        let vals: Vec<Result<Option<f64>>> = cands.par_iter().map(|y| value_at(y)).collect();
        for (c, v) in cands.into_iter().zip(vals) {
            if let Some(v) = v? {
                if v < v_best {
                    y_best = c;
                    v_best = v;
                }
            }
        }
    }

    let full = minimize_action(kernel, x, &y_best, &opts.action)?;
    evaluations += 1;
    Ok(SetRateResult {
        value: full.value.min(v_best),
        argmin: y_best,
        path: full.path,
        restarts_used: full.restarts_used,
        gradient_norm_at_exit: full.gradient_norm_at_exit,
        evaluations,
    })
}

/// Uniform state lattice for [`dp_oracle`]; time is split into `steps` equal steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub points_per_axis: usize,
    pub steps: usize,
    #[serde(default = "one")]
    pub horizon: f64,
}

fn one() -> f64 {
    1.0
}

impl LatticeSpec {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, points_per_axis: usize, steps: usize) -> Self {
        LatticeSpec { lower, upper, points_per_axis, steps, horizon: 1.0 }
    }

    fn points(&self) -> Vec<Vec<f64>> {
        let n = self.points_per_axis;
        let d = self.lower.len();
        (0..n.pow(d as u32))
            .map(|mut idx| {
                (0..d)
                    .map(|k| {
                        let i = idx % n;
                        idx /= n;
                        // nested lattices share points exactly
                        self.lower[k] + (self.upper[k] - self.lower[k]) * i as f64 / (n - 1) as f64
                    })
                    .collect()
            })
            .collect()
    }
}

/// Value iteration `V_{k+1}(q) = min_p V_k(p) + dt L(p, (q - p) / dt)` from the
/// lattice point nearest `x`, returning the least value over lattice points in
/// the closure of `target` (`+inf` when none is reached).
pub fn dp_oracle(kernel: &JumpKernel, x: &[f64], target: &TargetSet, lattice: &LatticeSpec) -> Result<ExtendedReal> {
    let d = kernel.dim;
    target.validate(d)?;
    if d > 2 {
        return Err(Error::InvalidArgument("the lattice oracle supports dimension 1 or 2".into()));
    }
    if lattice.lower.len() != d
        || lattice.upper.len() != d
        || lattice.lower.iter().zip(&lattice.upper).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite())
        || lattice.points_per_axis < 2
        || lattice.steps == 0
        || !(lattice.horizon > 0.0)
    {
        return Err(Error::InvalidArgument(format!("invalid lattice {lattice:?}")));
    }
    if x.len() != d {
        return Err(Error::InvalidArgument("start point dimension does not match kernel".into()));
    }
    if target.contains_closed(x) {
        return Ok(ExtendedReal::Finite(0.0));
    }
    let pts = lattice.points();
    let m = pts.len();
    if (m as f64) * (m as f64) > 2e7 {
        return Err(Error::InvalidArgument(format!("lattice of {m} points is too large for the oracle")));
    }
    let dt = lattice.horizon / lattice.steps as f64;

    let rows: Vec<Result<Vec<f64>>> = pts
        .par_iter()
        .map(|p| {
            pts.iter()
                .map(|q| {
                    let v: Vec<f64> = q.iter().zip(p).map(|(b, a)| (b - a) / dt).collect();
                    match try_legendre(kernel, p, &v) {
                        Ok(Some(r)) => Ok(dt * r.value),
                        Ok(None) | Err(Error::ExponentOverflow { .. }) => Ok(f64::INFINITY),
                        Err(e) => Err(e),
                    }
                })
                .collect()
        })
        .collect();
    let cost: Vec<Vec<f64>> = rows.into_iter().collect::<Result<_>>()?;

    let dist2 = |p: &[f64]| p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    let start = (0..m).min_by(|&i, &j| dist2(&pts[i]).total_cmp(&dist2(&pts[j]))).unwrap();
    let mut value = vec![f64::INFINITY; m];
    value[start] = 0.0;
    for _ in 0..lattice.steps {
        value = (0..m)
            .into_par_iter()
            .map(|j| (0..m).map(|i| value[i] + cost[i][j]).fold(f64::INFINITY, f64::min))
            .collect();
    }

    let spacing = lattice
        .lower
        .iter()
        .zip(&lattice.upper)
        .map(|(a, b)| (b - a) / (lattice.points_per_axis - 1) as f64)
        .fold(0.0, f64::max);
    let best = pts
        .iter()
        .zip(&value)
        .filter(|(p, _)| {
            let proj = target.project(p);
            let off: f64 = proj.iter().zip(p.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            off <= 1e-9 * spacing
        })
        .map(|(_, v)| *v)
        .fold(f64::INFINITY, f64::min);
    Ok(if best.is_finite() { ExtendedReal::Finite(best) } else { ExtendedReal::PosInf })
}
