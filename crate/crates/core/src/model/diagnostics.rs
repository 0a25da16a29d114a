//! Runtime checks of the standing hypotheses on a kernel: domination by `H_1`,
//! bounds and curvature of `L` on a velocity ball, continuity of `L` in the
//! state, and superlinear growth of `L_1`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::JumpKernel;
use super::rate::dot;
use super::DominatingHamiltonian;
use crate::conjugate::{l1_rate, try_legendre, RateProfile};
use crate::error::{Error, Result};
use crate::ext::ExtendedReal;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HypothesisProbe {
    /// Box of states to probe.
    pub x_lower: Vec<f64>,
    pub x_upper: Vec<f64>,
    /// Halton points per axis (the total is this to the power `d`).
    pub x_points_per_axis: usize,
    pub alpha_points_per_axis: usize,
    pub xi_radius: f64,
    pub xi_points_per_axis: usize,
    /// Decreasing sequence of separations for the continuity modulus.
    pub deltas: Vec<f64>,
    /// Levels `C` that `L_1(alpha) / |alpha|` must eventually exceed.
    pub superlinear_levels: Vec<f64>,
    pub ray_radii: Vec<f64>,
    /// Caps on the number of state / velocity probes used for the modulus.
    pub modulus_max_states: usize,
    pub modulus_max_velocities: usize,
}

impl Default for HypothesisProbe {
    fn default() -> Self {
        HypothesisProbe {
            x_lower: vec![-1.0],
            x_upper: vec![1.0],
            x_points_per_axis: 32,
            alpha_points_per_axis: 32,
            xi_radius: 2.0,
            xi_points_per_axis: 32,
            deltas: vec![1.0, 0.5, 0.25, 0.125, 0.0625],
            superlinear_levels: vec![1.0, 2.0, 5.0, 10.0],
            ray_radii: (-2..=24).map(|k| 2f64.powi(k)).collect(),
            modulus_max_states: 64,
            modulus_max_velocities: 64,
        }
    }
}

impl HypothesisProbe {
    /// Default grids over the box `[lower, upper]`.
    pub fn on_box(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        HypothesisProbe { x_lower: lower, x_upper: upper, ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// `"domination"`, `"regularity"`, `"continuity"`, `"superlinearity"`, or
    /// `"rates"` for invalid intensities.
    pub hypothesis: String,
    pub message: String,
    pub point: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusEntry {
    pub delta: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayCheck {
    pub direction: Vec<f64>,
    pub radii: Vec<f64>,
    /// `L_1(r u) / r` at each radius.
    pub ratios: Vec<ExtendedReal>,
    /// For each requested level `C`, the smallest probed radius beyond which the
    /// ratio stays at or above `C`.
    pub thresholds: Vec<(f64, Option<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub radius: f64,
    pub x_probes: usize,
    pub alpha_probes: usize,
    /// `max H(x, xi) - H_1(xi)` over the probes; must not be positive.
    pub h1_excess: f64,
    pub h1_convex: bool,
    /// Bound on `L` and `|dL/dalpha|` over the probed velocity ball.
    pub bound_m_upper: f64,
    /// Smallest eigenvalue of the Hessian of `L` in `alpha` over the probed ball.
    pub curvature_m_lower: f64,
    pub infeasible_alpha_probes: usize,
    pub modulus: Vec<ModulusEntry>,
    pub rays: Vec<RayCheck>,
    pub violations: Vec<Violation>,
}

impl DiagnosticsReport {
    pub fn violation_summary(&self) -> String {
        let mut hyps: Vec<&str> = Vec::new();
        for v in &self.violations {
            if !hyps.contains(&v.hypothesis.as_str()) {
                hyps.push(&v.hypothesis);
            }
        }
        match self.violations.first() {
            Some(v) => format!("{} failed ({} probes); first: {} at {:?}", hyps.join(", "), self.violations.len(), v.message, v.point),
            None => "none".into(),
        }
    }

    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Radical inverse in base `b`.
fn radical_inverse(mut i: usize, b: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= b as f64;
        r += f * (i % b) as f64;
        i /= b;
    }
    r
}

const PRIMES: [usize; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Halton points in `[lower, upper]`, skipping index 0.
pub(crate) fn halton_box(lower: &[f64], upper: &[f64], count: usize) -> Vec<Vec<f64>> {
    (1..=count)
        .map(|i| {
            lower
                .iter()
                .zip(upper)
                .enumerate()
                .map(|(k, (lo, hi))| lo + (hi - lo) * radical_inverse(i, PRIMES[k % PRIMES.len()]))
                .collect()
        })
        .collect()
}

/// Tensor grid with `n` points per axis (endpoints included) on `[-r, r]^d`.
fn symmetric_grid(d: usize, r: f64, n: usize) -> Vec<Vec<f64>> {
    let n = n.max(2);
    let step = 2.0 * r / (n - 1) as f64;
    (0..n.pow(d as u32))
        .map(|mut idx| {
            (0..d)
                .map(|_| {
                    let v = -r + (idx % n) as f64 * step;
                    idx /= n;
                    v
                })
                .collect()
        })
        .collect()
}

const EDGE_CURVATURE: f64 = 1e8;

struct StateProbe {
    x: Vec<f64>,
    /// `L(x, alpha_i)` for each velocity probe, `None` where infinite.
    values: Vec<Option<f64>>,
    violations: Vec<Violation>,
    h1_excess: f64,
    m_upper: f64,
    m_lower: f64,
    infeasible: usize,
}

/// Evaluate the hypotheses on the probe grids. A report with violations is
/// returned inside `Error::HypothesisViolation`.
pub fn check_hypotheses(
    kernel: &JumpKernel,
    h1: &DominatingHamiltonian,
    radius: f64,
    probe: &HypothesisProbe,
) -> Result<DiagnosticsReport> {
    let d = kernel.dim;
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {radius}")));
    }
    if probe.x_lower.len() != d || probe.x_upper.len() != d {
        return Err(Error::InvalidArgument("probe box dimension mismatch".into()));
    }
    if h1.kernel().dim != d {
        return Err(Error::InvalidArgument("dominating Hamiltonian dimension mismatch".into()));
    }

    let xs = halton_box(&probe.x_lower, &probe.x_upper, probe.x_points_per_axis.max(1).pow(d as u32));
    let alphas: Vec<Vec<f64>> = symmetric_grid(d, radius, probe.alpha_points_per_axis)
        .into_iter()
        .filter(|a| dot(a, a) <= radius * radius * (1.0 + 1e-12))
        .collect();
    let xis = symmetric_grid(d, probe.xi_radius, probe.xi_points_per_axis);
    let h1_vals: Vec<Option<f64>> = xis.iter().map(|xi| h1.h1(xi).ok()).collect();

    let per_state: Vec<StateProbe> = xs
        .par_iter()
        .map(|x| probe_state(kernel, x, &alphas, &xis, &h1_vals))
        .collect::<Result<_>>()?;

    let mut violations = Vec::new();
    let mut h1_excess = f64::NEG_INFINITY;
    let mut m_upper: f64 = 0.0;
    let mut m_lower = f64::INFINITY;
    let mut infeasible = 0;
    for s in &per_state {
        violations.extend(s.violations.iter().cloned());
        h1_excess = h1_excess.max(s.h1_excess);
        m_upper = m_upper.max(s.m_upper);
        m_lower = m_lower.min(s.m_lower);
        infeasible += s.infeasible;
    }

    // H_1 convexity along each axis of the xi grid
    let mut h1_convex = true;
    for (i, xi) in xis.iter().enumerate() {
        for k in 0..d {
            let step = 2.0 * probe.xi_radius / (probe.xi_points_per_axis.max(2) - 1) as f64;
            let mut lo = xi.clone();
            let mut hi = xi.clone();
            lo[k] -= step;
            hi[k] += step;
            if let (Ok(a), Ok(b), Some(c)) = (h1.h1(&lo), h1.h1(&hi), h1_vals[i]) {
                if c > 0.5 * (a + b) + 1e-12 * (1.0 + a.abs() + b.abs()) {
                    h1_convex = false;
                    violations.push(Violation {
                        hypothesis: "domination".into(),
                        message: "H_1 fails midpoint convexity".into(),
                        point: xi.clone(),
                    });
                }
            }
        }
    }

    let modulus = continuity_modulus(kernel, probe, &per_state, &alphas, &mut violations)?;
    let rays = superlinearity(h1, probe, &mut violations);

    let report = DiagnosticsReport {
        radius,
        x_probes: xs.len(),
        alpha_probes: alphas.len(),
        h1_excess,
        h1_convex,
        bound_m_upper: m_upper,
        curvature_m_lower: m_lower,
        infeasible_alpha_probes: infeasible,
        modulus,
        rays,
        violations,
    };
    if report.is_clean() {
        Ok(report)
    } else {
        Err(Error::HypothesisViolation(Box::new(report)))
    }
}

fn probe_state(
    kernel: &JumpKernel,
    x: &[f64],
    alphas: &[Vec<f64>],
    xis: &[Vec<f64>],
    h1_vals: &[Option<f64>],
) -> Result<StateProbe> {
    let mut out = StateProbe {
        x: x.to_vec(),
        values: vec![None; alphas.len()],
        violations: vec![],
        h1_excess: f64::NEG_INFINITY,
        m_upper: 0.0,
        m_lower: f64::INFINITY,
        infeasible: 0,
    };
    for (j, atom) in kernel.atoms.iter().enumerate() {
        let r = atom.rate.eval(x);
        if !(r >= 0.0) {
            out.violations.push(Violation {
                hypothesis: "rates".into(),
                message: format!("atom {j} has negative rate {r}"),
                point: x.to_vec(),
            });
        } else if r > kernel.rate_bound * (1.0 + 1e-12) {
            out.violations.push(Violation {
                hypothesis: "rates".into(),
                message: format!("atom {j} rate {r} exceeds rate_bound {}", kernel.rate_bound),
                point: x.to_vec(),
            });
        }
    }
    if !out.violations.is_empty() {
        return Ok(out);
    }

    for (xi, h1v) in xis.iter().zip(h1_vals) {
        if let (Ok(h), Some(b)) = (kernel.hamiltonian(x, xi), h1v) {
            let excess = h - b;
            if excess > 1e-12 * (1.0 + b.abs()) {
                out.violations.push(Violation {
                    hypothesis: "domination".into(),
                    message: format!("H(x, xi) exceeds H_1(xi) by {excess} at xi = {xi:?}"),
                    point: x.to_vec(),
                });
            }
            out.h1_excess = out.h1_excess.max(excess);
        }
    }

    for (i, a) in alphas.iter().enumerate() {
        match try_legendre(kernel, x, a)? {
            // a near-singular Hessian of H at the maximizer means the sup is
            // only approached at infinity: alpha sits on the edge of the domain
            Some(r) if r.curvature.symmetric_eigenvalues().max() > EDGE_CURVATURE => {
                out.values[i] = Some(r.value);
                out.infeasible += 1;
                out.violations.push(Violation {
                    hypothesis: "regularity".into(),
                    message: format!("L(x, .) is not differentiable at the domain edge alpha = {a:?}"),
                    point: x.to_vec(),
                });
            }
            Some(r) => {
                let grad = r.maximizer.iter().map(|v| v * v).sum::<f64>().sqrt();
                out.m_upper = out.m_upper.max(r.value).max(grad);
                out.m_lower = out.m_lower.min(r.min_curvature());
                out.values[i] = Some(r.value);
            }
            None => {
                out.infeasible += 1;
                out.violations.push(Violation {
                    hypothesis: "regularity".into(),
                    message: format!("L(x, alpha) is not finite and differentiable at alpha = {a:?}"),
                    point: x.to_vec(),
                });
            }
        }
    }
    Ok(out)
}

/// `sup |L(x', a) - L(x, a)| / (1 + L(x, a))` over probed pairs with
/// `|x - x'| < delta`. Offsets for each delta include those of all smaller
/// deltas, so the sequence is monotone by construction.
fn continuity_modulus(
    kernel: &JumpKernel,
    probe: &HypothesisProbe,
    states: &[StateProbe],
    alphas: &[Vec<f64>],
    violations: &mut Vec<Violation>,
) -> Result<Vec<ModulusEntry>> {
    let d = kernel.dim;
    let mut deltas = probe.deltas.clone();
    deltas.sort_by(|a, b| b.total_cmp(a));
    if deltas.is_empty() {
        return Ok(vec![]);
    }
    let states = &states[..states.len().min(probe.modulus_max_states)];
    let stride = (alphas.len() / probe.modulus_max_velocities.max(1)).max(1);
    let alpha_idx: Vec<usize> = (0..alphas.len()).step_by(stride).collect();

    // worst ratio contributed by offsets at each separation level
    let per_level: Vec<f64> = deltas
        .par_iter()
        .map(|&delta| -> Result<f64> {
            let mut worst: f64 = 0.0;
            for s in states {
                for k in 0..d {
                    for frac in [-0.99, -0.5, 0.5, 0.99] {
                        let mut xp = s.x.clone();
                        xp[k] += frac * delta;
                        let inside = xp
                            .iter()
                            .zip(probe.x_lower.iter().zip(&probe.x_upper))
                            .all(|(v, (lo, hi))| *lo <= *v && *v <= *hi);
                        if !inside || kernel.rates(&xp).is_err() {
                            continue;
                        }
                        for &i in &alpha_idx {
                            let Some(base) = s.values[i] else { continue };
                            let ratio = match try_legendre(kernel, &xp, &alphas[i])? {
                                Some(r) => (r.value - base).abs() / (1.0 + base),
                                None => f64::INFINITY,
                            };
                            worst = worst.max(ratio);
                        }
                    }
                }
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;

    let mut out = Vec::with_capacity(deltas.len());
    for (i, &delta) in deltas.iter().enumerate() {
        let value = per_level[i..].iter().copied().fold(0.0, f64::max);
        out.push(ModulusEntry { delta, value });
    }
    let first = out[0].value;
    let last = out[out.len() - 1].value;
    if !last.is_finite() || (out.len() > 1 && last > 0.5 * first + 1e-9) {
        violations.push(Violation {
            hypothesis: "continuity".into(),
            message: format!("continuity modulus does not decay: {first} at delta={} vs {last} at delta={}", out[0].delta, out[out.len() - 1].delta),
            point: vec![],
        });
    }
    Ok(out)
}

fn superlinearity(h1: &DominatingHamiltonian, probe: &HypothesisProbe, violations: &mut Vec<Violation>) -> Vec<RayCheck> {
    let d = h1.kernel().dim;
    let profile = RateProfile::new(h1.clone());
    let mut radii = probe.ray_radii.clone();
    radii.sort_by(f64::total_cmp);
    let mut rays = Vec::new();
    for k in 0..d {
        for sign in [1.0, -1.0] {
            let mut u = vec![0.0; d];
            u[k] = sign;
            let ratios: Vec<ExtendedReal> = radii
                .iter()
                .map(|&r| {
                    let a: Vec<f64> = u.iter().map(|c| c * r).collect();
                    match l1_rate(&profile, &a) {
                        ExtendedReal::Finite(v) => ExtendedReal::Finite(v / r),
                        ExtendedReal::PosInf => ExtendedReal::PosInf,
                    }
                })
                .collect();
            for w in ratios.windows(2) {
                let (a, b) = (w[0].to_f64(), w[1].to_f64());
                if b < a - 1e-9 * (1.0 + a.abs()) {
                    violations.push(Violation {
                        hypothesis: "superlinearity".into(),
                        message: format!("L_1(alpha)/|alpha| decreases along the ray ({a} -> {b})"),
                        point: u.clone(),
                    });
                    break;
                }
            }
            let thresholds = probe
                .superlinear_levels
                .iter()
                .map(|&c| {
                    let mut k_c = None;
                    for (i, &r) in radii.iter().enumerate().rev() {
                        if ratios[i].to_f64() >= c {
                            k_c = Some(r);
                        } else {
                            break;
                        }
                    }
                    if k_c.is_none() {
                        violations.push(Violation {
                            hypothesis: "superlinearity".into(),
                            message: format!("L_1(alpha)/|alpha| never reaches {c} within the probed radii"),
                            point: u.clone(),
                        });
                    }
                    (c, k_c)
                })
                .collect();
            rays.push(RayCheck { direction: u, radii: radii.clone(), ratios, thresholds });
        }
    }
    rays
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Atom, RateExpr};

    fn sigmoid_kernel() -> JumpKernel {
        JumpKernel::new(
            1,
            vec![
                Atom { z: vec![1.0], rate: RateExpr::Sigmoid { c0: 1.0, c1: 0.5, a: vec![1.0], b: 0.0 } },
                Atom { z: vec![-1.0], rate: RateExpr::constant(0.5) },
            ],
            1.5,
        )
        .unwrap()
    }

    #[test]
    fn state_independent_kernel_has_zero_modulus() {
        let k = JumpKernel::symmetric_unit(0.5);
        let dom = DominatingHamiltonian::from_kernel(&k);
        let report = check_hypotheses(&k, &dom, 1.0, &HypothesisProbe::default()).unwrap();
        assert!(report.modulus.iter().all(|m| m.value == 0.0));
        assert!(report.h1_excess <= 0.0);
        assert!(report.h1_convex);
    }

    #[test]
    fn unit_jump_curvature_and_boundary() {
        let k = JumpKernel::unit_jump(1.0);
        let dom = DominatingHamiltonian::from_kernel(&k);
        // alpha = -1 sits on the edge of the domain, where dL/dalpha blows up
        let report = match check_hypotheses(&k, &dom, 1.0, &HypothesisProbe::default()) {
            Err(Error::HypothesisViolation(r)) => r,
            other => panic!("expected violation, got {other:?}"),
        };
        assert_eq!(report.h1_excess, 0.0);
        assert_eq!(report.infeasible_alpha_probes, report.x_probes);
        assert!(report.violations.iter().all(|v| v.hypothesis == "regularity"));
        assert!((report.curvature_m_lower - 0.5).abs() < 1e-9);

        // strictly inside the domain everything holds
        let r = check_hypotheses(&k, &dom, 0.9, &HypothesisProbe::default()).unwrap();
        assert!((r.curvature_m_lower - 1.0 / 1.9).abs() < 1e-9);
    }

    #[test]
    fn sigmoid_kernel_passes() {
        let k = sigmoid_kernel();
        let dom = DominatingHamiltonian::from_kernel(&k);
        let probe = HypothesisProbe { x_points_per_axis: 8, alpha_points_per_axis: 9, ..HypothesisProbe::on_box(vec![-2.0], vec![2.0]) };
        let r = check_hypotheses(&k, &dom, 1.0, &probe).unwrap();
        assert!(r.h1_excess <= 0.0);
        let m: Vec<f64> = r.modulus.iter().map(|e| e.value).collect();
        assert!(m.windows(2).all(|w| w[1] <= w[0]));
        assert!(m[0] > 0.0);
        for ray in &r.rays {
            assert!(ray.thresholds.iter().all(|(_, k)| k.is_some()));
        }
    }

    #[test]
    fn negative_rate_is_a_violation() {
        let k = JumpKernel::new(
            1,
            vec![Atom { z: vec![1.0], rate: RateExpr::Affine { c0: 0.5, a: vec![1.0] } }],
            2.0,
        )
        .unwrap();
        let dom = DominatingHamiltonian::from_kernel(&k);
        let probe = HypothesisProbe { x_points_per_axis: 8, alpha_points_per_axis: 5, ..HypothesisProbe::on_box(vec![-1.0], vec![1.0]) };
        match check_hypotheses(&k, &dom, 0.5, &probe) {
            Err(Error::HypothesisViolation(r)) => {
                assert!(r.violations.iter().any(|v| v.hypothesis == "rates" && v.point[0] < -0.5));
            }
            other => panic!("expected violation, got {other:?}"),
        }
    }

    #[test]
    fn halton_points_lie_in_box() {
        let pts = halton_box(&[-1.0, 2.0], &[1.0, 3.0], 100);
        assert!(pts.iter().all(|p| (-1.0..=1.0).contains(&p[0]) && (2.0..=3.0).contains(&p[1])));
        assert_eq!(pts[0], vec![0.0, 2.0 + 1.0 / 3.0]);
    }
}
