//! Event-driven simulation of the process generated by `(1/h) L^h`.
//!
//! Candidate events for atom `j` arrive at rate `b_j / h` with `b_j` the
//! dominating rate (`rate_bound`, times `e^{<z_j, C>}` under a tilt) and are
//! accepted with probability `rate_j(X) / b_j`; an accepted event moves the
//! state by `h z_j`. Between events the state follows the compensator drift
//! `-sum_j lambda_j(X) z_j`.
//!
//! Rates and drift are frozen on substeps of length at most
//! `h / (substep_factor * rate_bound)`, re-frozen after every candidate event.
//! The simulated process is therefore the exact jump process with piecewise
//! constant intensities, for which the exponential martingale and the tilted
//! likelihood ratio hold exactly when `int H(X_s, C) ds` is accumulated with the
//! same frozen states. For state-independent kernels no substeps are taken.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::rate::dot;
use crate::model::JumpKernel;

/// Independent stream for path `index` under `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub(crate) struct Engine<'a> {
    pub kernel: &'a JumpKernel,
    pub h: f64,
    pub horizon: f64,
    pub x0: &'a [f64],
    pub max_events: usize,
    pub substep_factor: f64,
    /// Rate multipliers `e^{<z_j, C>}` for a tilted run.
    pub tilt: Option<&'a [f64]>,
    /// Covector whose Hamiltonian is integrated along the path.
    pub track: Option<&'a [f64]>,
    /// Times at which to record the state, sorted, in `(0, horizon]`.
    pub checkpoints: &'a [f64],
}

pub(crate) struct PathEnd {
    pub state: Vec<f64>,
    /// `int_0^t H(X_s, C) ds` for the tracked covector.
    pub h_integral: f64,
    pub recorded: Vec<Vec<f64>>,
}

pub(crate) enum EventKind {
    Start,
    Jump(usize),
    End,
}

impl<'a> Engine<'a> {
    pub fn new(kernel: &'a JumpKernel, h: f64, horizon: f64, x0: &'a [f64], max_events: usize) -> Self {
        Engine {
            kernel,
            h,
            horizon,
            x0,
            max_events,
            substep_factor: 10.0,
            tilt: None,
            track: None,
            checkpoints: &[],
        }
    }

    /// Candidate rate multipliers `e^{<z_j, C>}` for a tilt covector.
    pub fn tilt_factors(kernel: &JumpKernel, c: &[f64]) -> Result<Vec<f64>> {
        kernel
            .atoms
            .iter()
            .enumerate()
            .map(|(j, a)| {
                let u = dot(&a.z, c);
                if u > kernel.exponent_cap() {
                    Err(Error::ExponentOverflow { atom: Some(j), exponent: u, cap: kernel.exponent_cap() })
                } else {
                    Ok(u.exp())
                }
            })
            .collect()
    }

    /// Expected number of candidate events on one path.
    pub fn expected_candidates(&self) -> f64 {
        let bound = self.kernel.rate_bound;
        let sum: f64 = match self.tilt {
            Some(f) => f.iter().map(|m| bound * m).sum(),
            None => bound * self.kernel.atoms.len() as f64,
        };
        sum * self.horizon / self.h
    }

    /// Runs one path; `Ok(None)` means it hit the event cap and was aborted.
    pub fn run<R: Rng>(
        &self,
        rng: &mut R,
        mut on_event: impl FnMut(f64, &[f64], EventKind),
    ) -> Result<Option<PathEnd>> {
        let k = self.kernel;
        let d = k.dim;
        let n_atoms = k.atoms.len();
        let bound = k.rate_bound;
        let dominating: Vec<f64> = match self.tilt {
            Some(f) => f.iter().map(|m| bound * m).collect(),
            None => vec![bound; n_atoms],
        };
        let total: f64 = dominating.iter().sum();
        let cand_rate = total / self.h;
        let state_free = k.is_state_independent();
        let substep = if state_free || bound == 0.0 {
            f64::INFINITY
        } else {
            self.h / (self.substep_factor * bound)
        };

        let mut x = self.x0.to_vec();
        let mut t = 0.0;
        let mut integral = 0.0;
        let mut events = 0usize;
        let mut rates = vec![0.0; n_atoms];
        let mut drift = vec![0.0; d];
        let mut hval = 0.0;
        let mut recorded = Vec::with_capacity(self.checkpoints.len());
        let mut next_cp = 0usize;
        let mut refreeze = true;
        // state-independent paths are rebuilt from jump counts, so lattice
        // endpoints such as x0 + h n z - t v come out exactly
        let mut counts = vec![0u64; n_atoms];
        on_event(0.0, &x, EventKind::Start);

        loop {
            if refreeze {
                self.freeze(&x, &mut rates, &mut drift, &mut hval)?;
                // memoryless candidates: state-dependent rates are re-frozen
                // after every candidate and at every substep boundary
                refreeze = !state_free;
            }
            let seg_end = (t + substep).min(self.horizon);
            let tau = if cand_rate > 0.0 {
                -(1.0 - rng.random::<f64>()).ln() / cand_rate
            } else {
                f64::INFINITY
            };

            if t + tau < seg_end {
                self.advance(&mut x, &drift, t, tau, &mut recorded, &mut next_cp);
                integral += hval * tau;
                t += tau;
                if state_free {
                    self.rebuild(&mut x, &counts, &drift, t);
                }
                events += 1;
                if events > self.max_events {
                    return Ok(None);
                }
                let mut u = rng.random::<f64>() * total;
                let mut j = 0;
                while j + 1 < n_atoms && u >= dominating[j] {
                    u -= dominating[j];
                    j += 1;
                }
                let target = rates[j] * self.tilt.map_or(1.0, |f| f[j]);
                if rng.random::<f64>() * dominating[j] < target {
                    if state_free {
                        counts[j] += 1;
                        self.rebuild(&mut x, &counts, &drift, t);
                    } else {
                        for (xi, zi) in x.iter_mut().zip(&k.atoms[j].z) {
                            *xi += self.h * zi;
                        }
                    }
                    on_event(t, &x, EventKind::Jump(j));
                }
            } else {
                let dt = seg_end - t;
                self.advance(&mut x, &drift, t, dt, &mut recorded, &mut next_cp);
                integral += hval * dt;
                t = seg_end;
                if state_free {
                    self.rebuild(&mut x, &counts, &drift, t);
                }
                if t >= self.horizon {
                    break;
                }
            }
        }
        while next_cp < self.checkpoints.len() {
            recorded.push(x.clone());
            next_cp += 1;
        }
        on_event(t, &x, EventKind::End);
        Ok(Some(PathEnd { state: x, h_integral: integral, recorded }))
    }

    fn freeze(&self, x: &[f64], rates: &mut [f64], drift: &mut [f64], hval: &mut f64) -> Result<()> {
        let k = self.kernel;
        for (j, atom) in k.atoms.iter().enumerate() {
            let r = atom.rate.eval(x);
            if !(r >= 0.0) {
                return Err(Error::NegativeRate { atom: j, rate: r, state: x.to_vec() });
            }
            if r > k.rate_bound * (1.0 + 1e-12) {
                return Err(Error::RateBoundExceeded { atom: j, rate: r, bound: k.rate_bound, state: x.to_vec() });
            }
            rates[j] = r;
        }
        k.drift_with_rates(rates, drift);
        if let Some(c) = self.track {
            *hval = k.hamiltonian_with_rates(rates, c)?;
        }
        Ok(())
    }

    /// `x0 + h sum_j n_j z_j + t v` for constant drift `v`.
    fn rebuild(&self, x: &mut [f64], counts: &[u64], drift: &[f64], t: f64) {
        for (c, xc) in x.iter_mut().enumerate() {
            let jumps: f64 = counts.iter().zip(&self.kernel.atoms).map(|(&n, a)| n as f64 * a.z[c]).sum();
            *xc = self.x0[c] + self.h * jumps + t * drift[c];
        }
    }

    fn advance(&self, x: &mut [f64], drift: &[f64], t: f64, dt: f64, rec: &mut Vec<Vec<f64>>, next_cp: &mut usize) {
        let end = t + dt;
        while *next_cp < self.checkpoints.len() && self.checkpoints[*next_cp] < end {
            let s = self.checkpoints[*next_cp] - t;
            rec.push(x.iter().zip(drift).map(|(xi, v)| xi + v * s).collect());
            *next_cp += 1;
        }
        for (xi, v) in x.iter_mut().zip(drift) {
            *xi += v * dt;
        }
    }
}
