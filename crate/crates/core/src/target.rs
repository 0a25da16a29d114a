use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An open target set: a Euclidean ball or an axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TargetSet {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

impl TargetSet {
    /// The open interval `(lo, hi)` in one dimension.
    pub fn interval(lo: f64, hi: f64) -> Self {
        TargetSet::Box { lower: vec![lo], upper: vec![hi] }
    }

    pub fn dim(&self) -> usize {
        match self {
            TargetSet::Ball { center, .. } => center.len(),
            TargetSet::Box { lower, .. } => lower.len(),
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let ok = match self {
            TargetSet::Ball { center, radius } => {
                center.len() == dim && *radius > 0.0 && center.iter().all(|c| c.is_finite())
            }
            TargetSet::Box { lower, upper } => {
                lower.len() == dim
                    && upper.len() == dim
                    && lower.iter().zip(upper).all(|(a, b)| a.is_finite() && b.is_finite() && a < b)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid target set for dimension {dim}: {self:?}")))
        }
    }

    pub fn contains_open(&self, x: &[f64]) -> bool {
        match self {
            TargetSet::Ball { center, radius } => dist2(x, center) < radius * radius,
            TargetSet::Box { lower, upper } => {
                x.iter().zip(lower.iter().zip(upper)).all(|(v, (a, b))| a < v && v < b)
            }
        }
    }

    pub fn contains_closed(&self, x: &[f64]) -> bool {
        match self {
            TargetSet::Ball { center, radius } => dist2(x, center) <= radius * radius,
            TargetSet::Box { lower, upper } => {
                x.iter().zip(lower.iter().zip(upper)).all(|(v, (a, b))| a <= v && v <= b)
            }
        }
    }

    /// Bounding box of the closure.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            TargetSet::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            TargetSet::Box { lower, upper } => (lower.clone(), upper.clone()),
        }
    }

    /// Nearest point of the closure.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        match self {
            TargetSet::Ball { center, radius } => {
                let d = dist2(x, center).sqrt();
                if d <= *radius {
                    x.to_vec()
                } else {
                    center.iter().zip(x).map(|(c, v)| c + (v - c) * radius / d).collect()
                }
            }
            TargetSet::Box { lower, upper } => {
                x.iter().zip(lower.iter().zip(upper)).map(|(v, (a, b))| v.clamp(*a, *b)).collect()
            }
        }
    }

    /// Tensor grid over the bounding box (endpoints included), keeping points in
    /// the closure.
    pub fn closure_grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let (lo, hi) = self.bounds();
        let n = per_axis.max(2);
        let d = lo.len();
        (0..n.pow(d as u32))
            .map(|mut idx| {
                (0..d)
                    .map(|k| {
                        let i = idx % n;
                        idx /= n;
                        if i == n - 1 {
                            hi[k]
                        } else {
                            lo[k] + (hi[k] - lo[k]) * i as f64 / (n - 1) as f64
                        }
                    })
                    .collect::<Vec<f64>>()
            })
            .filter(|p| self.contains_closed(p))
            .collect()
    }

    pub fn describe(&self) -> String {
        match self {
            TargetSet::Ball { center, radius } => format!("ball(center={center:?}, radius={radius})"),
            TargetSet::Box { lower, upper } => format!("box(lower={lower:?}, upper={upper:?})"),
        }
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Bounded functions of the terminal state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Observable {
    /// `f = 1`.
    One,
    /// Indicator of the open set.
    Indicator { target: TargetSet },
    /// Indicator of `{x : <normal, x> >= threshold}`.
    HalfSpace { normal: Vec<f64>, threshold: f64 },
    /// `f(x) = x[index]`; unbounded, intended for moment checks.
    Coordinate { index: usize },
}

impl Observable {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Observable::One => 1.0,
            Observable::Indicator { target } => indicator(target.contains_open(x)),
            Observable::HalfSpace { normal, threshold } => {
                indicator(normal.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() >= *threshold)
            }
            Observable::Coordinate { index } => x[*index],
        }
    }
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn open_versus_closed() {
        let t = TargetSet::interval(1.5, 2.5);
        assert!(!t.contains_open(&[1.5]));
        assert!(t.contains_closed(&[1.5]));
        assert!(t.contains_open(&[2.0]));
        let b = TargetSet::Ball { center: vec![0.0, 0.0], radius: 1.0 };
        assert!(!b.contains_open(&[1.0, 0.0]));
        assert!(b.contains_closed(&[1.0, 0.0]));
    }

    #[test]
    fn grid_includes_endpoints() {
        let g = TargetSet::interval(1.5, 2.5).closure_grid(5);
        assert_eq!(g.first().unwrap(), &vec![1.5]);
        assert_eq!(g.last().unwrap(), &vec![2.5]);
        let ball = TargetSet::Ball { center: vec![0.0, 0.0], radius: 1.0 }.closure_grid(5);
        assert!(ball.iter().all(|p| p[0] * p[0] + p[1] * p[1] <= 1.0));
        assert_eq!(ball.len(), 13);
    }

    #[test]
    fn projection() {
        let b = TargetSet::Ball { center: vec![1.0, 0.0], radius: 0.5 };
        let p = b.project(&[3.0, 0.0]);
        assert!((p[0] - 1.5).abs() < 1e-15);
        assert_eq!(TargetSet::interval(0.0, 1.0).project(&[-2.0]), vec![0.0]);
    }

    #[test]
    fn observables() {
        assert_eq!(Observable::One.eval(&[3.0]), 1.0);
        let hs = Observable::HalfSpace { normal: vec![1.0], threshold: 0.0 };
        assert_eq!(hs.eval(&[0.0]), 1.0);
        assert_eq!(hs.eval(&[-1e-12]), 0.0);
    }
}
