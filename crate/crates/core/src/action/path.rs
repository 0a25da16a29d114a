use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::conjugate::try_legendre;
use crate::error::{Error, Result};
use crate::model::JumpKernel;

/// Knots `x_0..x_N` at uniform times `t_k = k T / N`, joined by straight segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolygonalPath {
    pub horizon: f64,
    pub knots: Vec<Vec<f64>>,
}

impl PolygonalPath {
    pub fn new(horizon: f64, knots: Vec<Vec<f64>>) -> Result<Self> {
        let p = PolygonalPath { horizon, knots };
        p.validate()?;
        Ok(p)
    }

    pub fn straight(x: &[f64], y: &[f64], segments: usize, horizon: f64) -> Self {
        let knots = (0..=segments)
            .map(|k| {
                let s = k as f64 / segments as f64;
                x.iter().zip(y).map(|(a, b)| a + s * (b - a)).collect()
            })
            .collect();
        PolygonalPath { horizon, knots }
    }

    pub fn validate(&self) -> Result<()> {
        if self.knots.len() < 2 {
            return Err(Error::InvalidArgument("a path needs at least one segment".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {}", self.horizon)));
        }
        let d = self.knots[0].len();
        if self.knots.iter().any(|k| k.len() != d || k.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidArgument("knots must be finite and of equal dimension".into()));
        }
        Ok(())
    }

    pub fn segments(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.segments() as f64
    }

    pub fn velocity(&self, i: usize) -> Vec<f64> {
        let dt = self.dt();
        self.knots[i + 1].iter().zip(&self.knots[i]).map(|(b, a)| (b - a) / dt).collect()
    }

    /// Same curve with every segment split in two.
    pub fn refined(&self) -> Self {
        let mut knots = Vec::with_capacity(2 * self.knots.len() - 1);
        for w in self.knots.windows(2) {
            knots.push(w[0].clone());
            knots.push(w[0].iter().zip(&w[1]).map(|(a, b)| 0.5 * (a + b)).collect());
        }
        knots.push(self.knots.last().unwrap().clone());
        PolygonalPath { horizon: self.horizon, knots }
    }

    /// `t,x_1..x_d` rows.
    pub fn to_csv(&self) -> String {
        let d = self.knots[0].len();
        let mut out = String::from("t");
        for k in 1..=d {
            let _ = write!(out, ",x_{k}");
        }
        out.push('\n');
        let dt = self.dt();
        for (i, knot) in self.knots.iter().enumerate() {
            let _ = write!(out, "{}", i as f64 * dt);
            for v in knot {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Discretized action; infeasible segments keep their index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathAction {
    Finite { value: f64 },
    Infinite { segment: usize },
}

impl PathAction {
    pub fn value(self) -> Option<f64> {
        match self {
            PathAction::Finite { value } => Some(value),
            PathAction::Infinite { .. } => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, PathAction::Finite { .. })
    }
}

/// `dt * sum_i L(x_i, (x_{i+1} - x_i) / dt)`: left-endpoint rule on each segment.
pub fn action_of_path(kernel: &JumpKernel, path: &PolygonalPath) -> Result<PathAction> {
    path.validate()?;
    if path.knots[0].len() != kernel.dim {
        return Err(Error::InvalidArgument("path dimension does not match kernel".into()));
    }
    let dt = path.dt();
    let mut total = 0.0;
    for i in 0..path.segments() {
        match try_legendre(kernel, &path.knots[i], &path.velocity(i))? {
            Some(r) => total += dt * r.value,
            None => return Ok(PathAction::Infinite { segment: i }),
        }
    }
    Ok(PathAction::Finite { value: total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    #[test]
    fn constant_path_is_free() {
        let k = JumpKernel::symmetric_unit(0.5);
        let p = PolygonalPath::straight(&[0.4], &[0.4], 7, 1.0);
        assert_eq!(action_of_path(&k, &p).unwrap(), PathAction::Finite { value: 0.0 });
    }

    #[test]
    fn straight_line_unit_jump() {
        let k = JumpKernel::unit_jump(1.0);
        for n in [1, 4, 50] {
            let p = PolygonalPath::straight(&[0.0], &[E - 1.0], n, 1.0);
            let v = action_of_path(&k, &p).unwrap().value().unwrap();
            assert!((v - 1.0).abs() < 1e-9, "N={n}: {v}");
        }
    }

    #[test]
    fn infeasible_segment_is_reported() {
        let k = JumpKernel::unit_jump(1.0);
        let p = PolygonalPath::straight(&[0.0], &[-2.0], 5, 1.0);
        assert_eq!(action_of_path(&k, &p).unwrap(), PathAction::Infinite { segment: 0 });
        let mut bent = PolygonalPath::straight(&[0.0], &[0.5], 4, 1.0);
        bent.knots[3] = vec![1.2];
        assert_eq!(action_of_path(&k, &bent).unwrap(), PathAction::Infinite { segment: 3 });
    }

    #[test]
    fn csv_layout() {
        let p = PolygonalPath::straight(&[0.0, 1.0], &[1.0, 1.0], 2, 1.0);
        assert_eq!(p.to_csv(), "t,x_1,x_2\n0,0,1\n0.5,0.5,1\n1,1,1\n");
    }

    #[test]
    fn refinement_keeps_the_curve() {
        let p = PolygonalPath::straight(&[0.0], &[1.0], 3, 2.0);
        let r = p.refined();
        assert_eq!(r.segments(), 6);
        assert!((r.knots[3][0] - 0.5).abs() < 1e-15);
    }
}
