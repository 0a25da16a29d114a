use serde::{Deserialize, Serialize};

/// Closed-form intensity `x -> lambda(x)` of a single jump atom.
///
/// The JSON form is internally tagged, e.g.
/// `{"type":"sigmoid","c0":1.0,"c1":0.5,"a":[1.0],"b":0.0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RateExpr {
    Constant { value: f64 },
    /// `c0 + <a, x>`
    Affine { c0: f64, a: Vec<f64> },
    /// `c0 + c1 / (1 + exp(-<a, x> + b))`
    Sigmoid { c0: f64, c1: f64, a: Vec<f64>, b: f64 },
}

impl RateExpr {
    pub fn constant(value: f64) -> Self {
        RateExpr::Constant { value }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            RateExpr::Constant { value } => *value,
            RateExpr::Affine { c0, a } => c0 + dot(a, x),
            RateExpr::Sigmoid { c0, c1, a, b } => c0 + c1 / (1.0 + (-dot(a, x) + b).exp()),
        }
    }

    /// Coefficient vector length, if the expression has one.
    pub(crate) fn coeff_dim(&self) -> Option<usize> {
        match self {
            RateExpr::Constant { .. } => None,
            RateExpr::Affine { a, .. } | RateExpr::Sigmoid { a, .. } => Some(a.len()),
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            RateExpr::Constant { .. } => true,
            RateExpr::Affine { a, .. } => a.iter().all(|&c| c == 0.0),
            RateExpr::Sigmoid { a, c1, .. } => *c1 == 0.0 || a.iter().all(|&c| c == 0.0),
        }
    }

    /// `sup_x lambda(x)`, or `None` when the expression is unbounded above.
    pub fn sup(&self) -> Option<f64> {
        match self {
            RateExpr::Constant { value } => Some(*value),
            RateExpr::Affine { c0, .. } if self.is_constant() => Some(*c0),
            RateExpr::Affine { .. } => None,
            RateExpr::Sigmoid { c0, c1, a, .. } => {
                if a.iter().all(|&c| c == 0.0) {
                    Some(self.eval(&vec![0.0; a.len()]))
                } else {
                    Some(c0.max(c0 + c1))
                }
            }
        }
    }

    /// `inf_x lambda(x)`, or `None` when unbounded below.
    pub fn inf(&self) -> Option<f64> {
        match self {
            RateExpr::Constant { value } => Some(*value),
            RateExpr::Affine { c0, .. } if self.is_constant() => Some(*c0),
            RateExpr::Affine { .. } => None,
            RateExpr::Sigmoid { c0, c1, a, .. } => {
                if a.iter().all(|&c| c == 0.0) {
                    Some(self.eval(&vec![0.0; a.len()]))
                } else {
                    Some(c0.min(c0 + c1))
                }
            }
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
