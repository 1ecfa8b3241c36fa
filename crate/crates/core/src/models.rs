//! Loss kernels, regularizers and the composite objective
//! `F(w) = (1/n) sum_i f_i(x_i^T w) + (gamma/2)|w|^2 + lambda1 |w|_1`.
//!
//! The ridge `gamma` belongs to the smooth part, so the smooth part is
//! `gamma`-strongly convex. An elastic-net quadratic weight is folded into
//! `gamma` as well; the regularizer proper is the (possibly zero) l1 term.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{margins, SparseDataset};
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    /// `log(1 + exp(-y u))`
    Logistic,
    /// `(u - y)^2 / 2`
    Squared,
}

/// Value, first derivative and curvature of a scalar loss at one margin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossPoint {
    pub value: f64,
    pub deriv: f64,
    pub curvature: f64,
}

impl Loss {
    pub fn point(self, u: f64, y: f64) -> LossPoint {
        match self {
            Loss::Logistic => {
                let z = y * u;
                // e = exp(-|z|) never overflows; s = sigma(-z), t = sigma(z)
                let e = (-z.abs()).exp();
                let (s, t) = if z >= 0.0 {
                    (e / (1.0 + e), 1.0 / (1.0 + e))
                } else {
                    (1.0 / (1.0 + e), e / (1.0 + e))
                };
                let value = if z >= 0.0 { e.ln_1p() } else { -z + e.ln_1p() };
                LossPoint {
                    value,
                    deriv: -y * s,
                    curvature: y * y * s * t,
                }
            }
            Loss::Squared => {
                let r = u - y;
                LossPoint {
                    value: 0.5 * r * r,
                    deriv: r,
                    curvature: 1.0,
                }
            }
        }
    }

    /// Global upper bound on the curvature for `|y| <= 1`.
    pub fn max_curvature(self) -> f64 {
        match self {
            Loss::Logistic => 0.25,
            Loss::Squared => 1.0,
        }
    }
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Loss::Logistic => "logistic",
            Loss::Squared => "squared",
        })
    }
}

impl FromStr for Loss {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(Loss::Logistic),
            "squared" => Ok(Loss::Squared),
            _ => Err(Error::InvalidParameter(format!("unknown loss {s:?}"))),
        }
    }
}

/// Convex regularizer `R(w) = l1 |w|_1`, with an optional smooth quadratic
/// weight `l2` that is routed into the ridge of the smooth part.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Regularizer {
    pub l1: f64,
    pub l2: f64,
}

impl Regularizer {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn l1(l1: f64) -> Self {
        Self { l1, l2: 0.0 }
    }

    pub fn elastic_net(l1: f64, l2: f64) -> Self {
        Self { l1, l2 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l1 >= 0.0 && self.l1.is_finite() && self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "regularizer weights must be finite and nonnegative, got l1={} l2={}",
                self.l1, self.l2
            )));
        }
        Ok(())
    }

    /// The nonsmooth part only.
    pub fn value(&self, w: &[f64]) -> f64 {
        if self.l1 == 0.0 {
            return 0.0;
        }
        self.l1 * w.iter().map(|x| x.abs()).sum::<f64>()
    }

    /// `prox_{alpha R}(z)`: coordinatewise soft-thresholding at `alpha * l1`.
    pub fn prox(&self, z: &[f64], alpha: f64) -> Vec<f64> {
        let mut out = z.to_vec();
        self.prox_in_place(&mut out, alpha);
        out
    }

    pub fn prox_in_place(&self, z: &mut [f64], alpha: f64) {
        let t = alpha * self.l1;
        if t == 0.0 {
            return;
        }
        for x in z {
            *x = soft_threshold(*x, t);
        }
    }

    /// `argmin_u R(anchor + u) + |u - z|^2 / (2 alpha)`, i.e.
    /// `prox(anchor + z) - anchor`.
    pub fn shifted_prox(&self, anchor: &[f64], z: &[f64], alpha: f64) -> Vec<f64> {
        let mut out = z.to_vec();
        self.shifted_prox_in_place(anchor, &mut out, alpha);
        out
    }

    pub fn shifted_prox_in_place(&self, anchor: &[f64], z: &mut [f64], alpha: f64) {
        let t = alpha * self.l1;
        if t == 0.0 {
            return;
        }
        for (x, &a) in z.iter_mut().zip(anchor) {
            *x = soft_threshold(a + *x, t) - a;
        }
    }
}

#[inline]
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Everything computed from one pass over the margins at a point.
#[derive(Debug, Clone)]
pub struct PointEval {
    pub margins: Vec<f64>,
    /// Smooth part `f(w)`, ridge included.
    pub smooth: f64,
    /// `F(w) = f(w) + R(w)`.
    pub objective: f64,
    pub grad: Vec<f64>,
    /// Per-sample `f_i''(u_i) / n`; only filled when requested.
    pub dvals: Option<Vec<f64>>,
}

/// A regularized empirical-risk problem over a borrowed dataset.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub data: &'a SparseDataset,
    pub loss: Loss,
    pub reg: Regularizer,
    /// Ridge weight of the smooth part (before folding in `reg.l2`).
    pub gamma: f64,
}

impl<'a> Problem<'a> {
    pub fn new(data: &'a SparseDataset, loss: Loss, reg: Regularizer, gamma: f64) -> Result<Self> {
        reg.validate()?;
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma must be >= 0, got {gamma}")));
        }
        if loss == Loss::Logistic {
            data.require_binary_labels()?;
        }
        Ok(Self { data, loss, reg, gamma })
    }

    pub fn dim(&self) -> usize {
        self.data.d()
    }

    /// Effective ridge of the smooth part.
    pub fn ridge(&self) -> f64 {
        self.gamma + self.reg.l2
    }

    fn inv_n(&self) -> f64 {
        1.0 / self.data.n().max(1) as f64
    }

    /// Smooth and composite values plus the gradient, from one margin pass.
    pub fn evaluate(&self, w: &[f64], with_curvature: bool) -> Result<PointEval> {
        let u = margins(self.data, w)?;
        let inv_n = self.inv_n();
        let ridge = self.ridge();
        let labels = self.data.labels();
        let mut loss_sum = 0.0;
        let mut grad: Vec<f64> = w.iter().map(|x| ridge * x).collect();
        let mut dvals = with_curvature.then(|| Vec::with_capacity(u.len()));
        for (i, (&ui, &yi)) in u.iter().zip(labels).enumerate() {
            let p = self.loss.point(ui, yi);
            loss_sum += p.value;
            if p.deriv != 0.0 {
                self.data.row(i).axpy(p.deriv * inv_n, &mut grad);
            }
            if let Some(dv) = dvals.as_mut() {
                dv.push(p.curvature * inv_n);
            }
        }
        let smooth = loss_sum * inv_n + 0.5 * ridge * dot(w, w);
        let objective = smooth + self.reg.value(w);
        if !objective.is_finite() {
            return Err(Error::Numerical(format!("non-finite objective {objective}")));
        }
        Ok(PointEval {
            margins: u,
            smooth,
            objective,
            grad,
            dvals,
        })
    }

    /// `F(w)`.
    pub fn objective(&self, w: &[f64]) -> Result<f64> {
        let u = margins(self.data, w)?;
        let labels = self.data.labels();
        let loss_sum: f64 = u
            .iter()
            .zip(labels)
            .map(|(&ui, &yi)| self.loss.point(ui, yi).value)
            .sum();
        Ok(loss_sum * self.inv_n() + 0.5 * self.ridge() * dot(w, w) + self.reg.value(w))
    }

    /// Gradient of the smooth part.
    pub fn gradient(&self, w: &[f64]) -> Result<Vec<f64>> {
        Ok(self.evaluate(w, false)?.grad)
    }

    /// Smooth-part value only.
    pub fn smooth_value(&self, w: &[f64]) -> Result<f64> {
        check_dim(self.dim(), w.len())?;
        Ok(self.objective(w)? - self.reg.value(w))
    }

    /// Upper bound on the smoothness of any single component
    /// `f_i(x_i^T w) + (gamma/2)|w|^2` (without the 1/n factor).
    pub fn max_component_smoothness(&self) -> f64 {
        self.loss.max_curvature() * self.data.max_row_norm_sq() + self.ridge()
    }

    /// Upper bound on the smoothness of the averaged smooth part.
    pub fn smoothness_bound(&self) -> f64 {
        // sum_i |x_i|^2 / n bounds the top eigenvalue of X^T X / n
        let mean_sq: f64 = self.data.rows().map(|r| r.norm_sq()).sum::<f64>() * self.inv_n();
        self.loss.max_curvature() * mean_sq + self.ridge()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
