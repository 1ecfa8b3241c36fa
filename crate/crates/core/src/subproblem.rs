//! The subsampled quadratic model
//! `m(v) = g^T v + v^T B v / 2 + R(w_t + v)` with
//! `B = sum_k c_k x_k x_k^T + gamma I`, kept as a weighted row list.
//!
//! Every product with `B` is matrix-free and costs one pass over the sampled
//! rows; those row visits are tallied so solvers can report their work.

use std::cell::Cell;

use nalgebra::DMatrix;

use crate::data::{SparseDataset, SparseRow};
use crate::error::{check_dim, Error, Result};
use crate::models::{dot, Regularizer};

/// A sampled row with its merged, nonnegative weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub row: usize,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct SubsampledQuadratic<'a> {
    data: &'a SparseDataset,
    /// Exact full gradient of the smooth part at the anchor.
    pub grad: Vec<f64>,
    pub samples: Vec<Sample>,
    /// Unsampled ridge; `B >= ridge * I`.
    pub ridge: f64,
    /// The outer iterate `w_t`.
    pub anchor: Vec<f64>,
    /// Number of draws that produced `samples` (duplicates merged).
    pub draws: usize,
    evals: Cell<u64>,
}

impl<'a> SubsampledQuadratic<'a> {
    pub fn new(
        data: &'a SparseDataset,
        grad: Vec<f64>,
        samples: Vec<Sample>,
        ridge: f64,
        anchor: Vec<f64>,
        draws: usize,
    ) -> Result<Self> {
        check_dim(data.d(), grad.len())?;
        check_dim(data.d(), anchor.len())?;
        if !(ridge >= 0.0) {
            return Err(Error::InvalidParameter(format!("ridge must be >= 0, got {ridge}")));
        }
        if let Some(s) = samples.iter().find(|s| s.row >= data.n() || !(s.weight >= 0.0)) {
            return Err(Error::InvalidParameter(format!("bad sample {s:?}")));
        }
        Ok(Self {
            data,
            grad,
            samples,
            ridge,
            anchor,
            draws,
            evals: Cell::new(0),
        })
    }

    pub fn data(&self) -> &'a SparseDataset {
        self.data
    }

    pub fn dim(&self) -> usize {
        self.grad.len()
    }

    /// Number of finite-sum components (distinct sampled rows).
    pub fn slots(&self) -> usize {
        self.samples.len()
    }

    /// Row visits spent so far in products and component gradients.
    pub fn evaluations(&self) -> u64 {
        self.evals.get()
    }

    pub(crate) fn charge(&self, rows: u64) {
        self.evals.set(self.evals.get() + rows);
    }

    #[inline]
    fn sample_row(&self, k: usize) -> (SparseRow<'a>, f64) {
        let s = self.samples[k];
        (self.data.row(s.row), s.weight)
    }

    /// `B v`.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        self.matvec_into(v, &mut out);
        out
    }

    pub fn matvec_into(&self, v: &[f64], out: &mut [f64]) {
        for (o, x) in out.iter_mut().zip(v) {
            *o = self.ridge * x;
        }
        for s in &self.samples {
            let row = self.data.row(s.row);
            let a = s.weight * row.dot(v);
            if a != 0.0 {
                row.axpy(a, out);
            }
        }
        self.charge(self.samples.len() as u64);
    }

    /// `g^T v + v^T B v / 2 + R(w_t + v)`.
    pub fn value(&self, reg: &Regularizer, v: &[f64]) -> f64 {
        let bv = self.matvec(v);
        self.value_with(reg, v, &bv)
    }

    /// Same as [`value`](Self::value) with `B v` supplied.
    pub fn value_with(&self, reg: &Regularizer, v: &[f64], bv: &[f64]) -> f64 {
        let shifted: Vec<f64> = self.anchor.iter().zip(v).map(|(a, x)| a + x).collect();
        dot(&self.grad, v) + 0.5 * dot(v, bv) + reg.value(&shifted)
    }

    /// Gradient of component `k` of the finite-sum split
    /// `phi_k(v) = g^T v + (K c_k / 2)(x_k^T v)^2 + (ridge/2)|v|^2`, `K = slots()`.
    /// The average over `k` equals `g + B v`.
    pub fn component_gradient(&self, k: usize, v: &[f64]) -> Result<Vec<f64>> {
        if k >= self.slots() {
            return Err(Error::InvalidParameter(format!(
                "component slot {k} out of range (slots = {})",
                self.slots()
            )));
        }
        let mut out: Vec<f64> = self.grad.iter().zip(v).map(|(g, x)| g + self.ridge * x).collect();
        let coef = self.component_coefficient(k, v);
        self.sample_row(k).0.axpy(coef, &mut out);
        Ok(out)
    }

    /// `K c_k (x_k^T v)`, the scalar that scales `x_k` in a component gradient.
    #[inline]
    pub(crate) fn component_coefficient(&self, k: usize, v: &[f64]) -> f64 {
        self.charge(1);
        let (row, c) = self.sample_row(k);
        self.samples.len() as f64 * c * row.dot(v)
    }

    #[inline]
    pub(crate) fn component_row(&self, k: usize) -> SparseRow<'a> {
        self.sample_row(k).0
    }

    /// Smoothness constant of component `k`.
    pub fn component_smoothness(&self, k: usize) -> f64 {
        let (row, c) = self.sample_row(k);
        self.samples.len() as f64 * c * row.norm_sq() + self.ridge
    }

    /// Largest component smoothness (the ridge alone when there are no samples).
    pub fn max_component_smoothness(&self) -> f64 {
        (0..self.slots())
            .map(|k| self.component_smoothness(k))
            .fold(self.ridge, f64::max)
    }

    /// `sqrt(v^T B v)`.
    pub fn newton_decrement(&self, v: &[f64]) -> Result<f64> {
        let bv = self.matvec(v);
        decrement_from(v, &bv)
    }

    /// One proximal-gradient step on the model from `v_in` with step `alpha`.
    ///
    /// The returned residual `r = (v_in - v_post)/alpha - B (v_in - v_post)`
    /// lies in `g + B v_post + dR(w_t + v_post)`, so it certifies `v_post`.
    pub fn residual_certificate(&self, reg: &Regularizer, v_in: &[f64], alpha: f64) -> Result<Certificate> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidParameter(format!("step must be positive, got {alpha}")));
        }
        check_dim(self.dim(), v_in.len())?;
        let bv_in = self.matvec(v_in);
        self.certificate_with(reg, v_in, &bv_in, alpha)
    }

    /// [`residual_certificate`](Self::residual_certificate) with `B v_in` supplied.
    pub fn certificate_with(&self, reg: &Regularizer, v_in: &[f64], bv_in: &[f64], alpha: f64) -> Result<Certificate> {
        let mut v_post: Vec<f64> = v_in
            .iter()
            .zip(&self.grad)
            .zip(bv_in)
            .map(|((v, g), bv)| v - alpha * (g + bv))
            .collect();
        reg.shifted_prox_in_place(&self.anchor, &mut v_post, alpha);
        let delta: Vec<f64> = v_in.iter().zip(&v_post).map(|(a, b)| a - b).collect();
        let b_delta = self.matvec(&delta);
        let residual: Vec<f64> = delta.iter().zip(&b_delta).map(|(dl, bd)| dl / alpha - bd).collect();
        let bv_post: Vec<f64> = bv_in.iter().zip(&b_delta).map(|(a, b)| a - b).collect();
        Ok(Certificate {
            v_post,
            residual,
            bv_post,
        })
    }

    /// Upper estimate of `sqrt(r^T B^{-1} r)` by conjugate gradients.
    ///
    /// With CG iterate `z` and residual `s = r - B z`,
    /// `r^T B^{-1} r = r^T z + s^T z + s^T B^{-1} s <= r^T z + s^T z + |s|^2 / ridge`,
    /// so the returned value never underestimates when `ridge > 0`; at `z = 0`
    /// it reduces to `|r| / sqrt(ridge)`.
    pub fn dual_norm(&self, r: &[f64], tol: f64, max_iter: usize) -> DualNorm {
        let rr = dot(r, r);
        if rr == 0.0 {
            return DualNorm { value: 0.0, iterations: 0, converged: true };
        }
        let mut z = vec![0.0; r.len()];
        let mut s = r.to_vec();
        let mut p = r.to_vec();
        let mut ss = rr;
        let mut iterations = 0;
        let mut converged = false;
        let mut bp = vec![0.0; r.len()];
        while iterations < max_iter {
            if ss.sqrt() <= tol * rr.sqrt() {
                converged = true;
                break;
            }
            self.matvec_into(&p, &mut bp);
            let pbp = dot(&p, &bp);
            if !(pbp > 0.0) {
                break;
            }
            let a = ss / pbp;
            for i in 0..z.len() {
                z[i] += a * p[i];
                s[i] -= a * bp[i];
            }
            let ss_new = dot(&s, &s);
            let beta = ss_new / ss;
            ss = ss_new;
            for i in 0..p.len() {
                p[i] = s[i] + beta * p[i];
            }
            iterations += 1;
        }
        if !converged && ss.sqrt() <= tol * rr.sqrt() {
            converged = true;
        }
        let core = dot(r, &z) + dot(&s, &z);
        let value = if self.ridge > 0.0 {
            (core.max(0.0) + ss / self.ridge).sqrt()
        } else {
            core.max(0.0).sqrt()
        };
        DualNorm { value, iterations, converged }
    }

    /// Dense `B`, for oracles and diagnostics only.
    pub fn dense_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::<f64>::identity(d, d) * self.ridge;
        for s in &self.samples {
            let row = self.data.row(s.row);
            for (a, va) in row.iter() {
                for (b, vb) in row.iter() {
                    m[(a, b)] += s.weight * va * vb;
                }
            }
        }
        m
    }
}

pub(crate) fn decrement_from(v: &[f64], bv: &[f64]) -> Result<f64> {
    let q = dot(v, bv);
    if q < -1e-12 * (1.0 + dot(v, v)) {
        return Err(Error::Numerical(format!("model curvature is negative: v^T B v = {q}")));
    }
    Ok(q.max(0.0).sqrt())
}

/// Output of [`SubsampledQuadratic::residual_certificate`].
#[derive(Debug, Clone)]
pub struct Certificate {
    pub v_post: Vec<f64>,
    pub residual: Vec<f64>,
    /// `B v_post`, free by linearity.
    pub bv_post: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualNorm {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// A certified step of the model.
#[derive(Debug, Clone)]
pub struct Direction {
    pub v: Vec<f64>,
    /// `|v|_B`, the inexact Newton decrement.
    pub decrement: f64,
    pub residual: Vec<f64>,
    pub residual_dual: f64,
}
