//! Curvature coefficients, leverage scores of `D^{1/2} X`, the sampling
//! distribution and the draw that assembles a [`SubsampledQuadratic`].

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::SparseDataset;
use crate::error::{check_dim, Error, Result};
use crate::models::Problem;
use crate::subproblem::{Sample, SubsampledQuadratic};

/// Mean-normalized Hessian coefficients `dvals_i = f_i''(u_i) / n`, so that
/// the Hessian of the smooth part is `X^T diag(dvals) X + gamma I`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureDiag {
    pub dvals: Vec<f64>,
}

pub fn curvature(problem: &Problem<'_>, w: &[f64]) -> Result<CurvatureDiag> {
    let eval = problem.evaluate(w, true)?;
    Ok(CurvatureDiag {
        dvals: eval.dvals.expect("requested"),
    })
}

/// How leverage scores are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LeverageMethod {
    /// Thin orthogonal factorization of the dense scaled matrix, `O(n d^2)`.
    Exact,
    /// Scaled squared row norms `dvals_i |x_i|^2`; cheap and rank-oblivious.
    RowNorm,
    /// `Exact` while `n d^2` stays below the given work budget, else `RowNorm`.
    Auto { max_work: f64 },
}

impl Default for LeverageMethod {
    fn default() -> Self {
        LeverageMethod::Auto { max_work: 2e10 }
    }
}

/// Leverage scores of `D^{1/2} X` by the chosen method.
pub fn scores(data: &SparseDataset, curv: &CurvatureDiag, method: LeverageMethod) -> Result<Vec<f64>> {
    let exact = match method {
        LeverageMethod::Exact => true,
        LeverageMethod::RowNorm => false,
        LeverageMethod::Auto { max_work } => (data.n() as f64) * (data.d() as f64).powi(2) <= max_work,
    };
    if exact {
        leverage_scores(data, curv)
    } else {
        row_norm_scores(data, curv)
    }
}

/// Exact leverage scores: squared row norms of an orthonormal basis for the
/// column space of `D^{1/2} X`. Rows with zero curvature get score zero;
/// the scores sum to the numerical rank.
pub fn leverage_scores(data: &SparseDataset, curv: &CurvatureDiag) -> Result<Vec<f64>> {
    let (n, d) = (data.n(), data.d());
    check_dim(n, curv.dvals.len())?;
    let max_dval = curv.dvals.iter().copied().fold(0.0, f64::max);
    if !(max_dval > 0.0) || d == 0 {
        return Err(Error::Numerical("Hessian numerically zero".into()));
    }
    let mut a = DMatrix::<f64>::zeros(n, d);
    for (i, row) in data.rows().enumerate() {
        let s = curv.dvals[i].max(0.0).sqrt();
        if s > 0.0 {
            for (j, v) in row.iter() {
                a[(i, j)] = s * v;
            }
        }
    }
    // A = Q R, then a column-pivoted QR of the small factor reveals the rank:
    // R P = Q2 R2 with |R2_kk| nonincreasing, so the column space of A is
    // spanned by the leading columns of Q Q2
    let (q, r) = a.qr().unpack();
    let small = r.col_piv_qr();
    let r2 = small.r();
    let m = r2.nrows().min(d);
    let diag_max = (0..m).map(|k| r2[(k, k)].abs()).fold(0.0, f64::max);
    if !(diag_max > 0.0) {
        return Err(Error::Numerical("Hessian numerically zero".into()));
    }
    let tol = diag_max * (n.max(d) as f64) * f64::EPSILON;
    let rank = (0..m).take_while(|&k| r2[(k, k)].abs() > tol).count();
    let basis = if rank == q.ncols() {
        q
    } else {
        q * small.q().columns(0, rank)
    };
    Ok((0..n)
        .map(|i| {
            if curv.dvals[i] > 0.0 {
                basis.row(i).norm_squared()
            } else {
                0.0
            }
        })
        .collect())
}

/// Row-norm surrogate scaled to sum to `min(n, d)`.
pub fn row_norm_scores(data: &SparseDataset, curv: &CurvatureDiag) -> Result<Vec<f64>> {
    check_dim(data.n(), curv.dvals.len())?;
    let raw: Vec<f64> = data
        .rows()
        .zip(&curv.dvals)
        .map(|(r, &dv)| dv.max(0.0) * r.norm_sq())
        .collect();
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Numerical("Hessian numerically zero".into()));
    }
    let target = data.n().min(data.d()) as f64;
    Ok(raw.into_iter().map(|x| x * target / total).collect())
}

/// Sampling distribution and sample size for one outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPlan {
    pub scores: Vec<f64>,
    pub probs: Vec<f64>,
    pub mix: f64,
    /// Number of draws.
    pub draws: usize,
    /// Spectral approximation tolerance `beta / (1 - beta)`.
    pub eps_sketch: f64,
}

/// Controls for [`sampling_plan`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    /// Mixing weight with the uniform distribution.
    pub mix: f64,
    /// Oversampling constant in `c * d ln(d+1) / eps^2`.
    pub oversample: f64,
    /// Permit more draws than rows.
    pub allow_oversample: bool,
    pub method: LeverageMethod,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            mix: 0.1,
            oversample: 4.0,
            allow_oversample: false,
            method: LeverageMethod::default(),
        }
    }
}

/// `eps = beta/(1-beta)`, `draws = min(n, ceil(c d ln(d+1) / eps^2))`,
/// `p_i = (1 - mix) l_i / sum(l) + mix / n`.
pub fn sampling_plan(scores: Vec<f64>, beta: f64, cfg: &SamplingConfig, d: usize) -> Result<SamplingPlan> {
    if !(beta > 0.0 && beta <= 1.0 / 3.0) {
        return Err(Error::InvalidParameter(format!(
            "beta must lie in (0, 1/3], got {beta}"
        )));
    }
    if !(0.0..1.0).contains(&cfg.mix) {
        return Err(Error::InvalidParameter(format!("mix must lie in [0, 1), got {}", cfg.mix)));
    }
    if !(cfg.oversample > 0.0 && cfg.oversample.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "oversampling constant must be positive, got {}",
            cfg.oversample
        )));
    }
    let n = scores.len();
    let eps_sketch = beta / (1.0 - beta);
    let wanted = (cfg.oversample * d as f64 * ((d + 1) as f64).ln() / (eps_sketch * eps_sketch)).ceil();
    let draws = if cfg.allow_oversample { wanted } else { wanted.min(n as f64) } as usize;
    if draws == 0 {
        return Err(Error::InvalidParameter("sample size would be zero".into()));
    }
    let total: f64 = scores.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Numerical("leverage scores sum to zero".into()));
    }
    let uniform = cfg.mix / n as f64;
    let probs = scores.iter().map(|l| (1.0 - cfg.mix) * l / total + uniform).collect();
    Ok(SamplingPlan {
        scores,
        probs,
        mix: cfg.mix,
        draws,
        eps_sketch,
    })
}

/// Draws `plan.draws` rows i.i.d. from `plan.probs`, merges duplicates and
/// weights each draw by `dvals_i / (draws p_i)`, which makes the sampled
/// matrix an unbiased estimate of `X^T D X`. The ridge is stored exactly.
pub fn draw_subsample<'a, R: Rng + ?Sized>(
    data: &'a SparseDataset,
    plan: &SamplingPlan,
    curv: &CurvatureDiag,
    grad: Vec<f64>,
    ridge: f64,
    anchor: Vec<f64>,
    rng: &mut R,
) -> Result<SubsampledQuadratic<'a>> {
    check_dim(data.n(), plan.probs.len())?;
    check_dim(data.n(), curv.dvals.len())?;
    let dist = WeightedIndex::new(&plan.probs)
        .map_err(|e| Error::Numerical(format!("invalid sampling distribution: {e}")))?;
    let mut counts = vec![0u32; data.n()];
    for _ in 0..plan.draws {
        counts[dist.sample(rng)] += 1;
    }
    let b = plan.draws as f64;
    let samples = counts
        .iter()
        .enumerate()
        .filter(|(i, &c)| c > 0 && curv.dvals[*i] > 0.0)
        .map(|(i, &c)| Sample {
            row: i,
            weight: c as f64 * curv.dvals[i] / (b * plan.probs[i]),
        })
        .collect();
    SubsampledQuadratic::new(data, grad, samples, ridge, anchor, plan.draws)
}

/// The exact model: every row with positive curvature, weight `dvals_i`.
pub fn exact_quadratic<'a>(
    data: &'a SparseDataset,
    curv: &CurvatureDiag,
    grad: Vec<f64>,
    ridge: f64,
    anchor: Vec<f64>,
) -> Result<SubsampledQuadratic<'a>> {
    check_dim(data.n(), curv.dvals.len())?;
    let samples = curv
        .dvals
        .iter()
        .enumerate()
        .filter(|(_, &dv)| dv > 0.0)
        .map(|(row, &weight)| Sample { row, weight })
        .collect();
    SubsampledQuadratic::new(data, grad, samples, ridge, anchor, data.n())
}
