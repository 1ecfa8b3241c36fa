//! The outer proximal Newton loop: build a subsampled model at `w_t`, solve
//! it inexactly from a warm start, take a damped (Phase I) or unit (Phase II)
//! step, and stop once the approximate decrement certifies accuracy.
//!
//! Also holds the self-concordance helpers used by the diagnostics.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inner::{self, estimate_lipschitz, model_minimum, InnerConfig, InnerMode};
use crate::leverage::{self, CurvatureDiag, SamplingConfig};
use crate::models::{Loss, Problem};
use crate::trace::{Phase, TraceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuterConfig {
    /// Forcing coefficient: the inner residual may be `(1 - theta)` of the decrement.
    pub theta: f64,
    /// Relative Hessian approximation accuracy.
    pub beta: f64,
    /// Phase II threshold on `lambda_tilde / sqrt(1 - beta)`.
    pub lambda_bar: f64,
    /// Stop when `lambda_tilde^2 / (1 - beta) <= tol`.
    pub tol: f64,
    pub max_outer: usize,
    pub sampling: SamplingConfig,
    pub inner: InnerConfig,
    pub seed: u64,
    /// Use every row with its exact curvature; `beta` is then treated as 0.
    pub exact_hessian: bool,
    /// Record the dense-oracle decrement and warm-start gaps (costly).
    pub diagnostics: bool,
}

impl Default for OuterConfig {
    fn default() -> Self {
        Self {
            theta: 0.9,
            beta: 0.05,
            lambda_bar: 1.0 / 6.0,
            tol: 1e-8,
            max_outer: 100,
            sampling: SamplingConfig::default(),
            inner: InnerConfig::default(),
            seed: 0,
            exact_hessian: false,
            diagnostics: false,
        }
    }
}

impl OuterConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return bad(format!("theta must lie in (0, 1], got {}", self.theta));
        }
        if !self.exact_hessian && !(self.beta > 0.0 && self.beta < self.theta.min(1.0 / 3.0)) {
            return bad(format!("beta must lie in (0, min(theta, 1/3)), got {}", self.beta));
        }
        if !(self.lambda_bar > 0.0) {
            return bad(format!("lambda_bar must be positive, got {}", self.lambda_bar));
        }
        if !(self.tol > 0.0) {
            return bad(format!("tolerance must be positive, got {}", self.tol));
        }
        if self.max_outer == 0 {
            return bad("max_outer must be >= 1".into());
        }
        self.inner.validate()
    }

    fn effective_beta(&self) -> f64 {
        if self.exact_hessian {
            0.0
        } else {
            self.beta
        }
    }
}

/// `zeta(x) = x - ln(1 + x)` for `x >= 0`.
pub fn zeta(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::InvalidParameter(format!("zeta needs x >= 0, got {x}")));
    }
    Ok(x - x.ln_1p())
}

/// `zeta*(x) = -x - ln(1 - x)` for `0 <= x < 1`.
pub fn zeta_star(x: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&x) {
        return Err(Error::InvalidParameter(format!("zeta* needs 0 <= x < 1, got {x}")));
    }
    Ok(-x - (-x).ln_1p())
}

/// Damped step `(theta - beta) / (1 + (theta - beta) lambda_tilde / sqrt(1 - beta))`.
pub fn phase1_step(theta: f64, beta: f64, lambda_tilde: f64) -> f64 {
    let c = theta - beta;
    c / (1.0 + c * lambda_tilde / (1.0 - beta).sqrt())
}

/// Inner accuracy targets for one outer iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerTarget {
    /// Bound on the residual's dual norm in the model metric.
    pub dual: f64,
    /// Matching bound on the model value gap; `None` when the model is
    /// a multiple of the identity and only the dual bound applies.
    pub value_gap: Option<f64>,
}

pub fn inner_target(theta: f64, lambda_tilde: f64, beta: f64, top: f64, ridge: f64) -> InnerTarget {
    let dual = (1.0 - theta) * lambda_tilde / (1.0 + beta).sqrt();
    let value_gap = (top > ridge).then(|| ridge * top / (2.0 * (top * top - ridge * ridge)) * dual * dual);
    InnerTarget { dual, value_gap }
}

/// Per-iteration quantities only computed with `diagnostics` on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterDiagnostics {
    pub t: usize,
    /// `|v_t|` in the exact Hessian metric at `w_t`, from a dense Hessian.
    pub exact_decrement: f64,
    /// Model value gap at the warm start, against a high-accuracy minimizer.
    pub init_gap: f64,
    /// Value-gap target of this iteration's inner solve, from the solver's
    /// spectral bounds (power iteration and the ridge).
    pub value_target: Option<f64>,
    /// The same target from the exact extreme eigenvalues of the model.
    pub value_target_exact: Option<f64>,
    pub model_min_eig: f64,
    pub model_top: f64,
    pub model_ridge: f64,
    pub slots: usize,
    pub draws: usize,
}

#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub w: Vec<f64>,
    pub trace: Vec<TraceRecord>,
    pub diagnostics: Vec<IterDiagnostics>,
    pub converged: bool,
    pub final_objective: f64,
    pub comp_grad_evals: u64,
    pub full_grad_evals: u64,
}

impl SolveOutput {
    /// Ratios `init_gap_{t+1} / eps_t` over consecutive Phase II
    /// iterations, with `eps_t` from the exact model spectrum when `exact`
    /// is set and from the solver's bounds otherwise.
    pub fn warm_start_ratios(&self, exact: bool) -> Vec<f64> {
        let phase2 = |t: usize| self.trace.get(t).and_then(|r| r.phase) == Some(Phase::II);
        self.diagnostics
            .windows(2)
            .filter(|p| phase2(p[0].t) && phase2(p[1].t))
            .filter_map(|p| {
                let eps = if exact { p[0].value_target_exact } else { p[0].value_target };
                eps.map(|eps| p[1].init_gap / eps)
            })
            .collect()
    }
}

/// Dense `X^T diag(dvals) X + ridge I`.
pub fn dense_hessian(problem: &Problem<'_>, dvals: &[f64]) -> DMatrix<f64> {
    let d = problem.dim();
    let mut h = DMatrix::<f64>::identity(d, d) * problem.ridge();
    for (row, &c) in problem.data.rows().zip(dvals) {
        if c == 0.0 {
            continue;
        }
        for (j, xj) in row.iter() {
            for (k, xk) in row.iter() {
                h[(j, k)] += c * xj * xk;
            }
        }
    }
    h
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Runs the outer loop from `w_0 = 0`.
pub fn solve(problem: &Problem<'_>, cfg: &OuterConfig) -> Result<SolveOutput> {
    cfg.validate()?;
    problem.data.require_nonempty()?;
    let clock = Instant::now();
    let data = problem.data;
    let d = problem.dim();
    let beta = cfg.effective_beta();
    let mut w = vec![0.0; d];
    let mut prev_plus: Option<Vec<f64>> = None;
    let mut trace = Vec::new();
    let mut diagnostics = Vec::new();
    let (mut comp, mut full) = (0u64, 0u64);
    let mut converged = false;
    let mut power_start: Option<Vec<f64>> = None;
    let mut inner_cfg = cfg.inner;
    inner_cfg.target.relative = (1.0 - cfg.theta) / (1.0 + beta).sqrt();

    for t in 0..cfg.max_outer {
        let eval = problem.evaluate(&w, true)?;
        full += 1;
        let curv = CurvatureDiag {
            dvals: eval.dvals.expect("requested"),
        };
        let q = if cfg.exact_hessian {
            leverage::exact_quadratic(data, &curv, eval.grad, problem.ridge(), w.clone())?
        } else {
            let scores = leverage::scores(data, &curv, cfg.sampling.method)?;
            let plan = leverage::sampling_plan(scores, cfg.beta, &cfg.sampling, d)?;
            let mut rng = stream_rng(cfg.seed, 2 * t as u64);
            leverage::draw_subsample(data, &plan, &curv, eval.grad, problem.ridge(), w.clone(), &mut rng)?
        };
        let v_init = match &prev_plus {
            Some(p) => p.iter().zip(&w).map(|(a, b)| a - b).collect(),
            None => vec![0.0; d],
        };
        let init_gap = if cfg
            .diagnostics { {
                let (_, f_star) = model_minimum(&q, &problem.reg, &v_init, 1e-13, 200_000);
                q.value(&problem.reg, &v_init) - f_star
            } } else { 0.0 };
        let evals_before = q.evaluations();

        // spectral bounds by warm-started power iteration, when needed
        let lip = (inner_cfg.mode == InnerMode::Certificate || cfg.diagnostics).then(|| {
            let lip = match power_start.take() {
                Some(s) => inner::estimate_lipschitz_from(&q, s, 30, 1e-3),
                None => estimate_lipschitz(&q),
            };
            power_start = Some(lip.vector.clone());
            lip
        });
        let mut rng = stream_rng(cfg.seed, 2 * t as u64 + 1);
        let report = inner::solve_model(&q, &problem.reg, &v_init, &inner_cfg, lip.as_ref().map(|l| l.top), &mut rng)?;
        comp += q.evaluations() - evals_before;

        let lambda_tilde = report.decrement;
        let scaled = lambda_tilde / (1.0 - beta).sqrt();
        let phase = if scaled < cfg.lambda_bar { Phase::II } else { Phase::I };
        let eta = match phase {
            Phase::II => 1.0,
            Phase::I => phase1_step(cfg.theta, beta, lambda_tilde),
        };
        if let (true, Some(lip)) = (cfg.diagnostics, &lip) {
            let h = dense_hessian(problem, &curv.dvals);
            let v = DVector::from_column_slice(&report.v_out);
            let target = inner_target(cfg.theta, lambda_tilde, beta, lip.top, lip.ridge);
            let eig = q.dense_matrix().symmetric_eigenvalues();
            let (lo, hi) = (eig.min(), eig.max());
            let exact = inner_target(cfg.theta, lambda_tilde, beta, hi, lo);
            diagnostics.push(IterDiagnostics {
                t,
                exact_decrement: v.dot(&(&h * &v)).max(0.0).sqrt(),
                init_gap,
                value_target: target.value_gap,
                value_target_exact: exact.value_gap,
                model_min_eig: lo,
                model_top: lip.top,
                model_ridge: lip.ridge,
                slots: q.slots(),
                draws: q.draws,
            });
        }
        trace.push(TraceRecord {
            t,
            phase: Some(phase),
            lambda_tilde: Some(lambda_tilde),
            objective: eval.objective,
            eta: Some(eta),
            inner_epochs: Some(report.epochs),
            certified: Some(report.certified),
            comp_grad_evals: comp,
            full_grad_evals: full,
            wall_ms: clock.elapsed().as_secs_f64() * 1e3,
        });
        let plus: Vec<f64> = w.iter().zip(&report.v_out).map(|(a, v)| a + v).collect();
        for (wj, vj) in w.iter_mut().zip(&report.v_out) {
            *wj += eta * vj;
        }
        prev_plus = Some(plus);
        if phase == Phase::II && scaled * scaled <= cfg.tol {
            converged = true;
            break;
        }
    }
    let final_objective = problem.objective(&w)?;
    if !final_objective.is_finite() {
        return Err(Error::Numerical(format!("non-finite final objective {final_objective}")));
    }
    Ok(SolveOutput {
        w,
        trace,
        diagnostics,
        converged,
        final_objective,
        comp_grad_evals: comp,
        full_grad_evals: full,
    })
}

/// Counts of self-concordance inequality violations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfConcordanceReport {
    /// Factor applied to `f` before checking.
    pub scale: f64,
    pub trials: usize,
    pub hessian_violations: usize,
    pub gradient_violations: usize,
    pub value_violations: usize,
    /// Largest excess over any bound (negative when all hold).
    pub worst_excess: f64,
}

impl SelfConcordanceReport {
    pub fn violations(&self) -> usize {
        self.hessian_violations + self.gradient_violations + self.value_violations
    }
}

/// Scale that makes the smooth part standard self-concordant. For the
/// logistic loss `|phi'''| <= phi''`, giving `M = max |x_i| / sqrt(ridge)`
/// and scale `M^2 / 4`; quadratics need no scaling.
pub fn selfconcordance_scale(problem: &Problem<'_>) -> f64 {
    match problem.loss {
        Loss::Squared => 1.0,
        Loss::Logistic => problem.data.max_row_norm_sq() / problem.ridge() / 4.0,
    }
}

/// Samples random pairs `(x, x + delta)` with local norm `|delta|_x` up to
/// `radius` and checks the Hessian, gradient and function value bounds of
/// the scaled smooth part, with slack `1e-8`.
pub fn selfconcordance_check(problem: &Problem<'_>, trials: usize, radius: f64, seed: u64) -> Result<SelfConcordanceReport> {
    if !(radius > 0.0 && radius < 1.0) {
        return Err(Error::InvalidParameter(format!("radius must lie in (0, 1), got {radius}")));
    }
    if !(problem.ridge() > 0.0) {
        return Err(Error::InvalidParameter("self-concordance check needs a positive ridge".into()));
    }
    problem.data.require_nonempty()?;
    const SLACK: f64 = 1e-8;
    let s = selfconcordance_scale(problem);
    let d = problem.dim();
    let spread = 2.0 / (d as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SelfConcordanceReport {
        scale: s,
        trials,
        hessian_violations: 0,
        gradient_violations: 0,
        value_violations: 0,
        worst_excess: f64::NEG_INFINITY,
    };
    let excess = |report: &mut SelfConcordanceReport, e: f64| {
        report.worst_excess = report.worst_excess.max(e);
        e > SLACK
    };
    for _ in 0..trials {
        let x: Vec<f64> = (0..d).map(|_| spread * rng.sample::<f64, _>(StandardNormal)).collect();
        let ex = problem.evaluate(&x, true)?;
        let hx = dense_hessian(problem, ex.dvals.as_ref().expect("requested")) * s;
        let chol = hx
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("scaled Hessian not positive definite".into()))?;
        let u = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let r = radius * (1.0 - rng.random::<f64>());
        let local = u.dot(&(&hx * &u)).sqrt();
        let delta = u * (r / local);
        let y: Vec<f64> = x.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
        let ey = problem.evaluate(&y, true)?;
        let hy = dense_hessian(problem, ey.dvals.as_ref().expect("requested")) * s;

        // generalized eigenvalues of (H_y, H_x)
        let l_inv = chol.l().try_inverse().ok_or_else(|| Error::Numerical("singular factor".into()))?;
        let c = &l_inv * &hy * l_inv.transpose();
        let eig = c.symmetric_eigenvalues();
        let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e_lo = (1.0 - r).powi(2) - lo;
        let e_hi = hi - 1.0 / (1.0 - r).powi(2);
        if excess(&mut report, e_lo) | excess(&mut report, e_hi) {
            report.hessian_violations += 1;
        }

        let gx = DVector::from_column_slice(&ex.grad) * s;
        let gy = DVector::from_column_slice(&ey.grad) * s;
        let e = gy - gx.clone() - &hx * &delta;
        let dual = e.dot(&chol.solve(&e)).max(0.0).sqrt();
        if excess(&mut report, dual - r * r / (1.0 - r)) {
            report.gradient_violations += 1;
        }

        let gap = s * (ey.smooth - ex.smooth) - gx.dot(&delta);
        let e_lo = zeta(r)? - gap;
        let e_hi = gap - zeta_star(r)?;
        if excess(&mut report, e_lo) | excess(&mut report, e_hi) {
            report.value_violations += 1;
        }
    }
    Ok(report)
}
