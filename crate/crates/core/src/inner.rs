//! Inner solvers for the subsampled model: proximal SVRG over the sampled
//! components and the Catalyst wrapper that accelerates it.
//!
//! Both work in the step variable `v = w - w_t` and charge every row visit to
//! the model's evaluation counter.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{dot, Regularizer};
use crate::subproblem::{decrement_from, SubsampledQuadratic};

/// When the inner solver stops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerMode {
    /// Run exactly `epochs` epochs, no certificate.
    FixedEpochs,
    /// Stop as soon as the residual certificate meets the target.
    Certificate,
}

/// Certification target `|r|*_B <= relative * |v|_B + absolute`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertTarget {
    pub relative: f64,
    pub absolute: f64,
}

impl Default for CertTarget {
    fn default() -> Self {
        Self {
            relative: 0.1,
            absolute: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerConfig {
    pub mode: InnerMode,
    /// Epochs to run (fixed mode) or the epoch budget per attempt (certificate mode).
    pub epochs: usize,
    /// Stochastic steps per epoch; defaults to the number of model components.
    pub epoch_len: Option<usize>,
    /// Step size; defaults to `0.1 / L_max` (largest component smoothness).
    pub step: Option<f64>,
    pub catalyst: bool,
    /// Catalyst smoothing; defaults to `max(L_max / K - mu_B, 0)`.
    pub catalyst_zeta: Option<f64>,
    /// SVRG epochs per Catalyst stage.
    pub stage_epochs: usize,
    pub target: CertTarget,
    /// Certificate-mode retries, each doubling the epoch budget.
    pub max_retries: usize,
    /// Relative CG tolerance of the dual-norm estimate.
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl Default for InnerConfig {
    fn default() -> Self {
        Self {
            mode: InnerMode::Certificate,
            epochs: 10,
            epoch_len: None,
            step: None,
            catalyst: false,
            catalyst_zeta: None,
            stage_epochs: 5,
            target: CertTarget::default(),
            max_retries: 3,
            cg_tol: 1e-2,
            cg_max_iter: 50,
        }
    }
}

impl InnerConfig {
    pub fn fixed(epochs: usize) -> Self {
        Self {
            mode: InnerMode::FixedEpochs,
            epochs,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.epochs == 0 && self.mode == InnerMode::FixedEpochs {
            return bad("inner epoch count must be >= 1");
        }
        if self.epoch_len == Some(0) {
            return bad("inner epoch length must be >= 1");
        }
        if let Some(s) = self.step {
            if !(s > 0.0 && s.is_finite()) {
                return bad("inner step must be positive");
            }
        }
        if let Some(z) = self.catalyst_zeta {
            if !(z >= 0.0 && z.is_finite()) {
                return bad("catalyst smoothing must be >= 0");
            }
        }
        if self.stage_epochs == 0 {
            return bad("catalyst stage epochs must be >= 1");
        }
        if !(self.target.relative >= 0.0 && self.target.absolute >= 0.0) {
            return bad("certificate target must be nonnegative");
        }
        if self.mode == InnerMode::Certificate && self.target.relative == 0.0 && self.target.absolute == 0.0 {
            return bad("certificate mode needs a positive target");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct InnerReport {
    pub v_out: Vec<f64>,
    /// `B v_out`.
    pub bv_out: Vec<f64>,
    pub epochs: usize,
    /// Row visits charged to the model during this solve.
    pub evaluations: u64,
    pub certified: bool,
    /// Last certificate dual norm, when one was computed.
    pub dual_norm: Option<f64>,
    /// `|v_out|_B`.
    pub decrement: f64,
}

/// Spectral bounds of the model matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Lipschitz {
    /// Top eigenvalue of `B` (power iteration).
    pub top: f64,
    /// Lower bound on the smallest eigenvalue: the unsampled ridge.
    pub ridge: f64,
    pub iterations: usize,
    /// Final power-iteration vector, reusable as a warm start.
    pub vector: Vec<f64>,
}

const POWER_SEED: u64 = 0x5eed_1e55;

/// Power iteration on `B` (at most 30 products, relative change below 1e-3).
pub fn estimate_lipschitz(q: &SubsampledQuadratic<'_>) -> Lipschitz {
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);
    let start: Vec<f64> = (0..q.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    estimate_lipschitz_from(q, start, 30, 1e-3)
}

pub fn estimate_lipschitz_from(q: &SubsampledQuadratic<'_>, start: Vec<f64>, max_iter: usize, rel_tol: f64) -> Lipschitz {
    let mut x = start;
    let mut nx = dot(&x, &x).sqrt();
    if !(nx > 0.0) {
        x = vec![1.0; q.dim()];
        nx = (q.dim() as f64).sqrt();
    }
    x.iter_mut().for_each(|e| *e /= nx);
    let mut top = 0.0;
    let mut iterations = 0;
    let mut bx = vec![0.0; q.dim()];
    while iterations < max_iter {
        q.matvec_into(&x, &mut bx);
        iterations += 1;
        let rayleigh = dot(&x, &bx);
        let nb = dot(&bx, &bx).sqrt();
        let change = (rayleigh - top).abs();
        top = rayleigh;
        if !(nb > 0.0) {
            break;
        }
        x.iter_mut().zip(&bx).for_each(|(e, b)| *e = b / nb);
        if change <= rel_tol * top.abs() {
            break;
        }
    }
    Lipschitz {
        top: top.max(q.ridge),
        ridge: q.ridge,
        iterations,
        vector: x,
    }
}

/// Outcome of one certificate check.
#[derive(Debug, Clone)]
pub struct CertCheck {
    pub passed: bool,
    pub v_post: Vec<f64>,
    pub bv_post: Vec<f64>,
    pub dual_norm: f64,
    pub decrement: f64,
}

/// Residual certificate at `v` (step `1/top`), dual norm by CG, and the
/// comparison against `target`.
pub fn check_certificate(
    q: &SubsampledQuadratic<'_>,
    reg: &Regularizer,
    v: &[f64],
    bv: &[f64],
    top: f64,
    cfg: &InnerConfig,
) -> Result<CertCheck> {
    let cert = q.certificate_with(reg, v, bv, 1.0 / top)?;
    let dn = q.dual_norm(&cert.residual, cfg.cg_tol, cfg.cg_max_iter);
    let decrement = decrement_from(&cert.v_post, &cert.bv_post)?;
    let passed = dn.value <= cfg.target.relative * decrement + cfg.target.absolute;
    Ok(CertCheck {
        passed,
        v_post: cert.v_post,
        bv_post: cert.bv_post,
        dual_norm: dn.value,
        decrement,
    })
}

fn default_step(q: &SubsampledQuadratic<'_>) -> f64 {
    0.1 / q.max_component_smoothness()
}

/// Plain SVRG epochs from `v` without any certificate logic; returns the
/// new snapshot and `B` times it.
fn svrg_epochs<R: Rng + ?Sized>(
    q: &SubsampledQuadratic<'_>,
    reg: &Regularizer,
    v: &mut [f64],
    epochs: usize,
    epoch_len: usize,
    step: f64,
    rng: &mut R,
) {
    let d = q.dim();
    let k_slots = q.slots();
    let mut snap_grad = vec![0.0; d];
    let mut snap_dots = vec![0.0; k_slots];
    let mut dir = vec![0.0; d];
    for _ in 0..epochs {
        // full model gradient at the snapshot; cache x_k^T v_snap per slot
        let snapshot = v.to_vec();
        for (o, (g, x)) in snap_grad.iter_mut().zip(q.grad.iter().zip(&snapshot)) {
            *o = g + q.ridge * x;
        }
        for (k, s) in q.samples.iter().enumerate() {
            let row = q.data().row(s.row);
            let t = row.dot(&snapshot);
            snap_dots[k] = t;
            row.axpy(s.weight * t, &mut snap_grad);
        }
        q.charge(k_slots as u64);
        if k_slots == 0 {
            // no stochastic components: deterministic proximal gradient
            for _ in 0..epoch_len {
                for (o, (g, x)) in dir.iter_mut().zip(q.grad.iter().zip(v.iter())) {
                    *o = g + q.ridge * x;
                }
                for (x, g) in v.iter_mut().zip(&dir) {
                    *x -= step * g;
                }
                reg.shifted_prox_in_place(&q.anchor, v, step);
            }
            continue;
        }
        let scale = k_slots as f64;
        for _ in 0..epoch_len {
            let k = rng.random_range(0..k_slots);
            let row = q.component_row(k);
            q.charge(1);
            let coef = scale * q.samples[k].weight * (row.dot(v) - snap_dots[k]);
            for j in 0..d {
                dir[j] = snap_grad[j] + q.ridge * (v[j] - snapshot[j]);
            }
            row.axpy(coef, &mut dir);
            for (x, g) in v.iter_mut().zip(&dir) {
                *x -= step * g;
            }
            reg.shifted_prox_in_place(&q.anchor, v, step);
        }
    }
}

/// Proximal SVRG on the model from `v0`.
pub fn prox_svrg<R: Rng + ?Sized>(
    q: &SubsampledQuadratic<'_>,
    reg: &Regularizer,
    v0: &[f64],
    cfg: &InnerConfig,
    rng: &mut R,
) -> Result<InnerReport> {
    prox_svrg_with(q, reg, v0, cfg, None, rng)
}

fn prox_svrg_with<R: Rng + ?Sized>(
    q: &SubsampledQuadratic<'_>,
    reg: &Regularizer,
    v0: &[f64],
    cfg: &InnerConfig,
    top: Option<f64>,
    rng: &mut R,
) -> Result<InnerReport> {
    cfg.validate()?;
    let start = q.evaluations();
    let epoch_len = cfg.epoch_len.unwrap_or(q.slots().max(1));
    let step = cfg.step.unwrap_or_else(|| default_step(q));
    let mut v = v0.to_vec();
    match cfg.mode {
        InnerMode::FixedEpochs => {
            svrg_epochs(q, reg, &mut v, cfg.epochs, epoch_len, step, rng);
            let bv = q.matvec(&v);
            let decrement = decrement_from(&v, &bv)?;
            Ok(InnerReport {
                v_out: v,
                bv_out: bv,
                epochs: cfg.epochs,
                evaluations: q.evaluations() - start,
                certified: false,
                dual_norm: None,
                decrement,
            })
        }
        InnerMode::Certificate => {
            let top = top.unwrap_or_else(|| estimate_lipschitz(q).top);
            certified_loop(q, reg, v, cfg, top, start, |v, epochs| {
                svrg_epochs(q, reg, v, epochs, epoch_len, step, rng);
                Ok(())
            })
        }
    }
}

/// Runs `advance` one epoch at a time, checking the certificate after each,
/// with up to `max_retries` budget doublings.
fn certified_loop<F>(
    q: &SubsampledQuadratic<'_>,
    reg: &Regularizer,
    mut v: Vec<f64>,
    cfg: &InnerConfig,
    top: f64,
    start: u64,
    mut advance: F,
) -> Result<InnerReport>
where
    F: FnMut(&mut Vec<f64>, usize) -> Result<()>,
{
    let mut epochs = 0;
    let mut budget = cfg.epochs;
    let mut attempts = 0;
    loop {
        let bv = q.matvec(&v);
        let check = check_certificate(q, reg, &v, &bv, top, cfg)?;
        if check.passed || epochs >= budget {
            if check.passed || attempts >= cfg.max_retries {
                return Ok(InnerReport {
                    v_out: check.v_post,
                    bv_out: check.bv_post,
                    epochs,
                    evaluations: q.evaluations() - start,
                    certified: check.passed,
                    dual_norm: Some(check.dual_norm),
                    decrement: check.decrement,
                });
            }
            attempts += 1;
            budget += cfg.epochs << attempts;
        }
        advance(&mut v, 1)?;
        epochs += 1;
    }
}

/// Positive root of `a'^2 = (1 - a') a^2 + q a`.
pub fn catalyst_alpha_next(alpha: f64, q: f64) -> f64 {
    let a2 = alpha * alpha;
    let c = a2 + q * alpha;
    (-a2 + (a2 * a2 + 4.0 * c).sqrt()) / 2.0
}

/// Extrapolation weight `a (1 - a) / (a^2 + a')`.
pub fn catalyst_momentum(alpha: f64, alpha_next: f64) -> f64 {
    alpha * (1.0 - alpha) / (alpha * alpha + alpha_next)
}

/// Catalyst around proximal SVRG. Each stage minimizes the model plus
/// `(zeta/2)|v - y|^2`, which is the same model with gradient `g - zeta y`
/// and ridge `ridge + zeta`.
pub fn catalyst_solve<R: Rng + ?Sized>(
    q: &SubsampledQuadratic<'_>,
    reg: &Regularizer,
    v0: &[f64],
    cfg: &InnerConfig,
    rng: &mut R,
) -> Result<InnerReport> {
    catalyst_with(q, reg, v0, cfg, None, rng)
}

fn catalyst_with<R: Rng + ?Sized>(
    q: &SubsampledQuadratic<'_>,
    reg: &Regularizer,
    v0: &[f64],
    cfg: &InnerConfig,
    top: Option<f64>,
    rng: &mut R,
) -> Result<InnerReport> {
    cfg.validate()?;
    let mu = q.ridge;
    let zeta = cfg
        .catalyst_zeta
        .unwrap_or_else(|| (q.max_component_smoothness() / q.slots().max(1) as f64 - mu).max(0.0));
    if zeta == 0.0 {
        return prox_svrg_with(q, reg, v0, cfg, top, rng);
    }
    if !(mu > 0.0) {
        return Err(Error::InvalidParameter("catalyst needs a positive ridge".into()));
    }
    let start = q.evaluations();
    let qq = mu / (mu + zeta);
    let mut stage = CatalystState {
        x: v0.to_vec(),
        y: v0.to_vec(),
        alpha: qq.sqrt(),
        q: qq,
        zeta,
    };
    let epoch_len = cfg.epoch_len.unwrap_or(q.slots().max(1));
    let stage_epochs = cfg.stage_epochs;
    let mut run_stage = |state: &mut CatalystState| -> Result<()> {
        let shifted: Vec<f64> = q.grad.iter().zip(&state.y).map(|(g, y)| g - state.zeta * y).collect();
        let aug = SubsampledQuadratic::new(
            q.data(),
            shifted,
            q.samples.clone(),
            q.ridge + state.zeta,
            q.anchor.clone(),
            q.draws,
        )?;
        let step = cfg.step.unwrap_or_else(|| default_step(&aug));
        let mut x_new = state.x.clone();
        svrg_epochs(&aug, reg, &mut x_new, stage_epochs, epoch_len, step, rng);
        q.charge(aug.evaluations());
        state.advance(x_new);
        Ok(())
    };
    match cfg.mode {
        InnerMode::FixedEpochs => {
            let stages = cfg.epochs.div_ceil(stage_epochs);
            for _ in 0..stages {
                run_stage(&mut stage)?;
            }
            let bv = q.matvec(&stage.x);
            let decrement = decrement_from(&stage.x, &bv)?;
            Ok(InnerReport {
                v_out: stage.x,
                bv_out: bv,
                epochs: stages * stage_epochs,
                evaluations: q.evaluations() - start,
                certified: false,
                dual_norm: None,
                decrement,
            })
        }
        InnerMode::Certificate => {
            let top = top.unwrap_or_else(|| estimate_lipschitz(q).top);
            let x0 = stage.x.clone();
            let mut report = certified_loop(q, reg, x0, cfg, top, start, |v, _| {
                stage.x.clone_from(v);
                run_stage(&mut stage)?;
                v.clone_from(&stage.x);
                Ok(())
            })?;
            report.epochs *= stage_epochs;
            Ok(report)
        }
    }
}

struct CatalystState {
    x: Vec<f64>,
    y: Vec<f64>,
    alpha: f64,
    q: f64,
    zeta: f64,
}

impl CatalystState {
    fn advance(&mut self, x_new: Vec<f64>) {
        let alpha_next = catalyst_alpha_next(self.alpha, self.q);
        let beta = catalyst_momentum(self.alpha, alpha_next);
        self.y = x_new
            .iter()
            .zip(&self.x)
            .map(|(xn, xo)| xn + beta * (xn - xo))
            .collect();
        self.x = x_new;
        self.alpha = alpha_next;
    }
}

/// Dispatches to Catalyst or plain SVRG according to `cfg.catalyst`.
/// `top` is a known estimate of the largest eigenvalue of `B`, used by the
/// certificate; it is estimated when absent.
pub fn solve_model<R: Rng + ?Sized>(
    q: &SubsampledQuadratic<'_>,
    reg: &Regularizer,
    v0: &[f64],
    cfg: &InnerConfig,
    top: Option<f64>,
    rng: &mut R,
) -> Result<InnerReport> {
    if cfg.catalyst {
        catalyst_with(q, reg, v0, cfg, top, rng)
    } else {
        prox_svrg_with(q, reg, v0, cfg, top, rng)
    }
}

/// High-accuracy model minimizer by restarted accelerated proximal gradient,
/// for diagnostics and tests. Returns `(v*, m(v*))`.
pub fn model_minimum(q: &SubsampledQuadratic<'_>, reg: &Regularizer, v0: &[f64], tol: f64, max_iter: usize) -> (Vec<f64>, f64) {
    let lip = estimate_lipschitz_from(q, vec![1.0; q.dim()], 200, 1e-10);
    let step = 1.0 / (lip.top * 1.02);
    let mut x = v0.to_vec();
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut fx = q.value(reg, &x);
    for _ in 0..max_iter {
        let by = q.matvec(&y);
        let mut x_new: Vec<f64> = y
            .iter()
            .zip(&q.grad)
            .zip(&by)
            .map(|((yv, g), b)| yv - step * (g + b))
            .collect();
        reg.shifted_prox_in_place(&q.anchor, &mut x_new, step);
        let f_new = q.value(reg, &x_new);
        let mapping: f64 = x_new
            .iter()
            .zip(&y)
            .map(|(a, b)| ((a - b) / step).powi(2))
            .sum::<f64>()
            .sqrt();
        if f_new > fx && t > 1.0 {
            // restart momentum
            y.clone_from(&x);
            t = 1.0;
            continue;
        }
        let t_new = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let mom = (t - 1.0) / t_new;
        y = x_new.iter().zip(&x).map(|(a, b)| a + mom * (a - b)).collect();
        x = x_new;
        fx = f_new;
        t = t_new;
        if mapping <= tol {
            break;
        }
    }
    (x, fx)
}
