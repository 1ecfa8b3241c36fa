//! First-order baselines on the full problem: FISTA with restart, proximal
//! SVRG and SAGA. SVRG and SAGA keep one derivative scalar per sample
//! instead of a gradient vector, which is all a linear model needs.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{margins, transpose_combination};
use crate::error::{Error, Result};
use crate::models::{dot, Problem};
use crate::trace::TraceRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineAlgorithm {
    Svrg,
    Saga,
    Fista,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    /// Step size; the default depends on the algorithm.
    pub step: Option<f64>,
    /// Iterations (FISTA) or passes/epochs (SVRG, SAGA).
    pub epochs: usize,
    /// SVRG stochastic steps per epoch; defaults to `max(1, n / 100)`.
    pub epoch_len: Option<usize>,
    pub seed: u64,
    /// Stop once `F(w)` drops to this value.
    pub target_objective: Option<f64>,
    /// FISTA stops when the gradient mapping norm reaches this.
    pub tol: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            step: None,
            epochs: 100,
            epoch_len: None,
            seed: 0,
            target_objective: None,
            tol: 1e-10,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(s) = self.step {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidParameter(format!("step must be positive, got {s}")));
            }
        }
        if self.epoch_len == Some(0) {
            return Err(Error::InvalidParameter("epoch length must be >= 1".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::InvalidParameter("tolerance must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BaselineOutput {
    pub w: Vec<f64>,
    /// Row `t` is the state after `t` iterations or epochs; row 0 is `w = 0`.
    pub trace: Vec<TraceRecord>,
    pub final_objective: f64,
}

pub fn run(problem: &Problem<'_>, algorithm: BaselineAlgorithm, cfg: &BaselineConfig) -> Result<BaselineOutput> {
    match algorithm {
        BaselineAlgorithm::Fista => fista_solve(problem, cfg),
        BaselineAlgorithm::Svrg => prox_svrg_full(problem, cfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed)),
        BaselineAlgorithm::Saga => saga_solve(problem, cfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed)),
    }
}

/// Top eigenvalue of the curvature upper bound `c X^T X / n + ridge I`
/// (`c` the loss's curvature bound), by power iteration with a 1% margin.
pub fn smooth_lipschitz(problem: &Problem<'_>) -> Result<f64> {
    let data = problem.data;
    let d = problem.dim();
    let scale = problem.loss.max_curvature() / data.n().max(1) as f64;
    let mut x: Vec<f64> = (0..d).map(|j| 1.0 + 0.01 * (j % 7) as f64).collect();
    let mut top = 0.0f64;
    for _ in 0..200 {
        let nx = dot(&x, &x).sqrt();
        if !(nx > 0.0) {
            break;
        }
        x.iter_mut().for_each(|e| *e /= nx);
        let u = margins(data, &x)?;
        let hx = transpose_combination(data, &u)?;
        let rayleigh = scale * dot(&x, &hx);
        let done = (rayleigh - top).abs() <= 1e-9 * rayleigh;
        top = rayleigh;
        x = hx;
        if done {
            break;
        }
    }
    Ok(1.01 * top + problem.ridge())
}

struct Recorder {
    clock: Instant,
    trace: Vec<TraceRecord>,
    comp: u64,
    full: u64,
}

impl Recorder {
    fn new() -> Self {
        Self {
            clock: Instant::now(),
            trace: Vec::new(),
            comp: 0,
            full: 0,
        }
    }

    fn record(&mut self, objective: f64) -> Result<()> {
        if !objective.is_finite() {
            return Err(Error::Numerical(format!("non-finite objective {objective}")));
        }
        self.trace.push(TraceRecord {
            t: self.trace.len(),
            phase: None,
            lambda_tilde: None,
            objective,
            eta: None,
            inner_epochs: None,
            certified: None,
            comp_grad_evals: self.comp,
            full_grad_evals: self.full,
            wall_ms: self.clock.elapsed().as_secs_f64() * 1e3,
        });
        Ok(())
    }

    fn reached(&self, cfg: &BaselineConfig) -> bool {
        matches!((cfg.target_objective, self.trace.last()), (Some(t), Some(r)) if r.objective <= t)
    }
}

/// Accelerated proximal gradient with momentum restart whenever the
/// objective increases.
pub fn fista_solve(problem: &Problem<'_>, cfg: &BaselineConfig) -> Result<BaselineOutput> {
    cfg.validate()?;
    let reg = problem.reg;
    let step = match cfg.step {
        Some(s) => s,
        None => 1.0 / smooth_lipschitz(problem)?,
    };
    let d = problem.dim();
    let mut rec = Recorder::new();
    let mut x = vec![0.0; d];
    let mut fx = problem.objective(&x)?;
    rec.record(fx)?;
    let mut y = x.clone();
    let mut t = 1.0f64;
    for _ in 0..cfg.epochs {
        let g = problem.gradient(&y)?;
        rec.full += 1;
        let mut x_new: Vec<f64> = y.iter().zip(&g).map(|(a, b)| a - step * b).collect();
        reg.prox_in_place(&mut x_new, step);
        let f_new = problem.objective(&x_new)?;
        let mapping = x_new
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
            / step;
        if f_new > fx && t > 1.0 {
            y.clone_from(&x);
            t = 1.0;
            rec.record(fx)?;
            continue;
        }
        let t_new = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let mom = (t - 1.0) / t_new;
        y = x_new.iter().zip(&x).map(|(a, b)| a + mom * (a - b)).collect();
        x = x_new;
        fx = f_new;
        t = t_new;
        rec.record(fx)?;
        if mapping <= cfg.tol || rec.reached(cfg) {
            break;
        }
    }
    Ok(BaselineOutput {
        w: x,
        trace: rec.trace,
        final_objective: fx,
    })
}

/// Minimizer and optimal value to high accuracy (gradient mapping 1e-12).
pub fn reference_optimum(problem: &Problem<'_>) -> Result<(Vec<f64>, f64)> {
    let cfg = BaselineConfig {
        epochs: 200_000,
        tol: 1e-12,
        ..Default::default()
    };
    let out = fista_solve(problem, &cfg)?;
    Ok((out.w, out.final_objective))
}

fn derivatives(problem: &Problem<'_>, u: &[f64]) -> Vec<f64> {
    u.iter()
        .zip(problem.data.labels())
        .map(|(&ui, &yi)| problem.loss.point(ui, yi).deriv)
        .collect()
}

/// Proximal SVRG over the `n` components
/// `phi_i(w) = f_i(x_i^T w) + (ridge/2)|w|^2`, whose mean is the smooth part.
/// The snapshot stores `f_i'(x_i^T w_snap)` per sample.
pub fn prox_svrg_full<R: Rng + ?Sized>(problem: &Problem<'_>, cfg: &BaselineConfig, rng: &mut R) -> Result<BaselineOutput> {
    cfg.validate()?;
    problem.data.require_nonempty()?;
    let data = problem.data;
    let (n, d) = (data.n(), problem.dim());
    let ridge = problem.ridge();
    let reg = problem.reg;
    let m = cfg.epoch_len.unwrap_or((n / 100).max(1));
    let step = cfg.step.unwrap_or(0.1 / problem.max_component_smoothness());
    let mut rec = Recorder::new();
    let mut w = vec![0.0; d];
    rec.record(problem.objective(&w)?)?;
    let mut dir = vec![0.0; d];
    for _ in 0..cfg.epochs {
        let snapshot = w.clone();
        let eval = problem.evaluate(&snapshot, false)?;
        rec.full += 1;
        let snap_deriv = derivatives(problem, &eval.margins);
        for _ in 0..m {
            let i = rng.random_range(0..n);
            let row = data.row(i);
            let u = row.dot(&w);
            rec.comp += 1;
            let diff = problem.loss.point(u, data.labels()[i]).deriv - snap_deriv[i];
            for j in 0..d {
                dir[j] = eval.grad[j] + ridge * (w[j] - snapshot[j]);
            }
            row.axpy(diff, &mut dir);
            for (x, g) in w.iter_mut().zip(&dir) {
                *x -= step * g;
            }
            reg.prox_in_place(&mut w, step);
        }
        rec.record(problem.objective(&w)?)?;
        if rec.reached(cfg) {
            break;
        }
    }
    let final_objective = rec.trace.last().expect("recorded").objective;
    Ok(BaselineOutput {
        w,
        trace: rec.trace,
        final_objective,
    })
}

/// SAGA state: the iterate, one stored derivative per sample and the
/// running average `(1/n) sum_i a_i x_i` of the stored gradients.
#[derive(Debug, Clone)]
pub struct SagaState<'p, 'a> {
    problem: &'p Problem<'a>,
    pub w: Vec<f64>,
    table: Vec<f64>,
    average: Vec<f64>,
}

impl<'p, 'a> SagaState<'p, 'a> {
    /// Fills the table at `w0` with one full pass.
    pub fn new(problem: &'p Problem<'a>, w0: Vec<f64>) -> Result<Self> {
        let u = margins(problem.data, &w0)?;
        let table = derivatives(problem, &u);
        let average = Self::average_of(problem, &table)?;
        Ok(Self {
            problem,
            w: w0,
            table,
            average,
        })
    }

    fn average_of(problem: &Problem<'_>, table: &[f64]) -> Result<Vec<f64>> {
        let inv_n = 1.0 / problem.data.n().max(1) as f64;
        let coef: Vec<f64> = table.iter().map(|a| a * inv_n).collect();
        transpose_combination(problem.data, &coef)
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn table_average(&self) -> &[f64] {
        &self.average
    }

    /// Average recomputed from the table from scratch.
    pub fn recomputed_average(&self) -> Result<Vec<f64>> {
        Self::average_of(self.problem, &self.table)
    }

    /// The update direction for sample `j` at the current state, and the
    /// fresh derivative `f_j'(x_j^T w)`.
    pub fn direction(&self, j: usize) -> (Vec<f64>, f64) {
        let row = self.problem.data.row(j);
        let fresh = self.problem.loss.point(row.dot(&self.w), self.problem.data.labels()[j]).deriv;
        let ridge = self.problem.ridge();
        let mut dir: Vec<f64> = self.average.iter().zip(&self.w).map(|(g, x)| g + ridge * x).collect();
        row.axpy(fresh - self.table[j], &mut dir);
        (dir, fresh)
    }

    /// One SAGA step on sample `j` with step size `step`.
    pub fn step(&mut self, j: usize, step: f64) {
        let (dir, fresh) = self.direction(j);
        let delta = fresh - self.table[j];
        for (x, g) in self.w.iter_mut().zip(&dir) {
            *x -= step * g;
        }
        self.problem.reg.prox_in_place(&mut self.w, step);
        let inv_n = 1.0 / self.problem.data.n() as f64;
        self.problem.data.row(j).axpy(delta * inv_n, &mut self.average);
        self.table[j] = fresh;
    }
}

/// SAGA with a scalar gradient table; default step `1 / (3 L_max)`.
pub fn saga_solve<R: Rng + ?Sized>(problem: &Problem<'_>, cfg: &BaselineConfig, rng: &mut R) -> Result<BaselineOutput> {
    cfg.validate()?;
    problem.data.require_nonempty()?;
    let n = problem.data.n();
    let step = cfg.step.unwrap_or(1.0 / (3.0 * problem.max_component_smoothness()));
    let mut rec = Recorder::new();
    let w0 = vec![0.0; problem.dim()];
    rec.record(problem.objective(&w0)?)?;
    let mut state = SagaState::new(problem, w0)?;
    rec.full += 1;
    for _ in 0..cfg.epochs {
        for _ in 0..n {
            state.step(rng.random_range(0..n), step);
        }
        rec.comp += n as u64;
        rec.record(problem.objective(&state.w)?)?;
        if rec.reached(cfg) {
            break;
        }
    }
    let final_objective = rec.trace.last().expect("recorded").objective;
    Ok(BaselineOutput {
        w: state.w,
        trace: rec.trace,
        final_objective,
    })
}
