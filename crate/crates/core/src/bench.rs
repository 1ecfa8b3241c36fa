//! Benchmark harness: uniform solver runs, convergence curves against a
//! FISTA reference optimum, and inner-epoch sweeps.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{self, BaselineAlgorithm, BaselineConfig};
use crate::error::{Error, Result};
use crate::models::Problem;
use crate::newton::{self, OuterConfig, SolveOutput};
use crate::trace::TraceRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    ProxNewton,
    Svrg,
    Saga,
    Fista,
}

impl SolverKind {
    pub const ALL: [SolverKind; 4] = [SolverKind::ProxNewton, SolverKind::Svrg, SolverKind::Saga, SolverKind::Fista];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::ProxNewton => "prox-newton",
            SolverKind::Svrg => "svrg",
            SolverKind::Saga => "saga",
            SolverKind::Fista => "fista",
        }
    }

    pub fn is_stochastic(self) -> bool {
        self != SolverKind::Fista
    }

    fn baseline(self) -> Option<BaselineAlgorithm> {
        match self {
            SolverKind::ProxNewton => None,
            SolverKind::Svrg => Some(BaselineAlgorithm::Svrg),
            SolverKind::Saga => Some(BaselineAlgorithm::Saga),
            SolverKind::Fista => Some(BaselineAlgorithm::Fista),
        }
    }
}

impl std::str::FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SolverKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown solver `{s}`")))
    }
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A point on a convergence curve: work spent and the objective it bought.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub evals: u64,
    pub ms: f64,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub solver: SolverKind,
    pub n: usize,
    pub w: Vec<f64>,
    pub trace: Vec<TraceRecord>,
    pub final_objective: f64,
    /// Whether the Newton stopping test fired; `None` for baselines.
    pub converged: Option<bool>,
    pub wall_ms: f64,
}

impl RunResult {
    pub fn from_newton(out: SolveOutput, n: usize, wall_ms: f64) -> Self {
        Self {
            solver: SolverKind::ProxNewton,
            n,
            w: out.w,
            trace: out.trace,
            final_objective: out.final_objective,
            converged: Some(out.converged),
            wall_ms,
        }
    }

    pub fn iterations(&self) -> usize {
        match self.solver {
            SolverKind::ProxNewton => self.trace.len(),
            _ => self.trace.len().saturating_sub(1),
        }
    }

    pub fn comp_grad_evals(&self) -> u64 {
        self.trace.last().map_or(0, |r| r.comp_grad_evals)
    }

    pub fn full_grad_evals(&self) -> u64 {
        self.trace.last().map_or(0, |r| r.full_grad_evals)
    }

    /// Objective against cumulative work. Newton rows log `F(w_t)` next to
    /// the work spent during iteration `t`, so that work is paired with
    /// `F(w_{t+1})`; baseline rows already hold the state after the work.
    pub fn curve(&self) -> Vec<CurvePoint> {
        match self.solver {
            SolverKind::ProxNewton => {
                let mut pts = Vec::with_capacity(self.trace.len() + 1);
                if let Some(first) = self.trace.first() {
                    pts.push(CurvePoint {
                        evals: 0,
                        ms: 0.0,
                        objective: first.objective,
                    });
                }
                for (i, r) in self.trace.iter().enumerate() {
                    let next = self.trace.get(i + 1).map_or(self.final_objective, |s| s.objective);
                    pts.push(CurvePoint {
                        evals: r.evaluations(self.n),
                        ms: r.wall_ms,
                        objective: next,
                    });
                }
                pts
            }
            _ => self
                .trace
                .iter()
                .map(|r| CurvePoint {
                    evals: r.evaluations(self.n),
                    ms: r.wall_ms,
                    objective: r.objective,
                })
                .collect(),
        }
    }

    /// Work needed to first bring `F - f_star` to `gap` or below.
    pub fn evals_to_gap(&self, f_star: f64, gap: f64) -> Option<u64> {
        self.curve().into_iter().find(|p| p.objective - f_star <= gap).map(|p| p.evals)
    }
}

pub fn run_solver(problem: &Problem<'_>, kind: SolverKind, outer: &OuterConfig, base: &BaselineConfig) -> Result<RunResult> {
    let clock = Instant::now();
    match kind.baseline() {
        None => {
            let out = newton::solve(problem, outer)?;
            Ok(RunResult::from_newton(out, problem.data.n(), clock.elapsed().as_secs_f64() * 1e3))
        }
        Some(alg) => {
            let out = baselines::run(problem, alg, base)?;
            Ok(RunResult {
                solver: kind,
                n: problem.data.n(),
                w: out.w,
                trace: out.trace,
                final_objective: out.final_objective,
                converged: None,
                wall_ms: clock.elapsed().as_secs_f64() * 1e3,
            })
        }
    }
}

/// Runs `kind` once per step in `steps` (the inner step for prox-newton) and
/// keeps the run that reaches `F* + gap` with the least work. Runs that
/// diverge are skipped; ties and misses fall back to the lowest final
/// objective.
pub fn tuned_run(
    problem: &Problem<'_>,
    kind: SolverKind,
    outer: &OuterConfig,
    base: &BaselineConfig,
    steps: &[f64],
    f_star: f64,
    gap: f64,
) -> Result<(f64, RunResult)> {
    if steps.is_empty() {
        return Err(Error::InvalidParameter("step grid is empty".into()));
    }
    let mut best: Option<(f64, RunResult)> = None;
    let mut last_err = None;
    for &step in steps {
        let mut o = *outer;
        let mut b = *base;
        o.inner.step = Some(step);
        b.step = Some(step);
        let run = match run_solver(problem, kind, &o, &b) {
            Ok(r) => r,
            Err(e @ Error::Numerical(_)) => {
                last_err = Some(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        let key = |r: &RunResult| (r.evals_to_gap(f_star, gap).unwrap_or(u64::MAX), r.final_objective);
        let better = match &best {
            None => true,
            Some((_, b)) => key(&run).0 < key(b).0 || (key(&run).0 == key(b).0 && key(&run).1 < key(b).1),
        };
        if better {
            best = Some((step, run));
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| Error::Numerical("no step size produced a finite run".into())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Evals,
    Ms,
}

/// One row of the long-format comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub solver: SolverKind,
    pub metric: Metric,
    pub x: f64,
    #[serde(rename = "F_minus_Fstar")]
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub f_star: f64,
    pub runs: Vec<RunResult>,
}

impl Comparison {
    pub fn rows(&self) -> Vec<CompareRow> {
        let mut rows = Vec::new();
        for metric in [Metric::Evals, Metric::Ms] {
            for run in &self.runs {
                for p in run.curve() {
                    rows.push(CompareRow {
                        solver: run.solver,
                        metric,
                        x: match metric {
                            Metric::Evals => p.evals as f64,
                            Metric::Ms => p.ms,
                        },
                        gap: p.objective - self.f_star,
                    });
                }
            }
        }
        rows
    }

    pub fn run(&self, kind: SolverKind) -> Option<&RunResult> {
        self.runs.iter().find(|r| r.solver == kind)
    }
}

/// Runs each solver on the same problem and measures it against one
/// reference optimum computed by a long FISTA run.
pub fn compare(problem: &Problem<'_>, solvers: &[SolverKind], outer: &OuterConfig, base: &BaselineConfig) -> Result<Comparison> {
    if solvers.is_empty() {
        return Err(Error::InvalidParameter("no solvers to compare".into()));
    }
    let (_, f_star) = baselines::reference_optimum(problem)?;
    let runs = solvers
        .iter()
        .map(|&k| run_solver(problem, k, outer, base))
        .collect::<Result<Vec<_>>>()?;
    Ok(Comparison { f_star, runs })
}

pub fn write_compare_csv<W: Write>(out: W, rows: &[CompareRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    for r in rows {
        wtr.serialize(r).map_err(csv_error)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Outer iteration count after which `F - f_star <= gap` first holds.
pub fn outer_iterations_to(run: &RunResult, f_star: f64, gap: f64) -> Option<usize> {
    run.curve().iter().position(|p| p.objective - f_star <= gap)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub inner: usize,
    pub t: usize,
    pub evals: u64,
    #[serde(rename = "F_minus_Fstar")]
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct Sweep {
    pub f_star: f64,
    pub runs: Vec<(usize, RunResult)>,
}

impl Sweep {
    pub fn rows(&self) -> Vec<SweepRow> {
        self.runs
            .iter()
            .flat_map(|(inner, run)| {
                run.curve().into_iter().enumerate().map(move |(t, p)| SweepRow {
                    inner: *inner,
                    t,
                    evals: p.evals,
                    gap: p.objective - self.f_star,
                })
            })
            .collect()
    }

    pub fn outer_to(&self, gap: f64) -> Vec<(usize, Option<usize>)> {
        self.runs
            .iter()
            .map(|(inner, run)| (*inner, outer_iterations_to(run, self.f_star, gap)))
            .collect()
    }
}

/// Prox-newton with a fixed number of inner epochs per outer step, once
/// per entry of `inners`.
pub fn sweep_inner(problem: &Problem<'_>, inners: &[usize], outer: &OuterConfig) -> Result<Sweep> {
    if inners.is_empty() {
        return Err(Error::InvalidParameter("inner list is empty".into()));
    }
    if inners.contains(&0) {
        return Err(Error::InvalidParameter("inner epoch counts must be >= 1".into()));
    }
    let (_, f_star) = baselines::reference_optimum(problem)?;
    // one independent solver state per configuration
    let runs = inners
        .par_iter()
        .map(|&k| {
            let mut cfg = *outer;
            let mut inner = crate::inner::InnerConfig::fixed(k);
            inner.step = outer.inner.step;
            inner.epoch_len = outer.inner.epoch_len;
            inner.catalyst = outer.inner.catalyst;
            cfg.inner = inner;
            let clock = Instant::now();
            let out = newton::solve(problem, &cfg)?;
            Ok((k, RunResult::from_newton(out, problem.data.n(), clock.elapsed().as_secs_f64() * 1e3)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Sweep { f_star, runs })
}

pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    for r in rows {
        wtr.serialize(r).map_err(csv_error)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Run summary written next to the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub solver: SolverKind,
    pub final_objective: f64,
    pub iterations: usize,
    pub comp_grad_evals: u64,
    pub full_grad_evals: u64,
    pub converged: Option<bool>,
    pub wall_ms: f64,
    pub nnz_w: usize,
    pub config: serde_json::Value,
}

impl Summary {
    pub fn new(run: &RunResult, config: serde_json::Value) -> Self {
        Self {
            solver: run.solver,
            final_objective: run.final_objective,
            iterations: run.iterations(),
            comp_grad_evals: run.comp_grad_evals(),
            full_grad_evals: run.full_grad_evals(),
            converged: run.converged,
            wall_ms: run.wall_ms,
            nnz_w: run.w.iter().filter(|x| **x != 0.0).count(),
            config,
        }
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}
