//! `subnewton`: train, compare and sweep the proximal Newton solver and its
//! first-order baselines from the command line.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use subnewton::bench::{self, RunResult, Summary};
use subnewton::newton::{self, selfconcordance_check};
use subnewton::trace::write_trace;
use subnewton::{Error, InnerSpec, Loss, Problem, RunConfig, SolverKind, SparseDataset};

#[derive(Parser)]
#[command(name = "subnewton", version, about = "Inexact subsampled proximal Newton for L1-regularized ERM")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one solver; write a CSV trace and a JSON summary.
    Train(Common),
    /// Run several solvers against one reference optimum; long-format CSV.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated solver list (default: all four).
        #[arg(long, value_delimiter = ',')]
        solvers: Option<Vec<SolverKind>>,
    },
    /// Prox-newton with fixed inner epoch counts; per-count traces as CSV.
    SweepInner {
        #[command(flatten)]
        common: Common,
        /// Comma-separated inner epoch counts (default: 1,2,3,4,5,6).
        #[arg(long, value_delimiter = ',')]
        inner_list: Option<Vec<usize>>,
    },
    /// Self-concordance check and dataset statistics.
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0.3)]
        radius: f64,
    },
}

#[derive(Args, Default)]
struct Common {
    /// JSON config file; flags given here take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// LIBSVM data file (optionally .gz).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Synthetic instance, e.g. `n=1000,d=20,density=0.5,noise=0.05,seed=1`.
    #[arg(long)]
    synthetic: Option<String>,
    /// Feature dimension; must cover every index in the data.
    #[arg(long)]
    dim: Option<usize>,
    /// Append a constant feature of 1 to every row.
    #[arg(long)]
    intercept: bool,
    /// `logistic` (default) or `squared`.
    #[arg(long)]
    loss: Option<Loss>,
    /// L1 penalty weight [default: 1e-3].
    #[arg(long)]
    lambda1: Option<f64>,
    /// Extra L2 penalty weight [default: 0].
    #[arg(long)]
    lambda2: Option<f64>,
    /// Ridge term that keeps the objective strongly convex [default: 1e-4].
    #[arg(long)]
    gamma: Option<f64>,
    /// `prox-newton` (default), `svrg`, `saga` or `fista`.
    #[arg(long)]
    solver: Option<SolverKind>,
    /// Forcing coefficient in (0, 1] for the inner solve [default: 0.9].
    #[arg(long)]
    theta: Option<f64>,
    /// Relative accuracy of the sampled Hessian, in [0, 1) [default: 0.05].
    #[arg(long)]
    beta: Option<f64>,
    /// Decrement threshold for unit steps [default: 1/6].
    #[arg(long)]
    lambda_bar: Option<f64>,
    /// `certificate` or a fixed number of inner epochs.
    #[arg(long)]
    inner: Option<InnerSpec>,
    /// Inner Prox-SVRG step size [default: 0.1 / L_max].
    #[arg(long)]
    inner_step: Option<f64>,
    /// Inner Prox-SVRG steps per epoch.
    #[arg(long)]
    inner_epoch_len: Option<usize>,
    /// Wrap the inner solver in Catalyst acceleration.
    #[arg(long)]
    catalyst: bool,
    /// Oversampling constant for the number of Hessian rows drawn [default: 4].
    #[arg(long)]
    sample_c: Option<f64>,
    /// Weight of the uniform component in the sampling distribution [default: 0.1].
    #[arg(long)]
    mix_nu: Option<f64>,
    /// Use the full Hessian instead of a leverage-score sample.
    #[arg(long)]
    exact_hessian: bool,
    /// Stop when the squared approximate decrement falls below this [default: 1e-8].
    #[arg(long)]
    tol: Option<f64>,
    /// Outer iteration cap [default: 100].
    #[arg(long)]
    max_outer: Option<usize>,
    /// Baseline step size.
    #[arg(long)]
    step: Option<f64>,
    /// Baseline iterations or epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Baseline SVRG steps per epoch.
    #[arg(long)]
    epoch_len: Option<usize>,
    /// Gap to F* reported by compare [default: 1e-8].
    #[arg(long)]
    target_gap: Option<f64>,
    /// RNG seed; required by the stochastic solvers.
    #[arg(long)]
    seed: Option<u64>,
    /// Per-iteration CSV trace output.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// JSON summary output.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// CSV output for compare and sweep-inner (stdout when absent).
    #[arg(long)]
    output: Option<PathBuf>,
}

impl Common {
    fn flags(&self) -> RunConfig {
        RunConfig {
            data: self.data.clone(),
            synthetic: self.synthetic.clone(),
            dim: self.dim,
            intercept: self.intercept.then_some(true),
            loss: self.loss,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            gamma: self.gamma,
            solver: self.solver,
            theta: self.theta,
            beta: self.beta,
            lambda_bar: self.lambda_bar,
            inner: self.inner,
            inner_step: self.inner_step,
            inner_epoch_len: self.inner_epoch_len,
            catalyst: self.catalyst.then_some(true),
            sample_c: self.sample_c,
            mix_nu: self.mix_nu,
            exact_hessian: self.exact_hessian.then_some(true),
            tol: self.tol,
            max_outer: self.max_outer,
            step: self.step,
            epochs: self.epochs,
            epoch_len: self.epoch_len,
            target_gap: self.target_gap,
            seed: self.seed,
            trace: self.trace.clone(),
            summary: self.summary.clone(),
            output: self.output.clone(),
            ..RunConfig::default()
        }
    }

    fn resolve(&self) -> Result<RunConfig, Failure> {
        let file = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("config {}: {e}", path.display())))?;
                RunConfig::from_json(&text).map_err(|e| Failure::usage(e.to_string()))?
            }
            None => RunConfig::default(),
        };
        Ok(RunConfig::default().overlay(file).overlay(self.flags()))
    }
}

/// An error paired with its exit code: 1 usage, 2 data, 3 numeric.
struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn usage(msg: String) -> Self {
        Self { code: 1, msg }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParameter(_) => 1,
            Error::Parse { .. } | Error::Format(_) | Error::DimensionMismatch { .. } | Error::Io(_) => 2,
            Error::Numerical(_) => 3,
        };
        Self { code, msg: e.to_string() }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Error::Io(e).into()
    }
}

fn load(cfg: &RunConfig) -> Result<SparseDataset, Failure> {
    cfg.load_data().map_err(|e| match e {
        // a missing source is a usage problem, an unreadable one a data problem
        Error::InvalidParameter(m) => Failure::usage(m),
        Error::Io(io) => Failure {
            code: 2,
            msg: format!("{}: {io}", cfg.data.as_deref().unwrap_or(Path::new("<data>")).display()),
        },
        other => other.into(),
    })
}

/// Writes through a temp file in the target directory, then renames.
fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> subnewton::Result<()>) -> Result<(), Failure> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        body(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| Failure::from(e.error))?;
    Ok(())
}

fn emit(path: Option<&Path>, body: impl FnOnce(&mut dyn Write) -> subnewton::Result<()>) -> Result<(), Failure> {
    match path {
        Some(p) => write_atomic(p, body),
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            body(&mut lock)?;
            lock.flush()?;
            Ok(())
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(|e| Error::Io(e.into()))?;
        writeln!(w)?;
        Ok(())
    })
}

fn problem<'a>(data: &'a SparseDataset, cfg: &RunConfig) -> Result<Problem<'a>, Failure> {
    Ok(Problem::new(data, cfg.loss(), cfg.regularizer(), cfg.gamma())?)
}

fn train(common: &Common) -> Result<(), Failure> {
    let cfg = common.resolve()?;
    let kind = cfg.solver();
    let seed = cfg.require_seed(&[kind])?;
    let outer = cfg.outer_config(seed)?;
    let base = cfg.baseline_config(seed)?;
    let data = load(&cfg)?;
    let p = problem(&data, &cfg)?;
    let run = bench::run_solver(&p, kind, &outer, &base)?;
    if let Some(path) = &cfg.trace {
        write_atomic(path, |w| write_trace(w, &run.trace))?;
    }
    if let Some(path) = &cfg.summary {
        let echo = serde_json::to_value(&cfg).map_err(|e| Failure::usage(e.to_string()))?;
        write_json(path, &Summary::new(&run, echo))?;
    }
    report(&run);
    Ok(())
}

fn report(run: &RunResult) {
    println!(
        "{}: final F = {:.12e}, iterations = {}, comp_grad_evals = {}, full_grad_evals = {}{}",
        run.solver,
        run.final_objective,
        run.iterations(),
        run.comp_grad_evals(),
        run.full_grad_evals(),
        match run.converged {
            Some(c) => format!(", converged = {c}"),
            None => String::new(),
        }
    );
}

fn compare(common: &Common, solvers: Option<Vec<SolverKind>>) -> Result<(), Failure> {
    let mut cfg = common.resolve()?;
    cfg.solvers = solvers.or(cfg.solvers);
    let kinds = cfg.solvers.clone().unwrap_or_else(|| SolverKind::ALL.to_vec());
    if kinds.is_empty() {
        return Err(Failure::usage("solver list is empty".into()));
    }
    let seed = cfg.require_seed(&kinds)?;
    let outer = cfg.outer_config(seed)?;
    let base = cfg.baseline_config(seed)?;
    let data = load(&cfg)?;
    let p = problem(&data, &cfg)?;
    let cmp = bench::compare(&p, &kinds, &outer, &base)?;
    emit(cfg.output.as_deref(), |w| bench::write_compare_csv(w, &cmp.rows()))?;
    let gap = cfg.target_gap();
    for run in &cmp.runs {
        let reach = run.evals_to_gap(cmp.f_star, gap);
        eprintln!(
            "{}: final gap = {:.3e}, evals to {gap:.0e} = {}",
            run.solver,
            run.final_objective - cmp.f_star,
            reach.map_or("not reached".to_string(), |e| e.to_string())
        );
    }
    Ok(())
}

fn sweep(common: &Common, inner_list: Option<Vec<usize>>) -> Result<(), Failure> {
    let mut cfg = common.resolve()?;
    cfg.inner_list = inner_list.or(cfg.inner_list);
    if let Some(InnerSpec::Certificate) = cfg.inner {
        return Err(Failure::usage("sweep-inner runs in fixed-inner mode; drop --inner certificate".into()));
    }
    let inners = cfg.inner_list.clone().unwrap_or_else(|| (1..=6).collect());
    let seed = cfg.require_seed(&[SolverKind::ProxNewton])?;
    let outer = cfg.outer_config(seed)?;
    let data = load(&cfg)?;
    let p = problem(&data, &cfg)?;
    let sw = bench::sweep_inner(&p, &inners, &outer)?;
    emit(cfg.output.as_deref(), |w| bench::write_sweep_csv(w, &sw.rows()))?;
    for (inner, outer_to) in sw.outer_to(1e-6) {
        eprintln!(
            "inner = {inner}: outer iterations to 1e-6 gap = {}",
            outer_to.map_or("not reached".to_string(), |t| t.to_string())
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct Diagnosis {
    n: usize,
    d: usize,
    nnz: usize,
    density: f64,
    max_row_norm_sq: f64,
    selfconcordance: newton::SelfConcordanceReport,
}

fn diagnose(common: &Common, trials: usize, radius: f64) -> Result<(), Failure> {
    let cfg = common.resolve()?;
    let data = load(&cfg)?;
    let p = problem(&data, &cfg)?;
    let stats = data.stats();
    let report = selfconcordance_check(&p, trials, radius, cfg.seed.unwrap_or(0))?;
    let diag = Diagnosis {
        n: stats.n,
        d: stats.d,
        nnz: stats.nnz,
        density: stats.density,
        max_row_norm_sq: data.max_row_norm_sq(),
        selfconcordance: report,
    };
    let text = serde_json::to_string_pretty(&diag).map_err(|e| Failure::usage(e.to_string()))?;
    println!("{text}");
    if let Some(path) = &cfg.summary {
        write_json(path, &diag)?;
    }
    if diag.selfconcordance.violations() > 0 {
        return Err(Failure {
            code: 3,
            msg: format!("{} self-concordance violations", diag.selfconcordance.violations()),
        });
    }
    Ok(())
}

fn init_threads() -> Result<(), Failure> {
    if let Ok(v) = std::env::var("SUBNEWTON_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| Failure::usage(format!("SUBNEWTON_THREADS must be a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::usage(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = init_threads().and_then(|()| match &cli.command {
        Command::Train(c) => train(c),
        Command::Compare { common, solvers } => compare(common, solvers.clone()),
        Command::SweepInner { common, inner_list } => sweep(common, inner_list.clone()),
        Command::Diagnose { common, trials, radius } => diagnose(common, *trials, *radius),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
