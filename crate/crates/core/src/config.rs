//! Run configuration shared by the command line and JSON config files.
//! Every field is optional so that layers can be merged: flags override the
//! file, which overrides the defaults.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::baselines::BaselineConfig;
use crate::bench::SolverKind;
use crate::data::{load_libsvm, ParseOptions, SparseDataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::inner::InnerConfig;
use crate::models::{Loss, Regularizer};
use crate::newton::OuterConfig;

/// Inner solve policy: run to the certificate, or a fixed number of epochs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerSpec {
    Certificate,
    Epochs(usize),
}

impl FromStr for InnerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("certificate") {
            return Ok(InnerSpec::Certificate);
        }
        match s.parse::<usize>() {
            Ok(0) => Err(Error::InvalidParameter("inner epoch count must be >= 1".into())),
            Ok(k) => Ok(InnerSpec::Epochs(k)),
            Err(_) => Err(Error::InvalidParameter(format!(
                "inner must be `certificate` or a positive integer, got `{s}`"
            ))),
        }
    }
}

impl fmt::Display for InnerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InnerSpec::Certificate => f.write_str("certificate"),
            InnerSpec::Epochs(k) => write!(f, "{k}"),
        }
    }
}

impl Serialize for InnerSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            InnerSpec::Certificate => s.serialize_str("certificate"),
            InnerSpec::Epochs(k) => s.serialize_u64(*k as u64),
        }
    }
}

impl<'de> Deserialize<'de> for InnerSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(u64),
            Text(String),
        }
        let text = match Raw::deserialize(d)? {
            Raw::Count(k) => k.to_string(),
            Raw::Text(t) => t,
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub synthetic: Option<String>,
    /// Force the feature dimension of LIBSVM input.
    pub dim: Option<usize>,
    /// Append a constant-1 feature.
    pub intercept: Option<bool>,
    pub loss: Option<Loss>,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub gamma: Option<f64>,
    pub solver: Option<SolverKind>,
    pub solvers: Option<Vec<SolverKind>>,
    pub theta: Option<f64>,
    pub beta: Option<f64>,
    pub lambda_bar: Option<f64>,
    pub inner: Option<InnerSpec>,
    pub inner_list: Option<Vec<usize>>,
    pub inner_step: Option<f64>,
    pub inner_epoch_len: Option<usize>,
    pub catalyst: Option<bool>,
    pub sample_c: Option<f64>,
    pub mix_nu: Option<f64>,
    pub exact_hessian: Option<bool>,
    pub tol: Option<f64>,
    pub max_outer: Option<usize>,
    pub step: Option<f64>,
    pub epochs: Option<usize>,
    pub epoch_len: Option<usize>,
    pub target_gap: Option<f64>,
    pub seed: Option<u64>,
    pub trace: Option<PathBuf>,
    pub summary: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($f:ident),* $(,)?) => {
        RunConfig { $($f: $top.$f.or($base.$f)),* }
    };
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("config: {e}")))
    }

    /// Fields set in `top` win over fields set in `self`.
    pub fn overlay(self, top: RunConfig) -> RunConfig {
        let base = self;
        overlay!(base, top; data, synthetic, dim, intercept, loss, lambda1, lambda2, gamma, solver,
            solvers, theta, beta, lambda_bar, inner, inner_list, inner_step, inner_epoch_len,
            catalyst, sample_c, mix_nu, exact_hessian, tol, max_outer, step, epochs, epoch_len,
            target_gap, seed, trace, summary, output)
    }

    pub fn loss(&self) -> Loss {
        self.loss.unwrap_or(Loss::Logistic)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma.unwrap_or(1e-4)
    }

    pub fn regularizer(&self) -> Regularizer {
        Regularizer::elastic_net(self.lambda1.unwrap_or(1e-3), self.lambda2.unwrap_or(0.0))
    }

    pub fn solver(&self) -> SolverKind {
        self.solver.unwrap_or(SolverKind::ProxNewton)
    }

    pub fn target_gap(&self) -> f64 {
        self.target_gap.unwrap_or(1e-8)
    }

    /// Stochastic solvers refuse to run without an explicit seed.
    pub fn require_seed(&self, kinds: &[SolverKind]) -> Result<u64> {
        match (self.seed, kinds.iter().any(|k| k.is_stochastic())) {
            (Some(s), _) => Ok(s),
            (None, false) => Ok(0),
            (None, true) => Err(Error::InvalidParameter("--seed is required for stochastic solvers".into())),
        }
    }

    /// Loads the dataset named by `data` or `synthetic` (exactly one).
    pub fn load_data(&self) -> Result<SparseDataset> {
        let data = match (&self.data, &self.synthetic) {
            (Some(path), None) => load_libsvm(path, ParseOptions { dim: self.dim })?,
            (None, Some(spec)) => {
                let spec: SyntheticSpec = spec.parse()?;
                crate::data::generate_synthetic(&spec)?.data
            }
            (Some(_), Some(_)) => {
                return Err(Error::InvalidParameter("give either a data file or a synthetic spec, not both".into()))
            }
            (None, None) => return Err(Error::InvalidParameter("no data: give a data file or a synthetic spec".into())),
        };
        Ok(if self.intercept.unwrap_or(false) { data.with_intercept() } else { data })
    }

    pub fn outer_config(&self, seed: u64) -> Result<OuterConfig> {
        let mut cfg = OuterConfig {
            seed,
            ..OuterConfig::default()
        };
        if let Some(v) = self.theta {
            cfg.theta = v;
        }
        if let Some(v) = self.beta {
            cfg.beta = v;
        }
        if let Some(v) = self.lambda_bar {
            cfg.lambda_bar = v;
        }
        if let Some(v) = self.tol {
            cfg.tol = v;
        }
        if let Some(v) = self.max_outer {
            cfg.max_outer = v;
        }
        if let Some(v) = self.sample_c {
            cfg.sampling.oversample = v;
        }
        if let Some(v) = self.mix_nu {
            cfg.sampling.mix = v;
        }
        if let Some(v) = self.exact_hessian {
            cfg.exact_hessian = v;
        }
        cfg.inner = match self.inner.unwrap_or(InnerSpec::Certificate) {
            InnerSpec::Certificate => InnerConfig::default(),
            InnerSpec::Epochs(k) => InnerConfig::fixed(k),
        };
        cfg.inner.step = self.inner_step;
        cfg.inner.epoch_len = self.inner_epoch_len;
        cfg.inner.catalyst = self.catalyst.unwrap_or(false);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn baseline_config(&self, seed: u64) -> Result<BaselineConfig> {
        let mut cfg = BaselineConfig {
            seed,
            step: self.step,
            epoch_len: self.epoch_len,
            ..BaselineConfig::default()
        };
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
