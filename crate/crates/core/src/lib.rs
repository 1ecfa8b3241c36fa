//! Inexact subsampled proximal Newton for regularized empirical risk
//! minimization, with first-order baselines and a benchmark harness.

// `!(x > 0.0)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod bench;
pub mod config;
pub mod data;
pub mod error;
pub mod inner;
pub mod leverage;
pub mod models;
pub mod newton;
pub mod subproblem;
pub mod trace;

pub use bench::SolverKind;
pub use config::{InnerSpec, RunConfig};
pub use data::{generate_synthetic, load_libsvm, parse_libsvm, ParseOptions, SparseDataset, SyntheticSpec};
pub use error::{Error, Result};
pub use models::{Loss, Problem, Regularizer};
