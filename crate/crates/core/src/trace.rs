//! Per-iteration trace records shared by every solver, and their CSV form.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column order of the trace CSV.
pub const TRACE_COLUMNS: [&str; 10] = [
    "t",
    "phase",
    "lambda_tilde",
    "F",
    "eta",
    "inner_epochs",
    "certified",
    "comp_grad_evals",
    "full_grad_evals",
    "wall_ms",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    /// Damped steps.
    I,
    /// Unit steps.
    II,
}

/// One row of a solver trace. Newton-only fields are empty for baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub phase: Option<Phase>,
    pub lambda_tilde: Option<f64>,
    /// `F(w_t)`.
    #[serde(rename = "F")]
    pub objective: f64,
    pub eta: Option<f64>,
    pub inner_epochs: Option<usize>,
    pub certified: Option<bool>,
    /// Cumulative single-row gradient or Hessian-row evaluations.
    pub comp_grad_evals: u64,
    /// Cumulative full passes (gradient at all `n` rows).
    pub full_grad_evals: u64,
    pub wall_ms: f64,
}

impl TraceRecord {
    /// Work in units of single-row evaluations: `comp + n * full`.
    pub fn evaluations(&self, n: usize) -> u64 {
        self.comp_grad_evals + n as u64 * self.full_grad_evals
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}

pub fn write_trace<W: Write>(out: W, records: &[TraceRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(TRACE_COLUMNS).map_err(csv_err)?;
    for r in records {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a trace CSV, insisting on the exact column set and order.
pub fn read_trace<R: Read>(input: R) -> Result<Vec<TraceRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    let headers = rd.headers().map_err(csv_err)?.clone();
    if headers.iter().ne(TRACE_COLUMNS) {
        return Err(Error::Format(format!("unexpected trace columns: {headers:?}")));
    }
    rd.deserialize().map(|r| r.map_err(csv_err)).collect()
}
