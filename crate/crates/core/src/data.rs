//! Row-sparse datasets: LIBSVM I/O, seeded synthetic instances and the
//! sparse kernels shared by every solver.
//!
//! Feature indices are 0-based internally and 1-based on disk.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use flate2::read::GzDecoder;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// A borrowed sparse row.
#[derive(Debug, Clone, Copy)]
pub struct SparseRow<'a> {
    pub indices: &'a [usize],
    pub values: &'a [f64],
}

impl<'a> SparseRow<'a> {
    #[inline]
    pub fn dot(&self, w: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(self.values)
            .map(|(&j, &v)| v * w[j])
            .sum()
    }

    /// `out += a * row`
    #[inline]
    pub fn axpy(&self, a: f64, out: &mut [f64]) {
        for (&j, &v) in self.indices.iter().zip(self.values) {
            out[j] += a * v;
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + 'a {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }
}

/// Design matrix in compressed-row form together with its labels.
///
/// Immutable after construction; every constructor validates that indices
/// are strictly increasing within a row and lie in `[0, d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDataset {
    d: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    labels: Vec<f64>,
}

impl SparseDataset {
    /// Builds a dataset from explicit rows. `d` defaults to one past the
    /// largest index seen; a larger `d` may be forced for schema alignment.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>, labels: Vec<f64>, d: Option<usize>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::Format(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let mut builder = Builder::default();
        for (row, label) in rows.into_iter().zip(labels) {
            builder.push_row(row.into_iter(), label, None)?;
        }
        builder.finish(d)
    }

    /// Dense constructor, mostly for tests and small oracles. Zeros are not stored.
    pub fn from_dense(rows: &[Vec<f64>], labels: Vec<f64>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let sparse = rows
            .iter()
            .map(|r| {
                check_dim(d, r.len())?;
                Ok(r.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, v)| (j, *v))
                    .collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(sparse, labels, Some(d))
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    #[inline]
    pub fn row(&self, i: usize) -> SparseRow<'_> {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        SparseRow {
            indices: &self.indices[a..b],
            values: &self.values[a..b],
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = SparseRow<'_>> + '_ {
        (0..self.n()).map(move |i| self.row(i))
    }

    /// True when every label is exactly -1 or +1.
    pub fn has_binary_labels(&self) -> bool {
        self.labels.iter().all(|&y| y == 1.0 || y == -1.0)
    }

    pub fn require_binary_labels(&self) -> Result<()> {
        match self.labels.iter().position(|&y| y != 1.0 && y != -1.0) {
            None => Ok(()),
            Some(i) => Err(Error::Format(format!(
                "classification label {} at row {} is not -1 or +1",
                self.labels[i],
                i + 1
            ))),
        }
    }

    pub fn require_nonempty(&self) -> Result<()> {
        if self.n() == 0 {
            Err(Error::InvalidParameter("dataset has no samples".into()))
        } else {
            Ok(())
        }
    }

    /// Copy with a constant-1 feature appended at index `d`.
    pub fn with_intercept(&self) -> Self {
        let mut b = Builder::default();
        for i in 0..self.n() {
            let row = self.row(i);
            b.push_row(row.iter().chain(std::iter::once((self.d, 1.0))), self.labels[i], None)
                .expect("appending a trailing feature preserves ordering");
        }
        b.finish(Some(self.d + 1)).expect("valid by construction")
    }

    /// Largest squared row norm.
    pub fn max_row_norm_sq(&self) -> f64 {
        self.rows().map(|r| r.norm_sq()).fold(0.0, f64::max)
    }

    /// Dense `n x d` copy, row-major.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.rows()
            .map(|r| {
                let mut dense = vec![0.0; self.d];
                r.axpy(1.0, &mut dense);
                dense
            })
            .collect()
    }

    pub fn stats(&self) -> DatasetStats {
        DatasetStats {
            n: self.n(),
            d: self.d,
            nnz: self.nnz(),
            density: if self.n() == 0 || self.d == 0 {
                0.0
            } else {
                self.nnz() as f64 / (self.n() as f64 * self.d as f64)
            },
        }
    }

    /// Writes the dataset back out as LIBSVM text (1-based indices).
    pub fn write_libsvm<W: Write>(&self, mut out: W) -> Result<()> {
        for i in 0..self.n() {
            write!(out, "{}", self.labels[i])?;
            for (j, v) in self.row(i).iter() {
                write!(out, " {}:{}", j + 1, v)?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Size summary in the style of a dataset statistics table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n: usize,
    pub d: usize,
    pub nnz: usize,
    pub density: f64,
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "#data={} #features={} #nonzeros={} density={:.4}",
            self.n, self.d, self.nnz, self.density
        )
    }
}

#[derive(Default)]
struct Builder {
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    labels: Vec<f64>,
    max_index: Option<usize>,
}

impl Builder {
    fn push_row<I>(&mut self, row: I, label: f64, line: Option<usize>) -> Result<()>
    where
        I: Iterator<Item = (usize, f64)>,
    {
        if self.indptr.is_empty() {
            self.indptr.push(0);
        }
        let row_no = line.unwrap_or(self.labels.len() + 1);
        if !label.is_finite() {
            return Err(Error::Format(format!("non-finite label at line {row_no}")));
        }
        let start = self.indices.len();
        for (j, v) in row {
            if let Some(&prev) = self.indices[start..].last() {
                if j <= prev {
                    self.indices.truncate(start);
                    self.values.truncate(start);
                    return Err(Error::Format(format!("indices not increasing at line {row_no}")));
                }
            }
            if !v.is_finite() {
                return Err(Error::Format(format!("non-finite value at line {row_no}")));
            }
            self.max_index = Some(self.max_index.map_or(j, |m| m.max(j)));
            self.indices.push(j);
            self.values.push(v);
        }
        self.indptr.push(self.indices.len());
        self.labels.push(label);
        Ok(())
    }

    fn finish(mut self, d: Option<usize>) -> Result<SparseDataset> {
        if self.indptr.is_empty() {
            self.indptr.push(0);
        }
        let seen = self.max_index.map_or(0, |m| m + 1);
        let d = match d {
            Some(d) if d < seen => {
                return Err(Error::Format(format!(
                    "feature index {seen} exceeds the requested dimension {d}"
                )))
            }
            Some(d) => d,
            None => seen,
        };
        Ok(SparseDataset {
            d,
            indptr: self.indptr,
            indices: self.indices,
            values: self.values,
            labels: self.labels,
        })
    }
}

/// Options for reading LIBSVM text.
#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Force the feature dimension (must be at least the largest index seen).
    pub dim: Option<usize>,
}

/// Parses LIBSVM text: one `<label> <idx>:<val> ...` sample per nonempty line,
/// indices 1-based and strictly increasing.
pub fn parse_libsvm(text: &str, opts: ParseOptions) -> Result<SparseDataset> {
    let mut b = Builder::default();
    for (lineno, line) in text.lines().enumerate() {
        parse_line(&mut b, line, lineno + 1)?;
    }
    b.finish(opts.dim)
}

/// Streaming variant of [`parse_libsvm`].
pub fn read_libsvm<R: BufRead>(reader: R, opts: ParseOptions) -> Result<SparseDataset> {
    let mut b = Builder::default();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| match e.kind() {
            std::io::ErrorKind::InvalidData => Error::Parse {
                line: lineno + 1,
                msg: "invalid UTF-8".into(),
            },
            _ => Error::Io(e),
        })?;
        parse_line(&mut b, &line, lineno + 1)?;
    }
    b.finish(opts.dim)
}

/// Loads a LIBSVM file, transparently decompressing `.gz` / `.gzip` files.
pub fn load_libsvm<P: AsRef<Path>>(path: P, opts: ParseOptions) -> Result<SparseDataset> {
    let path = path.as_ref();
    let file = File::open(path)?;
    let gz = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("gz") || e.eq_ignore_ascii_case("gzip"));
    let reader: Box<dyn Read> = if gz {
        Box::new(GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    read_libsvm(BufReader::new(reader), opts)
}

fn parse_line(b: &mut Builder, line: &str, lineno: usize) -> Result<()> {
    let mut tokens = line.split_ascii_whitespace();
    let Some(label_tok) = tokens.next() else {
        return Ok(());
    };
    let perr = |msg: String| Error::Parse { line: lineno, msg };
    let label: f64 = label_tok
        .parse()
        .map_err(|_| perr(format!("malformed label {label_tok:?}")))?;
    let mut entries = Vec::new();
    for tok in tokens {
        let (idx, val) = tok
            .split_once(':')
            .ok_or_else(|| perr(format!("malformed token {tok:?}, expected idx:val")))?;
        let idx: usize = idx
            .parse()
            .map_err(|_| perr(format!("malformed index in {tok:?}")))?;
        if idx == 0 {
            return Err(perr(format!("index 0 in {tok:?}; indices are 1-based")));
        }
        let val: f64 = val
            .parse()
            .map_err(|_| perr(format!("malformed value in {tok:?}")))?;
        entries.push((idx - 1, val));
    }
    b.push_row(entries.into_iter(), label, Some(lineno))
}

/// Parameters of a seeded synthetic classification instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub density: f64,
    pub label_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n: 1000,
            d: 20,
            density: 1.0,
            label_noise: 0.05,
            seed: 0,
        }
    }
}

impl FromStr for SyntheticSpec {
    type Err = Error;

    /// `n=200,d=10,density=0.5,noise=0.05[,seed=3]`; omitted keys keep defaults.
    fn from_str(s: &str) -> Result<Self> {
        let mut spec = SyntheticSpec::default();
        let bad = |msg: String| Error::InvalidParameter(format!("synthetic spec: {msg}"));
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got {part:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            let num = |v: &str| v.parse::<f64>().map_err(|_| bad(format!("bad number {v:?} for {k}")));
            let int = |v: &str| v.parse::<u64>().map_err(|_| bad(format!("bad integer {v:?} for {k}")));
            match k {
                "n" => spec.n = int(v)? as usize,
                "d" => spec.d = int(v)? as usize,
                "density" => spec.density = num(v)?,
                "noise" | "label_noise" => spec.label_noise = num(v)?,
                "seed" => spec.seed = int(v)?,
                _ => return Err(bad(format!("unknown key {k:?}"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(Error::InvalidParameter("synthetic n and d must be >= 1".into()));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "density {} not in (0, 1]",
                self.density
            )));
        }
        if !(0.0..=1.0).contains(&self.label_noise) {
            return Err(Error::InvalidParameter(format!(
                "label noise {} not in [0, 1]",
                self.label_noise
            )));
        }
        Ok(())
    }
}

/// A synthetic dataset together with the planted weight vector.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub data: SparseDataset,
    pub w_true: Vec<f64>,
}

/// Draws a seeded synthetic instance: each entry is present with probability
/// `density` and standard normal when present; labels are `sign(x^T w_true)`
/// flipped with probability `label_noise`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Synthetic> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let w_true: Vec<f64> = (0..spec.d).map(|_| rng.sample(StandardNormal)).collect();
    let mut b = Builder::default();
    let mut row = Vec::with_capacity(spec.d);
    for _ in 0..spec.n {
        row.clear();
        for j in 0..spec.d {
            if spec.density >= 1.0 || rng.random::<f64>() < spec.density {
                row.push((j, rng.sample::<f64, _>(StandardNormal)));
            }
        }
        let margin: f64 = row.iter().map(|&(j, v)| v * w_true[j]).sum();
        let mut y = if margin >= 0.0 { 1.0 } else { -1.0 };
        if rng.random::<f64>() < spec.label_noise {
            y = -y;
        }
        b.push_row(row.iter().copied(), y, None)?;
    }
    let data = b.finish(Some(spec.d))?;
    Ok(Synthetic { data, w_true })
}

/// `u_i = x_i^T w` for every row.
pub fn margins(data: &SparseDataset, w: &[f64]) -> Result<Vec<f64>> {
    check_dim(data.d(), w.len())?;
    Ok((0..data.n())
        .into_par_iter()
        .with_min_len(2048)
        .map(|i| data.row(i).dot(w))
        .collect())
}

/// `X^T a` for an n-vector of row coefficients.
pub fn transpose_combination(data: &SparseDataset, coef: &[f64]) -> Result<Vec<f64>> {
    check_dim(data.n(), coef.len())?;
    let mut out = vec![0.0; data.d()];
    for (row, &a) in data.rows().zip(coef) {
        if a != 0.0 {
            row.axpy(a, &mut out);
        }
    }
    Ok(out)
}
