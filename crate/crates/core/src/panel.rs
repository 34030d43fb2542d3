//! Loss panels, forecast records, lexicographic score pairs and simplex
//! weights.
//!
//! Losses are positive when money is lost. The aggregate loss `S_t` is the
//! row sum of the panel and is always recomputed from the components.

use std::cmp::Ordering;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{EscError, Result};

/// Absolute tolerance on the weight sum of a [`SimplexWeights`].
pub const SIMPLEX_TOL: f64 = 1e-12;

/// A `T x d` panel of realized losses.
#[derive(Debug, Clone, PartialEq)]
pub struct LossPanel {
    times: Vec<i64>,
    names: Vec<String>,
    dim: usize,
    // row-major, T * d
    losses: Vec<f64>,
}

/// Validates a raw matrix of losses and wraps it in a [`LossPanel`] indexed
/// by `1..=T`.
pub fn validate_panel(raw: &[Vec<f64>], labels: &[String]) -> Result<LossPanel> {
    let times = (1..=raw.len() as i64).collect();
    LossPanel::new(times, labels.to_vec(), raw)
}

impl LossPanel {
    pub fn new(times: Vec<i64>, names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(EscError::Empty("loss panel has no rows".into()));
        }
        let dim = rows[0].len();
        if dim < 2 {
            return Err(EscError::Dimension(format!(
                "a loss panel needs at least 2 components, got {dim}"
            )));
        }
        if times.len() != rows.len() {
            return Err(EscError::LengthMismatch {
                expected: rows.len(),
                got: times.len(),
            });
        }
        if names.len() != dim {
            return Err(EscError::LengthMismatch {
                expected: dim,
                got: names.len(),
            });
        }
        if let Some(w) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(EscError::Parse(format!(
                "times must be strictly increasing (row {})",
                w + 1
            )));
        }
        let mut losses = Vec::with_capacity(rows.len() * dim);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(EscError::Dimension(format!(
                    "row {r} has {} columns, expected {dim}",
                    row.len()
                )));
            }
            for (c, &x) in row.iter().enumerate() {
                if !x.is_finite() {
                    return Err(EscError::NonFinite { row: r, col: c });
                }
                losses.push(x);
            }
        }
        Ok(Self {
            times,
            names,
            dim,
            losses,
        })
    }

    /// Panel with generic names `X1..Xd` and times `1..=T`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let names = (1..=d).map(|j| format!("X{j}")).collect::<Vec<_>>();
        validate_panel(rows, &names)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[i64] {
        &self.times
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    #[inline]
    pub fn row(&self, t: usize) -> &[f64] {
        &self.losses[t * self.dim..(t + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.losses.chunks_exact(self.dim)
    }

    #[inline]
    pub fn aggregate_at(&self, t: usize) -> f64 {
        self.row(t).iter().sum()
    }

    /// The aggregate loss series `S_t = Σ_j X_{j,t}`.
    pub fn aggregate(&self) -> Vec<f64> {
        self.rows().map(|r| r.iter().sum()).collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Sub-panel over a range of row indices.
    pub fn slice(&self, range: Range<usize>) -> Result<LossPanel> {
        if range.start >= range.end || range.end > self.len() {
            return Err(EscError::Dimension(format!(
                "invalid row range {:?} for a panel of length {}",
                range,
                self.len()
            )));
        }
        Ok(LossPanel {
            times: self.times[range.clone()].to_vec(),
            names: self.names.clone(),
            dim: self.dim,
            losses: self.losses[range.start * self.dim..range.end * self.dim].to_vec(),
        })
    }

    /// Sub-panel of the given rows, which must be increasing.
    pub fn select(&self, rows: &[usize]) -> Result<LossPanel> {
        if let Some(&r) = rows.iter().find(|&&r| r >= self.len()) {
            return Err(EscError::Dimension(format!("row {r} of a panel of length {}", self.len())));
        }
        let times = rows.iter().map(|&r| self.times[r]).collect();
        let data: Vec<Vec<f64>> = rows.iter().map(|&r| self.row(r).to_vec()).collect();
        LossPanel::new(times, self.names.clone(), &data)
    }

    /// Row index of a time stamp.
    pub fn index_of(&self, time: i64) -> Option<usize> {
        self.times.binary_search(&time).ok()
    }

    /// Copy of the panel with one entry replaced.
    pub fn with_entry(&self, t: usize, j: usize, value: f64) -> Result<LossPanel> {
        if !value.is_finite() {
            return Err(EscError::NonFinite { row: t, col: j });
        }
        let mut out = self.clone();
        out.losses[t * self.dim + j] = value;
        Ok(out)
    }

    /// FNV-1a hash of the times and loss bits.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv::new();
        for &t in &self.times {
            h.write(&t.to_le_bytes());
        }
        for &x in &self.losses {
            h.write(&x.to_bits().to_le_bytes());
        }
        h.finish()
    }

    /// Reads a panel from CSV: header `time,<name_1>,…,<name_d>`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 3 || headers.get(0).map(str::trim) != Some("time") {
            return Err(EscError::Parse(
                "panel header must be `time,<name_1>,...,<name_d>` with d >= 2".into(),
            ));
        }
        let names: Vec<String> = headers.iter().skip(1).map(|s| s.trim().to_string()).collect();
        let mut times = Vec::new();
        let mut rows = Vec::new();
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != names.len() + 1 {
                return Err(EscError::Parse(format!(
                    "data row {r} has {} fields, expected {}",
                    rec.len(),
                    names.len() + 1
                )));
            }
            let t: i64 = rec[0]
                .trim()
                .parse()
                .map_err(|_| EscError::Parse(format!("row {r}: time `{}` is not an integer", &rec[0])))?;
            let mut row = Vec::with_capacity(names.len());
            for (c, field) in rec.iter().skip(1).enumerate() {
                let x: f64 = field.trim().parse().map_err(|_| {
                    EscError::Parse(format!("row {r}, column {c}: `{field}` is not a number"))
                })?;
                row.push(x);
            }
            times.push(t);
            rows.push(row);
        }
        LossPanel::new(times, names, &rows)
    }

    pub fn read_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| EscError::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["time".to_string()];
        header.extend(self.names.iter().cloned());
        wtr.write_record(&header)?;
        for (t, row) in self.times.iter().zip(self.rows()) {
            let mut rec = vec![t.to_string()];
            rec.extend(row.iter().map(|x| fmt_f64(*x)));
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| EscError::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| EscError::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Shortest round-trip representation of a float.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= u64::from(*b);
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

pub(crate) fn fingerprint_f64s(xs: impl IntoIterator<Item = f64>) -> u64 {
    let mut h = Fnv::new();
    for x in xs {
        h.write(&x.to_bits().to_le_bytes());
    }
    h.finish()
}

/// One-step-ahead forecast of `(ESC_1, …, ESC_d, VaR, ES)` at level `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub esc: Vec<f64>,
    pub var: f64,
    pub es: f64,
    pub alpha: f64,
}

impl ForecastRecord {
    pub fn new(esc: Vec<f64>, var: f64, es: f64, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(EscError::param("alpha", format!("{alpha} is not in (0,1)")));
        }
        if esc.is_empty() {
            return Err(EscError::Empty("ES contribution vector".into()));
        }
        if let Some(j) = esc.iter().position(|x| !x.is_finite()) {
            return Err(EscError::NonFinite { row: 0, col: j });
        }
        if !var.is_finite() || !es.is_finite() {
            return Err(EscError::Degenerate("non-finite VaR or ES forecast".into()));
        }
        Ok(Self { esc, var, es, alpha })
    }

    pub fn dim(&self) -> usize {
        self.esc.len()
    }

    /// `|Σ_j ESC_j - ES|`.
    pub fn allocation_gap(&self) -> f64 {
        (self.esc.iter().sum::<f64>() - self.es).abs()
    }
}

/// `(VaR score, ESC score)` compared lexicographically.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScorePair {
    pub var_score: f64,
    pub esc_score: f64,
}

impl ScorePair {
    pub fn new(var_score: f64, esc_score: f64) -> Self {
        Self {
            var_score,
            esc_score,
        }
    }

    /// Lexicographic comparison: the VaR score decides unless it ties.
    pub fn lex_cmp(&self, other: &ScorePair) -> Ordering {
        fn cmp(a: f64, b: f64) -> Ordering {
            if a < b {
                Ordering::Less
            } else if a > b {
                Ordering::Greater
            } else {
                Ordering::Equal
            }
        }
        cmp(self.var_score, other.var_score).then(cmp(self.esc_score, other.esc_score))
    }

    pub fn lex_le(&self, other: &ScorePair) -> bool {
        self.lex_cmp(other) != Ordering::Greater
    }
}

/// A weight vector in the open unit simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexWeights(Vec<f64>);

impl SimplexWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.len() < 2 {
            return Err(EscError::Dimension(format!(
                "simplex weights need d >= 2, got {}",
                w.len()
            )));
        }
        if let Some(j) = w.iter().position(|&x| !(x > 0.0 && x < 1.0)) {
            return Err(EscError::OutsideSimplex(format!(
                "component {j} = {} is not in (0,1)",
                w[j]
            )));
        }
        let s: f64 = w.iter().sum();
        if (s - 1.0).abs() > SIMPLEX_TOL {
            return Err(EscError::OutsideSimplex(format!("weights sum to {s}")));
        }
        Ok(Self(w))
    }

    pub fn uniform(d: usize) -> Self {
        Self(vec![1.0 / d as f64; d])
    }

    /// Skips validation; callers guarantee the invariants.
    pub(crate) fn from_raw(w: Vec<f64>) -> Self {
        Self(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for SimplexWeights {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}
