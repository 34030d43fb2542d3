//! Strict identification functions for total VaR, total ES and ES
//! contributions.
//!
//! A negative expected identification value means the functional is
//! over-estimated, a positive one means it is under-estimated. The gates use
//! the same conventions as [`crate::scoring`].

use serde::{Deserialize, Serialize};

use crate::error::{EscError, Result};
use crate::numeric::KahanSum;
use crate::panel::{ForecastRecord, LossPanel};

/// `V^VaR(v, s) = α - 1{s <= v}`.
#[inline]
pub fn ident_var(v: f64, s: f64, alpha: f64) -> f64 {
    alpha - if s <= v { 1.0 } else { 0.0 }
}

/// `V_j^ESC((m, v), x) = 1{s > v}(x_j - m)`.
#[inline]
pub fn ident_esc(m: f64, v: f64, x_j: f64, s: f64) -> f64 {
    if s > v {
        x_j - m
    } else {
        0.0
    }
}

/// `V^ES((v, e), s) = v - e - 1{s > v}(v - s) / (1 - α)`.
#[inline]
pub fn ident_es(v: f64, e: f64, s: f64, alpha: f64) -> f64 {
    let tail = if s > v { v - s } else { 0.0 };
    v - e - tail / (1.0 - alpha)
}

/// Which identification values a series holds. Column order is frozen
/// because the joint tests index columns positionally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IdentKind {
    /// `(V^VaR)`.
    Var,
    /// `(V^ES)`.
    Es,
    /// `(V_j^ESC)`, zero-based `j`.
    Esc(usize),
    /// `(V^VaR, V^ES)`.
    VarEs,
    /// `(V^VaR, V_j^ESC)`.
    VarEsc(usize),
    /// `(V^VaR, V_1^ESC, …, V_d^ESC)`.
    Tuple,
}

impl IdentKind {
    pub fn width(&self, d: usize) -> usize {
        match self {
            IdentKind::Var | IdentKind::Es | IdentKind::Esc(_) => 1,
            IdentKind::VarEs | IdentKind::VarEsc(_) => 2,
            IdentKind::Tuple => d + 1,
        }
    }
}

/// A `T x k` matrix of identification values.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentSeries {
    pub kind: IdentKind,
    pub width: usize,
    // row-major
    values: Vec<f64>,
}

impl IdentSeries {
    pub fn len(&self) -> usize {
        self.values.len() / self.width
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.width..(t + 1) * self.width]
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.values.chunks_exact(self.width).map(|r| r[k]).collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.width)
    }

    /// Column-wise compensated means.
    pub fn mean(&self) -> Vec<f64> {
        let mut acc = vec![KahanSum::new(); self.width];
        for r in self.rows() {
            for (a, &x) in acc.iter_mut().zip(r) {
                a.add(x);
            }
        }
        let n = self.len() as f64;
        acc.iter().map(|a| a.value() / n).collect()
    }
}

/// Per-time identification values of `kind`.
pub fn ident_series(
    forecasts: &[ForecastRecord],
    panel: &LossPanel,
    kind: IdentKind,
) -> Result<IdentSeries> {
    if forecasts.is_empty() {
        return Err(EscError::Empty("forecast sequence".into()));
    }
    if forecasts.len() != panel.len() {
        return Err(EscError::LengthMismatch {
            expected: panel.len(),
            got: forecasts.len(),
        });
    }
    let d = panel.dim();
    if let IdentKind::Esc(j) | IdentKind::VarEsc(j) = kind {
        if j >= d {
            return Err(EscError::Dimension(format!("component {j} out of range")));
        }
    }
    let width = kind.width(d);
    let mut values = Vec::with_capacity(width * forecasts.len());
    for (f, x) in forecasts.iter().zip(panel.rows()) {
        if f.dim() != d {
            return Err(EscError::LengthMismatch {
                expected: d,
                got: f.dim(),
            });
        }
        let s: f64 = x.iter().sum();
        match kind {
            IdentKind::Var => values.push(ident_var(f.var, s, f.alpha)),
            IdentKind::Es => values.push(ident_es(f.var, f.es, s, f.alpha)),
            IdentKind::Esc(j) => values.push(ident_esc(f.esc[j], f.var, x[j], s)),
            IdentKind::VarEs => {
                values.push(ident_var(f.var, s, f.alpha));
                values.push(ident_es(f.var, f.es, s, f.alpha));
            }
            IdentKind::VarEsc(j) => {
                values.push(ident_var(f.var, s, f.alpha));
                values.push(ident_esc(f.esc[j], f.var, x[j], s));
            }
            IdentKind::Tuple => {
                values.push(ident_var(f.var, s, f.alpha));
                values.extend(
                    f.esc
                        .iter()
                        .zip(x)
                        .map(|(&m, &xj)| ident_esc(m, f.var, xj, s)),
                );
            }
        }
    }
    Ok(IdentSeries {
        kind,
        width,
        values,
    })
}

/// Out-of-sample mean identification vector.
pub fn average_ident(
    forecasts: &[ForecastRecord],
    panel: &LossPanel,
    kind: IdentKind,
) -> Result<Vec<f64>> {
    Ok(ident_series(forecasts, panel, kind)?.mean())
}
