//! Murphy diagrams for total VaR, single ES contributions and the tuple of
//! ES contributions.
//!
//! Average elementary scores are piecewise linear in `η` with kinks and
//! jumps only at realized values and forecasts, so a curve is stored exactly
//! by its value and left limit at each knot. Curves are right-continuous.

use std::io::Write;

use serde::Serialize;

use crate::error::{EscError, Result};
use crate::numeric::KahanSum;
use crate::panel::{fingerprint_f64s, fmt_f64, ForecastRecord, LossPanel};
use crate::scoring::{elementary_score_esc, elementary_score_var};

/// A Murphy curve stored at its knots.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MurphyCurve {
    pub label: String,
    pub target: String,
    /// Strictly increasing.
    pub knots: Vec<f64>,
    /// Curve value at each knot.
    pub values: Vec<f64>,
    /// Left limit at each knot.
    pub left_values: Vec<f64>,
    pub panel_fingerprint: u64,
    pub var_fingerprint: u64,
}

impl MurphyCurve {
    /// Points outside the knot range where the curve is zero.
    pub fn sentinels(&self) -> (f64, f64) {
        let lo = self.knots[0];
        let hi = *self.knots.last().unwrap();
        let pad = (hi - lo).max(1.0);
        (lo - pad, hi + pad)
    }

    /// Curve value at an arbitrary `eta`.
    pub fn eval(&self, eta: f64) -> f64 {
        let n = self.knots.len();
        if eta < self.knots[0] || eta > self.knots[n - 1] {
            return 0.0;
        }
        let k = self.knots.partition_point(|&p| p <= eta) - 1;
        if k == n - 1 {
            return self.values[k];
        }
        self.interp(k, eta)
    }

    /// Left limit at an arbitrary `eta`.
    pub fn left_limit(&self, eta: f64) -> f64 {
        let n = self.knots.len();
        if eta <= self.knots[0] || eta > self.knots[n - 1] {
            return 0.0;
        }
        let k = self.knots.partition_point(|&p| p < eta) - 1;
        self.interp(k, eta)
    }

    fn interp(&self, k: usize, eta: f64) -> f64 {
        let (x0, x1) = (self.knots[k], self.knots[k + 1]);
        let (y0, y1) = (self.values[k], self.left_values[k + 1]);
        y0 + (y1 - y0) * (eta - x0) / (x1 - x0)
    }

    /// Exact integral of the curve over the real line.
    pub fn integral(&self) -> f64 {
        let mut acc = KahanSum::new();
        for k in 0..self.knots.len() - 1 {
            let h = self.knots[k + 1] - self.knots[k];
            acc.add(0.5 * (self.values[k] + self.left_values[k + 1]) * h);
        }
        acc.value()
    }
}

fn check(forecasts: &[ForecastRecord], panel: &LossPanel) -> Result<()> {
    if forecasts.is_empty() || panel.is_empty() {
        return Err(EscError::Empty("out-of-sample period".into()));
    }
    if forecasts.len() != panel.len() {
        return Err(EscError::LengthMismatch {
            expected: panel.len(),
            got: forecasts.len(),
        });
    }
    Ok(())
}

fn sorted_unique(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite knots"));
    v.dedup();
    v
}

fn var_fingerprint(forecasts: &[ForecastRecord]) -> u64 {
    fingerprint_f64s(forecasts.iter().map(|f| f.var))
}

/// Sorted union of realized `j`-th losses and `j`-th ESC forecasts.
pub fn esc_knots(forecasts: &[ForecastRecord], panel: &LossPanel, j: usize) -> Result<Vec<f64>> {
    check(forecasts, panel)?;
    if j >= panel.dim() {
        return Err(EscError::Dimension(format!("component {j} out of range")));
    }
    let mut v = Vec::with_capacity(2 * forecasts.len());
    for (f, x) in forecasts.iter().zip(panel.rows()) {
        v.push(x[j]);
        v.push(f.esc[j]);
    }
    Ok(sorted_unique(v))
}

/// Left limit of the elementary ESC score as `η' ↑ η`.
fn elementary_esc_left(eta: f64, m: f64, v: f64, x_j: f64, s: f64) -> f64 {
    if s <= v {
        0.0
    } else if m < eta && eta <= x_j {
        x_j - eta
    } else if x_j < eta && eta <= m {
        eta - x_j
    } else {
        0.0
    }
}

/// Left limit of the elementary VaR score as `η' ↑ η`.
fn elementary_var_left(eta: f64, v: f64, s: f64, alpha: f64) -> f64 {
    let ind = |b: bool| if b { 1.0 } else { 0.0 };
    (ind(s < v) - alpha) * (ind(eta <= v) - ind(eta <= s))
}

fn esc_curve_values(
    forecasts: &[ForecastRecord],
    panel: &LossPanel,
    components: &[usize],
    knots: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let n = forecasts.len() as f64;
    let mut values = Vec::with_capacity(knots.len());
    let mut left = Vec::with_capacity(knots.len());
    for &eta in knots {
        let mut acc = KahanSum::new();
        let mut acc_left = KahanSum::new();
        for (f, x) in forecasts.iter().zip(panel.rows()) {
            let s: f64 = x.iter().sum();
            for &j in components {
                acc.add(elementary_score_esc(eta, f.esc[j], f.var, x[j], s));
                acc_left.add(elementary_esc_left(eta, f.esc[j], f.var, x[j], s));
            }
        }
        values.push(acc.value() / n);
        left.push(acc_left.value() / n);
    }
    (values, left)
}

/// Murphy curve of the `j`-th ES contribution.
pub fn murphy_curve_esc(
    forecasts: &[ForecastRecord],
    panel: &LossPanel,
    j: usize,
    label: &str,
) -> Result<MurphyCurve> {
    let knots = esc_knots(forecasts, panel, j)?;
    let (values, left_values) = esc_curve_values(forecasts, panel, &[j], &knots);
    Ok(MurphyCurve {
        label: label.to_string(),
        target: format!("ESC_{}", panel.names()[j]),
        knots,
        values,
        left_values,
        panel_fingerprint: panel.fingerprint(),
        var_fingerprint: var_fingerprint(forecasts),
    })
}

/// Murphy curve of the tuple of ES contributions (sum over components).
pub fn murphy_curve_tuple(
    forecasts: &[ForecastRecord],
    panel: &LossPanel,
    label: &str,
) -> Result<MurphyCurve> {
    check(forecasts, panel)?;
    let d = panel.dim();
    let mut all = Vec::new();
    for j in 0..d {
        all.extend(esc_knots(forecasts, panel, j)?);
    }
    let knots = sorted_unique(all);
    let comps: Vec<usize> = (0..d).collect();
    let (values, left_values) = esc_curve_values(forecasts, panel, &comps, &knots);
    Ok(MurphyCurve {
        label: label.to_string(),
        target: "ESC".to_string(),
        knots,
        values,
        left_values,
        panel_fingerprint: panel.fingerprint(),
        var_fingerprint: var_fingerprint(forecasts),
    })
}

/// Murphy curve of total VaR.
pub fn murphy_curve_var(
    forecasts: &[ForecastRecord],
    panel: &LossPanel,
    label: &str,
) -> Result<MurphyCurve> {
    check(forecasts, panel)?;
    let agg = panel.aggregate();
    let knots = sorted_unique(
        forecasts
            .iter()
            .map(|f| f.var)
            .chain(agg.iter().copied())
            .collect(),
    );
    let n = forecasts.len() as f64;
    let mut values = Vec::with_capacity(knots.len());
    let mut left_values = Vec::with_capacity(knots.len());
    for &eta in &knots {
        let mut acc = KahanSum::new();
        let mut acc_left = KahanSum::new();
        for (f, &s) in forecasts.iter().zip(&agg) {
            acc.add(elementary_score_var(eta, f.var, s, f.alpha));
            acc_left.add(elementary_var_left(eta, f.var, s, f.alpha));
        }
        values.push(acc.value() / n);
        left_values.push(acc_left.value() / n);
    }
    Ok(MurphyCurve {
        label: label.to_string(),
        target: "VaR".to_string(),
        knots,
        values,
        left_values,
        panel_fingerprint: panel.fingerprint(),
        var_fingerprint: var_fingerprint(forecasts),
    })
}

/// Pointwise difference `a - b` on the merged knot set.
pub fn murphy_difference(a: &MurphyCurve, b: &MurphyCurve) -> Result<MurphyCurve> {
    if a.panel_fingerprint != b.panel_fingerprint || a.target != b.target {
        return Err(EscError::FingerprintMismatch);
    }
    let knots = sorted_unique(a.knots.iter().chain(&b.knots).copied().collect());
    let values = knots.iter().map(|&e| a.eval(e) - b.eval(e)).collect();
    let left_values = knots
        .iter()
        .map(|&e| a.left_limit(e) - b.left_limit(e))
        .collect();
    Ok(MurphyCurve {
        label: format!("{} - {}", a.label, b.label),
        target: a.target.clone(),
        knots,
        values,
        left_values,
        panel_fingerprint: a.panel_fingerprint,
        var_fingerprint: a.var_fingerprint ^ b.var_fingerprint,
    })
}

/// Whether two ESC curves were built on identical VaR forecasts. Only then
/// is the comparison of their ESC curves fully fair.
pub fn var_forecasts_equal(a: &MurphyCurve, b: &MurphyCurve) -> bool {
    a.var_fingerprint == b.var_fingerprint
}

/// Fraction of merged knots (values and left limits) where `a <= b`.
pub fn dominance_fraction(a: &MurphyCurve, b: &MurphyCurve) -> Result<f64> {
    let diff = murphy_difference(a, b)?;
    let hits = diff
        .values
        .iter()
        .chain(&diff.left_values)
        .filter(|&&x| x <= 0.0)
        .count();
    Ok(hits as f64 / (2 * diff.knots.len()) as f64)
}

/// Writes curves in long format `eta,value,model,target`. A jump at a knot
/// is written as two rows: left limit first.
pub fn write_curves_csv<W: Write>(curves: &[MurphyCurve], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["eta", "value", "model", "target"])?;
    for c in curves {
        let (lo, hi) = c.sentinels();
        let mut row = |eta: f64, value: f64| {
            wtr.write_record([
                fmt_f64(eta),
                fmt_f64(value),
                c.label.clone(),
                c.target.clone(),
            ])
        };
        row(lo, 0.0)?;
        for k in 0..c.knots.len() {
            if c.left_values[k] != c.values[k] {
                row(c.knots[k], c.left_values[k])?;
            }
            row(c.knots[k], c.values[k])?;
        }
        row(hi, 0.0)?;
    }
    wtr.flush().map_err(|e| EscError::io("<csv writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(esc: Vec<f64>, var: f64) -> ForecastRecord {
        let es = esc.iter().sum();
        ForecastRecord::new(esc, var, es, 0.975).unwrap()
    }

    #[test]
    fn knot_examples() {
        let p = LossPanel::from_rows(&[vec![3.0, 0.0]]).unwrap();
        assert_eq!(esc_knots(&[rec(vec![1.0, 0.0], 0.0)], &p, 0).unwrap(), vec![1.0, 3.0]);
        let p = LossPanel::from_rows(&[vec![2.0, 0.0], vec![4.0, 0.0]]).unwrap();
        let f = [rec(vec![1.0, 0.0], 0.0), rec(vec![2.0, 0.0], 0.0)];
        assert_eq!(esc_knots(&f, &p, 0).unwrap(), vec![1.0, 2.0, 4.0]);
        assert!(esc_knots(&[], &p, 0).is_err());
    }

    #[test]
    fn single_step_esc_curve() {
        // s = 3 > v = 0
        let p = LossPanel::from_rows(&[vec![3.0, 0.0]]).unwrap();
        let c = murphy_curve_esc(&[rec(vec![1.0, 2.0], 0.0)], &p, 0, "m").unwrap();
        assert_eq!(c.eval(2.0), 1.0);
        assert_eq!(c.eval(1.0), 2.0);
        assert_eq!(c.eval(0.5), 0.0);
        assert_eq!(c.eval(3.0), 0.0);
        assert_eq!(c.left_limit(1.0), 0.0);

        let same = murphy_curve_esc(&[rec(vec![3.0, 0.0], 0.0)], &p, 0, "m").unwrap();
        assert!(same.values.iter().all(|&v| v == 0.0));
        let gated = murphy_curve_esc(&[rec(vec![1.0, 0.0], 5.0)], &p, 0, "m").unwrap();
        assert!(gated.values.iter().chain(&gated.left_values).all(|&v| v == 0.0));
    }

    #[test]
    fn single_step_var_curve() {
        let p = LossPanel::from_rows(&[vec![1.5, 1.5]]).unwrap();
        let c = murphy_curve_var(&[rec(vec![0.5, 0.5], 1.0)], &p, "m").unwrap();
        assert_eq!(c.knots, vec![1.0, 3.0]);
        assert!((c.eval(2.0) - 0.975).abs() < 1e-15);
        assert!((c.eval(1.0) - 0.975).abs() < 1e-15);
        assert_eq!(c.eval(3.0), 0.0);
        assert_eq!(c.eval(0.0), 0.0);

        let two = LossPanel::from_rows(&[vec![1.5, 1.5], vec![1.5, 1.5]]).unwrap();
        let f = rec(vec![0.5, 0.5], 1.0);
        let c2 = murphy_curve_var(&[f.clone(), f], &two, "m").unwrap();
        assert_eq!(c2.values, c.values);

        let exact = murphy_curve_var(&[rec(vec![0.5, 0.5], 3.0)], &p, "m").unwrap();
        assert!(exact.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tuple_curve_example() {
        let p = LossPanel::from_rows(&[vec![3.0, 2.0]]).unwrap();
        let c = murphy_curve_tuple(&[rec(vec![1.0, 1.0], 0.0)], &p, "m").unwrap();
        assert!((c.eval(1.5) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn difference_of_identical_curves_vanishes() {
        let p = LossPanel::from_rows(&[vec![3.0, 2.0], vec![-1.0, 4.0]]).unwrap();
        let f = [rec(vec![1.0, 1.0], 0.0), rec(vec![2.0, 0.5], 1.0)];
        let a = murphy_curve_tuple(&f, &p, "a").unwrap();
        let d = murphy_difference(&a, &a).unwrap();
        assert!(d.values.iter().chain(&d.left_values).all(|&v| v == 0.0));
        assert!(var_forecasts_equal(&a, &a));
        assert_eq!(dominance_fraction(&a, &a).unwrap(), 1.0);

        let other = LossPanel::from_rows(&[vec![3.0, 2.0], vec![-1.0, 5.0]]).unwrap();
        let b = murphy_curve_tuple(&f, &other, "b").unwrap();
        assert!(matches!(
            murphy_difference(&a, &b),
            Err(EscError::FingerprintMismatch)
        ));
    }

    #[test]
    fn csv_rows_include_jumps_and_sentinels() {
        let p = LossPanel::from_rows(&[vec![3.0, 0.0]]).unwrap();
        let c = murphy_curve_esc(&[rec(vec![1.0, 2.0], 0.0)], &p, 0, "m").unwrap();
        let mut buf = Vec::new();
        write_curves_csv(&[c], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "eta,value,model,target");
        assert_eq!(lines[1], "-1.0,0.0,m,ESC_X1");
        assert_eq!(lines[2], "1.0,0.0,m,ESC_X1");
        assert_eq!(lines[3], "1.0,2.0,m,ESC_X1");
        assert_eq!(lines[4], "3.0,0.0,m,ESC_X1");
        assert_eq!(lines[5], "5.0,0.0,m,ESC_X1");
    }
}
