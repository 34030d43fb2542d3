//! Historical simulation.

use crate::error::{EscError, Result};
use crate::panel::{ForecastRecord, LossPanel};

/// Smallest window that can contain an exceedance of the `alpha` quantile.
pub fn hs_min_window(alpha: f64) -> usize {
    (1.0 / (1.0 - alpha) - 1e-9).ceil() as usize
}

/// Lower empirical `alpha` quantile: the `ceil(alpha n)`-th order statistic.
pub fn empirical_var(aggregates: &[f64], alpha: f64) -> Result<f64> {
    if aggregates.is_empty() {
        return Err(EscError::Empty("window".into()));
    }
    let mut sorted = aggregates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let k = ((alpha * n as f64) - 1e-9).ceil().max(1.0) as usize;
    Ok(sorted[k.min(n) - 1])
}

/// HS forecast of `(ESC, VaR, ES)`: empirical VaR of the aggregate and
/// conditional means of each component over the days the aggregate exceeds
/// it. ES is the sum of the contributions.
pub fn hs_forecast(window: &LossPanel, alpha: f64) -> Result<ForecastRecord> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(EscError::param("alpha", format!("{alpha} is not in (0,1)")));
    }
    let n = window.len();
    if n < hs_min_window(alpha) {
        return Err(EscError::param(
            "window",
            format!("{n} rows cannot hold an exceedance at level {alpha}"),
        ));
    }
    let agg = window.aggregate();
    let var = empirical_var(&agg, alpha)?;
    let d = window.dim();
    let mut sums = vec![0.0; d];
    let mut count = 0usize;
    for (row, &s) in window.rows().zip(&agg) {
        if s > var {
            count += 1;
            for (acc, x) in sums.iter_mut().zip(row) {
                *acc += x;
            }
        }
    }
    if count == 0 {
        return Err(EscError::NoExceedance);
    }
    let esc: Vec<f64> = sums.iter().map(|x| x / count as f64).collect();
    let es = esc.iter().sum();
    ForecastRecord::new(esc, var, es, alpha)
}
