//! HAC long-run variances, Diebold–Mariano comparisons, calibration tests
//! with three-zone classification, and joint Wald tests.
//!
//! All tests share the sign convention of the identification functions: a
//! significantly positive mean is the "worse / under-estimating" side and maps
//! to the red zone, a significantly negative mean maps to green.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{EscError, Result};
use crate::numeric::{norm_cdf, KahanSum};

/// Minimum series length for every test in this module.
pub const MIN_TEST_LEN: usize = 10;
/// Bound on the lag-1 autocorrelation used for the bandwidth.
pub const RHO_CLAMP: f64 = 0.97;
/// Smallest long-run variance returned.
pub const LRV_FLOOR: f64 = 1e-300;
/// Default significance level.
pub const DEFAULT_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Zone {
    Red,
    Yellow,
    Green,
    None,
}

impl Zone {
    pub fn as_str(&self) -> &'static str {
        match self {
            Zone::Red => "red",
            Zone::Yellow => "yellow",
            Zone::Green => "green",
            Zone::None => "none",
        }
    }

    /// Red when `E ≤ 0` is rejected, green when `E ≥ 0` is rejected.
    pub fn classify(p_leq: f64, p_geq: f64, level: f64) -> Zone {
        if p_leq < level {
            Zone::Red
        } else if p_geq < level {
            Zone::Green
        } else {
            Zone::Yellow
        }
    }
}

/// Alternative of a joint Wald test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaldMode {
    /// `H0: E[V] = 0`.
    TwoSided,
    /// `H0: E[V_1] = 0` and `E[V_k] ≤ 0` for the remaining columns.
    LeqLex,
    /// `H0: E[V_1] = 0` and `E[V_k] ≥ 0` for the remaining columns.
    GeqLex,
}

impl WaldMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            WaldMode::TwoSided => "two_sided",
            WaldMode::LeqLex => "leq_lex",
            WaldMode::GeqLex => "geq_lex",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_equal: f64,
    pub p_leq: f64,
    pub p_geq: f64,
    pub zone: Zone,
    pub n: usize,
    pub bandwidth: f64,
    /// The input was identically zero, so the statistic is undefined.
    pub degenerate: bool,
    /// The lag-1 autocorrelation hit [`RHO_CLAMP`].
    pub rho_clamped: bool,
    /// The HAC covariance was singular and got ridge-regularized.
    pub regularized: bool,
    /// Set for joint Wald tests.
    pub mode: Option<WaldMode>,
}

impl TestResult {
    /// The p-value of the test's own null: `p_equal` unless a one-and-a-half
    /// sided Wald mode was requested.
    pub fn p_value(&self) -> f64 {
        match self.mode {
            Some(WaldMode::LeqLex) => self.p_leq,
            Some(WaldMode::GeqLex) => self.p_geq,
            _ => self.p_equal,
        }
    }
}

/// Long-run variance estimate with its bandwidth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HacEstimate {
    pub variance: f64,
    pub bandwidth: f64,
    pub rho: f64,
    pub rho_clamped: bool,
}

fn check_len(n: usize) -> Result<()> {
    if n < MIN_TEST_LEN {
        return Err(EscError::param(
            "series",
            format!("need at least {MIN_TEST_LEN} observations, got {n}"),
        ));
    }
    Ok(())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().copied().collect::<KahanSum>().value() / x.len() as f64
}

/// Sample autocovariance at lag `k` of a demeaned series, normalized by `T`.
fn autocov(e: &[f64], k: usize) -> f64 {
    let mut acc = KahanSum::new();
    for t in k..e.len() {
        acc.add(e[t] * e[t - k]);
    }
    acc.value() / e.len() as f64
}

/// AR(1)-plug-in Bartlett bandwidth from the demeaned series.
fn bandwidth(e: &[f64]) -> (f64, f64, bool) {
    let g0 = autocov(e, 0);
    let raw = if g0 > 0.0 { autocov(e, 1) / g0 } else { 0.0 };
    let rho = raw.clamp(-RHO_CLAMP, RHO_CLAMP);
    let clamped = raw.abs() > RHO_CLAMP;
    let a1 = 4.0 * rho * rho / ((1.0 - rho).powi(2) * (1.0 + rho).powi(2));
    let b = 1.1447 * (a1 * e.len() as f64).cbrt();
    (b, rho, clamped)
}

/// Bartlett weights `1 - k/(b+1)` for `k = 1..⌊b⌋`, capped at `T-1` lags.
fn bartlett_weights(b: f64, n: usize) -> Vec<f64> {
    let lags = (b.floor() as usize).min(n.saturating_sub(1));
    (1..=lags).map(|k| 1.0 - k as f64 / (b + 1.0)).collect()
}

/// Newey–West long-run variance with the Bartlett kernel and the AR(1)
/// automatic bandwidth `b = 1.1447 (â₁ T)^{1/3}`.
pub fn hac_lrv(series: &[f64]) -> Result<HacEstimate> {
    check_len(series.len())?;
    if let Some(i) = series.iter().position(|x| !x.is_finite()) {
        return Err(EscError::NonFinite { row: i, col: 0 });
    }
    let m = mean(series);
    let e: Vec<f64> = series.iter().map(|x| x - m).collect();
    let (b, rho, rho_clamped) = bandwidth(&e);
    let mut lrv = autocov(&e, 0);
    for (k, w) in bartlett_weights(b, e.len()).iter().enumerate() {
        lrv += 2.0 * w * autocov(&e, k + 1);
    }
    Ok(HacEstimate {
        variance: lrv.max(LRV_FLOOR),
        bandwidth: b,
        rho,
        rho_clamped,
    })
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(EscError::param("level", format!("{level} is not in (0,1)")));
    }
    Ok(())
}

/// `√T mean / √LRV` with normal p-values.
fn mean_test(series: &[f64], level: f64, zero_zone: Zone) -> Result<TestResult> {
    check_level(level)?;
    let hac = hac_lrv(series)?;
    let n = series.len();
    if series.iter().all(|&x| x == 0.0) {
        return Ok(TestResult {
            statistic: 0.0,
            p_equal: 1.0,
            p_leq: 1.0,
            p_geq: 1.0,
            zone: zero_zone,
            n,
            bandwidth: hac.bandwidth,
            degenerate: true,
            rho_clamped: hac.rho_clamped,
            regularized: false,
            mode: None,
        });
    }
    let stat = (n as f64).sqrt() * mean(series) / hac.variance.sqrt();
    let p_leq = norm_cdf(-stat);
    let p_geq = norm_cdf(stat);
    let p_equal = (2.0 * p_leq.min(p_geq)).min(1.0);
    Ok(TestResult {
        statistic: stat,
        p_equal,
        p_leq,
        p_geq,
        zone: Zone::classify(p_leq, p_geq, level),
        n,
        bandwidth: hac.bandwidth,
        degenerate: false,
        rho_clamped: hac.rho_clamped,
        regularized: false,
        mode: None,
    })
}

/// Diebold–Mariano test on score differences `model - benchmark`.
/// Red means the model scores significantly worse than the benchmark.
pub fn dm_test(score_diff: &[f64], level: f64) -> Result<TestResult> {
    mean_test(score_diff, level, Zone::None)
}

/// Calibration test on identification values. Red flags under-estimation,
/// green flags over-estimation.
pub fn calibration_test(ident_values: &[f64], level: f64) -> Result<TestResult> {
    mean_test(ident_values, level, Zone::Yellow)
}

/// Bartlett HAC covariance of the rows of `values` (`T x k`), using the
/// bandwidth of the first column.
fn hac_cov(values: &[Vec<f64>], k: usize) -> (DMatrix<f64>, f64, bool) {
    let n = values.len();
    let means: Vec<f64> = (0..k)
        .map(|j| mean(&values.iter().map(|r| r[j]).collect::<Vec<_>>()))
        .collect();
    let e: Vec<DVector<f64>> = values
        .iter()
        .map(|r| DVector::from_iterator(k, r.iter().zip(&means).map(|(x, m)| x - m)))
        .collect();
    let first: Vec<f64> = e.iter().map(|v| v[0]).collect();
    let (b, _, clamped) = bandwidth(&first);
    let gamma = |lag: usize| {
        let mut g = DMatrix::zeros(k, k);
        for t in lag..n {
            g += &e[t] * e[t - lag].transpose();
        }
        g / n as f64
    };
    let mut omega = gamma(0);
    for (lag, w) in bartlett_weights(b, n).iter().enumerate() {
        let g = gamma(lag + 1);
        omega += (&g + g.transpose()) * *w;
    }
    (omega, b, clamped)
}

/// Joint Wald test of `E[V] = 0` on a `T x k` matrix of identification
/// values, plus the one-and-a-half-sided variants obtained by a Bonferroni
/// combination of a two-sided test on the first column and one-sided tests
/// on the others. All three p-values are filled; `mode` selects
/// [`TestResult::p_value`].
pub fn wald_joint(values: &[Vec<f64>], level: f64, mode: WaldMode) -> Result<TestResult> {
    check_level(level)?;
    let n = values.len();
    let k = values.first().map_or(0, Vec::len);
    if k < 2 {
        return Err(EscError::Dimension(format!("joint test needs k >= 2, got {k}")));
    }
    if values.iter().any(|r| r.len() != k) {
        return Err(EscError::Dimension("rows differ in length".into()));
    }
    if n < MIN_TEST_LEN * k {
        return Err(EscError::param(
            "values",
            format!("need at least {} rows for k = {k}, got {n}", MIN_TEST_LEN * k),
        ));
    }
    if let Some((t, j)) = values
        .iter()
        .enumerate()
        .find_map(|(t, r)| r.iter().position(|x| !x.is_finite()).map(|j| (t, j)))
    {
        return Err(EscError::NonFinite { row: t, col: j });
    }
    let vbar = DVector::from_iterator(
        k,
        (0..k).map(|j| mean(&values.iter().map(|r| r[j]).collect::<Vec<_>>())),
    );
    let (mut omega, bandwidth, rho_clamped) = hac_cov(values, k);
    let trace = omega.trace();
    let mut regularized = false;
    let chol = match omega.clone().cholesky() {
        Some(c) if c.l().diagonal().iter().all(|&l| l * l > 1e-12 * trace.max(LRV_FLOOR)) => c,
        _ => {
            regularized = true;
            let ridge = (1e-8 * trace / k as f64).max(LRV_FLOOR);
            for i in 0..k {
                omega[(i, i)] += ridge;
            }
            omega
                .clone()
                .cholesky()
                .ok_or_else(|| EscError::Degenerate("HAC covariance is not positive".into()))?
        }
    };
    let nf = n as f64;
    let statistic = if vbar.iter().all(|&x| x == 0.0) {
        0.0
    } else {
        nf * vbar.dot(&chol.solve(&vbar))
    };
    let p_equal = ChiSquared::new(k as f64)
        .map_err(|e| EscError::Degenerate(e.to_string()))?
        .sf(statistic)
        .clamp(0.0, 1.0);

    let z = |j: usize| {
        if vbar[j] == 0.0 {
            0.0
        } else {
            nf.sqrt() * vbar[j] / omega[(j, j)].max(LRV_FLOOR).sqrt()
        }
    };
    let z0 = z(0);
    let p_first = (2.0 * norm_cdf(-z0.abs())).min(1.0);
    let rest = k - 1;
    let bonferroni = |ps: Vec<f64>| {
        let m = ps.iter().copied().fold(1.0, f64::min);
        (rest as f64 * m).min(1.0)
    };
    // E[V_j] <= 0 is rejected for large positive z
    let p_rest_leq = bonferroni((1..k).map(|j| norm_cdf(-z(j))).collect());
    let p_rest_geq = bonferroni((1..k).map(|j| norm_cdf(z(j))).collect());
    let p_leq = (2.0 * p_first.min(p_rest_leq)).min(1.0);
    let p_geq = (2.0 * p_first.min(p_rest_geq)).min(1.0);

    Ok(TestResult {
        statistic,
        p_equal,
        p_leq,
        p_geq,
        zone: Zone::classify(p_leq, p_geq, level),
        n,
        bandwidth,
        degenerate: vbar.iter().all(|&x| x == 0.0),
        rho_clamped,
        regularized,
        mode: Some(mode),
    })
}
