//! Gaussian GARCH(1,1) for the aggregate loss, fitted by quasi maximum
//! likelihood.
//!
//! The optimizer works on unconstrained coordinates
//! `(ln ω', logit(a+b), logit(a/(a+b)))` of the series standardized by its
//! sample variance, so every candidate satisfies `ω > 0`, `a, b ≥ 0` and
//! `a + b < 1`.

use serde::{Deserialize, Serialize};

use crate::error::{EscError, Result};
use crate::numeric::{gaussian_var_es_factors, KahanSum};
use crate::optim::NelderMead;

/// Minimum series length accepted by [`garch11_qmle_fit`].
pub const GARCH_MIN_LEN: usize = 250;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Garch11Params {
    pub mu: f64,
    pub omega: f64,
    pub a: f64,
    pub b: f64,
    /// Conditional variance of the first observation.
    pub sigma0_sq: f64,
}

impl Garch11Params {
    pub fn new(mu: f64, omega: f64, a: f64, b: f64, sigma0_sq: f64) -> Result<Self> {
        let p = Self {
            mu,
            omega,
            a,
            b,
            sigma0_sq,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() {
            return Err(EscError::param("mu", "must be finite"));
        }
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(EscError::param("omega", "must be positive"));
        }
        if !(self.a >= 0.0 && self.b >= 0.0 && self.a + self.b < 1.0) {
            return Err(EscError::param(
                "a, b",
                format!("need a, b >= 0 and a + b < 1, got a = {}, b = {}", self.a, self.b),
            ));
        }
        if !(self.sigma0_sq > 0.0 && self.sigma0_sq.is_finite()) {
            return Err(EscError::param("sigma0_sq", "must be positive"));
        }
        Ok(())
    }

    /// `ω / (1 - a - b)`.
    pub fn unconditional_variance(&self) -> f64 {
        self.omega / (1.0 - self.a - self.b)
    }
}

/// Result of a quasi-likelihood fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Garch11Fit {
    pub params: Garch11Params,
    /// Average Gaussian negative quasi log-likelihood (up to constants) of
    /// the standardized series.
    pub objective: f64,
    /// False when no restart met the convergence tolerance; `params` is then
    /// the best point found.
    pub converged: bool,
}

/// Conditional variances `σ²_1, …, σ²_{n+1}` of `series` under `params`;
/// the last entry is the one-step-ahead forecast.
pub fn garch11_variance_path(params: &Garch11Params, series: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(series.len() + 1);
    let mut s2 = params.sigma0_sq;
    out.push(s2);
    for &x in series {
        let e = x - params.mu;
        s2 = params.omega + params.a * e * e + params.b * s2;
        out.push(s2);
    }
    out
}

fn clamp_coord(x: f64) -> f64 {
    x.clamp(-30.0, 30.0)
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Maps optimizer coordinates to `(ω', a, b)` on the standardized scale.
fn decode(p: &[f64]) -> (f64, f64, f64) {
    let omega = clamp_coord(p[0]).exp();
    let persistence = logistic(clamp_coord(p[1]));
    let share = logistic(clamp_coord(p[2]));
    (omega, share * persistence, (1.0 - share) * persistence)
}

fn encode(omega: f64, a: f64, b: f64) -> Vec<f64> {
    let pers = a + b;
    vec![omega.ln(), logit(pers), logit(a / pers)]
}

/// Average negative Gaussian quasi log-likelihood of `e` (standardized,
/// demeaned) started from unit variance.
fn neg_quasi_loglik(e: &[f64], omega: f64, a: f64, b: f64) -> f64 {
    let mut s2: f64 = 1.0;
    let mut acc = KahanSum::new();
    for &x in e {
        acc.add(s2.ln() + x * x / s2);
        s2 = omega + a * x * x + b * s2;
    }
    0.5 * acc.value() / e.len() as f64
}

fn lag1_autocorrelation(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let c0: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    if c0 <= 0.0 {
        return 0.0;
    }
    let c1: f64 = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    c1 / c0
}

/// Quasi maximum likelihood fit of a Gaussian GARCH(1,1) with constant
/// mean. The starting point depends on the lag-1 autocorrelation of squared
/// residuals, followed by four seeded restarts; the result is deterministic
/// given `seed`.
pub fn garch11_qmle_fit(series: &[f64], seed: u64) -> Result<Garch11Fit> {
    if series.len() < GARCH_MIN_LEN {
        return Err(EscError::param(
            "series",
            format!("need at least {GARCH_MIN_LEN} observations, got {}", series.len()),
        ));
    }
    if let Some(i) = series.iter().position(|x| !x.is_finite()) {
        return Err(EscError::NonFinite { row: i, col: 0 });
    }
    let n = series.len() as f64;
    let mu = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n;
    if !(var > 0.0) || var < 1e-300 {
        return Err(EscError::Degenerate("series has zero variance".into()));
    }
    let sd = var.sqrt();
    let e: Vec<f64> = series.iter().map(|x| (x - mu) / sd).collect();

    let sq: Vec<f64> = e.iter().map(|x| x * x).collect();
    let (a0, b0) = if lag1_autocorrelation(&sq) < 0.05 {
        (0.05, 0.05)
    } else {
        (0.08, 0.88)
    };
    let x0 = encode(1.0 - a0 - b0, a0, b0);
    let objective = |p: &[f64]| {
        let (omega, a, b) = decode(p);
        neg_quasi_loglik(&e, omega, a, b)
    };
    let nm = NelderMead {
        step: 0.5,
        ..NelderMead::default()
    };
    let best = nm.minimize_restarts(objective, &x0, 4, 0.5, seed);
    if !best.value.is_finite() {
        return Err(EscError::Degenerate("quasi-likelihood is not finite".into()));
    }
    let (omega_std, a, b) = decode(&best.x);
    let params = Garch11Params::new(mu, omega_std * var, a, b, var)?;
    Ok(Garch11Fit {
        params,
        objective: best.value,
        converged: best.converged,
    })
}

/// One-step-ahead Gaussian `(VaR, ES)` after observing `series`.
pub fn garch11_forecast(params: &Garch11Params, series: &[f64], alpha: f64) -> (f64, f64) {
    let s2 = *garch11_variance_path(params, series)
        .last()
        .expect("path is never empty");
    gaussian_var_es(params.mu, s2.sqrt(), alpha)
}

/// `(μ + σ z_α, μ + σ φ(z_α)/(1-α))`.
pub fn gaussian_var_es(mu: f64, sigma: f64, alpha: f64) -> (f64, f64) {
    let (z, f) = gaussian_var_es_factors(alpha);
    (mu + sigma * z, mu + sigma * f)
}
