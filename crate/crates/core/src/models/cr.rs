//! Compositional regression models for ES contributions.
//!
//! Both fits estimate the dynamics `w_{t+1} = ilr⁻¹(τ + Φ ilr(w_t) + Ψ y_t)`
//! of allocation weights and forecast `ESC = w · ES`:
//!
//! * CR.LSE regresses a given weight series (elliptical weights) one step
//!   ahead in least squares on the simplex.
//! * CR.OPT minimizes the realized square ESC score on exceedance days with
//!   weights generated recursively from `w1`. The weight applied on day `t`
//!   is built from data up to `t-1`, so the fitted dynamics are the ones used
//!   out of sample.
//!
//! Optimization runs Nelder–Mead from a warm start (intercept-only fit), a
//! zero start and four seeded perturbations of zero.

use serde::{Deserialize, Serialize};

use crate::composition::{covariates_into, ContrastMatrix, ThetaParams, WeightDynamics};
use crate::error::{EscError, Result};
use crate::numeric::KahanSum;
use crate::optim::{perturbed_starts, NelderMead};
use crate::panel::{ForecastRecord, LossPanel, SimplexWeights};

/// Minimum number of in-sample exceedances for [`cr_opt_fit`].
pub const CR_OPT_MIN_EXCEEDANCES: usize = 5;

const RESTARTS: usize = 4;
const PERTURBATION_SCALE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrFit {
    pub theta: ThetaParams,
    pub objective: f64,
    /// Objective at `θ = 0`.
    pub initial_objective: f64,
    pub converged: bool,
}

/// Covariates `y_t` for every row of `panel`.
pub fn window_covariates(panel: &LossPanel, eps: f64) -> Result<Vec<Vec<f64>>> {
    if !(eps > 0.0) {
        return Err(EscError::param("epsilon", "must be positive"));
    }
    let d = panel.dim();
    let cm = ContrastMatrix::new(d)?;
    Ok(panel
        .rows()
        .map(|x| {
            let mut y = vec![0.0; 2 * (d - 1)];
            covariates_into(&cm, x, x.iter().sum(), eps, &mut y);
            y
        })
        .collect())
}

fn check_covariates(covariates: &[Vec<f64>], len: usize) -> Result<usize> {
    if covariates.len() != len {
        return Err(EscError::LengthMismatch {
            expected: len,
            got: covariates.len(),
        });
    }
    let q = covariates.first().map_or(0, Vec::len);
    if covariates.iter().any(|y| y.len() != q) {
        return Err(EscError::Dimension("covariate rows differ in length".into()));
    }
    Ok(q)
}

/// Runs the warm/zero/perturbed starts on `objective(θ)`.
fn fit_dynamics<F>(d: usize, q: usize, w1: &SimplexWeights, seed: u64, objective: F) -> Result<CrFit>
where
    F: Fn(&ThetaParams) -> f64 + Sync,
{
    let k = d - 1;
    let n_coef = ThetaParams::n_coefficients(d, q);
    let full = |c: &[f64]| -> f64 {
        match ThetaParams::from_coefficients(c, d, q, w1.clone()) {
            Ok(t) => objective(&t),
            Err(_) => f64::INFINITY,
        }
    };
    let zero = vec![0.0; n_coef];
    let initial_objective = full(&zero);

    let nm = NelderMead::default();
    let intercept_only = nm.minimize(
        |tau: &[f64]| {
            let mut c = vec![0.0; n_coef];
            c[..k].copy_from_slice(tau);
            full(&c)
        },
        &vec![0.0; k],
    );
    let mut warm = vec![0.0; n_coef];
    warm[..k].copy_from_slice(&intercept_only.x);

    let mut starts = vec![warm, zero.clone()];
    starts.extend(perturbed_starts(&zero, RESTARTS, PERTURBATION_SCALE, seed));
    let best = nm.minimize_from(full, &starts);
    if !best.value.is_finite() {
        return Err(EscError::Degenerate("objective is not finite at any start".into()));
    }
    if !best.converged {
        log::warn!("compositional fit stopped at the evaluation cap; using best point found");
    }
    Ok(CrFit {
        theta: ThetaParams::from_coefficients(&best.x, d, q, w1.clone())?,
        objective: best.value,
        initial_objective,
        converged: best.converged,
    })
}

/// Least-squares fit of the dynamics to an observed weight series:
/// minimizes the mean of `|w_{t+1} - υ_θ(w_t, y_t)|²` over `t`.
pub fn cr_lse_fit(weights: &[SimplexWeights], covariates: &[Vec<f64>], seed: u64) -> Result<CrFit> {
    let n = weights.len();
    let d = weights.first().ok_or_else(|| EscError::Empty("weight series".into()))?.dim();
    if weights.iter().any(|w| w.dim() != d) {
        return Err(EscError::Dimension("weights differ in dimension".into()));
    }
    let q = check_covariates(covariates, n)?;
    let needed = 2 * (d - 1) * (d + q);
    if n < needed {
        return Err(EscError::param(
            "weights",
            format!("need at least {needed} time points, got {n}"),
        ));
    }
    let cm = ContrastMatrix::new(d)?;
    let ilr_w: Vec<Vec<f64>> = weights
        .iter()
        .map(|w| {
            let mut z = vec![0.0; d - 1];
            cm.ilr_into(w.as_slice(), &mut z);
            z
        })
        .collect();
    let objective = |theta: &ThetaParams| {
        let mut dynamics = WeightDynamics::new(d).expect("d >= 2");
        let mut next = vec![0.0; d];
        let mut acc = KahanSum::new();
        for t in 0..n - 1 {
            dynamics.step_ilr(theta, &ilr_w[t], &covariates[t], &mut next);
            for (a, b) in next.iter().zip(weights[t + 1].as_slice()) {
                acc.add((a - b) * (a - b));
            }
        }
        acc.value() / (n - 1) as f64
    };
    fit_dynamics(d, q, &weights[0], seed, objective)
}

/// Weights `w_1, …, w_{n+1}` recursed from `w1` through the rows of
/// `panel`, and the number of steps that needed boundary clamping.
pub fn cr_weight_path(
    theta: &ThetaParams,
    panel: &LossPanel,
    w1: &SimplexWeights,
    eps: f64,
) -> Result<(Vec<Vec<f64>>, usize)> {
    theta.validate()?;
    let d = panel.dim();
    if w1.dim() != d || theta.dim() != d {
        return Err(EscError::LengthMismatch {
            expected: d,
            got: w1.dim(),
        });
    }
    let covariates = window_covariates(panel, eps)?;
    if theta.covariate_dim() != 2 * (d - 1) {
        return Err(EscError::LengthMismatch {
            expected: 2 * (d - 1),
            got: theta.covariate_dim(),
        });
    }
    let mut dynamics = WeightDynamics::new(d)?;
    let mut path = Vec::with_capacity(panel.len() + 1);
    path.push(w1.as_slice().to_vec());
    let mut clamps = 0;
    for y in &covariates {
        let mut next = vec![0.0; d];
        if dynamics.step(theta, path.last().expect("nonempty"), y, &mut next) {
            clamps += 1;
        }
        path.push(next);
    }
    Ok((path, clamps))
}

/// Score-based fit: minimizes the mean over exceedance days
/// `{s_t > VaR_t}` of `Σ_j (x_{j,t} - w_{j,t} ES_t)²`, where `w_1 = w1` and
/// `w_{t+1} = υ_θ(w_t, y_t)`.
pub fn cr_opt_fit(
    panel: &LossPanel,
    var_es: &[(f64, f64)],
    w1: &SimplexWeights,
    covariates: &[Vec<f64>],
    seed: u64,
) -> Result<CrFit> {
    let n = panel.len();
    let d = panel.dim();
    if var_es.len() != n {
        return Err(EscError::LengthMismatch {
            expected: n,
            got: var_es.len(),
        });
    }
    if w1.dim() != d {
        return Err(EscError::LengthMismatch {
            expected: d,
            got: w1.dim(),
        });
    }
    let q = check_covariates(covariates, n)?;
    let exceed: Vec<bool> = panel
        .rows()
        .zip(var_es)
        .map(|(x, &(v, _))| x.iter().sum::<f64>() > v)
        .collect();
    let found = exceed.iter().filter(|&&e| e).count();
    if found < CR_OPT_MIN_EXCEEDANCES {
        return Err(EscError::TooFewExceedances {
            needed: CR_OPT_MIN_EXCEEDANCES,
            found,
        });
    }
    // the recursion only has to run up to the last exceedance
    let last = exceed.iter().rposition(|&e| e).expect("found >= 5");
    let objective = |theta: &ThetaParams| {
        let mut dynamics = WeightDynamics::new(d).expect("d >= 2");
        let mut w = w1.as_slice().to_vec();
        let mut next = vec![0.0; d];
        let mut acc = KahanSum::new();
        for t in 0..=last {
            if exceed[t] {
                let es = var_es[t].1;
                for (x, wj) in panel.row(t).iter().zip(&w) {
                    let r = x - wj * es;
                    acc.add(r * r);
                }
            }
            if t < last {
                dynamics.step(theta, &w, &covariates[t], &mut next);
                std::mem::swap(&mut w, &mut next);
            }
        }
        acc.value() / found as f64
    };
    fit_dynamics(d, q, w1, seed, objective)
}

/// In-sample forecasts `ESC_t = w_t ES_t` along the weight path recursed
/// from `w1`; record `t` only uses rows before `t`.
pub fn cr_forecast(
    theta: &ThetaParams,
    panel: &LossPanel,
    var_es: &[(f64, f64)],
    w1: &SimplexWeights,
    alpha: f64,
    eps: f64,
) -> Result<Vec<ForecastRecord>> {
    if var_es.len() != panel.len() {
        return Err(EscError::LengthMismatch {
            expected: panel.len(),
            got: var_es.len(),
        });
    }
    let (path, _) = cr_weight_path(theta, panel, w1, eps)?;
    path.iter()
        .zip(var_es)
        .map(|(w, &(var, es))| weights_to_record(w, var, es, alpha))
        .collect()
}

/// `ESC = w · ES`, with the rounding residue moved onto the largest weight
/// so that the contributions add up to `ES`.
pub fn weights_to_record(w: &[f64], var: f64, es: f64, alpha: f64) -> Result<ForecastRecord> {
    let mut esc: Vec<f64> = w.iter().map(|wj| wj * es).collect();
    let gap = es - esc.iter().sum::<f64>();
    let jmax = (0..w.len())
        .max_by(|&a, &b| w[a].total_cmp(&w[b]))
        .ok_or_else(|| EscError::Empty("weights".into()))?;
    esc[jmax] += gap;
    ForecastRecord::new(esc, var, es, alpha)
}
