//! Rolling-window forecasting.
//!
//! Out-of-sample step `i` forecasts row `n + i` of the panel from the window
//! of rows `i..n+i`. Estimated parameters (the aggregate GARCH and the
//! compositional dynamics) are refitted every `refit_stride` steps on the
//! window of the refit step and reused in between; everything else is
//! recomputed from the current window. A failed `(model, step)` leaves a gap
//! and is recorded, it never aborts the run.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::composition::{closing, ThetaParams};
use crate::error::{EscError, Result};
use crate::harness::config::{ModelId, RunConfig};
use crate::harness::{substream_seed, GARCH_TAG};
use crate::harness::synth::SynthTruth;
use crate::models::cr::{cr_lse_fit, cr_opt_fit, cr_weight_path, weights_to_record, window_covariates};
use crate::models::elliptical::{elliptical_allocation, elliptical_weights, ewma_cov_path, EwmaCovSpec};
use crate::models::garch::{garch11_qmle_fit, garch11_variance_path, gaussian_var_es, Garch11Params};
use crate::models::hs::hs_forecast;
use crate::panel::{ForecastRecord, LossPanel, SimplexWeights};

/// A `(model, step)` that produced no forecast.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepFailure {
    pub model: ModelId,
    /// Out-of-sample step index.
    pub step: usize,
    /// Panel time label of the forecast target.
    pub time: i64,
    pub message: String,
}

/// Forecasts of every model over the out-of-sample period.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    /// Models in configuration order.
    pub models: Vec<ModelId>,
    /// Row of the panel forecast by step 0.
    pub first_row: usize,
    /// Time labels of the out-of-sample rows.
    pub times: Vec<i64>,
    pub forecasts: BTreeMap<ModelId, Vec<Option<ForecastRecord>>>,
    pub failures: Vec<StepFailure>,
    /// Number of weight vectors clamped away from the simplex boundary.
    pub clamp_events: BTreeMap<ModelId, usize>,
    /// Refits whose optimizer stopped at the evaluation cap.
    pub unconverged_fits: BTreeMap<ModelId, usize>,
}

impl RunOutput {
    pub fn failure_count(&self) -> usize {
        self.failures.len()
    }
}

/// Quantities shared by several models on one window.
struct WindowStats {
    aggregates: Vec<f64>,
    /// Elliptical weights of the predictive EWMA covariances of rows
    /// `0..n` of the window, and the forecast covariance for the next row.
    weights: Vec<SimplexWeights>,
    next_cov: nalgebra::DMatrix<f64>,
    mean: Vec<f64>,
    clamps: usize,
}

fn window_stats(window: &LossPanel, spec: &EwmaCovSpec) -> Result<WindowStats> {
    let path = ewma_cov_path(window, spec)?;
    let n = window.len();
    let mut weights = Vec::with_capacity(n);
    let mut clamps = 0;
    for s in &path[..n] {
        let (w, c) = elliptical_weights(s)?;
        clamps += usize::from(c);
        weights.push(w);
    }
    let d = window.dim();
    let mut mean = vec![0.0; d];
    for row in window.rows() {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    Ok(WindowStats {
        aggregates: window.aggregate(),
        weights,
        next_cov: path[n].clone(),
        mean,
        clamps,
    })
}

struct CrRefit {
    theta: ThetaParams,
    converged: bool,
    clamps: usize,
}

/// Everything a step needs that is refitted on a stride.
struct Refits {
    garch_stride: usize,
    garch: Vec<std::result::Result<(Garch11Params, bool), String>>,
    cr: BTreeMap<ModelId, (usize, Vec<std::result::Result<CrRefit, String>>)>,
}

fn n_refits(horizon: usize, stride: usize) -> usize {
    horizon.div_ceil(stride)
}

fn fit_cr(
    model: ModelId,
    window: &LossPanel,
    garch: &Garch11Params,
    config: &RunConfig,
    spec: &EwmaCovSpec,
    seed: u64,
) -> Result<CrRefit> {
    let stats = window_stats(window, spec)?;
    let cov = window_covariates(window, config.epsilon)?;
    let fit = match model {
        ModelId::CrLse => cr_lse_fit(&stats.weights, &cov, seed)?,
        ModelId::CrOpt => {
            let path = garch11_variance_path(garch, &stats.aggregates);
            let var_es: Vec<(f64, f64)> = path[..window.len()]
                .iter()
                .map(|s2| gaussian_var_es(garch.mu, s2.sqrt(), config.alpha))
                .collect();
            cr_opt_fit(window, &var_es, &stats.weights[0], &cov, seed)?
        }
        other => unreachable!("{other} is not a compositional model"),
    };
    Ok(CrRefit {
        theta: fit.theta,
        converged: fit.converged,
        clamps: stats.clamps,
    })
}

fn window_at(panel: &LossPanel, config: &RunConfig, step: usize) -> Result<LossPanel> {
    panel.slice(step..step + config.window)
}

fn compute_refits(config: &RunConfig, panel: &LossPanel, models: &[ModelId]) -> Result<Refits> {
    let spec = EwmaCovSpec::new(config.ewma_lambda, EwmaCovSpec::default().floor)?;
    let needs_garch = models
        .iter()
        .any(|m| matches!(m, ModelId::El | ModelId::CrLse | ModelId::CrOpt | ModelId::Const));
    let garch_stride = config.refit_stride;
    let garch: Vec<_> = if needs_garch {
        (0..n_refits(config.horizon, garch_stride))
            .into_par_iter()
            .map(|r| {
                let window = window_at(panel, config, r * garch_stride).map_err(|e| e.to_string())?;
                let seed = substream_seed(config.seed, GARCH_TAG, r as u64);
                garch11_qmle_fit(&window.aggregate(), seed)
                    .map(|f| (f.params, f.converged))
                    .map_err(|e| format!("aggregate GARCH fit: {e}"))
            })
            .collect()
    } else {
        Vec::new()
    };

    let mut cr = BTreeMap::new();
    for &model in models.iter().filter(|m| matches!(m, ModelId::CrLse | ModelId::CrOpt)) {
        let stride = config.stride_for(model);
        let fits: Vec<_> = (0..n_refits(config.horizon, stride))
            .into_par_iter()
            .map(|r| {
                let step = r * stride;
                let window = window_at(panel, config, step).map_err(|e| e.to_string())?;
                let params = match &garch[step / garch_stride] {
                    Ok((p, _)) => p,
                    Err(e) => return Err(e.clone()),
                };
                let seed = substream_seed(config.seed, model.index(), r as u64);
                fit_cr(model, &window, params, config, &spec, seed)
                    .map_err(|e| format!("{model} fit: {e}"))
            })
            .collect();
        cr.insert(model, (stride, fits));
    }
    Ok(Refits {
        garch_stride,
        garch,
        cr,
    })
}

#[derive(Default)]
struct StepOutput {
    records: Vec<(ModelId, std::result::Result<ForecastRecord, String>)>,
    clamps: Vec<(ModelId, usize)>,
}

fn forecast_step(
    step: usize,
    config: &RunConfig,
    panel: &LossPanel,
    truth: Option<&SynthTruth>,
    models: &[ModelId],
    refits: &Refits,
    spec: &EwmaCovSpec,
) -> StepOutput {
    let mut out = StepOutput::default();
    let window = match window_at(panel, config, step) {
        Ok(w) => w,
        Err(e) => {
            for &m in models {
                out.records.push((m, Err(e.to_string())));
            }
            return out;
        }
    };
    let alpha = config.alpha;
    let needs_stats = models
        .iter()
        .any(|m| matches!(m, ModelId::El | ModelId::Const | ModelId::CrLse | ModelId::CrOpt));
    let stats = if needs_stats {
        Some(window_stats(&window, spec).map_err(|e| e.to_string()))
    } else {
        None
    };
    let var_es = || -> std::result::Result<(f64, f64), String> {
        let (params, _) = refits.garch[step / refits.garch_stride].as_ref().map_err(Clone::clone)?;
        let stats = stats.as_ref().expect("stats computed").as_ref().map_err(Clone::clone)?;
        let s2 = *garch11_variance_path(params, &stats.aggregates)
            .last()
            .expect("nonempty path");
        Ok(gaussian_var_es(params.mu, s2.sqrt(), alpha))
    };
    for &model in models {
        let rec: std::result::Result<ForecastRecord, String> = match model {
            ModelId::Hs => hs_forecast(&window, alpha).map_err(|e| e.to_string()),
            ModelId::Truth => match truth {
                Some(t) => t.record(config.window + step).map_err(|e| e.to_string()),
                None => Err("no truth available".to_string()),
            },
            ModelId::El => var_es().and_then(|(var, es)| {
                let stats = stats.as_ref().expect("stats").as_ref().map_err(Clone::clone)?;
                elliptical_allocation(&stats.mean, &stats.next_cov, es)
                    .and_then(|esc| ForecastRecord::new(esc, var, es, alpha))
                    .map_err(|e| e.to_string())
            }),
            ModelId::Const => var_es().and_then(|(var, es)| {
                let stats = stats.as_ref().expect("stats").as_ref().map_err(Clone::clone)?;
                let d = window.dim();
                let mut mean = vec![0.0; d];
                for w in &stats.weights {
                    for (m, x) in mean.iter_mut().zip(w.as_slice()) {
                        *m += x;
                    }
                }
                closing(&mean)
                    .and_then(|w| weights_to_record(w.as_slice(), var, es, alpha))
                    .map_err(|e| e.to_string())
            }),
            ModelId::CrLse | ModelId::CrOpt => var_es().and_then(|(var, es)| {
                let stats = stats.as_ref().expect("stats").as_ref().map_err(Clone::clone)?;
                let (stride, fits) = &refits.cr[&model];
                let fit = fits[step / stride].as_ref().map_err(Clone::clone)?;
                let (path, clamps) = cr_weight_path(&fit.theta, &window, &stats.weights[0], config.epsilon)
                    .map_err(|e| e.to_string())?;
                out.clamps.push((model, clamps));
                weights_to_record(path.last().expect("nonempty"), var, es, alpha)
                    .map_err(|e| e.to_string())
            }),
        };
        out.records.push((model, rec));
    }
    out
}

/// Runs every configured model over the out-of-sample period. `truth` is
/// required when the TRUTH model is listed and must describe `panel`.
pub fn rolling_run(config: &RunConfig, panel: &LossPanel, truth: Option<&SynthTruth>) -> Result<RunOutput> {
    config.validate()?;
    let needed = config.window + config.horizon;
    if panel.len() < needed {
        return Err(EscError::Config(format!(
            "panel has {} rows but `window` + `horizon` = {needed}",
            panel.len()
        )));
    }
    let models = config.model_ids();
    if models.contains(&ModelId::Truth) {
        match truth {
            None => {
                return Err(EscError::Config(
                    "model TRUTH needs the analytic truth of a simulated panel".into(),
                ))
            }
            Some(t) if t.panel.fingerprint() != panel.fingerprint() => {
                return Err(EscError::Config("truth does not belong to the panel".into()))
            }
            Some(_) => {}
        }
    }
    let spec = EwmaCovSpec::new(config.ewma_lambda, EwmaCovSpec::default().floor)?;
    let refits = compute_refits(config, panel, &models)?;
    let steps: Vec<StepOutput> = (0..config.horizon)
        .into_par_iter()
        .map(|i| forecast_step(i, config, panel, truth, &models, &refits, &spec))
        .collect();

    let first_row = config.window;
    let times: Vec<i64> = panel.times()[first_row..first_row + config.horizon].to_vec();
    let mut forecasts: BTreeMap<ModelId, Vec<Option<ForecastRecord>>> =
        models.iter().map(|&m| (m, Vec::with_capacity(config.horizon))).collect();
    let mut failures = Vec::new();
    let mut clamp_events: BTreeMap<ModelId, usize> = models.iter().map(|&m| (m, 0)).collect();
    for (i, step) in steps.into_iter().enumerate() {
        for (model, rec) in step.records {
            match rec {
                Ok(r) => forecasts.get_mut(&model).expect("listed").push(Some(r)),
                Err(message) => {
                    forecasts.get_mut(&model).expect("listed").push(None);
                    failures.push(StepFailure {
                        model,
                        step: i,
                        time: times[i],
                        message,
                    });
                }
            }
        }
        for (model, c) in step.clamps {
            *clamp_events.get_mut(&model).expect("listed") += c;
        }
    }
    let mut unconverged_fits: BTreeMap<ModelId, usize> = BTreeMap::new();
    for (model, (_, fits)) in &refits.cr {
        let mut bad = 0;
        for fit in fits.iter().flatten() {
            *clamp_events.get_mut(model).expect("listed") += fit.clamps;
            bad += usize::from(!fit.converged);
        }
        unconverged_fits.insert(*model, bad);
    }
    let garch_bad = refits.garch.iter().flatten().filter(|(_, c)| !c).count();
    if garch_bad > 0 {
        log::warn!("{garch_bad} aggregate GARCH fits stopped at the evaluation cap");
    }
    Ok(RunOutput {
        models,
        first_row,
        times,
        forecasts,
        failures,
        clamp_events,
        unconverged_fits,
    })
}
