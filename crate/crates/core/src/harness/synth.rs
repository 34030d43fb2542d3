//! Synthetic loss panels with analytic conditional truth.
//!
//! Two generators are available:
//!
//! * constant-correlation Gaussian: `X_{j,t} = σ_{j,t} Z_{j,t}` with rows of
//!   `Z` iid `N(0, P)` and per-asset GARCH(1,1) variances. Conditionally on
//!   the past, `X_t ~ N(0, D_t P D_t)`, so VaR, ES and the contributions
//!   follow from the Gaussian and elliptical formulas.
//! * compositional: the aggregate `S_t = σ_t ε_t` follows a GARCH(1,1) and is
//!   split as `X_t = w_t S_t + κ σ_t V ξ_t`, where `V` is the contrast matrix
//!   (columns sum to zero) and `w_t` follows the compositional dynamics. Since
//!   `E[X_t | S_t, past] = w_t S_t`, the true contributions are `w_t ES_t`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::composition::{closing, covariates_into, ilr, ThetaParams, WeightDynamics};
use crate::error::{EscError, Result};
use crate::harness::config::{
    CorrelationSetting, DynamicsSpec, GarchSetting, GarchSpec, GeneratorKind, RunConfig,
    SimulationConfig,
};
use crate::models::elliptical::elliptical_allocation;
use crate::models::garch::gaussian_var_es;
use crate::panel::{ForecastRecord, LossPanel, SimplexWeights};

/// A simulated panel together with its conditional truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTruth {
    pub panel: LossPanel,
    pub true_var: Vec<f64>,
    pub true_es: Vec<f64>,
    /// `T x d`.
    pub true_esc: Vec<Vec<f64>>,
    pub alpha: f64,
    pub generator: GeneratorParams,
}

/// Parameters the panel was generated with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GeneratorParams {
    CccGaussian {
        garch: Vec<GarchSpec>,
        correlation: Vec<Vec<f64>>,
        seed: u64,
    },
    Compositional {
        garch: GarchSpec,
        theta: ThetaParams,
        noise: f64,
        epsilon: f64,
        seed: u64,
    },
    /// Truth read back from a file; the generator is unknown.
    Loaded,
}

impl SynthTruth {
    /// The truth as forecast records.
    pub fn records(&self) -> Result<Vec<ForecastRecord>> {
        (0..self.panel.len()).map(|t| self.record(t)).collect()
    }

    pub fn record(&self, t: usize) -> Result<ForecastRecord> {
        ForecastRecord::new(
            self.true_esc[t].clone(),
            self.true_var[t],
            self.true_es[t],
            self.alpha,
        )
    }

    /// Truth for the rows `range` of the panel.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<SynthTruth> {
        Ok(SynthTruth {
            panel: self.panel.slice(range.clone())?,
            true_var: self.true_var[range.clone()].to_vec(),
            true_es: self.true_es[range.clone()].to_vec(),
            true_esc: self.true_esc[range].to_vec(),
            alpha: self.alpha,
            generator: self.generator.clone(),
        })
    }
}

fn check_garch(g: &GarchSpec) -> Result<()> {
    if !(g.omega > 0.0 && g.a >= 0.0 && g.b >= 0.0 && g.a + g.b < 1.0) {
        return Err(EscError::param(
            "garch",
            format!("need omega > 0, a, b >= 0, a + b < 1; got {g:?}"),
        ));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(EscError::param("alpha", format!("{alpha} is not in (0,1)")));
    }
    Ok(())
}

/// Equicorrelation matrix `(1-ρ) I + ρ 11ᵀ`.
pub fn equicorrelation(d: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { rho })
}

fn draw_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Constant-correlation Gaussian panel with per-asset GARCH volatilities.
/// Variances start at their unconditional levels.
pub fn synth_ccc_gaussian(
    d: usize,
    len: usize,
    garch: &[GarchSpec],
    corr: &DMatrix<f64>,
    alpha: f64,
    seed: u64,
) -> Result<SynthTruth> {
    check_alpha(alpha)?;
    if d < 2 || len < 1 {
        return Err(EscError::Dimension(format!("need d >= 2 and T >= 1, got d = {d}, T = {len}")));
    }
    if garch.len() != d {
        return Err(EscError::LengthMismatch {
            expected: d,
            got: garch.len(),
        });
    }
    garch.iter().try_for_each(check_garch)?;
    if corr.nrows() != d || corr.ncols() != d {
        return Err(EscError::Dimension("correlation matrix must be d x d".into()));
    }
    for i in 0..d {
        if (corr[(i, i)] - 1.0).abs() > 1e-12 {
            return Err(EscError::param("correlation", "diagonal must be 1"));
        }
        for j in 0..i {
            if (corr[(i, j)] - corr[(j, i)]).abs() > 1e-12 {
                return Err(EscError::param("correlation", "matrix must be symmetric"));
            }
        }
    }
    let chol = corr
        .clone()
        .cholesky()
        .ok_or_else(|| EscError::param("correlation", "matrix is not positive definite"))?;
    let l = chol.l();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s2: Vec<f64> = garch.iter().map(|g| g.omega / (1.0 - g.a - g.b)).collect();
    let (z_a, es_factor) = crate::numeric::gaussian_var_es_factors(alpha);
    let zero = vec![0.0; d];
    let mut rows = Vec::with_capacity(len);
    let mut true_var = Vec::with_capacity(len);
    let mut true_es = Vec::with_capacity(len);
    let mut true_esc = Vec::with_capacity(len);
    let mut eps = vec![0.0; d];
    for _ in 0..len {
        let sd: Vec<f64> = s2.iter().map(|v| v.sqrt()).collect();
        let sigma = DMatrix::from_fn(d, d, |i, j| sd[i] * corr[(i, j)] * sd[j]);
        let q: f64 = sigma.iter().sum();
        let scale = q.sqrt();
        let es = scale * es_factor;
        true_var.push(scale * z_a);
        true_es.push(es);
        true_esc.push(elliptical_allocation(&zero, &sigma, es)?);

        eps.iter_mut().for_each(|e| *e = draw_normal(&mut rng));
        let row: Vec<f64> = (0..d)
            .map(|i| sd[i] * (0..=i).map(|k| l[(i, k)] * eps[k]).sum::<f64>())
            .collect();
        for ((v, g), x) in s2.iter_mut().zip(garch).zip(&row) {
            *v = g.omega + g.a * x * x + g.b * *v;
        }
        rows.push(row);
    }
    let names = (1..=d).map(|j| format!("X{j}")).collect::<Vec<_>>();
    let panel = LossPanel::new((1..=len as i64).collect(), names, &rows)?;
    Ok(SynthTruth {
        panel,
        true_var,
        true_es,
        true_esc,
        alpha,
        generator: GeneratorParams::CccGaussian {
            garch: garch.to_vec(),
            correlation: (0..d).map(|i| corr.row(i).iter().copied().collect()).collect(),
            seed,
        },
    })
}

/// Built-in weight dynamics of the compositional generator: persistent
/// weights around a decreasing profile, pushed by the positive parts of the
/// component losses and pulled back by the negative parts.
pub fn default_dynamics(d: usize) -> Result<ThetaParams> {
    let k = d - 1;
    let q = 2 * k;
    let profile: Vec<f64> = (0..d).map(|j| (d - j) as f64).collect();
    let w_bar = closing(&profile)?;
    let center = ilr(&w_bar)?;
    let persistence = 0.8;
    let mut theta = ThetaParams::zeros(d, q);
    for i in 0..k {
        theta.tau[i] = (1.0 - persistence) * center[i];
        theta.phi[i][i] = persistence;
        theta.psi[i][i] = 0.1;
        theta.psi[i][k + i] = -0.05;
    }
    theta.w1 = w_bar;
    Ok(theta)
}

fn theta_from_spec(spec: &DynamicsSpec, d: usize) -> Result<ThetaParams> {
    let theta = ThetaParams {
        tau: spec.tau.clone(),
        phi: spec.phi.clone(),
        psi: spec.psi.clone(),
        w1: SimplexWeights::new(spec.w1.clone())?,
    };
    theta.validate()?;
    if theta.dim() != d || theta.covariate_dim() != 2 * (d - 1) {
        return Err(EscError::param(
            "simulation.dynamics",
            format!("coefficients do not match d = {d} with 2(d-1) covariates"),
        ));
    }
    Ok(theta)
}

/// Aggregate GARCH loss split by weights following `theta`, plus zero-sum
/// noise of scale `noise · σ_t`.
pub fn synth_compositional(
    len: usize,
    garch: &GarchSpec,
    theta: &ThetaParams,
    noise: f64,
    epsilon: f64,
    alpha: f64,
    seed: u64,
) -> Result<SynthTruth> {
    check_alpha(alpha)?;
    check_garch(garch)?;
    theta.validate()?;
    let d = theta.dim();
    if len < 1 {
        return Err(EscError::Dimension("need T >= 1".into()));
    }
    if theta.covariate_dim() != 2 * (d - 1) {
        return Err(EscError::param("theta", "psi must have 2(d-1) columns"));
    }
    if !(noise >= 0.0) || !(epsilon > 0.0) {
        return Err(EscError::param("noise/epsilon", "noise >= 0 and epsilon > 0 required"));
    }
    let mut dynamics = WeightDynamics::new(d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s2 = garch.omega / (1.0 - garch.a - garch.b);
    let mut w = theta.w1.as_slice().to_vec();
    let mut next = vec![0.0; d];
    let mut y = vec![0.0; 2 * (d - 1)];
    let mut xi = vec![0.0; d - 1];
    let mut rows = Vec::with_capacity(len);
    let mut true_var = Vec::with_capacity(len);
    let mut true_es = Vec::with_capacity(len);
    let mut true_esc = Vec::with_capacity(len);
    for _ in 0..len {
        let sigma = s2.sqrt();
        let (var, es) = gaussian_var_es(0.0, sigma, alpha);
        true_var.push(var);
        true_es.push(es);
        let mut esc: Vec<f64> = w.iter().map(|wj| wj * es).collect();
        let gap = es - esc.iter().sum::<f64>();
        let jmax = (0..d).max_by(|&a, &b| w[a].total_cmp(&w[b])).expect("d >= 2");
        esc[jmax] += gap;
        true_esc.push(esc);

        let s = sigma * draw_normal(&mut rng);
        xi.iter_mut().for_each(|x| *x = draw_normal(&mut rng));
        let cm = dynamics.contrast();
        let row: Vec<f64> = (0..d)
            .map(|j| {
                let v: f64 = (0..d - 1).map(|c| cm.get(j, c) * xi[c]).sum();
                w[j] * s + noise * sigma * v
            })
            .collect();
        let agg: f64 = row.iter().sum();
        covariates_into(cm, &row, agg, epsilon, &mut y);
        dynamics.step(theta, &w, &y, &mut next);
        std::mem::swap(&mut w, &mut next);
        s2 = garch.omega + garch.a * s * s + garch.b * s2;
        rows.push(row);
    }
    let names = (1..=d).map(|j| format!("X{j}")).collect::<Vec<_>>();
    let panel = LossPanel::new((1..=len as i64).collect(), names, &rows)?;
    Ok(SynthTruth {
        panel,
        true_var,
        true_es,
        true_esc,
        alpha,
        generator: GeneratorParams::Compositional {
            garch: *garch,
            theta: theta.clone(),
            noise,
            epsilon,
            seed,
        },
    })
}

fn garch_list(setting: &GarchSetting, d: usize) -> Result<Vec<GarchSpec>> {
    match setting {
        GarchSetting::Common(g) => Ok(vec![*g; d]),
        GarchSetting::PerAsset(v) if v.len() == d => Ok(v.clone()),
        GarchSetting::PerAsset(v) => Err(EscError::Config(format!(
            "key `simulation.garch`: {} entries for d = {d}",
            v.len()
        ))),
    }
}

fn correlation_matrix(setting: &CorrelationSetting, d: usize) -> Result<DMatrix<f64>> {
    match setting {
        CorrelationSetting::Equi(rho) => Ok(equicorrelation(d, *rho)),
        CorrelationSetting::Matrix(rows) => {
            if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                return Err(EscError::Config(format!(
                    "key `simulation.correlation`: matrix must be {d}x{d}"
                )));
            }
            Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
        }
    }
}

/// Simulates the panel described by the `simulation` section of `config`.
pub fn simulate(config: &RunConfig) -> Result<SynthTruth> {
    let sim: &SimulationConfig = config
        .simulation
        .as_ref()
        .ok_or_else(|| EscError::Config("key `simulation` is missing".into()))?;
    let len = config.simulation_length().expect("simulation present");
    let d = sim.dim;
    match sim.generator {
        GeneratorKind::CccGaussian => {
            let garch = garch_list(&sim.garch, d)?;
            let corr = correlation_matrix(&sim.correlation, d)?;
            synth_ccc_gaussian(d, len, &garch, &corr, config.alpha, config.seed)
        }
        GeneratorKind::Compositional => {
            let garch = match &sim.garch {
                GarchSetting::Common(g) => *g,
                GarchSetting::PerAsset(_) => {
                    return Err(EscError::Config(
                        "key `simulation.garch`: the compositional generator takes a single spec"
                            .into(),
                    ))
                }
            };
            let theta = match &sim.dynamics {
                Some(spec) => theta_from_spec(spec, d)?,
                None => default_dynamics(d)?,
            };
            synth_compositional(len, &garch, &theta, sim.noise, config.epsilon, config.alpha, config.seed)
        }
    }
}
