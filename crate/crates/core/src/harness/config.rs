//! Run configuration, read from JSON.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::composition::DEFAULT_EPSILON;
use crate::error::{EscError, Result};
use crate::stattests::DEFAULT_LEVEL;

/// Smallest admissible estimation window.
pub const MIN_WINDOW: usize = 250;
/// Default number of steps between refits of estimated parameters.
pub const DEFAULT_REFIT_STRIDE: usize = 250;
/// Default EWMA decay of the covariance used by elliptical allocations.
pub const DEFAULT_EWMA_LAMBDA: f64 = 0.97;

/// Every key a [`RunConfig`] JSON document may contain.
pub const CONFIG_KEYS: &[&str] = &[
    "alpha",
    "window",
    "horizon",
    "models",
    "seed",
    "epsilon",
    "level",
    "benchmark",
    "refit_stride",
    "ewma_lambda",
    "simulation",
];

/// Every key of the `simulation` section.
pub const SIMULATION_KEYS: &[&str] = &[
    "generator",
    "dim",
    "length",
    "garch",
    "correlation",
    "noise",
    "dynamics",
];

/// Forecasting models known to the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelId {
    /// Historical simulation.
    #[serde(rename = "HS")]
    Hs,
    /// Gaussian GARCH aggregate with elliptical allocation.
    #[serde(rename = "EL")]
    El,
    /// Compositional regression fitted to elliptical weights.
    #[serde(rename = "CR.LSE")]
    CrLse,
    /// Compositional regression fitted by score minimization.
    #[serde(rename = "CR.OPT")]
    CrOpt,
    /// Analytic truth of a simulated panel.
    #[serde(rename = "TRUTH")]
    Truth,
    /// Constant weights: closure of the mean elliptical weight of the window.
    #[serde(rename = "CONST")]
    Const,
}

impl ModelId {
    pub const ALL: [ModelId; 6] = [
        ModelId::Hs,
        ModelId::El,
        ModelId::CrLse,
        ModelId::CrOpt,
        ModelId::Truth,
        ModelId::Const,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelId::Hs => "HS",
            ModelId::El => "EL",
            ModelId::CrLse => "CR.LSE",
            ModelId::CrOpt => "CR.OPT",
            ModelId::Truth => "TRUTH",
            ModelId::Const => "CONST",
        }
    }

    /// Stable index used to derive random substreams.
    pub fn index(&self) -> u64 {
        match self {
            ModelId::Hs => 1,
            ModelId::El => 2,
            ModelId::CrLse => 3,
            ModelId::CrOpt => 4,
            ModelId::Truth => 5,
            ModelId::Const => 6,
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelId {
    type Err = EscError;

    fn from_str(s: &str) -> Result<Self> {
        ModelId::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| EscError::UnknownModel(s.to_string()))
    }
}

/// A model entry: either a bare identifier or an object with overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelEntry {
    Id(ModelId),
    Spec(ModelSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub id: ModelId,
    /// Overrides the run-level `refit_stride` for this model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refit_stride: Option<usize>,
}

impl From<ModelId> for ModelEntry {
    fn from(id: ModelId) -> Self {
        ModelEntry::Id(id)
    }
}

impl ModelEntry {
    pub fn id(&self) -> ModelId {
        match self {
            ModelEntry::Id(id) => *id,
            ModelEntry::Spec(s) => s.id,
        }
    }

    pub fn refit_stride(&self) -> Option<usize> {
        match self {
            ModelEntry::Id(_) => None,
            ModelEntry::Spec(s) => s.refit_stride,
        }
    }
}

/// Data generator of the `simulation` section.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    /// Constant-correlation Gaussian panel with GARCH volatilities.
    CccGaussian,
    /// Aggregate GARCH loss split by weights that follow the compositional
    /// dynamics, plus zero-sum noise.
    Compositional,
}

/// GARCH(1,1) coefficients of a simulated series (zero mean).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GarchSpec {
    pub omega: f64,
    pub a: f64,
    pub b: f64,
}

impl Default for GarchSpec {
    fn default() -> Self {
        Self {
            omega: 0.05,
            a: 0.1,
            b: 0.85,
        }
    }
}

/// One spec for all assets or one per asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GarchSetting {
    Common(GarchSpec),
    PerAsset(Vec<GarchSpec>),
}

/// Equicorrelation or a full matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CorrelationSetting {
    Equi(f64),
    Matrix(Vec<Vec<f64>>),
}

/// Coefficients `(τ, Φ, Ψ)` and `w1` of the compositional generator; `None`
/// selects the built-in defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSpec {
    pub tau: Vec<f64>,
    pub phi: Vec<Vec<f64>>,
    pub psi: Vec<Vec<f64>>,
    pub w1: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default = "default_generator")]
    pub generator: GeneratorKind,
    pub dim: usize,
    /// Number of simulated rows; defaults to `window + horizon`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<usize>,
    #[serde(default = "default_garch")]
    pub garch: GarchSetting,
    #[serde(default = "default_correlation")]
    pub correlation: CorrelationSetting,
    /// Scale of the zero-sum noise of the compositional generator, relative
    /// to the aggregate volatility.
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<DynamicsSpec>,
}

fn default_generator() -> GeneratorKind {
    GeneratorKind::CccGaussian
}

fn default_garch() -> GarchSetting {
    GarchSetting::Common(GarchSpec::default())
}

fn default_correlation() -> CorrelationSetting {
    CorrelationSetting::Equi(0.5)
}

fn default_noise() -> f64 {
    0.3
}

fn default_alpha() -> f64 {
    0.975
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

fn default_level() -> f64 {
    DEFAULT_LEVEL
}

fn default_refit_stride() -> usize {
    DEFAULT_REFIT_STRIDE
}

fn default_lambda() -> f64 {
    DEFAULT_EWMA_LAMBDA
}

fn default_models() -> Vec<ModelEntry> {
    vec![
        ModelEntry::Id(ModelId::Hs),
        ModelEntry::Id(ModelId::El),
        ModelEntry::Id(ModelId::CrLse),
        ModelEntry::Id(ModelId::CrOpt),
    ]
}

/// Settings of a rolling-window run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Estimation window length `n`.
    pub window: usize,
    /// Number of out-of-sample steps.
    pub horizon: usize,
    #[serde(default = "default_models")]
    pub models: Vec<ModelEntry>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_level")]
    pub level: f64,
    /// Benchmark of the comparative tests; defaults to CR.OPT when present,
    /// otherwise the first model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<ModelId>,
    #[serde(default = "default_refit_stride")]
    pub refit_stride: usize,
    #[serde(default = "default_lambda")]
    pub ewma_lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationConfig>,
}

impl RunConfig {
    /// A configuration with defaults for everything but the sizes.
    pub fn new(window: usize, horizon: usize) -> Self {
        Self {
            alpha: default_alpha(),
            window,
            horizon,
            models: default_models(),
            seed: 0,
            epsilon: default_epsilon(),
            level: default_level(),
            benchmark: None,
            refit_stride: default_refit_stride(),
            ewma_lambda: default_lambda(),
            simulation: None,
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(s).map_err(|e| EscError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| EscError::io(path, e))?;
        Self::from_json_str(&text).map_err(|e| match e {
            EscError::Config(msg) => EscError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn model_ids(&self) -> Vec<ModelId> {
        self.models.iter().map(ModelEntry::id).collect()
    }

    /// The configured benchmark, or CR.OPT when listed, or the first model.
    pub fn benchmark_id(&self) -> Option<ModelId> {
        let ids = self.model_ids();
        self.benchmark.or_else(|| {
            if ids.contains(&ModelId::CrOpt) {
                Some(ModelId::CrOpt)
            } else {
                ids.first().copied()
            }
        })
    }

    pub fn stride_for(&self, id: ModelId) -> usize {
        self.models
            .iter()
            .find(|m| m.id() == id)
            .and_then(ModelEntry::refit_stride)
            .unwrap_or(self.refit_stride)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: String| Err(EscError::Config(format!("key `{key}`: {reason}")));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha", format!("{} is not in (0,1)", self.alpha));
        }
        if self.window < MIN_WINDOW {
            return bad("window", format!("{} is below the minimum {MIN_WINDOW}", self.window));
        }
        if self.horizon < 1 {
            return bad("horizon", "must be at least 1".into());
        }
        if self.models.is_empty() {
            return bad("models", "at least one model is required".into());
        }
        let ids = self.model_ids();
        for (i, id) in ids.iter().enumerate() {
            if ids[..i].contains(id) {
                return bad("models", format!("`{id}` is listed twice"));
            }
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon", "must be positive".into());
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad("level", format!("{} is not in (0,1)", self.level));
        }
        if let Some(b) = self.benchmark {
            if !ids.contains(&b) {
                return bad("benchmark", format!("`{b}` is not among the models"));
            }
        }
        if self.refit_stride < 1 || self.models.iter().any(|m| m.refit_stride() == Some(0)) {
            return bad("refit_stride", "must be at least 1".into());
        }
        if !(self.ewma_lambda > 0.0 && self.ewma_lambda < 1.0) {
            return bad("ewma_lambda", "must lie in (0,1)".into());
        }
        if let Some(sim) = &self.simulation {
            if sim.dim < 2 {
                return bad("simulation.dim", "must be at least 2".into());
            }
            if let Some(len) = sim.length {
                if len < 1 {
                    return bad("simulation.length", "must be at least 1".into());
                }
            }
            if !(sim.noise >= 0.0) {
                return bad("simulation.noise", "must be nonnegative".into());
            }
        }
        Ok(())
    }

    /// Number of simulated rows.
    pub fn simulation_length(&self) -> Option<usize> {
        self.simulation
            .as_ref()
            .map(|s| s.length.unwrap_or(self.window + self.horizon))
    }
}
