//! Strictly consistent multi-objective scoring functions for
//! `(ESC_j, VaR)` pairs and `(ESC_1, …, ESC_d, VaR)` tuples.
//!
//! A score is the pair `(S^VaR(v, s), S^ESC(m, v, x))` ordered
//! lexicographically:
//!
//! ```text
//! S^VaR(v, s)          = (1{s <= v} - α) (h(v) - h(s))
//! S_j^ESC((m, v), x)   = 1{s > v} { φ'(m)(m - x_j) - φ(m) + φ(x_j) }
//! ```
//!
//! with `h` strictly increasing and `φ` strictly convex. The identity `h`
//! gives the pinball loss and `φ(x) = x²` gives the square loss; both are
//! the defaults. The elementary scores used by Murphy diagrams live here as
//! well.
//!
//! Gate conventions are fixed: `s <= v` is a closed inequality and `s > v`
//! is open, so the two gates partition the real line at `s = v`.

use serde::{Deserialize, Serialize};

use crate::error::{EscError, Result};
use crate::numeric::KahanSum;
use crate::panel::{ForecastRecord, LossPanel, ScorePair};

/// A strictly increasing transform `h` applied inside the VaR score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub enum Transform {
    /// `h(s) = s`, giving the pinball loss.
    #[default]
    Identity,
    /// Piecewise linear through the knots, extended linearly beyond them.
    Knots(MonotoneKnots),
}

/// Knot table `(point, value)` of a strictly increasing piecewise linear map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "(Vec<f64>, Vec<f64>)", into = "(Vec<f64>, Vec<f64>)")]
pub struct MonotoneKnots {
    points: Vec<f64>,
    values: Vec<f64>,
}

impl MonotoneKnots {
    pub fn new(points: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_knots(&points, &values, "h")?;
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(EscError::param("h", "values must be strictly increasing"));
        }
        Ok(Self { points, values })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = segment(&self.points, x);
        let (p0, p1) = (self.points[k], self.points[k + 1]);
        let (v0, v1) = (self.values[k], self.values[k + 1]);
        v0 + (v1 - v0) * (x - p0) / (p1 - p0)
    }
}

impl TryFrom<(Vec<f64>, Vec<f64>)> for MonotoneKnots {
    type Error = EscError;

    fn try_from((points, values): (Vec<f64>, Vec<f64>)) -> Result<Self> {
        MonotoneKnots::new(points, values)
    }
}

impl From<MonotoneKnots> for (Vec<f64>, Vec<f64>) {
    fn from(k: MonotoneKnots) -> Self {
        (k.points, k.values)
    }
}

impl Transform {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::Knots(k) => k.eval(x),
        }
    }
}

/// The strictly convex function `φ` of the ESC score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub enum ConvexFn {
    /// `φ(x) = x²`, giving the square loss.
    #[default]
    Square,
    /// Given by its subgradient at knots, interpolated linearly.
    Knots(ConvexKnots),
}

/// Knot table of `(point, φ'(point))` pairs.
///
/// `φ'` is linear between knots and continues with the slope of the
/// outermost segments beyond them, so `φ` is piecewise quadratic and the
/// mixing measure `dH = dφ'` has a piecewise constant density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConvexKnotsRaw")]
pub struct ConvexKnots {
    points: Vec<f64>,
    slopes: Vec<f64>,
    #[serde(skip)]
    phi_at: Vec<f64>,
}

#[derive(Deserialize)]
struct ConvexKnotsRaw {
    points: Vec<f64>,
    slopes: Vec<f64>,
}

impl TryFrom<ConvexKnotsRaw> for ConvexKnots {
    type Error = EscError;

    fn try_from(raw: ConvexKnotsRaw) -> Result<Self> {
        ConvexKnots::new(raw.points, raw.slopes)
    }
}

impl ConvexKnots {
    pub fn new(points: Vec<f64>, slopes: Vec<f64>) -> Result<Self> {
        check_knots(&points, &slopes, "phi")?;
        if slopes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(EscError::param(
                "phi",
                "subgradients must be strictly increasing (strict convexity)",
            ));
        }
        let mut phi_at = vec![0.0; points.len()];
        for k in 1..points.len() {
            let dx = points[k] - points[k - 1];
            phi_at[k] = phi_at[k - 1] + 0.5 * (slopes[k] + slopes[k - 1]) * dx;
        }
        Ok(Self {
            points,
            slopes,
            phi_at,
        })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// `(anchor index, curvature)` of the piece containing `x`.
    fn piece(&self, x: f64) -> (usize, f64) {
        let k = segment(&self.points, x);
        let c = (self.slopes[k + 1] - self.slopes[k]) / (self.points[k + 1] - self.points[k]);
        let anchor = if x >= self.points[k + 1] { k + 1 } else { k };
        (anchor, c)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let (a, c) = self.piece(x);
        self.slopes[a] + c * (x - self.points[a])
    }

    pub fn value(&self, x: f64) -> f64 {
        let (a, c) = self.piece(x);
        let dx = x - self.points[a];
        self.phi_at[a] + self.slopes[a] * dx + 0.5 * c * dx * dx
    }

    /// Density of `dH = dφ'` at `eta` (right-continuous).
    pub fn mixing_density(&self, eta: f64) -> f64 {
        self.piece(eta).1
    }
}

fn check_knots(points: &[f64], values: &[f64], name: &str) -> Result<()> {
    if points.len() < 2 || points.len() != values.len() {
        return Err(EscError::param(
            name,
            "need at least two knots with one value per knot",
        ));
    }
    if points.iter().chain(values).any(|x| !x.is_finite()) {
        return Err(EscError::param(name, "knots must be finite"));
    }
    if points.windows(2).any(|w| w[1] <= w[0]) {
        return Err(EscError::param(name, "knot points must be strictly increasing"));
    }
    Ok(())
}

/// Index `k` of the segment `[p_k, p_{k+1}]` used for `x`; outer segments
/// extend to infinity.
fn segment(points: &[f64], x: f64) -> usize {
    let n = points.len();
    match points.partition_point(|&p| p <= x) {
        0 => 0,
        i if i >= n => n - 2,
        i => i - 1,
    }
}

impl ConvexFn {
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match self {
            ConvexFn::Square => x * x,
            ConvexFn::Knots(k) => k.value(x),
        }
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            ConvexFn::Square => 2.0 * x,
            ConvexFn::Knots(k) => k.derivative(x),
        }
    }

    /// Density of the mixing measure `dH = dφ'`.
    pub fn mixing_density(&self, eta: f64) -> f64 {
        match self {
            ConvexFn::Square => 2.0,
            ConvexFn::Knots(k) => k.mixing_density(eta),
        }
    }

    /// Bregman divergence `φ(x) - φ(m) - φ'(m)(x - m)`.
    #[inline]
    pub fn bregman(&self, m: f64, x: f64) -> f64 {
        match self {
            ConvexFn::Square => (x - m) * (x - m),
            ConvexFn::Knots(_) => {
                (self.derivative(m) * (m - x) - self.value(m) + self.value(x)).max(0.0)
            }
        }
    }
}

/// VaR part of the score: level and transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarScoreSpec {
    pub alpha: f64,
    pub h: Transform,
}

impl VarScoreSpec {
    pub fn new(alpha: f64, h: Transform) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(EscError::param("alpha", format!("{alpha} is not in (0,1)")));
        }
        Ok(Self { alpha, h })
    }

    pub fn pinball(alpha: f64) -> Result<Self> {
        Self::new(alpha, Transform::Identity)
    }
}

/// ESC part of the score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EscScoreSpec {
    pub phi: ConvexFn,
}

impl EscScoreSpec {
    pub fn square() -> Self {
        Self::default()
    }
}

/// Pair of transform and convex function applied to every forecast; the
/// level is taken from the forecast itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ScoringRule {
    pub h: Transform,
    pub phi: ConvexFn,
}

/// `S^VaR(v, s) = (1{s <= v} - α)(h(v) - h(s))`.
#[inline]
pub fn score_var(v: f64, s: f64, spec: &VarScoreSpec) -> f64 {
    score_var_raw(v, s, spec.alpha, &spec.h)
}

#[inline]
fn score_var_raw(v: f64, s: f64, alpha: f64, h: &Transform) -> f64 {
    let hit = if s <= v { 1.0 } else { 0.0 };
    (hit - alpha) * (h.eval(v) - h.eval(s))
}

/// Pinball loss `(1{s <= v} - α)(v - s)`.
#[inline]
pub fn pinball(v: f64, s: f64, alpha: f64) -> f64 {
    let hit = if s <= v { 1.0 } else { 0.0 };
    (hit - alpha) * (v - s)
}

/// `S_j^ESC = 1{s > v} { φ'(m)(m - x_j) - φ(m) + φ(x_j) }`.
#[inline]
pub fn score_esc_component(m: f64, v: f64, x_j: f64, s: f64, spec: &EscScoreSpec) -> f64 {
    if s > v {
        spec.phi.bregman(m, x_j)
    } else {
        0.0
    }
}

/// Multi-objective score of a full forecast tuple with the default
/// pinball/square rule.
pub fn score_tuple(f: &ForecastRecord, x: &[f64]) -> Result<ScorePair> {
    score_tuple_with(f, x, &ScoringRule::default())
}

pub fn score_tuple_with(f: &ForecastRecord, x: &[f64], rule: &ScoringRule) -> Result<ScorePair> {
    if f.esc.len() != x.len() {
        return Err(EscError::LengthMismatch {
            expected: x.len(),
            got: f.esc.len(),
        });
    }
    let s: f64 = x.iter().sum();
    let var_score = score_var_raw(f.var, s, f.alpha, &rule.h);
    let esc_score = if s > f.var {
        f.esc
            .iter()
            .zip(x)
            .map(|(&m, &xj)| rule.phi.bregman(m, xj))
            .sum()
    } else {
        0.0
    };
    Ok(ScorePair::new(var_score, esc_score))
}

/// Elementary VaR score `(1{s < v} - α)(1{η < v} - 1{η < s})`.
#[inline]
pub fn elementary_score_var(eta: f64, v: f64, s: f64, alpha: f64) -> f64 {
    let ind = |b: bool| if b { 1.0 } else { 0.0 };
    (ind(s < v) - alpha) * (ind(eta < v) - ind(eta < s))
}

/// Elementary ESC score: the regret of holding capital `eta` against a
/// component loss `x_j` given a forecast `m`.
#[inline]
pub fn elementary_score_esc(eta: f64, m: f64, v: f64, x_j: f64, s: f64) -> f64 {
    if s <= v {
        return 0.0;
    }
    if m <= eta && eta < x_j {
        x_j - eta
    } else if x_j <= eta && eta < m {
        eta - x_j
    } else {
        0.0
    }
}

/// What a score or identification series is computed for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Target {
    /// Total VaR alone; the ESC part of its score pair is zero.
    Var,
    /// The tuple `(ESC_1, …, ESC_d, VaR)`.
    EscTuple,
    /// The pair `(ESC_j, VaR)`, zero-based `j`.
    EscComponent(usize),
}

impl Target {
    pub fn label(&self, names: &[String]) -> String {
        match self {
            Target::Var => "VaR".to_string(),
            Target::EscTuple => "ESC".to_string(),
            Target::EscComponent(j) => format!(
                "ESC_{}",
                names.get(*j).cloned().unwrap_or_else(|| (j + 1).to_string())
            ),
        }
    }

    /// Targets reported for a `d`-dimensional panel.
    pub fn all(d: usize) -> Vec<Target> {
        let mut v = vec![Target::Var, Target::EscTuple];
        v.extend((0..d).map(Target::EscComponent));
        v
    }
}

fn check_lengths(forecasts: &[ForecastRecord], panel: &LossPanel) -> Result<()> {
    if forecasts.is_empty() {
        return Err(EscError::Empty("forecast sequence".into()));
    }
    if forecasts.len() != panel.len() {
        return Err(EscError::LengthMismatch {
            expected: panel.len(),
            got: forecasts.len(),
        });
    }
    if let Some(f) = forecasts.iter().find(|f| f.dim() != panel.dim()) {
        return Err(EscError::LengthMismatch {
            expected: panel.dim(),
            got: f.dim(),
        });
    }
    Ok(())
}

/// Per-time score pairs for a target.
pub fn score_series(
    forecasts: &[ForecastRecord],
    panel: &LossPanel,
    target: Target,
    rule: &ScoringRule,
) -> Result<Vec<ScorePair>> {
    check_lengths(forecasts, panel)?;
    forecasts
        .iter()
        .zip(panel.rows())
        .map(|(f, x)| match target {
            Target::Var => Ok(ScorePair::new(
                score_var_raw(f.var, x.iter().sum(), f.alpha, &rule.h),
                0.0,
            )),
            Target::EscTuple => score_tuple_with(f, x, rule),
            Target::EscComponent(j) => {
                if j >= x.len() {
                    return Err(EscError::Dimension(format!("component {j} out of range")));
                }
                let s: f64 = x.iter().sum();
                let var_score = score_var_raw(f.var, s, f.alpha, &rule.h);
                let esc_score = if s > f.var {
                    rule.phi.bregman(f.esc[j], x[j])
                } else {
                    0.0
                };
                Ok(ScorePair::new(var_score, esc_score))
            }
        })
        .collect()
}

/// Compensated mean of a sequence of score pairs.
pub fn mean_pair(pairs: &[ScorePair]) -> ScorePair {
    let mut a = KahanSum::new();
    let mut b = KahanSum::new();
    for p in pairs {
        a.add(p.var_score);
        b.add(p.esc_score);
    }
    let n = pairs.len() as f64;
    ScorePair::new(a.value() / n, b.value() / n)
}

/// Average tuple score over the out-of-sample period.
pub fn average_scores(forecasts: &[ForecastRecord], panel: &LossPanel) -> Result<ScorePair> {
    let pairs = score_series(forecasts, panel, Target::EscTuple, &ScoringRule::default())?;
    Ok(mean_pair(&pairs))
}
