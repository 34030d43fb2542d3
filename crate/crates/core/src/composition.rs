//! Simplex algebra for allocation weights.
//!
//! The isometric log-ratio transform uses the contrast matrix whose `k`-th
//! coordinate balances weight `k` against the geometric mean of weights
//! `k+1..d`:
//!
//! ```text
//! ilr_k(w) = sqrt((d-k)/(d-k+1)) * ln( w_k / (Π_{l>k} w_l)^{1/(d-k)} )
//! ```
//!
//! Allocation weights evolve in ilr coordinates as
//! `w_{t+1} = ilr⁻¹(τ + Φ ilr(w_t) + Ψ y_t)`.

use serde::{Deserialize, Serialize};

use crate::error::{EscError, Result};
use crate::panel::SimplexWeights;

/// Weights closer than this to the simplex boundary are clamped during
/// recursions.
pub const WEIGHT_FLOOR: f64 = 1e-9;

/// Default clamp of the covariate construction.
pub const DEFAULT_EPSILON: f64 = 0.01;

/// `x / Σ x` for a strictly positive vector.
pub fn closing(x: &[f64]) -> Result<SimplexWeights> {
    if x.len() < 2 {
        return Err(EscError::Dimension(format!(
            "closing needs d >= 2, got {}",
            x.len()
        )));
    }
    if let Some(j) = x.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(EscError::OutsideSimplex(format!(
            "component {j} = {} is not strictly positive",
            x[j]
        )));
    }
    let s: f64 = x.iter().sum();
    if !(s > 0.0) || !s.is_finite() {
        return Err(EscError::Degenerate(format!("closing of a vector summing to {s}")));
    }
    SimplexWeights::new(x.iter().map(|v| v / s).collect())
}

/// The `d x (d-1)` contrast matrix `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastMatrix {
    d: usize,
    // row-major d x (d-1)
    v: Vec<f64>,
}

/// Builds the contrast matrix reproducing the balance coordinates.
pub fn contrast_matrix(d: usize) -> Result<ContrastMatrix> {
    ContrastMatrix::new(d)
}

impl ContrastMatrix {
    pub fn new(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(EscError::Dimension(format!(
                "contrast matrix needs d >= 2, got {d}"
            )));
        }
        let k_dim = d - 1;
        let mut v = vec![0.0; d * k_dim];
        for k in 0..k_dim {
            // one-based column index kk = k + 1, remaining count r = d - kk
            let r = (d - k - 1) as f64;
            v[k * k_dim + k] = (r / (r + 1.0)).sqrt();
            let off = -1.0 / (r * (r + 1.0)).sqrt();
            for row in k + 1..d {
                v[row * k_dim + k] = off;
            }
        }
        Ok(Self { d, v })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.v[row * (self.d - 1) + col]
    }

    /// Rows of `V` as vectors.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.v.chunks_exact(self.d - 1).map(<[f64]>::to_vec).collect()
    }

    /// `Vᵀ ln(w)` into `out` (length `d-1`).
    pub fn ilr_into(&self, w: &[f64], out: &mut [f64]) {
        let k_dim = self.d - 1;
        out.iter_mut().for_each(|o| *o = 0.0);
        for (row, &wj) in w.iter().enumerate() {
            let l = wj.ln();
            let vr = &self.v[row * k_dim..(row + 1) * k_dim];
            for (o, &c) in out.iter_mut().zip(vr) {
                *o += c * l;
            }
        }
    }

    /// `C(exp(V z))` into `out` (length `d`), shifted by `max(Vz)` so that
    /// the exponential never overflows.
    pub fn ilr_inv_into(&self, z: &[f64], out: &mut [f64]) {
        let k_dim = self.d - 1;
        let mut mx = f64::NEG_INFINITY;
        for (row, o) in out.iter_mut().enumerate() {
            let vr = &self.v[row * k_dim..(row + 1) * k_dim];
            *o = vr.iter().zip(z).map(|(c, zi)| c * zi).sum();
            mx = mx.max(*o);
        }
        let mut s = 0.0;
        for o in out.iter_mut() {
            *o = (*o - mx).exp();
            s += *o;
        }
        for o in out.iter_mut() {
            *o /= s;
        }
    }
}

/// Isometric log-ratio coordinates of an interior weight vector.
pub fn ilr(w: &SimplexWeights) -> Result<Vec<f64>> {
    let cm = ContrastMatrix::new(w.dim())?;
    let mut out = vec![0.0; w.dim() - 1];
    cm.ilr_into(w.as_slice(), &mut out);
    Ok(out)
}

/// Inverse ilr transform. Fails when a weight underflows to the boundary.
pub fn ilr_inv(z: &[f64]) -> Result<SimplexWeights> {
    if let Some(i) = z.iter().position(|x| !x.is_finite()) {
        return Err(EscError::NonFinite { row: 0, col: i });
    }
    let cm = ContrastMatrix::new(z.len() + 1)?;
    let mut out = vec![0.0; z.len() + 1];
    cm.ilr_inv_into(z, &mut out);
    SimplexWeights::new(out)
}

/// Covariates `(ilr∘C(max(x s, ε)), ilr∘C(-min(x s, -ε)))`.
pub fn build_covariates(x: &[f64], s: f64, eps: f64) -> Result<Vec<f64>> {
    if !(eps > 0.0) {
        return Err(EscError::param("epsilon", "must be positive"));
    }
    let cm = ContrastMatrix::new(x.len())?;
    let mut out = vec![0.0; 2 * (x.len() - 1)];
    covariates_into(&cm, x, s, eps, &mut out);
    Ok(out)
}

pub(crate) fn covariates_into(cm: &ContrastMatrix, x: &[f64], s: f64, eps: f64, out: &mut [f64]) {
    let d = x.len();
    let k_dim = d - 1;
    let pos: Vec<f64> = x.iter().map(|xj| (xj * s).max(eps)).collect();
    let neg: Vec<f64> = x.iter().map(|xj| -(xj * s).min(-eps)).collect();
    // ilr is invariant to scaling, so closing can be skipped here
    let (a, b) = out.split_at_mut(k_dim);
    cm.ilr_into(&pos, a);
    cm.ilr_into(&neg, b);
}

/// Parameters `(τ, Φ, Ψ)` of the weight dynamics plus the initial weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaParams {
    pub tau: Vec<f64>,
    /// `(d-1) x (d-1)`, row-major rows.
    pub phi: Vec<Vec<f64>>,
    /// `(d-1) x q`.
    pub psi: Vec<Vec<f64>>,
    pub w1: SimplexWeights,
}

impl ThetaParams {
    pub fn zeros(d: usize, q: usize) -> Self {
        let k = d - 1;
        Self {
            tau: vec![0.0; k],
            phi: vec![vec![0.0; k]; k],
            psi: vec![vec![0.0; q]; k],
            w1: SimplexWeights::uniform(d),
        }
    }

    /// Dynamics that keep every weight at `w1`.
    pub fn identity(d: usize, q: usize, w1: SimplexWeights) -> Self {
        let mut t = Self::zeros(d, q);
        for (i, row) in t.phi.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        t.w1 = w1;
        t
    }

    pub fn dim(&self) -> usize {
        self.tau.len() + 1
    }

    pub fn covariate_dim(&self) -> usize {
        self.psi.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.tau.len();
        let q = self.covariate_dim();
        if k == 0 || self.w1.dim() != k + 1 {
            return Err(EscError::Dimension("w1 and tau disagree on d".into()));
        }
        if self.phi.len() != k || self.phi.iter().any(|r| r.len() != k) {
            return Err(EscError::Dimension("phi must be (d-1) x (d-1)".into()));
        }
        if self.psi.len() != k || self.psi.iter().any(|r| r.len() != q) {
            return Err(EscError::Dimension("psi must be (d-1) x q".into()));
        }
        let all = self
            .tau
            .iter()
            .chain(self.phi.iter().flatten())
            .chain(self.psi.iter().flatten());
        if all.into_iter().any(|x| !x.is_finite()) {
            return Err(EscError::Degenerate("non-finite dynamics parameter".into()));
        }
        Ok(())
    }

    /// Number of free coefficients in `(τ, Φ, Ψ)`.
    pub fn n_coefficients(d: usize, q: usize) -> usize {
        let k = d - 1;
        k + k * k + k * q
    }

    /// Packs `(τ, Φ, Ψ)` row by row.
    pub fn to_coefficients(&self) -> Vec<f64> {
        let mut v = self.tau.clone();
        v.extend(self.phi.iter().flatten());
        v.extend(self.psi.iter().flatten());
        v
    }

    pub fn from_coefficients(coef: &[f64], d: usize, q: usize, w1: SimplexWeights) -> Result<Self> {
        let k = d - 1;
        if coef.len() != Self::n_coefficients(d, q) {
            return Err(EscError::LengthMismatch {
                expected: Self::n_coefficients(d, q),
                got: coef.len(),
            });
        }
        let tau = coef[..k].to_vec();
        let phi = coef[k..k + k * k].chunks_exact(k).map(<[f64]>::to_vec).collect();
        let psi = if q == 0 {
            vec![Vec::new(); k]
        } else {
            coef[k + k * k..].chunks_exact(q).map(<[f64]>::to_vec).collect()
        };
        Ok(Self { tau, phi, psi, w1 })
    }
}

/// Evaluates the weight dynamics on slices with reusable buffers.
#[derive(Debug, Clone)]
pub struct WeightDynamics {
    cm: ContrastMatrix,
    z: Vec<f64>,
    lw: Vec<f64>,
}

impl WeightDynamics {
    pub fn new(d: usize) -> Result<Self> {
        Ok(Self {
            cm: ContrastMatrix::new(d)?,
            z: vec![0.0; d - 1],
            lw: vec![0.0; d - 1],
        })
    }

    pub fn contrast(&self) -> &ContrastMatrix {
        &self.cm
    }

    /// One step of the recursion into `out`; returns whether the result had
    /// to be clamped away from the boundary.
    pub fn step(&mut self, theta: &ThetaParams, w: &[f64], y: &[f64], out: &mut [f64]) -> bool {
        self.cm.ilr_into(w, &mut self.lw);
        self.step_from_ilr(theta, y, out)
    }

    /// Like [`WeightDynamics::step`] with `ilr(w)` already in `ilr_w`.
    pub fn step_ilr(&mut self, theta: &ThetaParams, ilr_w: &[f64], y: &[f64], out: &mut [f64]) -> bool {
        self.lw.copy_from_slice(ilr_w);
        self.step_from_ilr(theta, y, out)
    }

    fn step_from_ilr(&mut self, theta: &ThetaParams, y: &[f64], out: &mut [f64]) -> bool {
        for (i, zi) in self.z.iter_mut().enumerate() {
            let mut acc = theta.tau[i];
            for (c, l) in theta.phi[i].iter().zip(&self.lw) {
                acc += c * l;
            }
            for (c, yy) in theta.psi[i].iter().zip(y) {
                acc += c * yy;
            }
            *zi = acc;
        }
        if self.z.iter().any(|x| !x.is_finite()) {
            // the recursion blew up; fall back to the boundary-safe uniform point
            let u = 1.0 / out.len() as f64;
            out.iter_mut().for_each(|o| *o = u);
            return true;
        }
        self.cm.ilr_inv_into(&self.z, out);
        clamp_weights(out)
    }
}

/// Clamps components below [`WEIGHT_FLOOR`] and re-closes.
pub fn clamp_weights(w: &mut [f64]) -> bool {
    if w.iter().all(|&x| x >= WEIGHT_FLOOR) {
        return false;
    }
    for x in w.iter_mut() {
        if !(*x >= WEIGHT_FLOOR) {
            *x = WEIGHT_FLOOR;
        }
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    true
}

/// `w_{t+1} = ilr⁻¹(τ + Φ ilr(w_t) + Ψ y_t)`.
pub fn step_weights(theta: &ThetaParams, w_t: &SimplexWeights, y_t: &[f64]) -> Result<SimplexWeights> {
    theta.validate()?;
    if w_t.dim() != theta.dim() {
        return Err(EscError::LengthMismatch {
            expected: theta.dim(),
            got: w_t.dim(),
        });
    }
    if y_t.len() != theta.covariate_dim() {
        return Err(EscError::LengthMismatch {
            expected: theta.covariate_dim(),
            got: y_t.len(),
        });
    }
    let mut dynamics = WeightDynamics::new(theta.dim())?;
    let mut out = vec![0.0; theta.dim()];
    dynamics.step(theta, w_t.as_slice(), y_t, &mut out);
    Ok(SimplexWeights::from_raw(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn balance(w: &[f64]) -> Vec<f64> {
        let d = w.len();
        (0..d - 1)
            .map(|k| {
                let r = (d - k - 1) as f64;
                let gm = w[k + 1..].iter().map(|x| x.ln()).sum::<f64>() / r;
                (r / (r + 1.0)).sqrt() * (w[k].ln() - gm)
            })
            .collect()
    }

    #[test]
    fn closing_examples() {
        let w = closing(&[1.0, 2.0, 1.0]).unwrap();
        assert_eq!(w.as_slice(), &[0.25, 0.5, 0.25]);
        assert_eq!(closing(w.as_slice()).unwrap(), w);
        assert_eq!(closing(&[3.0, 6.0, 3.0]).unwrap(), w);
        assert!(closing(&[1.0, 0.0]).is_err());
        assert!(closing(&[1.0, -1.0]).is_err());
    }

    #[test]
    fn contrast_small_cases() {
        let h = 0.5f64.sqrt();
        let v2 = contrast_matrix(2).unwrap();
        assert!((v2.get(0, 0) - h).abs() < 1e-15 && (v2.get(1, 0) + h).abs() < 1e-15);
        let v3 = contrast_matrix(3).unwrap();
        let s6 = 1.0 / 6f64.sqrt();
        let expect = [[(2.0f64 / 3.0).sqrt(), 0.0], [-s6, h], [-s6, -h]];
        for (r, row) in expect.iter().enumerate() {
            for (c, e) in row.iter().enumerate() {
                assert!((v3.get(r, c) - e).abs() < 1e-15);
            }
        }
        assert!(contrast_matrix(1).is_err());
    }

    #[test]
    fn ilr_examples() {
        let u = SimplexWeights::uniform(4);
        assert!(ilr(&u).unwrap().iter().all(|z| z.abs() < 1e-15));
        let e = std::f64::consts::E;
        let w = SimplexWeights::new(vec![e / (1.0 + e), 1.0 / (1.0 + e)]).unwrap();
        assert!((ilr(&w).unwrap()[0] - 0.5f64.sqrt()).abs() < 1e-12);
        let back = ilr_inv(&[0.5f64.sqrt()]).unwrap();
        assert!((back.as_slice()[0] - e / (1.0 + e)).abs() < 1e-12);
        let zero = ilr_inv(&[0.0, 0.0]).unwrap();
        assert!(zero.as_slice().iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn covariate_examples() {
        let y = build_covariates(&[1.0, 1.0, 1.0], 3.0, 0.01).unwrap();
        assert!(y.iter().all(|v| v.abs() < 1e-15));

        let y = build_covariates(&[1.0, -1.0, 2.0], 2.0, 0.01).unwrap();
        let pos = closing(&[2.0, 0.01, 4.0]).unwrap();
        let neg = closing(&[0.01, 2.0, 0.01]).unwrap();
        let mut expect = balance(pos.as_slice());
        expect.extend(balance(neg.as_slice()));
        for (a, b) in y.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(build_covariates(&[1.0, 2.0], 1.0, 0.0).is_err());
    }

    #[test]
    fn covariates_scale_invariant_in_s() {
        let x = [1.0, -1.0, 2.0];
        let a = build_covariates(&x, 2.0, 0.01).unwrap();
        let b = build_covariates(&x, 6.0, 0.01).unwrap();
        // no component of x*s is within the clamp at either scale except
        // through the ε entries, which differ; compare the unclamped half
        assert_eq!(a.len(), b.len());
        let c = build_covariates(&[1.0, 2.0, 3.0], 2.0, 0.01).unwrap();
        let d = build_covariates(&[1.0, 2.0, 3.0], 5.0, 0.01).unwrap();
        for (u, v) in c.iter().zip(&d) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn step_examples() {
        let w = SimplexWeights::new(vec![0.2, 0.3, 0.5]).unwrap();
        let y = vec![0.4, -0.2, 1.0, 0.3];
        let zero = ThetaParams::zeros(3, 4);
        let out = step_weights(&zero, &w, &y).unwrap();
        assert!(out.as_slice().iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
        let id = ThetaParams::identity(3, 4, w.clone());
        let out = step_weights(&id, &w, &y).unwrap();
        for (a, b) in out.as_slice().iter().zip(w.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(step_weights(&zero, &w, &y[..2]).is_err());
    }

    #[test]
    fn coefficient_packing() {
        let mut t = ThetaParams::zeros(3, 4);
        t.tau = vec![1.0, 2.0];
        t.phi[1][0] = 3.0;
        t.psi[0][3] = 4.0;
        let c = t.to_coefficients();
        assert_eq!(c.len(), ThetaParams::n_coefficients(3, 4));
        let back = ThetaParams::from_coefficients(&c, 3, 4, t.w1.clone()).unwrap();
        assert_eq!(back, t);
    }

    fn interior(d: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..1.0, d).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn matrix_form_matches_balances(w in interior(5)) {
            let sw = SimplexWeights::new(w.clone()).unwrap();
            let a = ilr(&sw).unwrap();
            for (x, y) in a.iter().zip(balance(&w)) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn round_trips(w in interior(4), z in prop::collection::vec(-17.0f64..17.0, 3)) {
            let sw = SimplexWeights::new(w.clone()).unwrap();
            let back = ilr_inv(&ilr(&sw).unwrap()).unwrap();
            for (a, b) in back.as_slice().iter().zip(&w) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            let zz = ilr(&ilr_inv(&z).unwrap()).unwrap();
            for (a, b) in zz.iter().zip(&z) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn steps_stay_on_simplex(w in interior(3),
                                 coef in prop::collection::vec(-3.0f64..3.0, 14),
                                 y in prop::collection::vec(-5.0f64..5.0, 4)) {
            let sw = SimplexWeights::new(w).unwrap();
            let theta = ThetaParams::from_coefficients(&coef, 3, 4, sw.clone()).unwrap();
            let out = step_weights(&theta, &sw, &y).unwrap();
            let s: f64 = out.as_slice().iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(out.as_slice().iter().all(|&x| x > 0.0 && x < 1.0));
        }
    }
}
