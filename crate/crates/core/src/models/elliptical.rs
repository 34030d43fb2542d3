//! Exponentially weighted covariances and the elliptical allocation of ES.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::composition::clamp_weights;
use crate::error::{EscError, Result};
use crate::panel::{ForecastRecord, LossPanel, SimplexWeights};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EwmaCovSpec {
    pub lambda: f64,
    pub floor: f64,
}

impl Default for EwmaCovSpec {
    fn default() -> Self {
        Self {
            lambda: 0.97,
            floor: 1e-10,
        }
    }
}

impl EwmaCovSpec {
    pub fn new(lambda: f64, floor: f64) -> Result<Self> {
        let s = Self { lambda, floor };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(EscError::param("lambda", "must lie in (0,1)"));
        }
        if !(self.floor > 0.0) {
            return Err(EscError::param("floor", "must be positive"));
        }
        Ok(())
    }
}

/// Raises every eigenvalue of a symmetric matrix to at least `floor`.
pub fn clamp_eigenvalues(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return sym;
    }
    let lam = eig.eigenvalues.map(|l| l.max(floor));
    let v = &eig.eigenvectors;
    let out = v * DMatrix::from_diagonal(&lam) * v.transpose();
    (&out + out.transpose()) * 0.5
}

fn window_mean(window: &LossPanel) -> DVector<f64> {
    let d = window.dim();
    let mut m = DVector::zeros(d);
    for row in window.rows() {
        for (mj, x) in m.iter_mut().zip(row) {
            *mj += x;
        }
    }
    m / window.len() as f64
}

/// Predictive covariances `Σ_1, …, Σ_{n+1}` of the demeaned window:
/// `Σ_1` is the equal-weight sample covariance and
/// `Σ_{t+1} = λ Σ_t + (1-λ) e_t e_tᵀ`. Matrices are not yet clamped.
fn ewma_path_raw(window: &LossPanel, lambda: f64) -> Vec<DMatrix<f64>> {
    let d = window.dim();
    let n = window.len();
    let mean = window_mean(window);
    let demeaned: Vec<DVector<f64>> = window
        .rows()
        .map(|r| DVector::from_column_slice(r) - &mean)
        .collect();
    let mut sample = DMatrix::zeros(d, d);
    for e in &demeaned {
        sample += e * e.transpose();
    }
    sample /= n as f64;
    let mut out = Vec::with_capacity(n + 1);
    let mut cur = sample;
    out.push(cur.clone());
    for e in &demeaned {
        cur = &cur * lambda + (e * e.transpose()) * (1.0 - lambda);
        out.push(cur.clone());
    }
    out
}

fn check_window(window: &LossPanel) -> Result<()> {
    if window.len() < 2 {
        return Err(EscError::param("window", "need at least 2 rows"));
    }
    Ok(())
}

/// Exponentially weighted covariance after the whole window, eigenvalues
/// clamped at `spec.floor`.
pub fn ewma_cov(window: &LossPanel, spec: &EwmaCovSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    check_window(window)?;
    let path = ewma_path_raw(window, spec.lambda);
    Ok(clamp_eigenvalues(path.last().expect("nonempty"), spec.floor))
}

/// Clamped predictive covariances `Σ_1, …, Σ_{n+1}`; `Σ_t` uses rows
/// before `t` only.
pub fn ewma_cov_path(window: &LossPanel, spec: &EwmaCovSpec) -> Result<Vec<DMatrix<f64>>> {
    spec.validate()?;
    check_window(window)?;
    Ok(ewma_path_raw(window, spec.lambda)
        .iter()
        .map(|m| clamp_eigenvalues(m, spec.floor))
        .collect())
}

/// `μ + Σ1 (ES - 1ᵀμ) / (1ᵀΣ1)`.
pub fn elliptical_allocation(mu: &[f64], sigma: &DMatrix<f64>, es_total: f64) -> Result<Vec<f64>> {
    let d = mu.len();
    if sigma.nrows() != d || sigma.ncols() != d {
        return Err(EscError::Dimension(format!(
            "covariance is {}x{}, expected {d}x{d}",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    let row_sums: Vec<f64> = (0..d).map(|i| sigma.row(i).sum()).collect();
    let q: f64 = row_sums.iter().sum();
    if !(q > 0.0) {
        return Err(EscError::Degenerate(format!("1ᵀΣ1 = {q} is not positive")));
    }
    let mu_sum: f64 = mu.iter().sum();
    let excess = es_total - mu_sum;
    let mut out: Vec<f64> = mu
        .iter()
        .zip(&row_sums)
        .map(|(m, r)| m + r / q * excess)
        .collect();
    // put the rounding residue on the largest component so Σ out = ES
    let gap = es_total - out.iter().sum::<f64>();
    let jmax = (0..d)
        .max_by(|&a, &b| out[a].abs().total_cmp(&out[b].abs()))
        .expect("d >= 1");
    out[jmax] += gap;
    Ok(out)
}

/// `Σ1 / 1ᵀΣ1`, clamped into the open simplex. Returns the weights and
/// whether clamping was needed.
pub fn elliptical_weights(sigma: &DMatrix<f64>) -> Result<(SimplexWeights, bool)> {
    let d = sigma.nrows();
    let mut w: Vec<f64> = (0..d).map(|i| sigma.row(i).sum()).collect();
    let q: f64 = w.iter().sum();
    if !(q > 0.0) {
        return Err(EscError::Degenerate(format!("1ᵀΣ1 = {q} is not positive")));
    }
    w.iter_mut().for_each(|x| *x /= q);
    let clamped = clamp_weights(&mut w);
    Ok((SimplexWeights::new(w)?, clamped))
}

/// Elliptical forecast: window mean, EWMA covariance and a given total ES.
pub fn elliptical_forecast(
    window: &LossPanel,
    spec: &EwmaCovSpec,
    var: f64,
    es: f64,
    alpha: f64,
) -> Result<ForecastRecord> {
    let sigma = ewma_cov(window, spec)?;
    let mu = window_mean(window);
    let esc = elliptical_allocation(mu.as_slice(), &sigma, es)?;
    ForecastRecord::new(esc, var, es, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn allocation_examples() {
        let out = elliptical_allocation(&[0.0; 3], &DMatrix::identity(3, 3), 3.0).unwrap();
        assert_eq!(out, vec![1.0, 1.0, 1.0]);
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0, 9.0]));
        let out = elliptical_allocation(&[0.0; 3], &s, 14.0).unwrap();
        for (a, b) in out.iter().zip([1.0, 4.0, 9.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let z = DMatrix::zeros(2, 2);
        assert!(elliptical_allocation(&[0.0; 2], &z, 1.0).is_err());
    }

    #[test]
    fn allocation_is_full() {
        let s = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, -0.2, 0.3, 1.0, 0.1, -0.2, 0.1, 0.7]);
        for es in [0.1, 3.3, 1e6, -2.0] {
            let out = elliptical_allocation(&[0.1, -0.3, 0.05], &s, es).unwrap();
            assert!((out.iter().sum::<f64>() - es).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicated_column_is_clamped() {
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|i| {
                let a = (i as f64 * 0.7).sin();
                vec![a, a, (i as f64 * 1.3).cos()]
            })
            .collect();
        let w = LossPanel::from_rows(&rows).unwrap();
        let spec = EwmaCovSpec::new(0.97, 1e-6).unwrap();
        let c = ewma_cov(&w, &spec).unwrap();
        let eig = SymmetricEigen::new(c).eigenvalues;
        let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((min - 1e-6).abs() < 1e-12, "{min}");
    }

    #[test]
    fn path_starts_at_sample_covariance() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![(i as f64).sin(), (i as f64 * 0.5).cos()]).collect();
        let w = LossPanel::from_rows(&rows).unwrap();
        let path = ewma_cov_path(&w, &EwmaCovSpec::default()).unwrap();
        assert_eq!(path.len(), 31);
        let last = ewma_cov(&w, &EwmaCovSpec::default()).unwrap();
        assert!((&path[30] - last).abs().max() < 1e-15);
        assert!(ewma_cov(&w.slice(0..1).unwrap(), &EwmaCovSpec::default()).is_err());
    }

    #[test]
    fn weights_clamped_for_negative_row_sums() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, -1.5, -1.5, 4.0]);
        let (w, clamped) = elliptical_weights(&s).unwrap();
        assert!(clamped);
        assert!(w.as_slice().iter().all(|&x| x > 0.0 && x < 1.0));
    }
}
