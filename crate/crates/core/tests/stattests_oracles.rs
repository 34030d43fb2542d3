//! Simulation oracles for the long-run variance and the backtests.

use esc_core::identification::{ident_es, ident_esc, ident_var};
use esc_core::numeric::{norm_pdf, norm_quantile};
use esc_core::stattests::{calibration_test, dm_test, hac_lrv, wald_joint, WaldMode, Zone};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn normals(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

#[test]
fn lrv_of_iid_noise_is_one() {
    let est = hac_lrv(&normals(100_000, 1)).unwrap();
    assert!((est.variance - 1.0).abs() < 0.05, "{}", est.variance);
}

/// AR(1) with unit marginal variance: innovations have sd √(1−ρ²) and the
/// long-run variance is (1−ρ²)/(1−ρ)² = 3 at ρ = 0.5.
#[test]
fn lrv_of_ar1_matches_analytic_value() {
    let rho: f64 = 0.5;
    let z = normals(100_000, 2);
    let sd = (1.0 - rho * rho).sqrt();
    let mut x = Vec::with_capacity(z.len());
    let mut prev = z[0];
    for e in &z {
        prev = rho * prev + sd * e;
        x.push(prev);
    }
    let est = hac_lrv(&x).unwrap();
    let target = (1.0 - rho * rho) / (1.0 - rho).powi(2);
    assert!((est.variance - target).abs() < 0.1 * target, "{} vs {target}", est.variance);
}

#[test]
fn dm_detects_shifted_differences() {
    let d: Vec<f64> = normals(10_000, 3).iter().map(|z| 0.5 + z).collect();
    let r = dm_test(&d, 0.05).unwrap();
    assert!(r.p_equal < 1e-6);
    assert_eq!(r.zone, Zone::Red);
}

/// S ~ N(0,1) and X_1 = S/2 + independent noise, so that E[X_1 | S > v]
/// = E[S | S > v]/2.
fn gaussian_pair(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let z = normals(2 * n, seed);
    let s: Vec<f64> = z[..n].to_vec();
    let x: Vec<f64> = s.iter().zip(&z[n..]).map(|(s, e)| 0.5 * s + 0.3 * e).collect();
    (s, x)
}

#[test]
fn calibration_flags_over_estimated_var_green() {
    let alpha = 0.975;
    let (s, _) = gaussian_pair(10_000, 4);
    let v = norm_quantile(alpha) + 1.0;
    let id: Vec<f64> = s.iter().map(|&si| ident_var(v, si, alpha)).collect();
    assert_eq!(calibration_test(&id, 0.05).unwrap().zone, Zone::Green);
}

#[test]
fn calibration_flags_under_estimated_esc_red() {
    let alpha = 0.975;
    let (s, x) = gaussian_pair(10_000, 5);
    let v = norm_quantile(alpha);
    let truth = 0.5 * norm_pdf(v) / (1.0 - alpha);
    let id: Vec<f64> = s
        .iter()
        .zip(&x)
        .map(|(&si, &xi)| ident_esc(truth - 2.0, v, xi, si))
        .collect();
    assert_eq!(calibration_test(&id, 0.05).unwrap().zone, Zone::Red);
}

#[test]
fn wald_leq_mode_rejects_shifted_esc_column() {
    let alpha = 0.975;
    let (s, x) = gaussian_pair(10_000, 6);
    let v = norm_quantile(alpha);
    let truth = 0.5 * norm_pdf(v) / (1.0 - alpha);
    let rows: Vec<Vec<f64>> = s
        .iter()
        .zip(&x)
        .map(|(&si, &xi)| vec![ident_var(v, si, alpha), ident_esc(truth, v, xi, si) + 0.5])
        .collect();
    let r = wald_joint(&rows, 0.05, WaldMode::LeqLex).unwrap();
    assert!(r.p_value() < 0.01, "p = {}", r.p_value());
    assert!(r.p_equal < 0.01);
}

/// Size of the two-sided Wald test on (V^VaR, V^ES) at the analytic Gaussian
/// VaR and ES. With α = 0.975 the ES column is driven by a few exceedances
/// and its mean is skewed, so the χ² approximation needs a long sample.
#[test]
fn wald_two_sided_size_on_a_long_sample() {
    let alpha = 0.975;
    let v = norm_quantile(alpha);
    let e = norm_pdf(v) / (1.0 - alpha);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let reps = 1000;
    let rejections = (0..reps)
        .filter(|_| {
            let rows: Vec<Vec<f64>> = (0..16_000)
                .map(|_| {
                    let s: f64 = rng.sample(StandardNormal);
                    vec![ident_var(v, s, alpha), ident_es(v, e, s, alpha)]
                })
                .collect();
            wald_joint(&rows, 0.05, WaldMode::TwoSided).unwrap().p_value() < 0.05
        })
        .count();
    let rate = rejections as f64 / reps as f64;
    assert!((0.03..=0.08).contains(&rate), "size {rate}");
}

#[test]
fn dm_size_under_iid_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let rejections = (0..1000)
        .filter(|_| {
            let d: Vec<f64> = (0..500).map(|_| rng.sample(StandardNormal)).collect();
            dm_test(&d, 0.05).unwrap().p_equal < 0.05
        })
        .count();
    assert!((30..=70).contains(&rejections), "{rejections}/1000");
}
