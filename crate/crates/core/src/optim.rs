//! Derivative-free minimization by the Nelder–Mead simplex method with
//! seeded restarts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

/// Settings for a single Nelder–Mead run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMead {
    /// Stop when the spread of objective values over the simplex falls below
    /// `tol * (1 + |f_best|)`.
    pub tol: f64,
    pub max_evals: usize,
    /// Edge length of the initial simplex.
    pub step: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_evals: 20_000,
            step: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

fn eval<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> f64 {
    let v = f(x);
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

impl NelderMead {
    pub fn minimize<F: Fn(&[f64]) -> f64>(&self, f: F, x0: &[f64]) -> OptimResult {
        let n = x0.len();
        if n == 0 {
            return OptimResult {
                x: Vec::new(),
                value: eval(&f, x0),
                evals: 1,
                converged: true,
            };
        }
        let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
        let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        pts.push(x0.to_vec());
        for i in 0..n {
            let mut p = x0.to_vec();
            p[i] += if p[i] != 0.0 { self.step * p[i].abs().max(1.0) } else { self.step };
            pts.push(p);
        }
        let mut vals: Vec<f64> = pts.iter().map(|p| eval(&f, p)).collect();
        let mut evals = n + 1;
        let mut converged = false;
        let mut centroid = vec![0.0; n];
        let mut trial = vec![0.0; n];
        let mut trial2 = vec![0.0; n];

        while evals < self.max_evals {
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
            pts = order.iter().map(|&i| pts[i].clone()).collect();
            vals = order.iter().map(|&i| vals[i]).collect();

            let best = vals[0];
            let worst = vals[n];
            if worst.is_finite() && (worst - best) <= self.tol * (1.0 + best.abs()) {
                converged = true;
                break;
            }

            centroid.iter_mut().for_each(|c| *c = 0.0);
            for p in &pts[..n] {
                for (c, x) in centroid.iter_mut().zip(p) {
                    *c += x / n as f64;
                }
            }
            let lerp = |out: &mut [f64], t: f64, from: &[f64]| {
                for ((o, c), w) in out.iter_mut().zip(&centroid).zip(from) {
                    *o = c + t * (w - c);
                }
            };

            // reflection
            lerp(&mut trial, -alpha, &pts[n]);
            let fr = eval(&f, &trial);
            evals += 1;
            if fr < vals[0] {
                lerp(&mut trial2, -gamma, &pts[n]);
                let fe = eval(&f, &trial2);
                evals += 1;
                if fe < fr {
                    pts[n].copy_from_slice(&trial2);
                    vals[n] = fe;
                } else {
                    pts[n].copy_from_slice(&trial);
                    vals[n] = fr;
                }
                continue;
            }
            if fr < vals[n - 1] {
                pts[n].copy_from_slice(&trial);
                vals[n] = fr;
                continue;
            }
            // contraction, outside or inside
            let (t, reference) = if fr < vals[n] { (-rho, fr) } else { (rho, vals[n]) };
            lerp(&mut trial2, t, &pts[n]);
            let fc = eval(&f, &trial2);
            evals += 1;
            if fc < reference {
                pts[n].copy_from_slice(&trial2);
                vals[n] = fc;
                continue;
            }
            // shrink towards the best point
            let best_pt = pts[0].clone();
            for i in 1..=n {
                for (x, b) in pts[i].iter_mut().zip(&best_pt) {
                    *x = b + sigma * (*x - b);
                }
                vals[i] = eval(&f, &pts[i]);
            }
            evals += n;
        }

        let (ib, _) = vals
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("simplex is nonempty");
        OptimResult {
            x: pts[ib].clone(),
            value: vals[ib],
            evals,
            converged,
        }
    }

    /// Minimizes from `x0` and from `perturbations` seeded Gaussian
    /// perturbations of `x0` with standard deviation `scale`, in parallel.
    pub fn minimize_restarts<F>(
        &self,
        f: F,
        x0: &[f64],
        perturbations: usize,
        scale: f64,
        seed: u64,
    ) -> OptimResult
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let mut starts = vec![x0.to_vec()];
        starts.extend(perturbed_starts(x0, perturbations, scale, seed));
        self.minimize_from(f, &starts)
    }

    /// Runs one minimization per start in parallel and returns the best.
    /// Results within `tol` of the best count as ties, which go to the
    /// earliest start, so the outcome does not depend on thread scheduling
    /// and simpler starts win when nothing is gained.
    pub fn minimize_from<F>(&self, f: F, starts: &[Vec<f64>]) -> OptimResult
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        assert!(!starts.is_empty(), "at least one start");
        let results: Vec<OptimResult> = starts.par_iter().map(|s| self.minimize(&f, s)).collect();
        let any_converged = results.iter().any(|r| r.converged);
        let evals = results.iter().map(|r| r.evals).sum();
        let best_value = results
            .iter()
            .map(|r| r.value)
            .fold(f64::INFINITY, f64::min);
        let cutoff = best_value + self.tol * (1.0 + best_value.abs());
        let mut best = results
            .into_iter()
            .find(|r| r.value <= cutoff || r.value == best_value)
            .expect("some start attains the minimum");
        best.converged = any_converged;
        best.evals = evals;
        best
    }
}

/// `count` seeded Gaussian perturbations of `x0`, one ChaCha stream each.
pub fn perturbed_starts(x0: &[f64], count: usize, scale: f64, seed: u64) -> Vec<Vec<f64>> {
    (1..=count)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            x0.iter()
                .map(|x| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    x + scale * z
                })
                .collect()
        })
        .collect()
}
