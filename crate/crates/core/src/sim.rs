//! Seeded simulators for the models estimated elsewhere in the crate. Used by
//! tests, benchmarks and the self-check.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::ingest::ReturnSeries;

pub fn normals<R: Rng + ?Sized>(n: usize, sd: f64, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| sd * Distribution::<f64>::sample(&StandardNormal, rng)).collect()
}

/// x_t = c + Σ α_j x_{t−j} + σ ε_t after `burn` discarded draws (started at 0).
pub fn simulate_ar<R: Rng + ?Sized>(c: f64, alpha: &[f64], sigma: f64, n: usize, burn: usize, rng: &mut R) -> Vec<f64> {
    let q = alpha.len();
    let mut x = vec![0.0; q];
    for _ in 0..n + burn {
        let t = x.len();
        let ar: f64 = (0..q).map(|j| alpha[j] * x[t - 1 - j]).sum();
        let e: f64 = StandardNormal.sample(rng);
        x.push(c + ar + sigma * e);
    }
    x.split_off(x.len() - n)
}

/// Random-walk paths `[ℓ][t]` starting at `start` with step sd √λ.
pub fn random_walk_paths<R: Rng + ?Sized>(start: &[f64], lambda: f64, periods: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let sd = lambda.sqrt();
    start
        .iter()
        .map(|&a| {
            let mut v = a;
            (0..periods)
                .map(|t| {
                    if t > 0 {
                        let e: f64 = StandardNormal.sample(rng);
                        v += sd * e;
                    }
                    v
                })
                .collect()
        })
        .collect()
}

/// AR series whose coefficients at period t are `paths[ℓ][t]`. The q
/// presample values come from a burn-in run at the first-period
/// coefficients; the returned series conditions on them.
pub fn simulate_tvar<R: Rng + ?Sized>(c: f64, paths: &[Vec<f64>], sigma: f64, burn: usize, rng: &mut R) -> ReturnSeries {
    let q = paths.len();
    let periods = paths.first().map_or(0, |p| p.len());
    let first: Vec<f64> = paths.iter().map(|p| p[0]).collect();
    let mut x = simulate_ar(c, &first, sigma, q, burn, rng);
    for t in 0..periods {
        let n = x.len();
        let ar: f64 = (0..q).map(|j| paths[j][t] * x[n - 1 - j]).sum();
        let e: f64 = StandardNormal.sample(rng);
        x.push(c + ar + sigma * e);
    }
    let values = x.split_off(q);
    let mut r = ReturnSeries::from_values(values);
    x.reverse();
    r.presample = x;
    r
}
