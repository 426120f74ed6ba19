//! Quick seeded oracle checks run by the `selfcheck` subcommand.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tvar_core::efficiency::{interim_gradient, interim_multipliers, longrun_gradient, longrun_multiplier, spectral_radius};
use tvar_core::sim::{normals, random_walk_paths, simulate_tvar};
use tvar_core::spectral::{hp_filter, periodogram};
use tvar_core::tvar::{build_stacked, kalman_oracle, ols_prior, solve_stacked, Intercept, SolveOptions};
use tvar_core::Result;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

pub fn run_all(seed: u64) -> Result<Vec<Check>> {
    Ok(vec![
        stacked_matches_smoother(seed, 20)?,
        gradients_match_differences(seed, 100)?,
        hp_keeps_lines()?,
        periodogram_parseval(seed)?,
    ])
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Stacked paths and conditional covariances against the Kalman smoother on
/// random instances: T in 40..=300, q cycling 1..=3, λ cycling over
/// {1e-3, 1e-1, 1, 10}, intercept held at the stacked estimate.
pub fn stacked_matches_smoother(seed: u64, instances: usize) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lambdas = [1e-3, 1e-1, 1.0, 10.0];
    let mut worst = 0.0f64;
    for i in 0..instances {
        let q = 1 + i % 3;
        let lambda = lambdas[(i / 3) % 4];
        let t_len = rng.random_range(40..=300);
        let start: Vec<f64> = (0..q).map(|_| rng.random_range(-0.3..0.3)).collect();
        let paths = random_walk_paths(&start, 1e-4, t_len, &mut rng);
        let r = simulate_tvar(0.1, &paths, 1.0, 50, &mut rng);
        let prior = ols_prior(&r, q)?;
        let s = build_stacked(&r, q, &prior, lambda, 1.0)?;
        let fit = solve_stacked(&s, SolveOptions::default())?;
        let fixed = solve_stacked(&s.clone().with_intercept(Intercept::Fixed(fit.intercept)), SolveOptions::default())?;
        let k = kalman_oracle(&r, q, &prior, &(DMatrix::identity(q, q) * lambda), lambda, fit.intercept)?;
        for l in 0..q {
            worst = worst.max(sup_diff(&fit.paths[l], &k.smoothed_states[l]));
        }
        for t in 0..fit.periods() {
            let scaled: Vec<f64> = fixed.model_covariances[t].iter().map(|v| v / fixed.sigma2).collect();
            worst = worst.max(sup_diff(&scaled, &k.smoothed_covariances[t]));
        }
    }
    Ok(Check { name: "stacked solve equals Kalman smoother", passed: worst < 1e-6, detail: format!("sup gap {worst:.2e} (tol 1e-6)") })
}

/// Interim (k ≤ 12) and long-run gradients against central differences on
/// random stable coefficient vectors, and interim partial sums against φ.
pub fn gradients_match_differences(seed: u64, vectors: usize) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
    let (mut worst, mut sum_gap, mut done) = (0.0f64, 0.0f64, 0);
    let h = 1e-6;
    while done < vectors {
        let q = rng.random_range(1..=4);
        let a: Vec<f64> = (0..q).map(|_| rng.random_range(-0.8..0.8)).collect();
        if spectral_radius(&a) >= 0.9 {
            continue;
        }
        done += 1;
        let f = longrun_gradient(&a)?;
        for l in 0..q {
            let (mut p, mut m) = (a.clone(), a.clone());
            p[l] += h;
            m[l] -= h;
            let fd = (longrun_multiplier(&p)? - longrun_multiplier(&m)?) / (2.0 * h);
            worst = worst.max((f[l] - fd).abs() / fd.abs());
            for k in 1..=12 {
                let g = interim_gradient(&a, k)[l];
                let fd = (interim_multipliers(&p, k)[k] - interim_multipliers(&m, k)[k]) / (2.0 * h);
                worst = worst.max((g - fd).abs() / fd.abs().max(1e-2));
            }
        }
        let partial: f64 = interim_multipliers(&a, 400).iter().sum();
        sum_gap = sum_gap.max((partial - longrun_multiplier(&a)?).abs());
    }
    Ok(Check {
        name: "multiplier gradients equal finite differences",
        passed: worst < 1e-4 && sum_gap < 1e-6,
        detail: format!("worst relative gap {worst:.2e} (tol 1e-4), partial-sum gap {sum_gap:.2e} (tol 1e-6)"),
    })
}

fn hp_keeps_lines() -> Result<Check> {
    let x: Vec<f64> = (0..200).map(|t| 0.5 + 0.01 * t as f64).collect();
    let d = hp_filter(&x, 129_600.0)?;
    let gap = sup_diff(&d.trend, &x);
    Ok(Check { name: "HP trend of a straight line is the line", passed: gap < 1e-6, detail: format!("sup gap {gap:.2e} (tol 1e-6)") })
}

fn periodogram_parseval(seed: u64) -> Result<Check> {
    let x = normals(301, 1.0, &mut ChaCha8Rng::seed_from_u64(seed ^ 0x51));
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let ss: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    let p = periodogram(&x, true, None)?;
    let twice: f64 = 2.0 * p.density.iter().sum::<f64>();
    let rel = (twice - ss).abs() / ss;
    Ok(Check { name: "periodogram satisfies Parseval", passed: rel < 1e-10, detail: format!("relative gap {rel:.2e} (tol 1e-10)") })
}
