//! Impulse responses of an AR(q) (interim multipliers), their sum (the
//! long-run multiplier), delta-method standard errors, per-period paths from
//! a time-varying fit, and a residual bootstrap test of zero coefficients.
//!
//! A long-run multiplier of one means shocks are neither amplified nor
//! reversed, the benchmark for an informationally efficient market.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::ingest::{ReturnSeries, YearMonth};
use crate::tvar::{build_stacked, ols_prior, solve_stacked, SolveOptions, TvarFit};

/// q×q companion matrix: first row α, identity on the subdiagonal.
pub fn companion(alpha: &[f64]) -> DMatrix<f64> {
    let q = alpha.len();
    let mut a = DMatrix::zeros(q, q);
    for (j, v) in alpha.iter().enumerate() {
        a[(0, j)] = *v;
    }
    for i in 1..q {
        a[(i, i - 1)] = 1.0;
    }
    a
}

/// Largest eigenvalue modulus of the companion matrix.
pub fn spectral_radius(alpha: &[f64]) -> f64 {
    match alpha.len() {
        0 => 0.0,
        1 => alpha[0].abs(),
        _ => companion(alpha)
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max),
    }
}

/// β₀ = 1, β_k = Σ_{j=1..min(k,q)} β_{k−j} α_j.
pub fn interim_multipliers(alpha: &[f64], horizon: usize) -> Vec<f64> {
    let mut beta = Vec::with_capacity(horizon + 1);
    beta.push(1.0);
    for k in 1..=horizon {
        let v = (1..=k.min(alpha.len())).map(|j| beta[k - j] * alpha[j - 1]).sum();
        beta.push(v);
    }
    beta
}

/// ∂β_k/∂α = Σ_{m=0}^{k−1} β_m J (Aᵀ)^{k−1−m}, obtained by differentiating
/// β_k = J A^k Jᵀ. Entry ℓ of J (Aᵀ)^j is the (ℓ, 0) entry of A^j.
pub fn interim_gradient(alpha: &[f64], k: usize) -> Vec<f64> {
    let q = alpha.len();
    if k == 0 {
        return vec![0.0; q];
    }
    let beta = interim_multipliers(alpha, k);
    let a = companion(alpha);
    // first columns of A^0 .. A^{k-1}
    let mut cols = Vec::with_capacity(k);
    let mut c = DVector::zeros(q);
    c[0] = 1.0;
    for _ in 0..k {
        cols.push(c.clone());
        c = &a * c;
    }
    let mut g = vec![0.0; q];
    for m in 0..k {
        let col = &cols[k - 1 - m];
        for l in 0..q {
            g[l] += beta[m] * col[l];
        }
    }
    g
}

fn quad_form(g: &[f64], sigma: &DMatrix<f64>) -> f64 {
    let v = DVector::from_column_slice(g);
    (v.transpose() * sigma * &v)[(0, 0)]
}

/// √(G_k Σ_α G_kᵀ / n). Pass n = 1 when Σ_α is already a finite-sample
/// covariance.
pub fn interim_se(alpha: &[f64], sigma_alpha: &DMatrix<f64>, k: usize, n: f64) -> f64 {
    (quad_form(&interim_gradient(alpha, k), sigma_alpha) / n).max(0.0).sqrt()
}

/// φ = 1 / (1 − Σα).
pub fn longrun_multiplier(alpha: &[f64]) -> Result<f64> {
    let denom = 1.0 - alpha.iter().sum::<f64>();
    if denom.abs() < 1e-12 {
        return Err(Error::numeric("coefficients sum to one (unit root): long-run multiplier undefined"));
    }
    Ok(1.0 / denom)
}

/// ∂φ/∂α = φ² (1, …, 1).
pub fn longrun_gradient(alpha: &[f64]) -> Result<Vec<f64>> {
    let phi = longrun_multiplier(alpha)?;
    Ok(vec![phi * phi; alpha.len()])
}

pub fn longrun_se(alpha: &[f64], sigma_alpha: &DMatrix<f64>, n: f64) -> Result<f64> {
    Ok((quad_form(&longrun_gradient(alpha)?, sigma_alpha) / n).max(0.0).sqrt())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiplierPath {
    pub dates: Vec<YearMonth>,
    pub horizon: usize,
    /// `interim[t][k]`, k = 0..=H.
    pub interim: Vec<Vec<f64>>,
    /// `interim_se[t][k-1]`, k = 1..=H.
    pub interim_se: Vec<Vec<f64>>,
    /// Withheld (None) where the local AR is not stationary.
    pub longrun: Vec<Option<f64>>,
    pub longrun_se: Vec<Option<f64>>,
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
    pub ci_level: f64,
    pub stationary: Vec<bool>,
    pub spectral_radius: Vec<f64>,
}

impl MultiplierPath {
    /// Long-run values of the stationary periods, in order.
    pub fn longrun_values(&self) -> Vec<f64> {
        self.longrun.iter().flatten().copied().collect()
    }

    pub fn all_stationary(&self) -> bool {
        self.stationary.iter().all(|&s| s)
    }

    /// `date,phi,se,lower,upper,stationary`; withheld values are empty.
    pub fn write_longrun_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["date", "phi", "se", "lower", "upper", "stationary"])?;
        let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for t in 0..self.dates.len() {
            wtr.write_record([
                self.dates[t].to_string(),
                f(self.longrun[t]),
                f(self.longrun_se[t]),
                f(self.lower[t]),
                f(self.upper[t]),
                self.stationary[t].to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Long format `date,horizon,beta` for surface plots.
    pub fn write_surface_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["date", "horizon", "beta"])?;
        for (d, row) in self.dates.iter().zip(&self.interim) {
            for (k, b) in row.iter().enumerate() {
                wtr.write_record([d.to_string(), k.to_string(), b.to_string()])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

fn normal_quantile(ci_level: f64) -> Result<f64> {
    if !(ci_level > 0.0 && ci_level < 1.0) {
        return Err(Error::config(format!("confidence level must be in (0, 1), got {ci_level}")));
    }
    let n = Normal::standard();
    Ok(n.inverse_cdf(0.5 + ci_level / 2.0))
}

/// Applies the multiplier formulas period by period with the fit's
/// covariance blocks. Pointwise normal intervals.
pub fn multiplier_path(fit: &TvarFit, horizon: usize, ci_level: f64) -> Result<MultiplierPath> {
    let z = normal_quantile(ci_level)?;
    let t_len = fit.periods();
    let mut out = MultiplierPath {
        dates: fit.dates.clone(),
        horizon,
        interim: Vec::with_capacity(t_len),
        interim_se: Vec::with_capacity(t_len),
        longrun: Vec::with_capacity(t_len),
        longrun_se: Vec::with_capacity(t_len),
        lower: Vec::with_capacity(t_len),
        upper: Vec::with_capacity(t_len),
        ci_level,
        stationary: Vec::with_capacity(t_len),
        spectral_radius: Vec::with_capacity(t_len),
    };
    for t in 0..t_len {
        let alpha = fit.coefficients_at(t);
        let sigma = fit.covariance_at(t);
        let rho = spectral_radius(&alpha);
        let stationary = rho < 1.0;
        out.interim.push(interim_multipliers(&alpha, horizon));
        out.interim_se.push((1..=horizon).map(|k| interim_se(&alpha, &sigma, k, 1.0)).collect());
        let (phi, se) = if stationary {
            let phi = longrun_multiplier(&alpha)?;
            (Some(phi), Some(longrun_se(&alpha, &sigma, 1.0)?))
        } else {
            (None, None)
        };
        out.lower.push(phi.zip(se).map(|(p, s)| p - z * s));
        out.upper.push(phi.zip(se).map(|(p, s)| p + z * s));
        out.longrun.push(phi);
        out.longrun_se.push(se);
        out.stationary.push(stationary);
        out.spectral_radius.push(rho);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub p_value: f64,
    pub observed: f64,
    pub replications: usize,
    pub statistics: Vec<f64>,
}

/// sup over periods and coefficients of |α_{ℓ,t}| / se_{ℓ,t}, model-based se.
pub fn sup_t_statistic(fit: &TvarFit) -> f64 {
    let se = fit.model_std_errors();
    let mut m = 0.0f64;
    for (path, s) in fit.paths.iter().zip(&se) {
        for (a, e) in path.iter().zip(s) {
            if *e > 0.0 {
                m = m.max(a.abs() / e);
            }
        }
    }
    m
}

/// Residual bootstrap of the null that every coefficient path is zero.
///
/// Each replication rebuilds the series as intercept + resampled centred
/// residuals, re-estimates with the same λ and prior weight (prior re-fitted
/// by OLS) and records [`sup_t_statistic`]. Replication i draws from stream i
/// of a ChaCha generator seeded with `seed`, so results do not depend on
/// thread scheduling.
pub fn bootstrap_joint_test(fit: &TvarFit, r: &ReturnSeries, replications: usize, seed: u64) -> Result<BootstrapResult> {
    if replications < 99 {
        return Err(Error::config(format!("bootstrap needs at least 99 replications, got {replications}")));
    }
    let mean = fit.residuals.iter().sum::<f64>() / fit.residuals.len() as f64;
    let centred: Vec<f64> = fit.residuals.iter().map(|e| e - mean).collect();
    let observed = sup_t_statistic(fit);
    let q = fit.q;
    let statistics = (0..replications)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut draw = || fit.intercept + *centred.choose(&mut rng).expect("nonempty residuals");
            let presample: Vec<f64> = r.presample.iter().map(|_| draw()).collect();
            let values: Vec<f64> = r.values.iter().map(|_| draw()).collect();
            let series = ReturnSeries { dates: r.dates.clone(), values, presample };
            let prior = ols_prior(&series, q)?;
            let s = build_stacked(&series, q, &prior, fit.lambda, fit.prior_weight)?;
            Ok(sup_t_statistic(&solve_stacked(&s, SolveOptions::default())?))
        })
        .collect::<Result<Vec<f64>>>()?;
    let exceed = statistics.iter().filter(|&&s| s >= observed).count();
    Ok(BootstrapResult { p_value: exceed as f64 / replications as f64, observed, replications, statistics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ar1_interim_is_geometric() {
        assert_eq!(interim_multipliers(&[0.5], 3), vec![1.0, 0.5, 0.25, 0.125]);
        assert_eq!(interim_multipliers(&[0.0, 0.0], 4), vec![1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn ar2_hand_recursion() {
        let b = interim_multipliers(&[0.3082, -0.0797], 2);
        assert_eq!(b[1], 0.3082);
        assert!((b[2] - (0.3082f64.powi(2) - 0.0797)).abs() < 1e-15);
        assert!((b[2] - 0.01528724).abs() < 1e-8);
    }

    #[test]
    fn longrun_examples() {
        assert_eq!(longrun_multiplier(&[0.0, 0.0]).unwrap(), 1.0);
        assert!((longrun_multiplier(&[0.3082, -0.0797]).unwrap() - 1.0 / 0.7715).abs() < 1e-12);
        assert!((longrun_multiplier(&[0.3082, -0.0797]).unwrap() - 1.29618).abs() < 1e-5);
        let partial: f64 = interim_multipliers(&[0.5], 50).iter().sum();
        assert!((partial - 2.0).abs() < 1e-12);
        assert!(matches!(longrun_multiplier(&[0.6, 0.4]), Err(Error::Numeric(_))));
    }

    #[test]
    fn interim_se_at_horizon_one_selects_first_coefficient() {
        let s = DMatrix::from_row_slice(2, 2, &[0.09, 0.01, 0.01, 0.04]);
        assert_eq!(interim_gradient(&[0.2, 0.1], 1), vec![1.0, 0.0]);
        assert!((interim_se(&[0.2, 0.1], &s, 1, 25.0) - (0.09f64 / 25.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn ar1_cubed_gradient() {
        let g = interim_gradient(&[0.5], 3);
        assert!((g[0] - 0.75).abs() < 1e-15);
        let h = 1e-6;
        let fd = (0.5f64 + h).powi(3) - (0.5f64 - h).powi(3);
        assert!((g[0] - fd / (2.0 * h)).abs() < 1e-6);
    }

    #[test]
    fn longrun_se_examples() {
        let se = longrun_se(&[0.5], &DMatrix::from_element(1, 1, 0.04), 100.0).unwrap();
        assert!((se - 0.08).abs() < 1e-15);
        let v = longrun_se(&[0.0, 0.0, 0.0], &DMatrix::identity(3, 3), 50.0).unwrap();
        assert!((v * v - 3.0 / 50.0).abs() < 1e-15);
    }

    #[test]
    fn longrun_gradient_finite_difference_at_table_values() {
        let a = [0.3082, -0.0797];
        let g = longrun_gradient(&a).unwrap();
        let h = 1e-6;
        for l in 0..2 {
            let mut p = a;
            let mut m = a;
            p[l] += h;
            m[l] -= h;
            let fd = (longrun_multiplier(&p).unwrap() - longrun_multiplier(&m).unwrap()) / (2.0 * h);
            assert!((g[l] - fd).abs() < 1e-8);
        }
    }

    #[test]
    fn spectral_radius_of_known_roots() {
        // (1 − 0.5L)(1 − 0.4L) = 1 − 0.9L + 0.2L²
        assert!((spectral_radius(&[0.9, -0.2]) - 0.5).abs() < 1e-12);
        // complex pair with modulus √0.5
        assert!((spectral_radius(&[1.0, -0.5]) - 0.5f64.sqrt()).abs() < 1e-12);
        assert!(spectral_radius(&[0.5, 0.6]) > 1.0);
    }

    fn stable_alpha() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-0.9f64..0.9, 1..5).prop_filter("stable", |a| spectral_radius(a) < 0.9)
    }

    proptest! {
        #[test]
        fn q1_multipliers_are_powers(a in -0.99f64..0.99, h in 0usize..30) {
            let b = interim_multipliers(&[a], h);
            for (k, v) in b.iter().enumerate() {
                prop_assert_eq!(*v, (0..k).fold(1.0, |acc, _| acc * a));
            }
        }

        #[test]
        fn partial_sums_converge(a in stable_alpha()) {
            let s: f64 = interim_multipliers(&a, 200).iter().sum();
            prop_assert!((s - longrun_multiplier(&a).unwrap()).abs() < 1e-6);
        }

        #[test]
        fn gradients_match_central_differences(a in stable_alpha(), k in 1usize..8) {
            let h = 1e-6;
            let g = interim_gradient(&a, k);
            let f = longrun_gradient(&a).unwrap();
            for l in 0..a.len() {
                let mut p = a.clone();
                let mut m = a.clone();
                p[l] += h;
                m[l] -= h;
                let fd = (interim_multipliers(&p, k)[k] - interim_multipliers(&m, k)[k]) / (2.0 * h);
                prop_assert!((g[l] - fd).abs() <= 1e-4 * fd.abs().max(1e-3), "G_{k}[{l}] {} vs {}", g[l], fd);
                let fd = (longrun_multiplier(&p).unwrap() - longrun_multiplier(&m).unwrap()) / (2.0 * h);
                prop_assert!((f[l] - fd).abs() <= 1e-4 * fd.abs());
            }
        }
    }
}
