//! Time-varying AR(q) with random-walk coefficients and a constant intercept.
//!
//! Observation and state equations are stacked into one weighted regression
//! whose normal matrix is banded in time-major order; solving it once gives
//! the smoothed coefficient paths. [`kalman::kalman_oracle`] reproduces the
//! same answer by filtering and smoothing and exists to check the solver.

pub mod kalman;
pub mod stacked;
pub mod weights;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::arstatic::rule4_lag;
use crate::error::{Error, Result};
use crate::ingest::ReturnSeries;
use crate::linalg::ols;

pub use kalman::{kalman_oracle, log_grid, KalmanOracleResult, LambdaSelection};
pub use stacked::{build_stacked, solve_stacked, Intercept, NoiseSpec, SolveOptions, SparseRows, StackedSystem, TvarFit};
pub use weights::{mid_period, smoother_weights, window_from_mass, SmootherWeights, Window};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvarConfig {
    pub q: usize,
    /// State-to-observation variance ratio.
    pub lambda: f64,
    /// Precision of the prior row relative to a state step.
    pub prior_weight: f64,
    /// Prior mean of α̃₀; whole-sample OLS slopes when absent.
    pub prior: Option<Vec<f64>>,
    /// Sandwich covariances with a Bartlett lag of ⌊4(T/100)^{2/9}⌋.
    pub hac: bool,
    pub full_covariance: bool,
}

impl Default for TvarConfig {
    fn default() -> Self {
        Self { q: 2, lambda: 1.0, prior_weight: 1.0, prior: None, hac: true, full_covariance: false }
    }
}

/// OLS slopes of the AR(q) regression on the sample the stacked system uses.
pub fn ols_prior(r: &ReturnSeries, q: usize) -> Result<Vec<f64>> {
    let d = r.ar_design(q, q);
    if d.len() <= q + 1 {
        return Err(Error::data(format!("too few observations ({}) for an AR({q}) prior", d.len())));
    }
    let x = DMatrix::from_fn(d.len(), q + 1, |t, j| if j == 0 { 1.0 } else { d.lag_row(t)[j - 1] });
    let fit = ols(&x, &DVector::from_column_slice(&d.y))?;
    Ok(fit.coef.iter().skip(1).copied().collect())
}

/// Builds and solves the stacked system described by `cfg`.
pub fn estimate(r: &ReturnSeries, cfg: &TvarConfig) -> Result<(StackedSystem, TvarFit)> {
    let prior = match &cfg.prior {
        Some(p) => p.clone(),
        None => ols_prior(r, cfg.q)?,
    };
    let s = build_stacked(r, cfg.q, &prior, cfg.lambda, cfg.prior_weight)?;
    let opts = SolveOptions {
        hac_lag: cfg.hac.then(|| rule4_lag(s.periods)),
        full_covariance: cfg.full_covariance,
    };
    let fit = solve_stacked(&s, opts)?;
    Ok((s, fit))
}

/// Concentrated prediction-error log-likelihood at `lambda`, with the
/// intercept taken from the stacked solve.
///
/// The filter starts from a diffuse initial state (covariance large relative
/// to 1/E[x²]) and the first q prediction errors are dropped. Anchoring the
/// initial state at the data-fitted OLS prior with covariance λ·I instead
/// rewards small λ and piles the maximiser up at the bottom of the grid.
pub fn concentrated_loglik(r: &ReturnSeries, q: usize, lambda: f64, prior_weight: f64) -> Result<f64> {
    let prior = ols_prior(r, q)?;
    let s = build_stacked(r, q, &prior, lambda, prior_weight)?;
    let fit = solve_stacked(&s, SolveOptions::default())?;
    let d = r.ar_design(q, q);
    let mean_sq = d.lags.iter().map(|v| v * v).sum::<f64>() / d.lags.len().max(1) as f64;
    if !(mean_sq > 0.0) {
        return Err(Error::data("lagged values are all zero"));
    }
    let p0 = DMatrix::identity(q, q) * (1e6 / mean_sq);
    let k = kalman_oracle(r, q, &vec![0.0; q], &p0, lambda, fit.intercept)?;
    Ok(k.concentrated_loglik_after(q))
}

/// Grid value maximising the concentrated likelihood (first on ties).
pub fn select_lambda(r: &ReturnSeries, q: usize, grid: &[f64], prior_weight: f64) -> Result<LambdaSelection> {
    if grid.is_empty() {
        return Err(Error::config("lambda grid is empty"));
    }
    let loglik = grid
        .iter()
        .map(|&l| concentrated_loglik(r, q, l, prior_weight))
        .collect::<Result<Vec<_>>>()?;
    let best = loglik
        .iter()
        .enumerate()
        .fold(0, |b, (i, &v)| if v > loglik[b] { i } else { b });
    Ok(LambdaSelection { lambda: grid[best], grid: grid.to_vec(), loglik })
}

/// Width of the smoother window for coefficient ℓ at τ = ⌊T/2⌋ under `lambda`.
pub fn window_width(r: &ReturnSeries, q: usize, coefficient: usize, lambda: f64, prior_weight: f64) -> Result<Window> {
    let prior = ols_prior(r, q)?;
    let s = build_stacked(r, q, &prior, lambda, prior_weight)?;
    let fit = solve_stacked(&s, SolveOptions::default())?;
    Ok(smoother_weights(&s, &fit, coefficient, mid_period(s.periods))?.window)
}

/// λ whose smoother window for coefficient ℓ at ⌊T/2⌋ is closest to
/// `target` months.
///
/// Scans `grid`, then bisects in log λ towards any neighbour on the other
/// side of the target. Ties go to the smaller λ.
pub fn lambda_for_window(
    r: &ReturnSeries,
    q: usize,
    coefficient: usize,
    target: usize,
    prior_weight: f64,
    grid: &[f64],
) -> Result<(f64, Window)> {
    if grid.is_empty() {
        return Err(Error::config("lambda grid is empty"));
    }
    let width = |l: f64| window_width(r, q, coefficient, l, prior_weight);
    let side = |w: &Window| (w.width as i64 - target as i64).signum();
    let scanned = grid.iter().map(|&l| Ok((l, width(l)?))).collect::<Result<Vec<_>>>()?;
    let better = |(l, w): (f64, Window), (bl, bw): (f64, Window)| {
        let (g, bg) = (w.width.abs_diff(target), bw.width.abs_diff(target));
        g < bg || (g == bg && l < bl)
    };
    let i = (1..scanned.len()).fold(0, |b, k| if better(scanned[k], scanned[b]) { k } else { b });
    let mut best = scanned[i];
    for j in [i.checked_sub(1), Some(i + 1)].into_iter().flatten() {
        let Some(&other) = scanned.get(j) else { continue };
        if side(&scanned[i].1) * side(&other.1) >= 0 {
            continue;
        }
        let (mut lo, mut hi) = (scanned[i].0.ln(), other.0.ln());
        for _ in 0..40 {
            if side(&best.1) == 0 {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let cand = (mid.exp(), width(mid.exp())?);
            if better(cand, best) {
                best = cand;
            }
            if side(&cand.1) == side(&scanned[i].1) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    Ok(best)
}
