//! Forward Kalman filter and Rauch–Tung–Striebel smoother for the
//! random-walk-coefficient AR model, in units of the observation variance.
//!
//! The smoother is an independent route to the stacked least-squares
//! solution: with the intercept held at the stacked estimate, both give the
//! same states and the same conditional covariances.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::ReturnSeries;

#[derive(Debug, Clone)]
pub struct KalmanOracleResult {
    /// `smoothed_states[ℓ][t]`
    pub smoothed_states: Vec<Vec<f64>>,
    /// Row-major q×q blocks P_{t|T}.
    pub smoothed_covariances: Vec<Vec<f64>>,
    /// One-step prediction errors and their variances f_t.
    pub prediction_errors: Vec<f64>,
    pub prediction_variances: Vec<f64>,
}

impl KalmanOracleResult {
    /// Gaussian log-likelihood with the observation variance concentrated
    /// out, up to an additive constant:
    /// −(T/2) ln(Σ e_t²/f_t / T) − ½ Σ ln f_t.
    pub fn concentrated_loglik(&self) -> f64 {
        self.concentrated_loglik_after(0)
    }

    /// As [`Self::concentrated_loglik`] but dropping the first `skip`
    /// prediction errors, which carry the initial-state uncertainty.
    pub fn concentrated_loglik_after(&self, skip: usize) -> f64 {
        let e = &self.prediction_errors[skip.min(self.prediction_errors.len())..];
        let f = &self.prediction_variances[skip.min(self.prediction_variances.len())..];
        let t = e.len() as f64;
        let s: f64 = e.iter().zip(f).map(|(e, f)| e * e / f).sum();
        let logdet: f64 = f.iter().map(|f| f.ln()).sum();
        -0.5 * t * (s / t).ln() - 0.5 * logdet
    }
}

/// State model α_{t+1} = α_t + v_t, Var v_t = λ I; observation
/// x_t − intercept = (x_{t−1}, …, x_{t−q})·α_t + u_t, Var u_t = 1.
/// `prior`/`prior_cov` are the mean and covariance of α_1 before seeing x_1.
pub fn kalman_oracle(
    r: &ReturnSeries,
    q: usize,
    prior: &[f64],
    prior_cov: &DMatrix<f64>,
    lambda: f64,
    intercept: f64,
) -> Result<KalmanOracleResult> {
    if !(lambda > 0.0) {
        return Err(Error::config(format!("lambda must be positive, got {lambda}")));
    }
    if prior.len() != q || prior_cov.shape() != (q, q) {
        return Err(Error::config("prior dimensions do not match q"));
    }
    let d = r.ar_design(q, q);
    let n = d.len();
    let mut a = DVector::from_column_slice(prior);
    let mut p = prior_cov.clone();
    let qn = DMatrix::identity(q, q) * lambda;

    let mut filt_a = Vec::with_capacity(n);
    let mut filt_p = Vec::with_capacity(n);
    let mut errors = Vec::with_capacity(n);
    let mut fvars = Vec::with_capacity(n);
    for t in 0..n {
        let z = DVector::from_column_slice(d.lag_row(t));
        let pz = &p * &z;
        let f = z.dot(&pz) + 1.0;
        if !(f > 0.0 && f.is_finite()) {
            return Err(Error::numeric(format!("innovation variance {f} at period {}", t + 1)));
        }
        let e = d.y[t] - intercept - z.dot(&a);
        let k = &pz / f;
        a += &k * e;
        p -= &k * pz.transpose();
        p = (&p + p.transpose()) * 0.5;
        errors.push(e);
        fvars.push(f);
        filt_a.push(a.clone());
        filt_p.push(p.clone());
        p += &qn;
    }

    let mut sm_a = filt_a.clone();
    let mut sm_p = filt_p.clone();
    for t in (0..n.saturating_sub(1)).rev() {
        let pred = &filt_p[t] + &qn;
        let chol = pred
            .clone()
            .cholesky()
            .ok_or_else(|| Error::numeric(format!("predicted covariance not positive definite at {}", t + 2)))?;
        // C = P_{t|t} P_{t+1|t}⁻¹
        let c = chol.solve(&filt_p[t]).transpose();
        sm_a[t] = &filt_a[t] + &c * (&sm_a[t + 1] - &filt_a[t]);
        let dp = &sm_p[t + 1] - &pred;
        let pt = &filt_p[t] + &c * dp * c.transpose();
        sm_p[t] = (&pt + pt.transpose()) * 0.5;
    }

    Ok(KalmanOracleResult {
        smoothed_states: (0..q).map(|l| sm_a.iter().map(|a| a[l]).collect()).collect(),
        smoothed_covariances: sm_p
            .iter()
            .map(|m| (0..q * q).map(|i| m[(i / q, i % q)]).collect())
            .collect(),
        prediction_errors: errors,
        prediction_variances: fvars,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LambdaSelection {
    pub lambda: f64,
    pub grid: Vec<f64>,
    pub loglik: Vec<f64>,
}

/// Log-spaced grid of `per_decade` points per decade over [lo, hi].
pub fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let steps = ((hi / lo).log10() * per_decade as f64).round() as usize;
    (0..=steps)
        .map(|i| lo * 10f64.powf(i as f64 / per_decade as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints() {
        let g = log_grid(1e-6, 1.0, 1);
        assert_eq!(g.len(), 7);
        assert!((g[0] - 1e-6).abs() < 1e-18);
        assert!((g[6] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn near_zero_state_noise_freezes_the_state() {
        let mut x = vec![0.0f64];
        let mut s = 7u64;
        for _ in 0..200 {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let e = ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
            x.push(0.4 * x.last().unwrap() + e);
        }
        let r = ReturnSeries::from_values(x);
        let k = kalman_oracle(&r, 1, &[0.0], &DMatrix::identity(1, 1), 1e-12, 0.0).unwrap();
        let path = &k.smoothed_states[0];
        let spread = path.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v)) - path.iter().fold(f64::INFINITY, |m, v| m.min(*v));
        assert!(spread < 1e-6, "spread {spread}");
    }
}
