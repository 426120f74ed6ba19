//! The stacked observation/state regression and its bordered-band solve.
//!
//! Columns are ordered time-major: column 0 is the intercept and coefficient
//! ℓ of period t (both 0-based) sits in column `1 + t·q + ℓ`. In this order
//! every row touches columns at most q apart, so the normal matrix is the
//! intercept border plus a band of half-width q.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ReturnSeries, YearMonth};
use crate::linalg::{BandLdl, BandMatrix, BorderedBand, BorderedFactor};

/// Row-compressed sparse matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    pub ncols: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    pub fn shape(&self) -> (usize, usize) {
        (self.rows.len(), self.ncols)
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(|r| r.iter().filter(|(_, v)| *v != 0.0).count()).sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows.len(), self.ncols);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                m[(i, j)] += v;
            }
        }
        m
    }

    pub fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        self.rows[i].iter().map(|&(j, v)| v * x[j]).sum()
    }
}

/// Row variances in units of the observation variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub observation: f64,
    pub state: f64,
    pub prior: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Intercept {
    Estimated,
    /// Held at a known value; used to compare against the Kalman smoother,
    /// which conditions on the intercept.
    Fixed(f64),
}

#[derive(Debug, Clone)]
pub struct StackedSystem {
    pub q: usize,
    pub periods: usize,
    pub dates: Vec<YearMonth>,
    /// Observations followed by the prior/state-equation responses.
    pub response: Vec<f64>,
    pub regressor: SparseRows,
    pub noise: NoiseSpec,
    pub intercept: Intercept,
    pub prior: Vec<f64>,
    pub lambda: f64,
    pub prior_weight: f64,
}

impl StackedSystem {
    #[inline]
    pub fn column(&self, coefficient: usize, period: usize) -> usize {
        1 + period * self.q + coefficient
    }

    pub fn n_params(&self) -> usize {
        1 + self.q * self.periods
    }

    pub fn is_observation_row(&self, row: usize) -> bool {
        row < self.periods
    }

    pub fn row_variance(&self, row: usize) -> f64 {
        if row < self.periods {
            self.noise.observation
        } else if row < self.periods + self.q {
            self.noise.prior
        } else {
            self.noise.state
        }
    }

    pub fn with_intercept(mut self, intercept: Intercept) -> Self {
        self.intercept = intercept;
        self
    }

    /// Lag values (x_{t-1}, …, x_{t-q}) of observation row `t`.
    pub fn lags(&self, t: usize) -> Vec<f64> {
        self.regressor.rows[t][1..].iter().map(|&(_, v)| v).collect()
    }
}

/// Builds the stacked system for an AR(q) with random-walk coefficients.
///
/// The first q returns are used only as lags unless the series carries a
/// presample, so T = n − q by default.
pub fn build_stacked(
    r: &ReturnSeries,
    q: usize,
    prior: &[f64],
    lambda: f64,
    prior_weight: f64,
) -> Result<StackedSystem> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::config(format!("lambda must be positive, got {lambda}")));
    }
    if !(prior_weight > 0.0 && prior_weight.is_finite()) {
        return Err(Error::config(format!("prior weight must be positive, got {prior_weight}")));
    }
    if q == 0 {
        return Err(Error::config("AR order must be positive"));
    }
    if prior.len() != q {
        return Err(Error::config(format!("prior has length {} but q = {q}", prior.len())));
    }
    let design = r.ar_design(q, q);
    let t_len = design.len();
    if t_len == 0 {
        return Err(Error::data(format!("series of length {} is too short for q = {q}", r.len())));
    }
    let ncols = 1 + q * t_len;
    let col = |l: usize, t: usize| 1 + t * q + l;
    let mut rows = Vec::with_capacity(t_len * (q + 1));
    let mut response = Vec::with_capacity(t_len * (q + 1));
    for t in 0..t_len {
        let mut row = Vec::with_capacity(q + 1);
        row.push((0, 1.0));
        row.extend(design.lag_row(t).iter().enumerate().map(|(l, &x)| (col(l, t), x)));
        rows.push(row);
        response.push(design.y[t]);
    }
    // −α̃₀ = −α̃₁ + v₁, then 0 = α̃_{t−1} − α̃_t + v_t
    for l in 0..q {
        rows.push(vec![(col(l, 0), -1.0)]);
        response.push(-prior[l]);
    }
    for t in 1..t_len {
        for l in 0..q {
            rows.push(vec![(col(l, t - 1), 1.0), (col(l, t), -1.0)]);
            response.push(0.0);
        }
    }
    Ok(StackedSystem {
        q,
        periods: t_len,
        dates: design.dates,
        response,
        regressor: SparseRows { ncols, rows },
        noise: NoiseSpec { observation: 1.0, state: lambda, prior: lambda / prior_weight },
        intercept: Intercept::Estimated,
        prior: prior.to_vec(),
        lambda,
        prior_weight,
    })
}

/// Factorised normal matrix X'Ω⁻¹X.
pub(crate) enum NormalFactor {
    Bordered(BorderedFactor),
    /// Intercept column removed.
    Band(BandLdl),
}

impl NormalFactor {
    /// N⁻¹ rhs over the full parameter vector; with a fixed intercept the
    /// intercept entry of the result is zero and `rhs[0]` is ignored.
    pub(crate) fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        match self {
            NormalFactor::Bordered(f) => f.solve(rhs),
            NormalFactor::Band(f) => {
                let mut out = Vec::with_capacity(rhs.len());
                out.push(0.0);
                out.extend(f.solve(&rhs[1..]));
                out
            }
        }
    }

    fn selected_inverse(&self) -> BandMatrix {
        match self {
            NormalFactor::Bordered(f) => f.selected_inverse(),
            NormalFactor::Band(f) => f.selected_inverse(),
        }
    }

    fn corner_inverse(&self) -> f64 {
        match self {
            NormalFactor::Bordered(f) => f.corner_inverse(),
            NormalFactor::Band(_) => 0.0,
        }
    }
}

/// Assembles X'Ω⁻¹X and X'Ω⁻¹Y, then eliminates a fixed intercept.
pub(crate) fn factor_normal(s: &StackedSystem) -> Result<(NormalFactor, Vec<f64>)> {
    let p = s.n_params();
    let mut sys = BorderedBand { corner: 0.0, border: vec![0.0; p - 1], band: BandMatrix::zeros(p - 1, s.q) };
    let mut rhs = vec![0.0; p];
    for (r, row) in s.regressor.rows.iter().enumerate() {
        let w = 1.0 / s.row_variance(r);
        let y = s.response[r];
        for (a, &(ci, vi)) in row.iter().enumerate() {
            rhs[ci] += w * vi * y;
            for &(cj, vj) in &row[..=a] {
                let v = w * vi * vj;
                match (ci, cj) {
                    (0, 0) => sys.corner += v,
                    (0, c) | (c, 0) => sys.border[c - 1] += v,
                    (i, j) => sys.band.add(i - 1, j - 1, v),
                }
            }
        }
    }
    match s.intercept {
        Intercept::Estimated => Ok((NormalFactor::Bordered(sys.factor()?), rhs)),
        Intercept::Fixed(a0) => {
            for (i, c) in sys.border.iter().enumerate() {
                rhs[i + 1] -= c * a0;
            }
            rhs[0] = 0.0;
            Ok((NormalFactor::Band(sys.band.factor()?), rhs))
        }
    }
}

/// Options for [`solve_stacked`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Bartlett truncation lag for the sandwich covariance over observation
    /// rows; `None` reports model-based covariances only.
    pub hac_lag: Option<usize>,
    /// Also return the dense (1+qT)² inverse normal matrix. Quadratic in T.
    pub full_covariance: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { hac_lag: None, full_covariance: false }
    }
}

/// Per-period coefficient paths with covariance blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvarFit {
    pub q: usize,
    pub dates: Vec<YearMonth>,
    pub intercept: f64,
    /// Zero when the intercept was held fixed.
    pub intercept_se: f64,
    /// `paths[ℓ][t]`
    pub paths: Vec<Vec<f64>>,
    /// Row-major q×q covariance of (α_{1,t}..α_{q,t}) used downstream: the
    /// sandwich version when one was requested, otherwise model-based.
    pub covariances: Vec<Vec<f64>>,
    /// σ̂² (X'Ω⁻¹X)⁻¹ blocks.
    pub model_covariances: Vec<Vec<f64>>,
    pub hac_lag: Option<usize>,
    pub residuals: Vec<f64>,
    pub sigma2: f64,
    pub lambda: f64,
    pub prior_weight: f64,
    pub prior: Vec<f64>,
    #[serde(skip)]
    pub full_covariance: Option<DMatrix<f64>>,
}

impl TvarFit {
    pub fn periods(&self) -> usize {
        self.dates.len()
    }

    pub fn coefficients_at(&self, t: usize) -> Vec<f64> {
        self.paths.iter().map(|p| p[t]).collect()
    }

    pub fn covariance_at(&self, t: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.q, self.q, &self.covariances[t])
    }

    pub fn model_covariance_at(&self, t: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.q, self.q, &self.model_covariances[t])
    }

    /// Standard errors from the downstream covariance blocks, `[ℓ][t]`.
    pub fn std_errors(&self) -> Vec<Vec<f64>> {
        block_std_errors(&self.covariances, self.q)
    }

    pub fn model_std_errors(&self) -> Vec<Vec<f64>> {
        block_std_errors(&self.model_covariances, self.q)
    }
}

fn block_std_errors(blocks: &[Vec<f64>], q: usize) -> Vec<Vec<f64>> {
    (0..q)
        .map(|l| blocks.iter().map(|b| b[l * q + l].max(0.0).sqrt()).collect())
        .collect()
}

/// Weighted least-squares solve of the stacked system.
///
/// σ̂² is the weighted residual sum of squares over all rows divided by its
/// degrees of freedom, (T + qT) − (1 + qT) = T − 1 (T with a fixed intercept).
pub fn solve_stacked(s: &StackedSystem, opts: SolveOptions) -> Result<TvarFit> {
    let (factor, rhs) = factor_normal(s)?;
    let mut b = factor.solve(&rhs);
    if let Intercept::Fixed(a0) = s.intercept {
        b[0] = a0;
    }
    let t_len = s.periods;
    let q = s.q;
    let resid: Vec<f64> = (0..s.response.len())
        .map(|r| s.response[r] - s.regressor.row_dot(r, &b))
        .collect();
    let wssr: f64 = resid.iter().enumerate().map(|(r, e)| e * e / s.row_variance(r)).sum();
    let dof = match s.intercept {
        Intercept::Estimated => t_len.saturating_sub(1).max(1),
        Intercept::Fixed(_) => t_len,
    };
    let sigma2 = wssr / dof as f64;

    let z = factor.selected_inverse();
    let model_covariances: Vec<Vec<f64>> = (0..t_len)
        .map(|t| {
            let mut blk = vec![0.0; q * q];
            for a in 0..q {
                for c in 0..q {
                    blk[a * q + c] = sigma2 * z.get(t * q + a, t * q + c);
                }
            }
            blk
        })
        .collect();

    let covariances = match opts.hac_lag {
        Some(lag) => sandwich_blocks(s, &factor, &resid, sigma2, lag),
        None => model_covariances.clone(),
    };

    let full_covariance = opts.full_covariance.then(|| {
        let p = s.n_params();
        let mut m = DMatrix::zeros(p, p);
        let mut e = vec![0.0; p];
        for j in 0..p {
            e[j] = 1.0;
            let col = factor.solve(&e);
            e[j] = 0.0;
            for i in 0..p {
                m[(i, j)] = sigma2 * col[i];
            }
        }
        m
    });

    let paths = (0..q).map(|l| (0..t_len).map(|t| b[s.column(l, t)]).collect()).collect();
    Ok(TvarFit {
        q,
        dates: s.dates.clone(),
        intercept: b[0],
        intercept_se: (sigma2 * factor.corner_inverse()).sqrt(),
        paths,
        covariances,
        model_covariances,
        hac_lag: opts.hac_lag,
        residuals: resid[..t_len].to_vec(),
        sigma2,
        lambda: s.lambda,
        prior_weight: s.prior_weight,
        prior: s.prior.clone(),
        full_covariance,
    })
}

/// Diagonal blocks of N⁻¹ M N⁻¹. Over observation rows M is the Bartlett
/// long-run variance of the scores x_r e_r up to `lag`. State and prior rows
/// contribute their model term σ̂² x_r x_rᵀ / ω_r: their fitted residuals are
/// shrunk towards zero by the smoother and would understate the state noise.
/// With homoskedastic, uncorrelated observation errors M ≈ σ̂² N and the
/// result reduces to the model covariance. Each block needs the q rows of
/// N⁻¹ for its period, so the cost is O(T² (lag + 1) q²).
fn sandwich_blocks(s: &StackedSystem, factor: &NormalFactor, resid: &[f64], sigma2: f64, lag: usize) -> Vec<Vec<f64>> {
    let q = s.q;
    let t_len = s.periods;
    let p = s.n_params();
    let fixed = matches!(s.intercept, Intercept::Fixed(_));
    let kernel: Vec<f64> = (0..=lag).map(|j| 1.0 - j as f64 / (lag + 1) as f64).collect();
    let mut e = vec![0.0; p];
    let mut out = Vec::with_capacity(t_len);
    let mut g = vec![0.0; t_len * q];
    for t in 0..t_len {
        let rows_inv: Vec<Vec<f64>> = (0..q)
            .map(|l| {
                let c = s.column(l, t);
                e[c] = 1.0;
                let r = factor.solve(&e);
                e[c] = 0.0;
                r
            })
            .collect();
        let project = |row: usize, scale: f64, dst: &mut [f64]| {
            for (l, ri) in rows_inv.iter().enumerate() {
                dst[l] = scale
                    * s.regressor.rows[row]
                        .iter()
                        .filter(|(c, _)| !(fixed && *c == 0))
                        .map(|&(c, v)| v * ri[c])
                        .sum::<f64>();
            }
        };
        for i in 0..t_len {
            project(i, resid[i] / s.row_variance(i), &mut g[i * q..(i + 1) * q]);
        }
        let mut blk = vec![0.0; q * q];
        for (j, &w) in kernel.iter().enumerate() {
            for i in 0..t_len.saturating_sub(j) {
                let gi = &g[i * q..(i + 1) * q];
                let gj = &g[(i + j) * q..(i + j + 1) * q];
                for a in 0..q {
                    for c in 0..q {
                        let v = gi[a] * gj[c];
                        let v = if j == 0 { v } else { v + gj[a] * gi[c] };
                        blk[a * q + c] += w * v;
                    }
                }
            }
        }
        let mut h = vec![0.0; q];
        for r in t_len..s.response.len() {
            project(r, (sigma2 / s.row_variance(r)).sqrt(), &mut h);
            for a in 0..q {
                for c in 0..q {
                    blk[a * q + c] += h[a] * h[c];
                }
            }
        }
        out.push(blk);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(values: &[f64]) -> ReturnSeries {
        ReturnSeries::from_values(values.to_vec())
    }

    #[test]
    fn three_period_ar1_pattern() {
        let mut r = series(&[0.5, -0.2, 0.3]);
        r.presample = vec![0.1];
        let s = build_stacked(&r, 1, &[0.2], 1.0, 1.0).unwrap();
        assert_eq!(s.regressor.shape(), (6, 4));
        let d = s.regressor.to_dense();
        // nonzeros outside the intercept column: three lags plus the W block
        let off_intercept = (0..6).flat_map(|i| (1..4).map(move |j| (i, j))).filter(|&(i, j)| d[(i, j)] != 0.0).count();
        assert_eq!(off_intercept, 3 + 1 + 2 * 2);
        assert_eq!(d[(3, 1)], -1.0);
        assert_eq!((d[(4, 1)], d[(4, 2)]), (1.0, -1.0));
        assert_eq!((d[(5, 2)], d[(5, 3)]), (1.0, -1.0));
        assert_eq!(s.response[3], -0.2);
        assert_eq!((d[(0, 1)], d[(1, 2)], d[(2, 3)]), (0.1, 0.5, -0.2));
    }

    #[test]
    fn two_period_ar2_shape() {
        let mut r = series(&[0.5, -0.2]);
        r.presample = vec![0.1, 0.4];
        let s = build_stacked(&r, 2, &[0.0, 0.0], 1.0, 1.0).unwrap();
        assert_eq!(s.regressor.shape(), (6, 5));
    }

    #[test]
    fn invalid_hyperparameters() {
        let r = series(&[0.1, 0.2, 0.3, 0.4]);
        assert!(matches!(build_stacked(&r, 1, &[0.0], 0.0, 1.0), Err(Error::Config(_))));
        assert!(matches!(build_stacked(&r, 1, &[0.0], 1.0, -1.0), Err(Error::Config(_))));
    }

    fn dense_oracle(s: &StackedSystem) -> (nalgebra::DVector<f64>, DMatrix<f64>) {
        let x = s.regressor.to_dense();
        let w = nalgebra::DVector::from_fn(s.response.len(), |r, _| 1.0 / s.row_variance(r));
        let xw = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] * w[i]);
        let n = x.transpose() * &xw;
        let y = nalgebra::DVector::from_column_slice(&s.response);
        let ninv = n.clone().try_inverse().unwrap();
        (&ninv * xw.transpose() * y, ninv)
    }

    fn toy(n: usize, seed: u64) -> ReturnSeries {
        let mut v = Vec::with_capacity(n);
        let mut x = 0.0f64;
        let mut st = seed;
        for i in 0..n {
            st = st.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let e = ((st >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
            x = (0.3 + 0.2 * (i as f64 / 10.0).sin()) * x + e;
            v.push(x);
        }
        series(&v)
    }

    #[test]
    fn banded_solution_matches_dense_normal_equations() {
        for q in 1..=3 {
            for lambda in [1e-3, 0.5, 20.0] {
                let s = build_stacked(&toy(40, q as u64), q, &vec![0.1; q], lambda, 2.0).unwrap();
                let fit = solve_stacked(&s, SolveOptions { hac_lag: None, full_covariance: true }).unwrap();
                let (b, ninv) = dense_oracle(&s);
                assert!((fit.intercept - b[0]).abs() < 1e-10);
                for l in 0..q {
                    for t in 0..s.periods {
                        assert!((fit.paths[l][t] - b[s.column(l, t)]).abs() < 1e-10);
                    }
                }
                let full = fit.full_covariance.as_ref().unwrap();
                assert!((full - &ninv * fit.sigma2).abs().max() < 1e-10);
                for t in 0..s.periods {
                    for a in 0..q {
                        for c in 0..q {
                            let want = fit.sigma2 * ninv[(s.column(a, t), s.column(c, t))];
                            assert!((fit.model_covariances[t][a * q + c] - want).abs() < 1e-10);
                        }
                    }
                }
                assert!((fit.intercept_se.powi(2) - fit.sigma2 * ninv[(0, 0)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sandwich_blocks_match_dense() {
        let q = 2;
        let s = build_stacked(&toy(35, 9), q, &[0.0, 0.0], 0.2, 1.0).unwrap();
        let lag = 3;
        let fit = solve_stacked(&s, SolveOptions { hac_lag: Some(lag), full_covariance: false }).unwrap();
        let (b, ninv) = dense_oracle(&s);
        let x = s.regressor.to_dense();
        let p = s.n_params();
        let scores: Vec<nalgebra::DVector<f64>> = (0..x.nrows())
            .map(|r| {
                let e = s.response[r] - (x.row(r) * &b)[(0, 0)];
                if r < s.periods {
                    x.row(r).transpose() * e
                } else {
                    x.row(r).transpose() * (fit.sigma2 / s.row_variance(r)).sqrt()
                }
            })
            .collect();
        let mut m = DMatrix::zeros(p, p);
        for i in 0..x.nrows() {
            for j in 0..x.nrows() {
                let both_obs = i < s.periods && j < s.periods;
                let d = i.abs_diff(j);
                let k = if i == j {
                    1.0
                } else if both_obs && d <= lag {
                    1.0 - d as f64 / (lag + 1) as f64
                } else {
                    0.0
                };
                if k != 0.0 {
                    m += &scores[i] * scores[j].transpose() * k;
                }
            }
        }
        let v = &ninv * m * &ninv;
        for t in 0..s.periods {
            for a in 0..q {
                for c in 0..q {
                    let want = v[(s.column(a, t), s.column(c, t))];
                    assert!((fit.covariances[t][a * q + c] - want).abs() < 1e-12, "t {t}");
                }
            }
        }
    }

    #[test]
    fn fixed_intercept_matches_shifted_response() {
        let r = toy(50, 2);
        let s = build_stacked(&r, 1, &[0.1], 0.3, 1.0).unwrap().with_intercept(Intercept::Fixed(0.25));
        let fit = solve_stacked(&s, SolveOptions::default()).unwrap();
        assert_eq!(fit.intercept, 0.25);
        let mut shifted = s.clone();
        for t in 0..s.periods {
            shifted.response[t] -= 0.25;
        }
        let shifted = shifted.with_intercept(Intercept::Fixed(0.0));
        let g = solve_stacked(&shifted, SolveOptions::default()).unwrap();
        for t in 0..s.periods {
            assert!((fit.paths[0][t] - g.paths[0][t]).abs() < 1e-12);
        }
    }
}
