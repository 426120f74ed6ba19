//! Whole-sample AR(q) regression with HAC standard errors, SBIC order
//! selection, Hansen's Lc constancy test and the Ljung–Box check.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::ingest::{ArDesign, ReturnSeries};
use crate::linalg::ols;

/// Bartlett-kernel truncation lag rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "lag")]
pub enum Bandwidth {
    Fixed(usize),
    /// ⌊4 (n/100)^{2/9}⌋
    Rule4,
    /// Newey–West (1994) plug-in selection on the non-intercept scores.
    Automatic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HacConfig {
    pub bandwidth: Bandwidth,
    /// Prewhiten the scores with a VAR(1) before kernel smoothing and recolour
    /// afterwards (Andrews–Monahan).
    pub prewhite: bool,
}

impl Default for HacConfig {
    fn default() -> Self {
        Self { bandwidth: Bandwidth::Rule4, prewhite: false }
    }
}

impl HacConfig {
    /// Automatic bandwidth with prewhitening; the combination used by common
    /// econometrics packages for their default Newey–West errors.
    pub fn nw94_prewhitened() -> Self {
        Self { bandwidth: Bandwidth::Automatic, prewhite: true }
    }
}

pub fn rule4_lag(n: usize) -> usize {
    (4.0 * (n as f64 / 100.0).powf(2.0 / 9.0)).floor() as usize
}

#[derive(Debug, Clone)]
pub struct HacCovariance {
    pub covariance: DMatrix<f64>,
    pub lag: usize,
    /// Real-valued bandwidth before truncation (equal to `lag` for fixed rules).
    pub bandwidth: f64,
}

/// Γ₀ + Σ_{j=1..lag} (1 − j/(lag+1)) (Γ_j + Γ_jᵀ), with Γ_j = Σ_t u_t u_{t+j}ᵀ
/// (unnormalised).
pub fn bartlett_long_run(u: &DMatrix<f64>, lag: usize) -> DMatrix<f64> {
    let (n, k) = u.shape();
    let mut acc = u.transpose() * u * 0.5;
    for j in 1..=lag.min(n.saturating_sub(1)) {
        let w = 1.0 - j as f64 / (lag + 1) as f64;
        let head = u.rows(0, n - j);
        let tail = u.rows(j, n - j);
        acc += head.transpose() * tail * w;
    }
    let out = &acc + acc.transpose();
    debug_assert_eq!(out.shape(), (k, k));
    out
}

fn nw94_bandwidth(u: &DMatrix<f64>, weights: &[f64], prewhite: bool) -> f64 {
    let n = u.nrows();
    let s: Vec<f64> = (0..n).map(|t| (0..u.ncols()).map(|j| u[(t, j)] * weights[j]).sum()).collect();
    let m = ((if prewhite { 3.0 } else { 4.0 }) * (n as f64 / 100.0).powf(2.0 / 9.0)).floor() as usize;
    let sigma: Vec<f64> = (0..=m.min(n - 1))
        .map(|j| (0..n - j).map(|t| s[t] * s[t + j]).sum::<f64>() / n as f64)
        .collect();
    let s0 = sigma[0] + 2.0 * sigma[1..].iter().sum::<f64>();
    let s1 = 2.0 * sigma.iter().enumerate().skip(1).map(|(j, v)| j as f64 * v).sum::<f64>();
    if s0 <= 0.0 {
        return 0.0;
    }
    1.1447 * ((s1 / s0).powi(2)).powf(1.0 / 3.0) * (n as f64).powf(1.0 / 3.0)
}

/// Newey–West sandwich (X'X)⁻¹ S (X'X)⁻¹ for OLS with design `x` (first
/// column the intercept) and residuals `e`.
pub fn hac_covariance(x: &DMatrix<f64>, e: &DVector<f64>, cfg: HacConfig) -> Result<HacCovariance> {
    let (n, k) = x.shape();
    let scores = DMatrix::from_fn(n, k, |t, j| x[(t, j)] * e[t]);
    let (u, recolour) = if cfg.prewhite && n > k + 2 {
        let lagged = scores.rows(0, n - 1).into_owned();
        let lead = scores.rows(1, n - 1).into_owned();
        let mut a = DMatrix::zeros(k, k);
        for j in 0..k {
            let fit = ols(&lagged, &lead.column(j).into_owned())
                .map_err(|e| Error::numeric(format!("prewhitening VAR: {e}")))?;
            a.row_mut(j).copy_from(&fit.coef.transpose());
        }
        let resid = &lead - &lagged * a.transpose();
        let d = (DMatrix::identity(k, k) - &a)
            .try_inverse()
            .ok_or_else(|| Error::numeric("prewhitening VAR has a unit root"))?;
        (resid, Some(d))
    } else {
        (scores, None)
    };
    let (lag, bandwidth) = match cfg.bandwidth {
        Bandwidth::Fixed(l) => (l, l as f64),
        Bandwidth::Rule4 => {
            let l = rule4_lag(n);
            (l, l as f64)
        }
        Bandwidth::Automatic => {
            let mut w = vec![1.0; k];
            w[0] = 0.0;
            let bw = nw94_bandwidth(&u, &w, cfg.prewhite);
            (bw.floor() as usize, bw)
        }
    };
    let mut meat = bartlett_long_run(&u, lag);
    if let Some(d) = recolour {
        meat = &d * meat * d.transpose();
    }
    let xtx_inv = (x.transpose() * x)
        .try_inverse()
        .ok_or_else(|| Error::numeric("collinear design"))?;
    let cov = &xtx_inv * meat * &xtx_inv;
    let covariance = (&cov + cov.transpose()) * 0.5;
    Ok(HacCovariance { covariance, lag, bandwidth })
}

#[derive(Debug, Clone)]
pub struct ArFit {
    pub q: usize,
    /// Intercept first, then the q lag coefficients.
    pub coefficients: Vec<f64>,
    /// HAC covariance of `coefficients`.
    pub covariance: DMatrix<f64>,
    pub std_errors: Vec<f64>,
    pub residuals: Vec<f64>,
    pub r2: f64,
    pub adj_r2: f64,
    /// SSR / n_used
    pub sigma2: f64,
    pub n_used: usize,
    pub hac_lag: usize,
    pub hac_bandwidth: f64,
}

impl ArFit {
    pub fn slopes(&self) -> &[f64] {
        &self.coefficients[1..]
    }

    /// Covariance of the lag coefficients only.
    pub fn slope_covariance(&self) -> DMatrix<f64> {
        self.covariance.view((1, 1), (self.q, self.q)).into_owned()
    }
}

fn design_matrix(d: &ArDesign) -> DMatrix<f64> {
    DMatrix::from_fn(d.len(), d.q + 1, |t, j| if j == 0 { 1.0 } else { d.lag_row(t)[j - 1] })
}

pub fn fit_ar(r: &ReturnSeries, q: usize, hac: HacConfig) -> Result<ArFit> {
    if q == 0 {
        return Err(Error::config("AR order must be positive"));
    }
    if r.len() <= q + 10 {
        return Err(Error::data(format!("AR({q}) needs more than {} observations", q + 10)));
    }
    fit_design(&r.ar_design(q, q), hac)
}

fn fit_design(d: &ArDesign, hac: HacConfig) -> Result<ArFit> {
    let x = design_matrix(d);
    let y = DVector::from_column_slice(&d.y);
    let fit = ols(&x, &y)?;
    let n = d.len();
    let k = d.q + 1;
    let ybar = y.mean();
    let sst: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
    let r2 = if sst > 0.0 { 1.0 - fit.ssr / sst } else { 1.0 };
    let adj_r2 = 1.0 - (1.0 - r2) * (n - 1) as f64 / (n - k) as f64;
    let h = hac_covariance(&x, &fit.resid, hac)?;
    Ok(ArFit {
        q: d.q,
        coefficients: fit.coef.iter().copied().collect(),
        std_errors: h.covariance.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect(),
        covariance: h.covariance,
        residuals: fit.resid.iter().copied().collect(),
        r2,
        adj_r2,
        sigma2: fit.ssr / n as f64,
        n_used: n,
        hac_lag: h.lag,
        hac_bandwidth: h.bandwidth,
    })
}

/// SBIC value n ln(SSR/n) + (q+1) ln n for each order, on the common sample
/// that conditions every fit on `max_q` initial values.
pub fn sbic_table(r: &ReturnSeries, max_q: usize) -> Result<Vec<f64>> {
    if max_q == 0 {
        return Err(Error::config("max_q must be at least 1"));
    }
    (1..=max_q)
        .map(|q| {
            let d = r.ar_design(q, max_q);
            let n = d.len() as f64;
            let fit = ols(&design_matrix(&d), &DVector::from_column_slice(&d.y))?;
            Ok(n * (fit.ssr / n).ln() + (q + 1) as f64 * n.ln())
        })
        .collect()
}

pub fn select_order_sbic(r: &ReturnSeries, max_q: usize) -> Result<usize> {
    let table = sbic_table(r, max_q)?;
    let (i, _) = table
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, &v)| if v < best.1 { (i, v) } else { best });
    Ok(i + 1)
}

/// Form of the error-variance component of the Lc score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceScore {
    /// e_t² − σ̂², which sums to zero like the coefficient scores.
    Centered,
    /// e_t² without centring.
    Raw,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HansenLc {
    pub statistic: f64,
    pub includes_variance: bool,
    pub variance_score: VarianceScore,
    pub df: usize,
    pub critical_1pct: f64,
    pub critical_5pct: f64,
    pub critical_10pct: f64,
}

impl HansenLc {
    pub fn rejects_at_1pct(&self) -> bool {
        self.statistic > self.critical_1pct
    }
}

/// Asymptotic critical values (1%, 5%, 10%) of the Lc statistic by degrees of
/// freedom, from Hansen (1992). Only df 1..=10 are tabulated.
pub fn lc_critical_values(df: usize) -> Option<[f64; 3]> {
    const TABLE: [[f64; 3]; 10] = [
        [0.748, 0.470, 0.353],
        [1.07, 0.749, 0.610],
        [1.35, 1.01, 0.846],
        [1.60, 1.24, 1.07],
        [1.88, 1.47, 1.28],
        [2.12, 1.68, 1.49],
        [2.35, 1.90, 1.69],
        [2.59, 2.11, 1.89],
        [2.82, 2.32, 2.10],
        [3.05, 2.54, 2.29],
    ];
    TABLE.get(df.checked_sub(1)?).copied()
}

/// Joint Lc statistic over the regression coefficients and the error
/// variance: (1/n) Σ_t S_tᵀ V⁻¹ S_t with S_t the cumulative scores and
/// V = Σ f_t f_tᵀ.
pub fn hansen_lc(fit: &ArFit, r: &ReturnSeries, variance_score: VarianceScore) -> Result<HansenLc> {
    let d = r.ar_design(fit.q, fit.q);
    if d.len() != fit.residuals.len() {
        return Err(Error::config("fit was not produced from this series"));
    }
    let k = fit.q + 2;
    let n = d.len();
    let s2 = fit.sigma2;
    let mut f = DMatrix::zeros(n, k);
    for t in 0..n {
        let e = fit.residuals[t];
        f[(t, 0)] = e;
        for (j, x) in d.lag_row(t).iter().enumerate() {
            f[(t, j + 1)] = x * e;
        }
        f[(t, k - 1)] = match variance_score {
            VarianceScore::Centered => e * e - s2,
            VarianceScore::Raw => e * e,
        };
    }
    let v = f.transpose() * &f;
    let vinv = v
        .try_inverse()
        .ok_or_else(|| Error::numeric("score outer-product matrix is singular"))?;
    let mut cum = DVector::zeros(k);
    let mut stat = 0.0;
    for t in 0..n {
        cum += f.row(t).transpose();
        stat += (cum.transpose() * &vinv * &cum)[(0, 0)];
    }
    let [c1, c5, c10] = lc_critical_values(k).unwrap_or([f64::NAN; 3]);
    Ok(HansenLc {
        statistic: stat / n as f64,
        includes_variance: true,
        variance_score,
        df: k,
        critical_1pct: c1,
        critical_5pct: c5,
        critical_10pct: c10,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LjungBox {
    pub statistic: f64,
    pub p_value: f64,
    pub lags: usize,
}

/// Q = n(n+2) Σ_{k=1..lags} ρ̂_k² / (n−k), referred to χ²(lags).
pub fn ljung_box(x: &[f64], lags: usize) -> Result<LjungBox> {
    let n = x.len();
    if lags == 0 || 2 * lags >= n {
        return Err(Error::config(format!("Ljung-Box needs 0 < lags < n/2 (lags {lags}, n {n})")));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let c0: f64 = c.iter().map(|v| v * v).sum();
    if c0 <= 0.0 {
        return Ok(LjungBox { statistic: 0.0, p_value: 1.0, lags });
    }
    let nf = n as f64;
    let q = (1..=lags)
        .map(|k| {
            let rho = (0..n - k).map(|t| c[t] * c[t + k]).sum::<f64>() / c0;
            rho * rho / (nf - k as f64)
        })
        .sum::<f64>()
        * nf
        * (nf + 2.0);
    let chi = ChiSquared::new(lags as f64).map_err(|e| Error::numeric(e.to_string()))?;
    Ok(LjungBox { statistic: q, p_value: chi.sf(q), lags })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn ar_series(alpha: &[f64], n: usize, seed: u64) -> ReturnSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let burn = 100;
        let mut x = vec![0.0; n + burn];
        for t in 0..n + burn {
            let e: f64 = StandardNormal.sample(&mut rng);
            x[t] = e + alpha.iter().enumerate().map(|(j, a)| if t > j { a * x[t - j - 1] } else { 0.0 }).sum::<f64>();
        }
        ReturnSeries::from_values(x[burn..].to_vec())
    }

    #[test]
    fn exact_ar1_recursion() {
        let mut v = vec![1.0];
        for _ in 0..60 {
            v.push(0.5 * v.last().unwrap());
        }
        let fit = fit_ar(&ReturnSeries::from_values(v), 1, HacConfig::default()).unwrap();
        assert!((fit.coefficients[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn white_noise_coefficients_are_insignificant() {
        let r = ar_series(&[], 800, 11);
        let fit = fit_ar(&r, 2, HacConfig::default()).unwrap();
        for j in 0..3 {
            assert!(fit.coefficients[j].abs() < 3.0 * fit.std_errors[j], "coef {j}");
        }
    }

    #[test]
    fn zero_bandwidth_equals_white() {
        let r = ar_series(&[0.3, -0.1], 300, 5);
        let d = r.ar_design(2, 2);
        let x = design_matrix(&d);
        let fit = ols(&x, &DVector::from_column_slice(&d.y)).unwrap();
        let hac = hac_covariance(&x, &fit.resid, HacConfig { bandwidth: Bandwidth::Fixed(0), prewhite: false }).unwrap();
        let mut meat = DMatrix::zeros(3, 3);
        for t in 0..x.nrows() {
            let xt = x.row(t).transpose();
            meat += &xt * xt.transpose() * fit.resid[t].powi(2);
        }
        let white = &fit.xtx_inv * meat * &fit.xtx_inv;
        assert!((hac.covariance - white).abs().max() < 1e-12);
    }

    #[test]
    fn hac_against_hand_computed_lag_one() {
        // intercept-only design, lag 1: S = Γ0 + ½(Γ1 + Γ1ᵀ)
        let x = DMatrix::from_row_slice(3, 1, &[1.0, 1.0, 1.0]);
        let e = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let h = hac_covariance(&x, &e, HacConfig { bandwidth: Bandwidth::Fixed(1), prewhite: false }).unwrap();
        let g0 = 1.0 + 4.0 + 0.25;
        let g1 = -2.0 + -1.0;
        let want = (g0 + g1) / 9.0;
        assert!((h.covariance[(0, 0)] - want).abs() < 1e-15);
    }

    #[test]
    fn sbic_picks_one_for_ar1() {
        let hits = (0..40)
            .filter(|&s| select_order_sbic(&ar_series(&[0.5], 2000, 100 + s), 8).unwrap() == 1)
            .count();
        assert!(hits as f64 >= 0.95 * 40.0, "{hits}/40");
    }

    #[test]
    fn sbic_returns_value_in_range_for_white_noise() {
        let q = select_order_sbic(&ar_series(&[], 300, 3), 6).unwrap();
        assert!((1..=6).contains(&q));
    }

    #[test]
    fn lc_critical_table_lookup() {
        assert_eq!(lc_critical_values(4).unwrap()[0], 1.60);
        assert!(lc_critical_values(0).is_none());
        assert!(lc_critical_values(11).is_none());
    }

    #[test]
    fn lc_detects_break() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 1000;
        let mut x = vec![0.0; n];
        for t in 1..n {
            let a = if t < n / 2 { 0.1 } else { 0.6 };
            let e: f64 = StandardNormal.sample(&mut rng);
            x[t] = a * x[t - 1] + e;
        }
        let r = ReturnSeries::from_values(x);
        let fit = fit_ar(&r, 1, HacConfig::default()).unwrap();
        let lc = hansen_lc(&fit, &r, VarianceScore::Centered).unwrap();
        assert_eq!(lc.df, 3);
        assert!(lc.rejects_at_1pct(), "Lc {}", lc.statistic);
    }

    #[test]
    fn ljung_box_zero_series() {
        let lb = ljung_box(&[0.0; 50], 10).unwrap();
        assert_eq!((lb.statistic, lb.p_value), (0.0, 1.0));
        assert!(ljung_box(&[0.0; 10], 5).is_err());
    }

    #[test]
    fn ljung_box_detects_ar1() {
        let lb = ljung_box(&ar_series(&[0.5], 500, 8).values, 20).unwrap();
        assert!(lb.p_value < 0.01);
    }

    #[test]
    fn ljung_box_hand_example() {
        // alternating series: ρ̂1 = -5/6
        let lb = ljung_box(&[1.0, -1.0, 1.0, -1.0, 1.0, -1.0], 1).unwrap();
        let rho1 = -5.0 / 6.0;
        let want = 6.0 * 8.0 * rho1 * rho1 / 5.0;
        assert!((lb.statistic - want).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn slopes_invariant_to_level_shift(seed in any::<u64>(), c in -5.0f64..5.0) {
            let r = ar_series(&[0.4, -0.2], 200, seed);
            let shifted = ReturnSeries::from_values(r.values.iter().map(|v| v + c).collect());
            let a = fit_ar(&r, 2, HacConfig::default()).unwrap();
            let b = fit_ar(&shifted, 2, HacConfig::default()).unwrap();
            for j in 1..3 {
                prop_assert!((a.coefficients[j] - b.coefficients[j]).abs() < 1e-9);
            }
        }

        #[test]
        fn sbic_invariant_to_affine_rescaling(seed in any::<u64>(), s in 0.01f64..100.0, c in -5.0f64..5.0) {
            let r = ar_series(&[0.3], 300, seed);
            let t = ReturnSeries::from_values(r.values.iter().map(|v| s * v + c).collect());
            prop_assert_eq!(select_order_sbic(&r, 6).unwrap(), select_order_sbic(&t, 6).unwrap());
        }
    }
}
