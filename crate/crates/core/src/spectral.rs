//! Hodrick–Prescott filtering and spectral density estimates: raw and
//! modified-Daniell-smoothed periodograms and an AR (Yule–Walker) spectrum.
//!
//! Normalisation: ordinates are |Σ x_t e^{−2πijt/n}|²/n at j/n cycles per
//! observation, so a white-noise series has a flat spectrum at its variance.
//! For odd n the one-sided ordinates j = 1..⌊n/2⌋ average to the sample
//! variance (n − 1 divisor) of the demeaned series.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::linalg::BandMatrix;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HpDecomposition {
    pub trend: Vec<f64>,
    pub cycle: Vec<f64>,
    pub lambda: f64,
}

/// Solves (I + λ DᵀD) trend = series, D the second-difference operator.
pub fn hp_filter(series: &[f64], lambda: f64) -> Result<HpDecomposition> {
    let n = series.len();
    if n < 4 {
        return Err(Error::data(format!("HP filter needs at least 4 observations, got {n}")));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::config(format!("HP lambda must be positive, got {lambda}")));
    }
    let mut a = BandMatrix::zeros(n, 2);
    for i in 0..n {
        a.add(i, i, 1.0);
    }
    let d = [1.0, -2.0, 1.0];
    for r in 0..n - 2 {
        for i in 0..3 {
            for j in 0..=i {
                a.add(r + i, r + j, lambda * d[i] * d[j]);
            }
        }
    }
    let trend = a.factor()?.solve(series);
    let cycle = series.iter().zip(&trend).map(|(x, t)| x - t).collect();
    Ok(HpDecomposition { trend, cycle, lambda })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumMethod {
    RawPeriodogram,
    SmoothedPeriodogram,
    ArSpectrum,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumEstimate {
    pub method: SpectrumMethod,
    /// Cycles per observation, strictly increasing on (0, 0.5].
    pub frequencies: Vec<f64>,
    pub density: Vec<f64>,
    pub smoothing_spans: Option<Vec<usize>>,
    /// 1 / (frequency of the global maximum).
    pub dominant_period_months: f64,
    /// Equivalent degrees of freedom of each ordinate.
    pub df: f64,
    /// Multiplicative 95% band (lower, upper) from χ²(df).
    pub ci_factor: (f64, f64),
    pub ar_order: Option<usize>,
}

impl SpectrumEstimate {
    fn new(
        method: SpectrumMethod,
        frequencies: Vec<f64>,
        density: Vec<f64>,
        spans: Option<Vec<usize>>,
        df: f64,
        ar_order: Option<usize>,
    ) -> Result<Self> {
        let ci_factor = if df.is_finite() {
            let chi = ChiSquared::new(df).map_err(|e| Error::numeric(e.to_string()))?;
            (df / chi.inverse_cdf(0.975), df / chi.inverse_cdf(0.025))
        } else {
            (1.0, 1.0)
        };
        let peak = argmax(&density).unwrap_or(0);
        Ok(Self {
            method,
            dominant_period_months: 1.0 / frequencies[peak],
            frequencies,
            density,
            smoothing_spans: spans,
            df,
            ci_factor,
            ar_order,
        })
    }

    /// `frequency,period_months,density,lower,upper`, the last two from
    /// [`SpectrumEstimate::ci_factor`].
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["frequency", "period_months", "density", "lower", "upper"])?;
        let (lo, hi) = self.ci_factor;
        for (f, d) in self.frequencies.iter().zip(&self.density) {
            let row = [*f, 1.0 / f, *d, d * lo, d * hi];
            wtr.write_record(row.iter().map(f64::to_string))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn argmax(v: &[f64]) -> Option<usize> {
    v.iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, &x)| match best {
            Some((_, b)) if b >= x => best,
            _ => Some((i, x)),
        })
        .map(|(i, _)| i)
}

/// Full-circle periodogram I_0..I_{n−1} by a direct DFT.
fn periodogram_circle(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let (cos, sin): (Vec<f64>, Vec<f64>) = (0..n)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / n as f64;
            (a.cos(), a.sin())
        })
        .unzip();
    (0..n)
        .map(|j| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, v) in x.iter().enumerate() {
                let k = (j * t) % n;
                re += v * cos[k];
                im -= v * sin[k];
            }
            (re * re + im * im) / n as f64
        })
        .collect()
}

/// Modified Daniell weights for span `span` (m = span / 2): 1/(2m) inside,
/// 1/(4m) at both ends.
pub fn modified_daniell(span: usize) -> Vec<f64> {
    let m = span / 2;
    if m == 0 {
        return vec![1.0];
    }
    let mut k = vec![1.0 / (2 * m) as f64; 2 * m + 1];
    k[0] /= 2.0;
    k[2 * m] /= 2.0;
    k
}

fn convolve_kernels(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn circular_smooth(x: &[f64], kernel: &[f64]) -> Vec<f64> {
    let n = x.len() as isize;
    let m = (kernel.len() / 2) as isize;
    (0..n)
        .map(|i| {
            kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * x[(i + k as isize - m).rem_euclid(n) as usize])
                .sum()
        })
        .collect()
}

/// Periodogram at j/n, j = 1..⌊n/2⌋, optionally smoothed by modified Daniell
/// kernels of the given spans applied in turn (circularly over the full
/// frequency circle, with the zero frequency replaced by the mean of its
/// neighbours).
pub fn periodogram(series: &[f64], demean: bool, spans: Option<&[usize]>) -> Result<SpectrumEstimate> {
    let n = series.len();
    if n < 8 {
        return Err(Error::data(format!("periodogram needs at least 8 observations, got {n}")));
    }
    let mean = if demean { series.iter().sum::<f64>() / n as f64 } else { 0.0 };
    let x: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let mut circle = periodogram_circle(&x);
    let half = n / 2;
    let freqs: Vec<f64> = (1..=half).map(|j| j as f64 / n as f64).collect();
    match spans.filter(|s| !s.is_empty()) {
        None => SpectrumEstimate::new(SpectrumMethod::RawPeriodogram, freqs, circle[1..=half].to_vec(), None, 2.0, None),
        Some(spans) => {
            circle[0] = 0.5 * (circle[1] + circle[n - 1]);
            let kernel = spans.iter().fold(vec![1.0], |k, &s| convolve_kernels(&k, &modified_daniell(s)));
            if kernel.len() > n {
                return Err(Error::config("smoothing kernel longer than the series"));
            }
            let smoothed = circular_smooth(&circle, &kernel);
            let df = 2.0 / kernel.iter().map(|w| w * w).sum::<f64>();
            SpectrumEstimate::new(
                SpectrumMethod::SmoothedPeriodogram,
                freqs,
                smoothed[1..=half].to_vec(),
                Some(spans.to_vec()),
                df,
                None,
            )
        }
    }
}

/// Yule–Walker AR fit with the order chosen by AIC (n ln σ̂²_k + 2k) up to
/// `max_order`, evaluated as σ̂² / |1 − Σ α_j e^{−2πijf}|² at f = k/1024,
/// k = 1..512.
pub fn ar_spectrum(series: &[f64], max_order: usize) -> Result<SpectrumEstimate> {
    let n = series.len();
    if n <= max_order + 10 {
        return Err(Error::data(format!("AR spectrum of order {max_order} needs more than {} observations", max_order + 10)));
    }
    let freqs: Vec<f64> = (1..=512).map(|k| k as f64 / 1024.0).collect();
    let mean = series.iter().sum::<f64>() / n as f64;
    let x: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let acov: Vec<f64> = (0..=max_order)
        .map(|k| (0..n - k).map(|t| x[t] * x[t + k]).sum::<f64>() / n as f64)
        .collect();
    if acov[0] <= 0.0 {
        return SpectrumEstimate::new(SpectrumMethod::ArSpectrum, freqs, vec![0.0; 512], None, f64::INFINITY, Some(0));
    }
    let (coefs, sigmas) = levinson_durbin(&acov);
    let aic = |k: usize| n as f64 * sigmas[k].ln() + 2.0 * k as f64;
    let order = (0..=max_order).fold(0, |b, k| if aic(k) < aic(b) { k } else { b });
    let alpha = &coefs[order];
    let s2 = sigmas[order];
    let density = freqs
        .iter()
        .map(|f| {
            let (mut re, mut im) = (1.0, 0.0);
            for (j, a) in alpha.iter().enumerate() {
                let w = 2.0 * PI * (j + 1) as f64 * f;
                re -= a * w.cos();
                im += a * w.sin();
            }
            s2 / (re * re + im * im)
        })
        .collect();
    SpectrumEstimate::new(SpectrumMethod::ArSpectrum, freqs, density, None, f64::INFINITY, Some(order))
}

/// AR coefficients and innovation variances for every order 0..=p.
fn levinson_durbin(acov: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let p = acov.len() - 1;
    let mut coefs = vec![Vec::new()];
    let mut sig = vec![acov[0]];
    let mut a: Vec<f64> = Vec::new();
    for k in 1..=p {
        let num = acov[k] - a.iter().enumerate().map(|(j, c)| c * acov[k - 1 - j]).sum::<f64>();
        let refl = num / sig[k - 1];
        let mut next: Vec<f64> = (0..k - 1).map(|j| a[j] - refl * a[k - 2 - j]).collect();
        next.push(refl);
        sig.push(sig[k - 1] * (1.0 - refl * refl));
        a = next;
        coefs.push(a.clone());
    }
    (coefs, sig)
}

/// Period (1/frequency) of the largest ordinate among frequencies whose
/// period is at least `min_period`, zero frequency excluded.
pub fn dominant_period(s: &SpectrumEstimate, min_period: f64) -> Result<f64> {
    if !(min_period > 2.0) {
        return Err(Error::config(format!("minimum period must exceed 2, got {min_period}")));
    }
    let candidates: Vec<(f64, f64)> = s
        .frequencies
        .iter()
        .zip(&s.density)
        .filter(|(f, _)| **f > 0.0 && 1.0 / **f >= min_period)
        .map(|(f, d)| (*f, *d))
        .collect();
    let dens: Vec<f64> = candidates.iter().map(|c| c.1).collect();
    let i = argmax(&dens).ok_or_else(|| Error::config(format!("no frequencies with period ≥ {min_period}")))?;
    Ok(1.0 / candidates[i].0)
}
