//! Observation weights implied by the stacked estimator, and the width of the
//! window carrying the central 95% of their absolute mass.

use serde::{Deserialize, Serialize};

use super::stacked::{factor_normal, StackedSystem, TvarFit};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    /// 1-based periods.
    pub s1: usize,
    pub s2: usize,
    pub width: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmootherWeights {
    /// 0-based coefficient index (ℓ − 1).
    pub coefficient: usize,
    /// 1-based anchor period.
    pub tau: usize,
    /// Weight of observation t on α̂_{ℓ,τ}: the matching row of
    /// (X'Ω⁻¹X)⁻¹X'Ω⁻¹ restricted to observation rows.
    pub weights: Vec<f64>,
    /// Cumulative absolute weight m(s).
    pub cumulative: Vec<f64>,
    pub window: Window,
}

/// Default anchor ⌊T/2⌋.
pub fn mid_period(periods: usize) -> usize {
    (periods / 2).max(1)
}

pub fn smoother_weights(s: &StackedSystem, fit: &TvarFit, coefficient: usize, tau: usize) -> Result<SmootherWeights> {
    if coefficient >= s.q {
        return Err(Error::config(format!("coefficient index {coefficient} out of range for q = {}", s.q)));
    }
    if tau == 0 || tau > s.periods {
        return Err(Error::config(format!("period {tau} outside 1..={}", s.periods)));
    }
    if fit.periods() != s.periods || fit.q != s.q {
        return Err(Error::config("fit does not belong to this system"));
    }
    let (factor, _) = factor_normal(s)?;
    let mut e = vec![0.0; s.n_params()];
    e[s.column(coefficient, tau - 1)] = 1.0;
    // N symmetric, so row c of N⁻¹ equals N⁻¹ e_c
    let y = factor.solve(&e);
    let weights: Vec<f64> = (0..s.periods)
        .map(|t| s.regressor.row_dot(t, &y) / s.row_variance(t))
        .collect();
    let cumulative: Vec<f64> = weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w.abs();
            Some(*acc)
        })
        .collect();
    let window = window_from_mass(&cumulative);
    Ok(SmootherWeights { coefficient, tau, weights, cumulative, window })
}

/// s₁ = first s with m(s) > 0.025 M, s₂ = first s with m(s) ≥ 0.975 M.
pub fn window_from_mass(cumulative: &[f64]) -> Window {
    let total = cumulative.last().copied().unwrap_or(0.0);
    let s1 = cumulative.iter().position(|&m| m > 0.025 * total).map_or(1, |i| i + 1);
    let s2 = cumulative
        .iter()
        .position(|&m| m >= 0.975 * total)
        .map_or(cumulative.len(), |i| i + 1);
    Window { s1, s2, width: s2.saturating_sub(s1) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thresholds_use_strict_then_non_strict() {
        // masses 1..=40 with equal increments: M = 40
        let m: Vec<f64> = (1..=40).map(|v| v as f64).collect();
        // 0.025·40 = 1: first m > 1 is s = 2; 0.975·40 = 39: first m ≥ 39 is s = 39
        assert_eq!(window_from_mass(&m), Window { s1: 2, s2: 39, width: 37 });
    }
}
