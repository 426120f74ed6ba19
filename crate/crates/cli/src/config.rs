//! Pipeline configuration: a TOML file overlaid by command-line flags.
//!
//! Every default is written out in the run manifest, including the choices
//! the analysis leaves open (λ, HP smoothing, spectral spans, HAC bandwidth).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tvar_core::arstatic::{HacConfig, VarianceScore};
use tvar_core::stationarity::{Deterministic, LagCriterion};
use tvar_core::tvar::log_grid;
use tvar_core::YearMonth;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotFormat {
    Svg,
    None,
}

/// Which HP component of the long-run multiplier path feeds the filtered
/// spectra.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HpComponent {
    Trend,
    Cycle,
}

/// Log-spaced λ grid from `lo` to `hi` with `per_decade` points per decade.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaGrid {
    pub lo: f64,
    pub hi: f64,
    pub per_decade: usize,
}

impl LambdaGrid {
    pub fn values(&self) -> Vec<f64> {
        log_grid(self.lo, self.hi, self.per_decade)
    }
}

impl std::str::FromStr for LambdaGrid {
    type Err = CliError;

    /// `lo:hi:per_decade`, e.g. `1e-6:1:4`.
    fn from_str(s: &str) -> CliResult<Self> {
        let bad = || CliError::config(format!("lambda grid `{s}` is not lo:hi:per_decade"));
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, k] = parts.as_slice() else { return Err(bad()) };
        Ok(Self {
            lo: lo.trim().parse().map_err(|_| bad())?,
            hi: hi.trim().parse().map_err(|_| bad())?,
            per_decade: k.trim().parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub date_column: String,
    pub price_column: String,
    /// First and last price month, inclusive. `None` (whole file) is only
    /// reachable programmatically; TOML has no null, so an omitted key keeps
    /// the default.
    pub start: Option<YearMonth>,
    pub end: Option<YearMonth>,

    pub adf_criterion: LagCriterion,
    pub adf_deterministic: Deterministic,
    /// Schwert rule when absent.
    pub adf_max_lag: Option<usize>,

    /// Largest order in the SBIC table.
    pub max_q: usize,
    /// AR order for the static and time-varying fits; the SBIC choice when
    /// absent.
    pub q: Option<usize>,
    /// Covariance for the static AR table.
    pub ar_hac: HacConfig,
    pub lc_score: VarianceScore,

    /// Fixed λ; chosen by likelihood over `lambda_grid` when absent.
    pub lambda: Option<f64>,
    pub lambda_grid: LambdaGrid,
    pub prior_weight: f64,
    pub tvar_hac: bool,
    /// Window width (months) for which the matching λ is searched and
    /// recorded alongside the estimate; 0 skips the search.
    pub window_target: usize,
    /// Scan grid of that search.
    pub window_grid: LambdaGrid,

    pub horizon: usize,
    pub ci_level: f64,
    pub boot_reps: usize,
    pub seed: u64,

    pub hp_lambda: f64,
    pub hp_component: HpComponent,
    /// Modified Daniell spans of the primary smoothed periodogram.
    pub spans: Vec<usize>,
    /// Further smoothed periodograms, one per span list.
    pub extra_spans: Vec<Vec<usize>>,
    pub ar_max_order: usize,
    /// Shortest period (months) considered for the dominant cycle.
    pub min_period: f64,

    /// Threads for parallel stages; 0 uses every core.
    pub workers: usize,
    pub out: PathBuf,
    pub plots: PlotFormat,
    /// Saved `tvar_fit.json` to use instead of re-estimating.
    pub resume_from: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: PathBuf::from("data/shiller_sp500_monthly.csv"),
            date_column: "Date".into(),
            price_column: "P".into(),
            start: Some(YearMonth { year: 1871, month: 1 }),
            end: Some(YearMonth { year: 2012, month: 6 }),
            adf_criterion: LagCriterion::Mbic,
            adf_deterministic: Deterministic::ConstantAndTrend,
            adf_max_lag: None,
            max_q: 12,
            q: None,
            ar_hac: HacConfig::nw94_prewhitened(),
            lc_score: VarianceScore::Raw,
            lambda: None,
            lambda_grid: LambdaGrid { lo: 1e-6, hi: 1.0, per_decade: 4 },
            prior_weight: 1.0,
            tvar_hac: true,
            window_target: 144,
            window_grid: LambdaGrid { lo: 1e-4, hi: 100.0, per_decade: 4 },
            horizon: 60,
            ci_level: 0.95,
            boot_reps: 499,
            seed: 20120601,
            hp_lambda: 129_600.0,
            hp_component: HpComponent::Trend,
            spans: vec![7, 7],
            extra_spans: vec![vec![3, 3]],
            ar_max_order: 30,
            min_period: 24.0,
            workers: 0,
            out: PathBuf::from("out"),
            plots: PlotFormat::Svg,
            resume_from: None,
        }
    }
}

/// Values given on the command line; each replaces the file value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub input: Option<PathBuf>,
    pub start: Option<YearMonth>,
    pub end: Option<YearMonth>,
    pub max_q: Option<usize>,
    pub q: Option<usize>,
    pub lambda: Option<f64>,
    pub lambda_grid: Option<LambdaGrid>,
    pub hp_lambda: Option<f64>,
    pub spans: Option<Vec<usize>>,
    pub horizon: Option<usize>,
    pub ci_level: Option<f64>,
    pub boot_reps: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub plots: Option<PlotFormat>,
    pub tvar_hac: Option<bool>,
    pub resume_from: Option<PathBuf>,
    pub window_target: Option<usize>,
    pub workers: Option<usize>,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::config(format!("config file: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn apply(&mut self, o: Overrides) {
        macro_rules! set {
            ($($f:ident => $g:ident),* ; $($opt:ident),*) => {
                $(if let Some(v) = o.$f { self.$g = v; })*
                $(if o.$opt.is_some() { self.$opt = o.$opt; })*
            };
        }
        set!(input => input, max_q => max_q, lambda_grid => lambda_grid, hp_lambda => hp_lambda,
             spans => spans, horizon => horizon, ci_level => ci_level, boot_reps => boot_reps,
             seed => seed, out => out, plots => plots, tvar_hac => tvar_hac, workers => workers,
             window_target => window_target;
             start, end, q, lambda, resume_from);
    }

    /// Rejects out-of-range settings before anything is read or computed.
    pub fn validate(&self) -> CliResult<()> {
        let fail = |msg: String| Err(CliError::config(msg));
        if let (Some(s), Some(e)) = (self.start, self.end) {
            if e < s {
                return fail(format!("end month {e} precedes start month {s}"));
            }
        }
        if !(1..=48).contains(&self.max_q) {
            return fail(format!("max_q must be in 1..=48, got {}", self.max_q));
        }
        if let Some(q) = self.q {
            if !(1..=self.max_q).contains(&q) {
                return fail(format!("q must be in 1..=max_q ({}), got {q}", self.max_q));
            }
        }
        let positive = |name: &str, v: f64| -> CliResult<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(CliError::config(format!("{name} must be positive and finite, got {v}")))
            }
        };
        if let Some(l) = self.lambda {
            positive("lambda", l)?;
        }
        for (name, g) in [("lambda grid", &self.lambda_grid), ("window grid", &self.window_grid)] {
            positive(name, g.lo)?;
            positive(name, g.hi)?;
            if g.hi < g.lo || g.per_decade == 0 || g.per_decade > 100 {
                return fail(format!("{name} {}:{}:{} needs lo ≤ hi and 1..=100 points per decade", g.lo, g.hi, g.per_decade));
            }
        }
        positive("prior_weight", self.prior_weight)?;
        positive("hp_lambda", self.hp_lambda)?;
        if !(1..=1200).contains(&self.horizon) {
            return fail(format!("horizon must be in 1..=1200, got {}", self.horizon));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return fail(format!("ci_level must be in (0, 1), got {}", self.ci_level));
        }
        if self.boot_reps < 99 {
            return fail(format!("boot_reps must be at least 99, got {}", self.boot_reps));
        }
        for spans in std::iter::once(&self.spans).chain(&self.extra_spans) {
            if spans.is_empty() || spans.iter().any(|&s| s < 3) {
                return fail(format!("spans must be non-empty with every span ≥ 3, got {spans:?}"));
            }
        }
        if self.ar_max_order == 0 {
            return fail("ar_max_order must be positive".into());
        }
        if !(self.min_period > 2.0) {
            return fail(format!("min_period must exceed 2, got {}", self.min_period));
        }
        if self.date_column.is_empty() || self.price_column.is_empty() {
            return fail("column names must be non-empty".into());
        }
        Ok(())
    }
}

pub fn parse_spans(s: &str) -> CliResult<Vec<usize>> {
    s.split(',')
        .map(|p| p.trim().parse().map_err(|_| CliError::config(format!("spans `{s}` are not comma-separated integers"))))
        .collect()
}
