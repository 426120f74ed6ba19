//! The six analysis stages and the run manifest.
//!
//! Each stage reads the artifacts of earlier stages from the output
//! directory, so any one of them can be rerun on its own. Columnar outputs
//! depend only on the configuration and the input file.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use statrs::distribution::{ContinuousCDF, Normal};
use tvar_core::arstatic::{fit_ar, hansen_lc, ljung_box, sbic_table, select_order_sbic, ArFit, HacConfig, HansenLc, LjungBox, VarianceScore};
use tvar_core::efficiency::{bootstrap_joint_test, multiplier_path};
use tvar_core::ingest::{describe, load_prices, log_returns};
use tvar_core::spectral::{ar_spectrum, dominant_period, hp_filter, periodogram, SpectrumEstimate};
use tvar_core::stationarity::{adf_gls_test, LagCriterion};
use tvar_core::tvar::{build_stacked, estimate, lambda_for_window, mid_period, select_lambda, smoother_weights, TvarConfig, Window};
use tvar_core::{Error, Result, ReturnSeries, TvarFit, YearMonth};

use crate::config::{HpComponent, PipelineConfig, PlotFormat};
use crate::error::{CliError, CliResult, StageContext};
use crate::plot::{emit_plot, PlotKind};
use crate::table::Table;

pub const STAGES: [&str; 6] = ["ingest", "stationarity", "arstatic", "tvar", "efficiency", "spectral"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    /// File names relative to the output directory.
    pub outputs: Vec<String>,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: PipelineConfig,
    pub stages: Vec<StageRecord>,
    pub scalars: BTreeMap<String, Value>,
}

impl RunManifest {
    fn new(config: &PipelineConfig) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            stages: Vec::new(),
            scalars: BTreeMap::new(),
        }
    }

    pub fn scalar_f64(&self, key: &str) -> Option<f64> {
        self.scalars.get(key).and_then(Value::as_f64)
    }

    /// The manifest with wall-clock fields zeroed, for comparing runs.
    pub fn without_timings(&self) -> Self {
        let mut m = self.clone();
        m.stages.iter_mut().for_each(|s| s.wall_ms = 0);
        m
    }

    fn record(&mut self, rec: StageRecord) {
        match self.stages.iter_mut().find(|s| s.name == rec.name) {
            Some(s) => *s = rec,
            None => self.stages.push(rec),
        }
        self.stages.sort_by_key(|s| STAGES.iter().position(|n| *n == s.name));
    }
}

pub const MANIFEST: &str = "manifest.json";

/// Runs every stage in order.
pub fn run_pipeline(config: &PipelineConfig) -> CliResult<RunManifest> {
    config.validate()?;
    let mut m = RunManifest::new(config);
    with_workers(config.workers, || {
        for name in STAGES {
            run_stage_into(config, name, &mut m)?;
        }
        Ok(())
    })?;
    Ok(m)
}

/// Runs one stage against the artifacts already in the output directory and
/// updates the manifest found there (or starts a new one).
pub fn run_single_stage(config: &PipelineConfig, name: &str) -> CliResult<RunManifest> {
    config.validate()?;
    if !STAGES.contains(&name) {
        return Err(CliError::config(format!("unknown stage `{name}` (stages: {})", STAGES.join(", "))));
    }
    let mut m = match File::open(config.out.join(MANIFEST)) {
        Ok(f) => {
            let mut m: RunManifest = serde_json::from_reader(BufReader::new(f))
                .map_err(|e| CliError::config(format!("existing manifest is unreadable: {e}")))?;
            m.config = config.clone();
            m
        }
        Err(_) => RunManifest::new(config),
    };
    with_workers(config.workers, || run_stage_into(config, name, &mut m))?;
    Ok(m)
}

fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> CliResult<T> + Send) -> CliResult<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::config(format!("worker pool: {e}")))?;
    pool.install(f)
}

fn run_stage_into(config: &PipelineConfig, name: &str, m: &mut RunManifest) -> CliResult<()> {
    std::fs::create_dir_all(&config.out).stage(name)?;
    let start = Instant::now();
    let mut ctx = Stage { cfg: config, out: &config.out, outputs: Vec::new(), scalars: &mut m.scalars };
    match name {
        "ingest" => ctx.ingest(),
        "stationarity" => ctx.stationarity(),
        "arstatic" => ctx.arstatic(),
        "tvar" => ctx.tvar(),
        "efficiency" => ctx.efficiency(),
        "spectral" => ctx.spectral(),
        _ => unreachable!("stage names are checked by the callers"),
    }
    .stage(name)?;
    let outputs = std::mem::take(&mut ctx.outputs);
    m.record(StageRecord { name: name.to_string(), outputs, wall_ms: start.elapsed().as_millis() as u64 });
    write_json(&config.out.join(MANIFEST), m).stage(name)
}

struct Stage<'a> {
    cfg: &'a PipelineConfig,
    out: &'a Path,
    outputs: Vec<String>,
    scalars: &'a mut BTreeMap<String, Value>,
}

impl Stage<'_> {
    fn path(&mut self, file: &str) -> PathBuf {
        self.outputs.push(file.to_string());
        self.out.join(file)
    }

    fn json<T: Serialize>(&mut self, file: &str, value: &T) -> Result<()> {
        let p = self.path(file);
        write_json(&p, value)
    }

    fn csv(&mut self, file: &str, f: impl FnOnce(BufWriter<File>) -> Result<()>) -> Result<()> {
        let p = self.path(file);
        f(BufWriter::new(File::create(p)?))
    }

    fn plot(&mut self, artifact: &str, kind: PlotKind, file: &str, value: Option<&str>) -> Result<()> {
        if self.cfg.plots == PlotFormat::None {
            return Ok(());
        }
        let src = self.out.join(artifact);
        let p = self.path(file);
        emit_plot(&src, kind, &p, value)
    }

    fn set(&mut self, key: &str, v: impl Serialize) {
        self.scalars.insert(key.to_string(), serde_json::to_value(v).expect("scalar serialises"));
    }

    fn returns(&self) -> Result<ReturnSeries> {
        ReturnSeries::read_csv(BufReader::new(open_artifact(self.out, "returns.csv", "ingest")?))
    }

    fn ingest(&mut self) -> Result<()> {
        let file = File::open(&self.cfg.input)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", self.cfg.input.display()))))?;
        let prices = load_prices(BufReader::new(file), &self.cfg.date_column, &self.cfg.price_column)?
            .window(self.cfg.start, self.cfg.end)?;
        let r = log_returns(&prices);
        let stats = describe(&r.values)?;
        self.csv("returns.csv", |w| r.write_csv(w))?;
        let first: YearMonth = prices.dates()[0];
        let last: YearMonth = prices.dates()[prices.len() - 1];
        self.json(
            "descriptive.json",
            &json!({ "first_price": first, "last_price": last, "prices": prices.len(), "returns": stats }),
        )?;
        self.set("returns_mean", stats.mean);
        self.set("returns_sd", stats.sd);
        self.set("returns_min", stats.min);
        self.set("returns_max", stats.max);
        self.set("returns_n", stats.n);
        Ok(())
    }

    fn stationarity(&mut self) -> Result<()> {
        let r = self.returns()?;
        let c = self.cfg;
        let primary = adf_gls_test(&r.values, c.adf_max_lag, c.adf_criterion, c.adf_deterministic)?;
        let bic = adf_gls_test(&r.values, c.adf_max_lag, LagCriterion::Bic, c.adf_deterministic)?;
        self.json("adf.json", &json!({ "selected": primary, "schwarz_variant": bic }))?;
        self.set("adf_statistic", primary.statistic);
        self.set("adf_lag", primary.lag);
        self.set("adf_phi_hat", primary.phi_hat);
        self.set("adf_bic_statistic", bic.statistic);
        self.set("adf_bic_lag", bic.lag);
        Ok(())
    }

    fn arstatic(&mut self) -> Result<()> {
        let r = self.returns()?;
        let c = self.cfg;
        let table = sbic_table(&r, c.max_q)?;
        let selected = select_order_sbic(&r, c.max_q)?;
        let q = c.q.unwrap_or(selected);
        self.csv("sbic.csv", |w| {
            let mut wtr = csv::Writer::from_writer(w);
            wtr.write_record(["q", "sbic"])?;
            for (i, v) in table.iter().enumerate() {
                wtr.write_record([(i + 1).to_string(), v.to_string()])?;
            }
            wtr.flush()?;
            Ok(())
        })?;
        let fit = fit_ar(&r, q, c.ar_hac)?;
        let rule4 = fit_ar(&r, q, HacConfig::default())?;
        let lc = hansen_lc(&fit, &r, c.lc_score)?;
        let lc_centered = hansen_lc(&fit, &r, VarianceScore::Centered)?;
        let lb = ljung_box(&fit.residuals, 12.min(fit.residuals.len() / 2 - 1).max(1))?;
        let report = ArReport::new(&fit, selected, c.ar_hac, rule4.std_errors, lc, lc_centered, lb);
        self.json("ar.json", &report)?;
        self.set("ar_q_sbic", selected);
        self.set("ar_q", q);
        for (i, (b, se)) in fit.coefficients.iter().zip(&fit.std_errors).enumerate() {
            self.set(&format!("ar_alpha{i}"), b);
            self.set(&format!("ar_alpha{i}_se"), se);
        }
        self.set("ar_adj_r2", fit.adj_r2);
        self.set("lc_statistic", report.lc.statistic);
        Ok(())
    }

    fn tvar(&mut self) -> Result<()> {
        let r = self.returns()?;
        let c = self.cfg;
        let report: ArReport = read_json(&open_artifact(self.out, "ar.json", "arstatic")?)?;
        let fit = match &c.resume_from {
            Some(path) => {
                let fit: TvarFit = read_json(&File::open(path)?)?;
                if fit.dates.is_empty() || !r.dates.ends_with(&fit.dates) {
                    return Err(Error::Config(format!("{} does not match the returns in {}", path.display(), self.out.display())));
                }
                self.set("tvar_lambda_source", "resumed");
                fit
            }
            None => {
                let lambda = match c.lambda {
                    Some(l) => {
                        self.set("tvar_lambda_source", "fixed");
                        l
                    }
                    None => {
                        let sel = select_lambda(&r, report.q, &c.lambda_grid.values(), c.prior_weight)?;
                        self.csv("lambda_selection.csv", |w| {
                            let mut wtr = csv::Writer::from_writer(w);
                            wtr.write_record(["lambda", "loglik"])?;
                            for (l, ll) in sel.grid.iter().zip(&sel.loglik) {
                                wtr.write_record([l.to_string(), ll.to_string()])?;
                            }
                            wtr.flush()?;
                            Ok(())
                        })?;
                        self.set("tvar_lambda_source", "likelihood");
                        sel.lambda
                    }
                };
                let tc = TvarConfig {
                    q: report.q,
                    lambda,
                    prior_weight: c.prior_weight,
                    prior: None,
                    hac: c.tvar_hac,
                    full_covariance: false,
                };
                estimate(&r, &tc)?.1
            }
        };
        self.json("tvar_fit.json", &fit)?;
        self.csv("tvar_paths.csv", |w| write_paths(&fit, c.ci_level, w))?;
        self.plot("tvar_paths.csv", PlotKind::LineWithBand, "tvar_alpha_1.svg", Some("alpha_1"))?;

        let s = build_stacked(&r, fit.q, &fit.prior, fit.lambda, fit.prior_weight)?;
        let tau = mid_period(s.periods);
        let weights = (0..fit.q).map(|l| smoother_weights(&s, &fit, l, tau)).collect::<Result<Vec<_>>>()?;
        self.csv("smoother_weights.csv", |w| {
            let mut wtr = csv::Writer::from_writer(w);
            let mut head = vec!["period".to_string(), "date".to_string()];
            for l in 1..=fit.q {
                head.push(format!("weight_{l}"));
                head.push(format!("cumulative_{l}"));
            }
            wtr.write_record(&head)?;
            for t in 0..s.periods {
                let mut row = vec![(t + 1).to_string(), fit.dates[t].to_string()];
                for sw in &weights {
                    row.push(sw.weights[t].to_string());
                    row.push(sw.cumulative[t].to_string());
                }
                wtr.write_record(&row)?;
            }
            wtr.flush()?;
            Ok(())
        })?;
        let windows: Vec<Window> = weights.iter().map(|w| w.window).collect();
        let target = match c.window_target {
            0 => None,
            t => {
                let (lambda, window) = lambda_for_window(&r, fit.q, 0, t, fit.prior_weight, &c.window_grid.values())?;
                self.set("window_target_lambda", lambda);
                self.set("window_target_width", window.width);
                Some(json!({ "target": t, "coefficient": 1, "lambda": lambda, "window": window }))
            }
        };
        let summary = json!({
            "q": fit.q,
            "lambda": fit.lambda,
            "prior_weight": fit.prior_weight,
            "prior": fit.prior,
            "intercept": fit.intercept,
            "intercept_se": fit.intercept_se,
            "sigma2": fit.sigma2,
            "hac_lag": fit.hac_lag,
            "periods": fit.periods(),
            "tau": tau,
            "tau_date": fit.dates[tau - 1],
            "windows": windows,
            "window_target": target,
        });
        self.json("tvar.json", &summary)?;
        self.set("tvar_q", fit.q);
        self.set("tvar_lambda", fit.lambda);
        self.set("window_width", windows[0].width);
        Ok(())
    }

    fn efficiency(&mut self) -> Result<()> {
        let r = self.returns()?;
        let c = self.cfg;
        let fit: TvarFit = read_json(&open_artifact(self.out, "tvar_fit.json", "tvar")?)?;
        let m = multiplier_path(&fit, c.horizon, c.ci_level)?;
        self.csv("longrun.csv", |w| m.write_longrun_csv(w))?;
        self.csv("interim_surface.csv", |w| m.write_surface_csv(w))?;
        let boot = bootstrap_joint_test(&fit, &r, c.boot_reps, c.seed)?;
        self.csv("bootstrap.csv", |w| {
            let mut wtr = csv::Writer::from_writer(w);
            wtr.write_record(["replication", "statistic"])?;
            for (i, s) in boot.statistics.iter().enumerate() {
                wtr.write_record([(i + 1).to_string(), s.to_string()])?;
            }
            wtr.flush()?;
            Ok(())
        })?;
        let phi = m.longrun_values();
        let excludes_one = m
            .lower
            .iter()
            .zip(&m.upper)
            .filter(|(lo, hi)| matches!((lo, hi), (Some(lo), Some(hi)) if *lo > 1.0 || *hi < 1.0))
            .count();
        let nonstationary = m.stationary.iter().filter(|s| !**s).count();
        let (lo, hi) = phi.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let mean = phi.iter().sum::<f64>() / phi.len().max(1) as f64;
        self.json(
            "efficiency.json",
            &json!({
                "horizon": c.horizon,
                "ci_level": c.ci_level,
                "periods": m.dates.len(),
                "nonstationary_periods": nonstationary,
                "band_excludes_one": excludes_one,
                "longrun_mean": mean,
                "longrun_min": lo,
                "longrun_max": hi,
                "bootstrap": {
                    "statistic": "sup_t",
                    "observed": boot.observed,
                    "p_value": boot.p_value,
                    "replications": boot.replications,
                    "seed": c.seed,
                },
            }),
        )?;
        self.plot("longrun.csv", PlotKind::LineWithBand, "longrun.svg", Some("phi"))?;
        self.plot("interim_surface.csv", PlotKind::SurfaceLongFormat, "interim_surface.svg", None)?;
        self.set("longrun_mean", mean);
        self.set("longrun_nonstationary_periods", nonstationary);
        self.set("bootstrap_p_value", boot.p_value);
        Ok(())
    }

    fn spectral(&mut self) -> Result<()> {
        let c = self.cfg;
        open_artifact(self.out, "longrun.csv", "efficiency")?;
        let t = Table::read(&self.out.join("longrun.csv"))?;
        let (dates, phi): (Vec<&str>, Vec<f64>) = t
            .strings("date")?
            .into_iter()
            .zip(t.numbers("phi")?)
            .filter_map(|(d, v)| v.map(|v| (d, v)))
            .unzip();
        let hp = hp_filter(&phi, c.hp_lambda)?;
        self.csv("hp.csv", |w| {
            let mut wtr = csv::Writer::from_writer(w);
            wtr.write_record(["date", "phi", "trend", "cycle"])?;
            for i in 0..phi.len() {
                wtr.write_record([dates[i].to_string(), phi[i].to_string(), hp.trend[i].to_string(), hp.cycle[i].to_string()])?;
            }
            wtr.flush()?;
            Ok(())
        })?;
        let mut report = BTreeMap::new();
        for (label, series) in [("raw", &phi), ("hp_trend", &hp.trend), ("hp_cycle", &hp.cycle)] {
            let mut estimates = vec![
                ("periodogram".to_string(), periodogram(series, true, None)?),
                ("smoothed".to_string(), periodogram(series, true, Some(&c.spans))?),
            ];
            for spans in &c.extra_spans {
                let tag = spans.iter().map(usize::to_string).collect::<Vec<_>>().join("_");
                estimates.push((format!("smoothed_{tag}"), periodogram(series, true, Some(spans))?));
            }
            let order = c.ar_max_order.min(series.len().saturating_sub(11)).max(1);
            estimates.push(("ar".to_string(), ar_spectrum(series, order)?));
            let mut entry = BTreeMap::new();
            for (method, s) in estimates {
                let file = format!("spectrum_{label}_{method}.csv");
                self.csv(&file, |w| s.write_csv(w))?;
                if method != "periodogram" {
                    self.plot(&file, PlotKind::SpectrumPanel, &format!("spectrum_{label}_{method}.svg"), None)?;
                }
                entry.insert(method, SpectrumSummary::new(&s, c.min_period)?);
            }
            report.insert(label, entry);
        }
        let hp_label = match c.hp_component {
            HpComponent::Trend => "hp_trend",
            HpComponent::Cycle => "hp_cycle",
        };
        let dominant = |label: &str, method: &str| report[label][method].dominant_period;
        for (i, spans) in c.extra_spans.iter().enumerate() {
            let tag = spans.iter().map(usize::to_string).collect::<Vec<_>>().join("_");
            self.set(&format!("dominant_period_raw_alt{}", i + 1), dominant("raw", &format!("smoothed_{tag}")));
            self.set(&format!("dominant_period_hp_alt{}", i + 1), dominant(hp_label, &format!("smoothed_{tag}")));
        }
        self.set("dominant_period_raw", dominant("raw", "smoothed"));
        self.set("dominant_period_hp", dominant(hp_label, "smoothed"));
        self.set("dominant_period_raw_ar", dominant("raw", "ar"));
        self.set("dominant_period_hp_ar", dominant(hp_label, "ar"));
        self.set("dominant_period_hp_cycle", dominant("hp_cycle", "smoothed"));
        self.json(
            "spectral.json",
            &json!({
                "series_length": phi.len(),
                "hp_lambda": c.hp_lambda,
                "hp_component": c.hp_component,
                "spans": c.spans,
                "extra_spans": c.extra_spans,
                "min_period": c.min_period,
                "estimates": report,
            }),
        )?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SpectrumSummary {
    dominant_period: f64,
    df: f64,
    ci_factor: (f64, f64),
    ar_order: Option<usize>,
}

impl SpectrumSummary {
    fn new(s: &SpectrumEstimate, min_period: f64) -> Result<Self> {
        Ok(Self { dominant_period: dominant_period(s, min_period)?, df: s.df, ci_factor: s.ci_factor, ar_order: s.ar_order })
    }
}

/// Static AR summary written by the `arstatic` stage and read by `tvar`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArReport {
    pub q: usize,
    pub q_sbic: usize,
    /// Intercept first.
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub hac: HacConfig,
    pub hac_lag: usize,
    pub hac_bandwidth: f64,
    /// Standard errors under the fixed ⌊4(n/100)^{2/9}⌋ Bartlett lag.
    pub std_errors_rule4: Vec<f64>,
    pub r2: f64,
    pub adj_r2: f64,
    pub sigma2: f64,
    pub n_used: usize,
    pub lc: HansenLc,
    pub lc_centered: HansenLc,
    pub residual_ljung_box: LjungBox,
}

impl ArReport {
    fn new(
        fit: &ArFit,
        q_sbic: usize,
        hac: HacConfig,
        std_errors_rule4: Vec<f64>,
        lc: HansenLc,
        lc_centered: HansenLc,
        residual_ljung_box: LjungBox,
    ) -> Self {
        Self {
            q: fit.q,
            q_sbic,
            coefficients: fit.coefficients.clone(),
            std_errors: fit.std_errors.clone(),
            hac,
            hac_lag: fit.hac_lag,
            hac_bandwidth: fit.hac_bandwidth,
            std_errors_rule4,
            r2: fit.r2,
            adj_r2: fit.adj_r2,
            sigma2: fit.sigma2,
            n_used: fit.n_used,
            lc,
            lc_centered,
            residual_ljung_box,
        }
    }
}

/// `period,date,alpha_ℓ,se_alpha_ℓ,lower_alpha_ℓ,upper_alpha_ℓ,…` with
/// pointwise normal bands.
fn write_paths<W: Write>(fit: &TvarFit, ci_level: f64, w: W) -> Result<()> {
    let z = normal_quantile(ci_level);
    let se = fit.std_errors();
    let mut wtr = csv::Writer::from_writer(w);
    let mut head = vec!["period".to_string(), "date".to_string()];
    for l in 1..=fit.q {
        head.extend(["", "se_", "lower_", "upper_"].map(|p| format!("{p}alpha_{l}")));
    }
    wtr.write_record(&head)?;
    for t in 0..fit.periods() {
        let mut row = vec![(t + 1).to_string(), fit.dates[t].to_string()];
        for l in 0..fit.q {
            let (a, s) = (fit.paths[l][t], se[l][t]);
            row.extend([a, s, a - z * s, a + z * s].map(|v| v.to_string()));
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

fn normal_quantile(level: f64) -> f64 {
    Normal::standard().inverse_cdf(0.5 + level / 2.0)
}

fn open_artifact(out: &Path, file: &str, producer: &str) -> Result<File> {
    File::open(out.join(file)).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => {
            Error::Config(format!("{} is missing; run the `{producer}` stage first", out.join(file).display()))
        }
        _ => Error::Io(e),
    })
}

fn read_json<T: DeserializeOwned>(f: &File) -> Result<T> {
    serde_json::from_reader(BufReader::new(f)).map_err(|e| Error::Data(format!("malformed artifact: {e}")))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Io(e.into()))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}
