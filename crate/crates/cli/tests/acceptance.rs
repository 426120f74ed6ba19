//! Acceptance criteria, one PASS/FAIL line each (INFO lines add context).
//!
//! Exits 0 regardless of the verdicts so that the remaining test targets of
//! a workspace run still execute; the FAIL lines are the record.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::Value;
use tvar_cli::selfcheck::{gradients_match_differences, stacked_matches_smoother};
use tvar_cli::{run_pipeline, run_single_stage, PipelineConfig, RunManifest};
use tvar_core::arstatic::{fit_ar, hansen_lc, HacConfig, VarianceScore};
use tvar_core::efficiency::bootstrap_joint_test;
use tvar_core::sim::{normals, simulate_ar};
use tvar_core::stationarity::{adf_gls_test, Deterministic, LagCriterion};
use tvar_core::tvar::{estimate, TvarConfig};
use tvar_core::ReturnSeries;

fn data() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/shiller_sp500_monthly.csv")
}

fn shiller_config(out: &Path) -> PipelineConfig {
    PipelineConfig { input: data(), out: out.to_path_buf(), ..PipelineConfig::default() }
}

struct Report {
    failed: usize,
}

impl Report {
    fn verdict(&mut self, id: &str, pass: bool, secs: f64, detail: String) {
        if !pass {
            self.failed += 1;
        }
        println!("{} criterion {id} ({secs:.2} s): {detail}", if pass { "PASS" } else { "FAIL" });
    }

    fn info(&self, id: &str, detail: String) {
        println!("INFO criterion {id}: {detail}");
    }
}

fn within(v: f64, target: f64, tol: f64) -> bool {
    (v - target).abs() <= tol
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn num(m: &RunManifest, key: &str) -> f64 {
    m.scalar_f64(key).unwrap_or(f64::NAN)
}

fn table1(rep: &mut Report, dir: &Path) {
    let cfg = shiller_config(&dir.join("c1"));
    let t = Instant::now();
    run_single_stage(&cfg, "ingest").unwrap();
    let m = run_single_stage(&cfg, "stationarity").unwrap();
    let secs = t.elapsed().as_secs_f64();
    let moments = [("mean", 0.0034), ("sd", 0.0411), ("min", -0.3075), ("max", 0.4075)];
    let moments_ok = moments.iter().all(|(k, v)| within(num(&m, &format!("returns_{k}")), *v, 0.00005));
    let n_ok = m.scalars["returns_n"] == 1697;
    let (stat, lag) = (num(&m, "adf_statistic"), num(&m, "adf_lag"));
    let adf_ok = within(stat, -30.1356, 0.01) && lag == 0.0;
    rep.verdict(
        "1 (descriptive statistics and ADF-GLS)",
        moments_ok && n_ok && adf_ok && secs < 5.0,
        secs,
        format!(
            "mean {:.5} sd {:.5} min {:.5} max {:.5} n {} [moments {}]; ADF-GLS {stat:.4} lag {lag} with the modified BIC (want -30.1356 lag 0) [{}]",
            num(&m, "returns_mean"),
            num(&m, "returns_sd"),
            num(&m, "returns_min"),
            num(&m, "returns_max"),
            m.scalars["returns_n"],
            if moments_ok && n_ok { "ok" } else { "off" },
            if adf_ok { "ok" } else { "off" },
        ),
    );
    rep.info(
        "1",
        format!(
            "plain Schwarz lag choice gives ADF-GLS {:.4} at lag {}; φ̂ {:.4}",
            num(&m, "adf_bic_statistic"),
            num(&m, "adf_bic_lag"),
            num(&m, "adf_phi_hat")
        ),
    );
    let power = (0..200u64)
        .into_par_iter()
        .filter(|i| {
            let y = simulate_ar(0.0, &[0.1], 1.0, 500, 100, &mut ChaCha8Rng::seed_from_u64(7000 + i));
            adf_gls_test(&y, None, LagCriterion::Mbic, Deterministic::ConstantAndTrend).unwrap().rejects_at_1pct()
        })
        .count() as f64
        / 200.0;
    rep.info("1", format!("ADF-GLS 1% rejection rate against AR(1) 0.1, n = 500: {power:.3}"));
}

fn table2(rep: &mut Report, dir: &Path) {
    let cfg = PipelineConfig { q: Some(2), ..shiller_config(&dir.join("c2")) };
    run_single_stage(&cfg, "ingest").unwrap();
    let t = Instant::now();
    let m = run_single_stage(&cfg, "arstatic").unwrap();
    let secs = t.elapsed().as_secs_f64();
    let ar = read_json(&dir.join("c2/ar.json"));
    let coef: Vec<f64> = (0..3).map(|i| num(&m, &format!("ar_alpha{i}"))).collect();
    let coef_ok = coef.iter().zip([0.0026, 0.3082, -0.0797]).all(|(c, w)| within(*c, w, 0.0001));
    let r2 = num(&m, "ar_adj_r2");
    let lc = num(&m, "lc_statistic");
    let want_se = [0.0010, 0.0282, 0.0312];
    let se_ok = |key: &str| {
        let se: Vec<f64> = ar[key].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        (se.iter().zip(want_se).all(|(s, w)| (s / w - 1.0).abs() <= 0.15), se)
    };
    let (nw_ok, nw) = se_ok("std_errors");
    let (r4_ok, r4) = se_ok("std_errors_rule4");
    let pass = coef_ok && within(r2, 0.0857, 0.001) && within(lc, 53.0101, 0.5) && nw_ok && secs < 5.0;
    rep.verdict(
        "2 (static AR(2))",
        pass,
        secs,
        format!(
            "α = [{:.5}, {:.5}, {:.5}] (want 0.0026, 0.3082, -0.0797 ±0.0001) [{}]; adj R² {r2:.4} [{}]; Lc {lc:.3} [{}]; prewhitened NW se [{:.5}, {:.4}, {:.4}] [{}]",
            coef[0],
            coef[1],
            coef[2],
            if coef_ok { "ok" } else { "off" },
            if within(r2, 0.0857, 0.001) { "ok" } else { "off" },
            if within(lc, 53.0101, 0.5) { "ok" } else { "off" },
            nw[0],
            nw[1],
            nw[2],
            if nw_ok { "ok" } else { "off" },
        ),
    );
    rep.info(
        "2",
        format!(
            "fixed-lag Bartlett se [{:.5}, {:.4}, {:.4}] ({} 15% of the tabulated values); centred-score Lc {:.3}",
            r4[0],
            r4[1],
            r4[2],
            if r4_ok { "within" } else { "outside" },
            ar["lc_centered"]["statistic"].as_f64().unwrap()
        ),
    );
}

/// Full default run; criteria 3, 4 and 8 read its manifest.
fn full_runs(rep: &mut Report, dir: &Path) {
    let t = Instant::now();
    let a = run_pipeline(&shiller_config(&dir.join("a"))).unwrap();
    let run_secs = t.elapsed().as_secs_f64();
    let tvar_secs = a.stages.iter().find(|s| s.name == "tvar").unwrap().wall_ms as f64 / 1000.0;

    let width = num(&a, "window_width");
    rep.verdict(
        "3 (smoother window at the likelihood λ)",
        within(width, 144.0, 12.0) && tvar_secs < 120.0,
        tvar_secs,
        format!("λ {} ({}) gives width {width} months (want 144 ± 12)", num(&a, "tvar_lambda"), a.scalars["tvar_lambda_source"]),
    );
    rep.info(
        "3",
        format!(
            "manifest: λ {:.6} reproduces width {} exactly",
            num(&a, "window_target_lambda"),
            num(&a, "window_target_width")
        ),
    );

    let (raw, hp) = (num(&a, "dominant_period_raw"), num(&a, "dominant_period_hp"));
    let band = |p: f64| (360.0..=480.0).contains(&p);
    rep.verdict(
        "4 (dominant period of the long-run multiplier)",
        band(raw) && band(hp),
        run_secs,
        format!("raw {raw:.1} months, HP trend {hp:.1} months (want both in [360, 480])"),
    );
    rep.info(
        "4",
        format!(
            "same run: AR spectrum raw {:.1} / HP {:.1}, spans (3,3) raw {:.1} / HP {:.1}, HP cycle {:.1}",
            num(&a, "dominant_period_raw_ar"),
            num(&a, "dominant_period_hp_ar"),
            num(&a, "dominant_period_raw_alt1"),
            num(&a, "dominant_period_hp_alt1"),
            num(&a, "dominant_period_hp_cycle"),
        ),
    );
    let lt = num(&a, "window_target_lambda");
    let alt = run_pipeline(&PipelineConfig { lambda: Some(lt), plots: tvar_cli::config::PlotFormat::None, ..shiller_config(&dir.join("alt")) }).unwrap();
    rep.info(
        "4",
        format!(
            "at the window-matching λ {lt:.4}: smoothed raw {:.1} / HP {:.1}, AR raw {:.1} / HP {:.1}, spans (3,3) raw {:.1} / HP {:.1}",
            num(&alt, "dominant_period_raw"),
            num(&alt, "dominant_period_hp"),
            num(&alt, "dominant_period_raw_ar"),
            num(&alt, "dominant_period_hp_ar"),
            num(&alt, "dominant_period_raw_alt1"),
            num(&alt, "dominant_period_hp_alt1"),
        ),
    );

    let t = Instant::now();
    let b = run_pipeline(&shiller_config(&dir.join("b"))).unwrap();
    let secs = run_secs + t.elapsed().as_secs_f64();
    let mut files: Vec<String> = a.stages.iter().flat_map(|s| s.outputs.clone()).filter(|f| f.ends_with(".csv")).collect();
    files.sort();
    let differing: Vec<&String> = files
        .iter()
        .filter(|f| std::fs::read(dir.join("a").join(f)).ok() != std::fs::read(dir.join("b").join(f)).ok())
        .collect();
    let mut bm = b.without_timings();
    bm.config.out = a.config.out.clone();
    let manifest_same = bm == a.without_timings();
    rep.verdict(
        "8 (determinism)",
        differing.is_empty() && manifest_same && !files.is_empty(),
        secs,
        format!("{} columnar files compared, {} differ; manifests equal apart from timings: {manifest_same}", files.len(), differing.len()),
    );
}

fn oracle(rep: &mut Report) {
    let t = Instant::now();
    let c = stacked_matches_smoother(2024, 50).unwrap();
    let secs = t.elapsed().as_secs_f64();
    rep.verdict("5 (stacked solve vs Kalman smoother, 50 instances)", c.passed && secs < 30.0, secs, c.detail);
}

fn gradients(rep: &mut Report) {
    let t = Instant::now();
    let c = gradients_match_differences(42, 100).unwrap();
    rep.verdict("6 (multiplier gradients, 100 vectors)", c.passed, t.elapsed().as_secs_f64(), c.detail);
}

fn size_suite(rep: &mut Report) {
    let t = Instant::now();
    let adf_size = (0..1000u64)
        .into_par_iter()
        .filter(|i| {
            let y: Vec<f64> = normals(500, 1.0, &mut ChaCha8Rng::seed_from_u64(10_000 + i))
                .into_iter()
                .scan(0.0, |acc, e| {
                    *acc += e;
                    Some(*acc)
                })
                .collect();
            adf_gls_test(&y, None, LagCriterion::Mbic, Deterministic::Constant).unwrap().statistic < -1.95
        })
        .count() as f64
        / 1000.0;
    let lc_size = (0..500u64)
        .into_par_iter()
        .filter(|i| {
            let x = simulate_ar(0.0, &[0.3, -0.1], 1.0, 1500, 100, &mut ChaCha8Rng::seed_from_u64(20_000 + i));
            let r = ReturnSeries::from_values(x);
            let fit = fit_ar(&r, 2, HacConfig::default()).unwrap();
            hansen_lc(&fit, &r, VarianceScore::Centered).unwrap().rejects_at_1pct()
        })
        .count() as f64
        / 500.0;
    let boot_size = bootstrap_null_p_values(200, 30_000).iter().filter(|p| **p <= 0.01).count() as f64 / 200.0;
    let secs = t.elapsed().as_secs_f64();
    // distortions read as absolute differences from the nominal level
    let adf_ok = (adf_size - 0.05).abs() <= 0.10;
    let lc_ok = (lc_size - 0.01).abs() <= 0.05;
    let boot_ok = (0.005..=0.02).contains(&boot_size);
    rep.verdict(
        "7 (size suite)",
        adf_ok && lc_ok && boot_ok && secs < 600.0,
        secs,
        format!(
            "ADF-GLS 5% size {adf_size:.3} [{}]; Lc 1% size {lc_size:.3} [{}]; bootstrap 1% size {boot_size:.3} over 200 replications at n = 300 (want [0.005, 0.02]) [{}]",
            if adf_ok { "ok" } else { "off" },
            if lc_ok { "ok" } else { "off" },
            if boot_ok { "ok" } else { "off" },
        ),
    );
    let p = bootstrap_null_p_values(1000, 90_000);
    let rate = |a: f64| p.iter().filter(|v| **v <= a).count() as f64 / 1000.0;
    rep.info(
        "7",
        format!(
            "bootstrap rejection rates over 1000 further replications: {:.3} at 1%, {:.3} at 5%, {:.3} at 10%",
            rate(0.01),
            rate(0.05),
            rate(0.10)
        ),
    );
}

/// Bootstrap p-values (199 resamples) on white-noise series of length 300
/// fitted as TV-AR(1) with λ = 0.01.
fn bootstrap_null_p_values(reps: u64, base: u64) -> Vec<f64> {
    (0..reps)
        .into_par_iter()
        .map(|i| {
            let r = ReturnSeries::from_values(normals(300, 1.0, &mut ChaCha8Rng::seed_from_u64(base + i)));
            let cfg = TvarConfig { q: 1, lambda: 0.01, ..TvarConfig::default() };
            let (_, fit) = estimate(&r, &cfg).unwrap();
            bootstrap_joint_test(&fit, &r, 199, i).unwrap().p_value
        })
        .collect()
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let mut rep = Report { failed: 0 };
    table1(&mut rep, dir.path());
    table2(&mut rep, dir.path());
    full_runs(&mut rep, dir.path());
    oracle(&mut rep);
    gradients(&mut rep);
    size_suite(&mut rep);
    println!("{} of 8 criteria failed", rep.failed);
}
