use std::path::{Path, PathBuf};
use std::process::Command;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tvar_cli::config::PlotFormat;
use tvar_cli::{run_pipeline, run_single_stage, PipelineConfig, RunManifest, STAGES};
use tvar_core::sim::simulate_ar;
use tvar_core::YearMonth;

/// AR(2) returns (n = 300, seed 7) written as a monthly price file.
fn fixture(dir: &Path) -> PathBuf {
    let r = simulate_ar(0.002, &[0.3, -0.1], 0.04, 300, 200, &mut ChaCha8Rng::seed_from_u64(7));
    let mut text = String::from("Date,P\n");
    let mut d = YearMonth { year: 1900, month: 1 };
    let mut p: f64 = 100.0;
    text.push_str(&format!("{d},{p}\n"));
    for x in r {
        d = d.next();
        p *= x.exp();
        text.push_str(&format!("{d},{p}\n"));
    }
    let path = dir.join("prices.csv");
    std::fs::write(&path, text).unwrap();
    path
}

fn config(input: &Path, out: &Path) -> PipelineConfig {
    PipelineConfig {
        input: input.to_path_buf(),
        start: "1900-01".parse().ok(),
        end: "1925-01".parse().ok(),
        max_q: 6,
        boot_reps: 99,
        seed: 11,
        lambda_grid: "1e-4:1:2".parse().unwrap(),
        window_grid: "1e-3:10:2".parse().unwrap(),
        window_target: 60,
        ar_max_order: 10,
        out: out.to_path_buf(),
        workers: 2,
        ..PipelineConfig::default()
    }
}

fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".csv") || n.ends_with(".svg"))
        .collect();
    v.sort();
    v
}

fn same_bytes(a: &Path, b: &Path, name: &str) {
    assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name} differs");
}

#[test]
fn synthetic_fixture_completes_all_stages() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let m = run_pipeline(&config(&fixture(dir.path()), &out)).unwrap();
    let names: Vec<&str> = m.stages.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(names, STAGES);
    for s in &m.stages {
        assert!(!s.outputs.is_empty(), "{} wrote nothing", s.name);
        for f in &s.outputs {
            assert!(out.join(f).is_file(), "{f} missing");
        }
    }
    assert!(m.stages.iter().any(|s| s.outputs.iter().any(|f| f.ends_with(".svg"))));
    let on_disk: RunManifest = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(on_disk, m);
    assert_eq!(m.scalars["returns_n"], 300);
    assert_eq!(m.scalars["window_target_width"], 60);
    for key in ["adf_statistic", "ar_alpha1", "lc_statistic", "tvar_lambda", "window_width", "dominant_period_raw", "dominant_period_hp", "bootstrap_p_value"] {
        assert!(m.scalar_f64(key).is_some_and(f64::is_finite), "{key}");
    }
    assert_eq!(m.config, config(&dir.path().join("prices.csv"), &out));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let ma = run_pipeline(&config(&input, &a)).unwrap();
    let mut cb = config(&input, &b);
    cb.workers = 1;
    let mut mb = run_pipeline(&cb).unwrap();
    assert_eq!(files(&a), files(&b));
    for f in files(&a) {
        same_bytes(&a, &b, &f);
    }
    mb.config.out = a.clone();
    mb.config.workers = 2;
    assert_eq!(ma.without_timings(), mb.without_timings());
}

#[test]
fn resuming_from_a_saved_fit_reproduces_downstream_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_pipeline(&config(&input, &a)).unwrap();
    let mut cb = config(&input, &b);
    cb.resume_from = Some(a.join("tvar_fit.json"));
    let mb = run_pipeline(&cb).unwrap();
    assert_eq!(mb.scalars["tvar_lambda_source"], "resumed");
    same_bytes(&a, &b, "tvar_fit.json");
    for f in files(&a) {
        if f.starts_with("longrun") || f.starts_with("interim") || f.starts_with("bootstrap") || f.starts_with("hp") || f.starts_with("spectrum") || f.starts_with("tvar_paths") {
            same_bytes(&a, &b, &f);
        }
    }
}

#[test]
fn single_stage_reruns_match_the_full_run() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let cfg = config(&input, &a);
    run_pipeline(&cfg).unwrap();
    let mut cb = config(&input, &b);
    cb.plots = PlotFormat::None;
    for s in STAGES {
        run_single_stage(&cb, s).unwrap();
    }
    for f in files(&b) {
        same_bytes(&a, &b, &f);
    }
    let m = run_single_stage(&cfg, "spectral").unwrap();
    assert_eq!(m.stages.len(), STAGES.len());
    same_bytes(&a, &b, "spectrum_raw_smoothed.csv");
}

#[test]
fn stage_without_its_inputs_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let e = run_single_stage(&config(&fixture(dir.path()), &dir.path().join("empty")), "tvar").unwrap_err();
    assert_eq!(e.exit_code(), 2);
    assert_eq!(e.stage.as_deref(), Some("tvar"));
    assert!(e.to_string().contains("returns.csv"), "{e}");
    assert_eq!(run_single_stage(&config(&fixture(dir.path()), dir.path()), "fit").unwrap_err().exit_code(), 2);
}

#[test]
fn end_before_start_fails_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let mut c = config(&fixture(dir.path()), &out);
    c.start = "1910-01".parse().ok();
    c.end = "1905-01".parse().ok();
    let e = run_pipeline(&c).unwrap_err();
    assert_eq!(e.exit_code(), 2);
    assert!(!out.exists());
}

#[test]
fn error_classes_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let missing = run_pipeline(&config(&dir.path().join("nope.csv"), &out)).unwrap_err();
    assert_eq!((missing.exit_code(), missing.stage.as_deref()), (1, Some("ingest")));
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "Date,P\n1900-01,100\n1900-02,abc\n1900-03,101\n").unwrap();
    assert_eq!(run_pipeline(&config(&bad, &out)).unwrap_err().exit_code(), 3);
    let flat = dir.path().join("flat.csv");
    let mut text = String::from("Date,P\n");
    let mut d = YearMonth { year: 1900, month: 1 };
    for _ in 0..200 {
        text.push_str(&format!("{d},100\n"));
        d = d.next();
    }
    std::fs::write(&flat, text).unwrap();
    let e = run_pipeline(&config(&flat, &out)).unwrap_err();
    assert!(matches!(e.exit_code(), 3 | 4), "{e}");
}

#[test]
fn binary_reports_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_tvar");
    let dir = tempfile::tempdir().unwrap();
    let input = fixture(dir.path());
    let status = Command::new(exe)
        .args(["run", "--start", "1910-01", "--end", "1905-01", "--input"])
        .arg(&input)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&status.stderr).contains("precedes"));
    let status = Command::new(exe).args(["run", "--spans", "7,x"]).output().unwrap();
    assert_eq!(status.status.code(), Some(2));
    let out = Command::new(exe).arg("selfcheck").output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(String::from_utf8_lossy(&out.stdout).matches("PASS").count(), 4);
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let exe = env!("CARGO_BIN_EXE_tvar");
    let dir = tempfile::tempdir().unwrap();
    let input = fixture(dir.path());
    let out = dir.path().join("out");
    let mut c = config(&input, &out);
    c.horizon = 24;
    c.lambda = Some(0.5);
    let file = dir.path().join("run.toml");
    std::fs::write(&file, c.to_toml()).unwrap();
    let status = Command::new(exe)
        .args(["run", "--plots", "none", "--horizon", "12", "--config"])
        .arg(&file)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0), "{}", String::from_utf8_lossy(&status.stderr));
    let m: RunManifest = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!((m.config.horizon, m.config.lambda, m.config.plots), (12, Some(0.5), PlotFormat::None));
    assert_eq!(m.scalars["tvar_lambda_source"], "fixed");
    assert!(!out.join("longrun.svg").exists());
}
