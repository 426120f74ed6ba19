use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tvar_cli::config::{parse_spans, LambdaGrid, PlotFormat};
use tvar_cli::plot::{emit_plot, PlotKind};
use tvar_cli::{run_pipeline, run_single_stage, selfcheck, CliError, CliResult, Overrides, PipelineConfig, RunManifest};
use tvar_core::YearMonth;

/// Time-varying AR analysis of monthly market returns.
///
/// Exit codes: 0 success, 1 I/O error, 2 configuration error, 3 data error,
/// 4 numeric error.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage in order.
    Run(Settings),
    /// Run one stage from the artifacts already in the output directory.
    Stage {
        /// ingest, stationarity, arstatic, tvar, efficiency or spectral
        name: String,
        #[command(flatten)]
        settings: Settings,
    },
    /// Run the built-in oracle checks.
    Selfcheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Render one artifact as SVG.
    Plot {
        artifact: PathBuf,
        /// line_with_band, surface_long_format or spectrum_panel
        kind: String,
        output: PathBuf,
        /// Value column for line plots.
        #[arg(long)]
        value: Option<String>,
    },
}

#[derive(Args)]
struct Settings {
    /// TOML configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    /// First price month, YYYY-MM.
    #[arg(long)]
    start: Option<String>,
    /// Last price month, YYYY-MM.
    #[arg(long)]
    end: Option<String>,
    #[arg(long)]
    max_q: Option<usize>,
    /// AR order; SBIC choice when omitted.
    #[arg(long)]
    q: Option<usize>,
    /// Fixed λ; likelihood choice over the grid when omitted.
    #[arg(long)]
    lambda: Option<f64>,
    /// lo:hi:per_decade
    #[arg(long)]
    lambda_grid: Option<String>,
    #[arg(long)]
    hp_lambda: Option<f64>,
    /// Comma-separated modified Daniell spans.
    #[arg(long)]
    spans: Option<String>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    ci: Option<f64>,
    #[arg(long)]
    boot_reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// svg or none
    #[arg(long)]
    plots: Option<String>,
    /// Sandwich covariances for the time-varying fit (true/false).
    #[arg(long)]
    tvar_hac: Option<bool>,
    /// Saved tvar_fit.json to reuse instead of re-estimating.
    #[arg(long)]
    resume_from: Option<PathBuf>,
    /// Window width whose λ is searched and recorded; 0 skips the search.
    #[arg(long)]
    window_target: Option<usize>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
}

impl Settings {
    fn resolve(self) -> CliResult<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        let month = |s: Option<String>| -> CliResult<Option<YearMonth>> {
            s.map(|s| s.parse().map_err(|_| CliError::config(format!("month `{s}` is not YYYY-MM")))).transpose()
        };
        let plots = match self.plots.as_deref() {
            None => None,
            Some("svg") => Some(PlotFormat::Svg),
            Some("none") => Some(PlotFormat::None),
            Some(other) => return Err(CliError::config(format!("plot format `{other}` is not svg or none"))),
        };
        cfg.apply(Overrides {
            input: self.input,
            start: month(self.start)?,
            end: month(self.end)?,
            max_q: self.max_q,
            q: self.q,
            lambda: self.lambda,
            lambda_grid: self.lambda_grid.map(|g| g.parse::<LambdaGrid>()).transpose()?,
            hp_lambda: self.hp_lambda,
            spans: self.spans.map(|s| parse_spans(&s)).transpose()?,
            horizon: self.horizon,
            ci_level: self.ci,
            boot_reps: self.boot_reps,
            seed: self.seed,
            out: self.out,
            plots,
            tvar_hac: self.tvar_hac,
            resume_from: self.resume_from,
            window_target: self.window_target,
            workers: self.workers,
        });
        cfg.validate()?;
        Ok(cfg)
    }
}

fn summarise(m: &RunManifest) {
    for s in &m.stages {
        println!("{:<13} {:>7} ms  {}", s.name, s.wall_ms, s.outputs.join(" "));
    }
    for (k, v) in &m.scalars {
        println!("  {k} = {v}");
    }
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run(s) => summarise(&run_pipeline(&s.resolve()?)?),
        Command::Stage { name, settings } => summarise(&run_single_stage(&settings.resolve()?, &name)?),
        Command::Selfcheck { seed } => {
            let checks = selfcheck::run_all(seed)?;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if checks.iter().any(|c| !c.passed) {
                return Err(tvar_core::Error::Numeric("self-check failed".into()).into());
            }
        }
        Command::Plot { artifact, kind, output, value } => {
            let kind: PlotKind = kind.parse()?;
            emit_plot(&artifact, kind, &output, value.as_deref())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
