//! Batch pipeline that takes a monthly price file through unit-root tests,
//! static and time-varying AR fits, long-run multipliers and spectra, writing
//! CSV/JSON artifacts, SVG figures and a run manifest.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod plot;
pub mod selfcheck;
pub mod table;

pub use config::{Overrides, PipelineConfig};
pub use error::{CliError, CliResult};
pub use pipeline::{run_pipeline, run_single_stage, RunManifest, STAGES};
