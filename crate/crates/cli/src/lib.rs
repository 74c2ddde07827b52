//! Benchmark harness around `fogbench-core`: configuration, trace CSV
//! ingestion, experiment orchestration and report generation.

pub mod config;
pub mod error;
pub mod fit;
pub mod metrics;
pub mod output;
pub mod report;
pub mod simulate;
pub mod svg;
pub mod tracecsv;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use fogbench_core::metrics::DepthWindow;

pub use config::{ExperimentConfig, Overrides};
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "fogbench", version, about = "Fog-chamber sensor simulation and benchmarking")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// Experiment config (TOML); flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Run directory; falls back to the config, then FOGBENCH_OUT.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_name = "M")]
    pub bin_width: Option<f64>,
    #[arg(long, global = true, value_name = "M")]
    pub step: Option<f64>,
    /// Treat non-converged fits as failures (exit code 3).
    #[arg(long, global = true)]
    pub strict: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate target sweeps and frames for the configured grid.
    Simulate,
    /// Fit the shifted scattering model to a trace file or to a run's traces.
    Fit {
        /// Trace CSV to fit; without it every standard-camera trace of the run is fitted.
        #[arg(long, value_name = "PATH", requires = "visibility")]
        trace: Option<PathBuf>,
        /// Visibility of the trace, used to fix beta.
        #[arg(long, value_name = "M")]
        visibility: Option<f64>,
    },
    /// Compute entropy, contrast and peak-intensity tables for a run.
    Metrics {
        #[arg(long, value_name = "M")]
        window_start: Option<f64>,
        #[arg(long, value_name = "M")]
        window_end: Option<f64>,
    },
    /// Write plots and summary tables for a run.
    Report,
}

/// Loads the config named by `--config` (or the defaults) and applies flags.
pub fn resolve_config(global: &GlobalArgs, env_out: Option<PathBuf>) -> Result<ExperimentConfig> {
    let base = match &global.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let overrides =
        Overrides { seed: global.seed, out_dir: global.out.clone(), bin_width_m: global.bin_width, step_m: global.step };
    overrides.apply(base, env_out)
}

/// Runs one subcommand and returns a one-line summary for the terminal.
pub fn run(cli: &Cli, env_out: Option<PathBuf>) -> Result<String> {
    let config = resolve_config(&cli.global, env_out)?;
    let run_dir = config.out_dir.clone().expect("resolved config has an output directory");
    match &cli.command {
        Command::Simulate => {
            let s = simulate::simulate(&config)?;
            Ok(format!(
                "simulated {} jobs: {} traces, {} frames in {}",
                s.jobs,
                s.traces,
                s.frames,
                run_dir.display()
            ))
        }
        Command::Fit { trace, visibility } => {
            let out = match (trace, visibility) {
                (Some(path), Some(v)) => fit::fit_file(path, *v)?,
                _ => fit::fit_run(&run_dir)?,
            };
            fit::write_output(&run_dir, &out)?;
            let failed = out.non_converged();
            if cli.global.strict && failed > 0 {
                return Err(CliError::Numerical(format!("{failed} of {} fits did not converge", out.rows.len())));
            }
            Ok(format!("fitted {} traces ({failed} not converged)", out.rows.len()))
        }
        Command::Metrics { window_start, window_end } => {
            let [lo, hi] = config.contrast_window_m;
            let window = DepthWindow { start_m: window_start.unwrap_or(lo), end_m: window_end.unwrap_or(hi) };
            if !(window.start_m >= 0.0 && window.end_m > window.start_m) {
                return Err(CliError::validation(format!(
                    "contrast window must satisfy 0 <= start < end, got {}-{} m",
                    window.start_m, window.end_m
                )));
            }
            let m = metrics::metrics_run(&run_dir, window)?;
            metrics::write_output(&run_dir, &m)?;
            Ok(format!(
                "metrics: {} entropy, {} contrast, {} peak rows",
                m.entropy.len(),
                m.contrast.len(),
                m.peaks.len()
            ))
        }
        Command::Report => {
            let r = report::report_run(&run_dir)?;
            let gaps: Vec<&str> = r.gaps.iter().map(|f| f.name()).collect();
            Ok(if gaps.is_empty() {
                format!("report: {} plot families", r.present.len())
            } else {
                format!("report: {} plot families, missing {}", r.present.len(), gaps.join(", "))
            })
        }
    }
}
