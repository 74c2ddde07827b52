//! `fit`: shifted-model fits of trace files.

use std::path::Path;

use fogbench_core::atmosphere::{beta_from_visibility, DEFAULT_EPSILON};
use fogbench_core::fitting::{fit_adapted_model, fitted_curve, FitProblem, FitResult};
use fogbench_core::scene::{SensorKind, TargetTrace};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::output::{self, EntryKind, FITS_DIR};
use crate::tracecsv::{self, format_sig9};

pub const RESULTS_FILE: &str = "results.csv";
pub const CURVES_FILE: &str = "curves.csv";
/// Depth spacing of the fitted-curve samples.
pub const CURVE_STEP_M: f64 = 0.25;

/// One fitted reflectivity group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub source: String,
    pub target_rho: f64,
    pub visibility_m: f64,
    pub beta_per_m: f64,
    pub i0: f64,
    pub i_inf: f64,
    pub d0_m: f64,
    pub beta_a_per_m: f64,
    pub rms_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub var_i0: Option<f64>,
    pub var_i_inf: Option<f64>,
    pub var_d0_m: Option<f64>,
    pub var_beta_a_per_m: Option<f64>,
}

impl FitRow {
    fn new(source: &str, rho: f64, visibility_m: f64, beta: f64, r: &FitResult) -> Self {
        let var = |i: usize| r.covariance_diag.map(|c| c[i]);
        Self {
            source: source.to_owned(),
            target_rho: rho,
            visibility_m,
            beta_per_m: beta,
            i0: r.i0,
            i_inf: r.i_inf,
            d0_m: r.d0_m,
            beta_a_per_m: r.beta_a_per_m,
            rms_residual: r.rms_residual,
            iterations: r.iterations,
            converged: r.converged,
            var_i0: var(0),
            var_i_inf: var(1),
            var_d0_m: var(2),
            var_beta_a_per_m: var(3),
        }
    }

    pub fn result(&self) -> FitResult {
        let cov = match (self.var_i0, self.var_i_inf, self.var_d0_m, self.var_beta_a_per_m) {
            (Some(a), Some(b), Some(c), Some(d)) => Some([a, b, c, d]),
            _ => None,
        };
        FitResult {
            i0: self.i0,
            i_inf: self.i_inf,
            d0_m: self.d0_m,
            beta_a_per_m: self.beta_a_per_m,
            rms_residual: self.rms_residual,
            iterations: self.iterations,
            converged: self.converged,
            covariance_diag: cov,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub source: String,
    pub target_rho: f64,
    pub depth_m: f64,
    pub intensity_fit: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitOutput {
    pub rows: Vec<FitRow>,
    pub curves: Vec<CurvePoint>,
}

impl FitOutput {
    pub fn non_converged(&self) -> usize {
        self.rows.iter().filter(|r| !r.converged).count()
    }
}

/// Fits every reflectivity group of `traces`, with `beta` from `visibility_m`.
pub fn fit_traces(source: &str, traces: &[TargetTrace], visibility_m: f64) -> Result<FitOutput> {
    let beta = beta_from_visibility(visibility_m, DEFAULT_EPSILON)?;
    let mut out = FitOutput::default();
    for trace in traces {
        let problem = FitProblem::new(trace.clone(), beta)
            .map_err(|e| CliError::validation(format!("{source}: rho {}: {e}", trace.rho)))?;
        let result = fit_adapted_model(&problem)?;
        if !result.rms_residual.is_finite() {
            return Err(CliError::Numerical(format!("{source}: rho {}: non-finite residual", trace.rho)));
        }
        let first = trace.binned.first().map_or(0.0, |b| b.center_m);
        let last = trace.binned.last().map_or(0.0, |b| b.center_m);
        let n = ((last - first) / CURVE_STEP_M).floor() as usize;
        let depths = (0..=n).map(|k| first + k as f64 * CURVE_STEP_M);
        out.curves.extend(fitted_curve(&result, beta, depths).into_iter().map(|(d, i)| CurvePoint {
            source: source.to_owned(),
            target_rho: trace.rho,
            depth_m: d,
            intensity_fit: i,
        }));
        out.rows.push(FitRow::new(source, trace.rho, visibility_m, beta, &result));
    }
    Ok(out)
}

/// Fits one trace file.
pub fn fit_file(path: &Path, visibility_m: f64) -> Result<FitOutput> {
    let rows = tracecsv::read_path(path)?;
    fit_traces(&path.display().to_string(), &tracecsv::traces_from_rows(&rows), visibility_m)
}

/// Fits every standard-camera trace listed in the run manifest. Gated traces
/// follow the slice profile rather than the shifted model and are skipped.
pub fn fit_run(run_dir: &Path) -> Result<FitOutput> {
    let manifest = output::read_manifest(run_dir)?;
    let entries: Vec<_> =
        manifest.iter().filter(|e| e.kind == EntryKind::Trace && e.sensor == SensorKind::Standard).collect();
    let parts: Vec<FitOutput> = entries
        .par_iter()
        .map(|e| {
            let rows = tracecsv::read_path(&output::resolve(run_dir, &e.path))?;
            fit_traces(&e.path, &tracecsv::traces_from_rows(&rows), e.visibility_m)
        })
        .collect::<Result<_>>()?;
    let mut out = FitOutput::default();
    for p in parts {
        out.rows.extend(p.rows);
        out.curves.extend(p.curves);
    }
    Ok(out)
}

/// Writes `fits/results.csv` and `fits/curves.csv` under `out_dir`.
pub fn write_output(out_dir: &Path, fit: &FitOutput) -> Result<()> {
    let dir = out_dir.join(FITS_DIR);
    output::write_atomic(&dir.join(RESULTS_FILE), &results_bytes(&fit.rows))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["source", "target_rho", "depth_m", "intensity_fit"]).expect("in memory");
    for c in &fit.curves {
        w.write_record([c.source.clone(), format_sig9(c.target_rho), format_sig9(c.depth_m), format_sig9(c.intensity_fit)])
            .expect("in memory");
    }
    output::write_atomic(&dir.join(CURVES_FILE), &w.into_inner().expect("in memory"))
}

fn results_bytes(rows: &[FitRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "source",
        "target_rho",
        "visibility_m",
        "beta_per_m",
        "i0",
        "i_inf",
        "d0_m",
        "beta_a_per_m",
        "rms_residual",
        "iterations",
        "converged",
        "var_i0",
        "var_i_inf",
        "var_d0_m",
        "var_beta_a_per_m",
    ])
    .expect("in memory");
    let opt = |v: Option<f64>| v.map(format_sig9).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.source.clone(),
            format_sig9(r.target_rho),
            format_sig9(r.visibility_m),
            format_sig9(r.beta_per_m),
            format_sig9(r.i0),
            format_sig9(r.i_inf),
            format_sig9(r.d0_m),
            format_sig9(r.beta_a_per_m),
            format_sig9(r.rms_residual),
            r.iterations.to_string(),
            r.converged.to_string(),
            opt(r.var_i0),
            opt(r.var_i_inf),
            opt(r.var_d0_m),
            opt(r.var_beta_a_per_m),
        ])
        .expect("in memory");
    }
    w.into_inner().expect("in memory")
}

pub fn read_results(path: &Path) -> Result<Vec<FitRow>> {
    read_csv(path)
}

pub fn read_curves(path: &Path) -> Result<Vec<CurvePoint>> {
    read_csv(path)
}

pub(crate) fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    csv::Reader::from_reader(file)
        .deserialize()
        .map(|r| r.map_err(|e| CliError::validation(format!("{}: {e}", path.display()))))
        .collect()
}
