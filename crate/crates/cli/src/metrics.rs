//! `metrics`: entropy per frame series, windowed contrast and peak intensities.

use std::collections::BTreeMap;
use std::io::BufReader;
use std::path::Path;

use fogbench_core::atmosphere::FogType;
use fogbench_core::frame::FrameBuffer;
use fogbench_core::metrics::{contrast_window, entropy, mean_std, normalize_for_comparison, peak_intensity, DepthWindow};
use fogbench_core::scene::{illuminated_region, ScenarioKind, SensorKind, TargetTrace};
use fogbench_core::Error as CoreError;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::fit::read_csv;
use crate::output::{self, EntryKind, JobKey, ManifestEntry, METRICS_DIR};
use crate::tracecsv::{self, format_sig9};

pub const ENTROPY_FILE: &str = "entropy.csv";
pub const CONTRAST_FILE: &str = "contrast.csv";
pub const PEAKS_FILE: &str = "peaks.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyRow {
    pub scenario: ScenarioKind,
    pub fog_type: FogType,
    pub visibility_m: f64,
    pub sensor: SensorKind,
    pub frames: usize,
    /// Bit depth after normalization across the sensors of the condition.
    pub bit_depth: u8,
    pub entropy_mean: f64,
    pub entropy_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastRow {
    pub scenario: ScenarioKind,
    pub fog_type: FogType,
    pub visibility_m: f64,
    pub sensor: SensorKind,
    pub window_start_m: f64,
    pub window_end_m: f64,
    pub i5: f64,
    pub i50: f64,
    pub i90: f64,
    /// Absent when `i90 + i5 = 0`.
    pub michelson: Option<f64>,
    pub rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakRow {
    pub scenario: ScenarioKind,
    pub fog_type: FogType,
    pub visibility_m: f64,
    pub sensor: SensorKind,
    pub target_rho: f64,
    pub i_peak: f64,
    pub depth_m: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsOutput {
    pub entropy: Vec<EntropyRow>,
    pub contrast: Vec<ContrastRow>,
    pub peaks: Vec<PeakRow>,
}

/// Entropy of every frame series.
///
/// Frames of the same condition and index are first brought to the common
/// resolution and bit depth of all sensors, then scored over the centred
/// illuminated region.
pub fn entropy_rows(frames: &[(JobKey, usize, FrameBuffer)]) -> Result<Vec<EntropyRow>> {
    let mut by_condition: Vec<(JobKey, BTreeMap<usize, Vec<(SensorKind, &FrameBuffer)>>)> = Vec::new();
    for (key, index, frame) in frames {
        let slot = match by_condition.iter().position(|(k, _)| k.same_condition(key)) {
            Some(i) => i,
            None => {
                by_condition.push((*key, BTreeMap::new()));
                by_condition.len() - 1
            }
        };
        by_condition[slot].1.entry(*index).or_default().push((key.sensor, frame));
    }

    let mut rows = Vec::new();
    for (key, series) in by_condition {
        let mut values: Vec<(SensorKind, Vec<f64>, u8)> = Vec::new();
        for group in series.values() {
            let raw: Vec<FrameBuffer> = group.iter().map(|(_, f)| (*f).clone()).collect();
            let normalized = normalize_for_comparison(&raw)?;
            for ((sensor, _), frame) in group.iter().zip(&normalized) {
                let region = illuminated_region(frame.width(), frame.height());
                let bits = entropy(frame, Some(region))?.bits;
                match values.iter_mut().find(|(s, _, _)| s == sensor) {
                    Some((_, v, _)) => v.push(bits),
                    None => values.push((*sensor, vec![bits], frame.bit_depth())),
                }
            }
        }
        for (sensor, v, bit_depth) in values {
            let (mean, std) = mean_std(&v)?;
            rows.push(EntropyRow {
                scenario: key.scenario,
                fog_type: key.fog_type,
                visibility_m: key.visibility_m,
                sensor,
                frames: v.len(),
                bit_depth,
                entropy_mean: mean,
                entropy_std: std,
            });
        }
    }
    Ok(rows)
}

/// Windowed contrast of one job's traces; needs the 5 %, 50 % and 90 % boards.
pub fn contrast_row(key: &JobKey, traces: &[TargetTrace], window: DepthWindow) -> Result<ContrastRow> {
    let report = match contrast_window(traces, window) {
        Ok(r) => r,
        Err(CoreError::UndefinedContrast) => {
            let mean = |rho: f64| {
                let t = traces.iter().find(|t| (t.rho - rho).abs() < 1e-9).expect("checked by contrast_window");
                fogbench_core::metrics::window_mean(t, window)
            };
            let (i5, i50, i90) = (mean(0.05)?, mean(0.5)?, mean(0.9)?);
            fogbench_core::metrics::ContrastReport {
                michelson: f64::NAN,
                rms: fogbench_core::metrics::rms_contrast(i5, i50, i90),
                i5,
                i50,
                i90,
            }
        }
        Err(e) => return Err(CliError::validation(format!("{}: {e}", key.stem()))),
    };
    Ok(ContrastRow {
        scenario: key.scenario,
        fog_type: key.fog_type,
        visibility_m: key.visibility_m,
        sensor: key.sensor,
        window_start_m: window.start_m,
        window_end_m: window.end_m,
        i5: report.i5,
        i50: report.i50,
        i90: report.i90,
        michelson: Some(report.michelson).filter(|m| m.is_finite()),
        rms: report.rms,
    })
}

pub fn peak_rows(key: &JobKey, traces: &[TargetTrace]) -> Result<Vec<PeakRow>> {
    traces
        .iter()
        .map(|t| {
            let (i_peak, depth_m) = peak_intensity(t)?;
            Ok(PeakRow {
                scenario: key.scenario,
                fog_type: key.fog_type,
                visibility_m: key.visibility_m,
                sensor: key.sensor,
                target_rho: t.rho,
                i_peak,
                depth_m,
            })
        })
        .collect()
}

/// Scores every trace and frame listed in the run manifest.
pub fn metrics_run(run_dir: &Path, window: DepthWindow) -> Result<MetricsOutput> {
    let manifest = output::read_manifest(run_dir)?;

    let mut jobs: Vec<(JobKey, Vec<&ManifestEntry>)> = Vec::new();
    for e in manifest.iter().filter(|e| e.kind == EntryKind::Trace) {
        match jobs.iter_mut().find(|(k, _)| *k == e.job()) {
            Some((_, v)) => v.push(e),
            None => jobs.push((e.job(), vec![e])),
        }
    }
    let mut out = MetricsOutput::default();
    for (key, entries) in &jobs {
        let mut rows = Vec::new();
        for e in entries {
            rows.extend(tracecsv::read_path(&output::resolve(run_dir, &e.path))?);
        }
        let traces = tracecsv::traces_from_rows(&rows);
        out.peaks.extend(peak_rows(key, &traces)?);
        out.contrast.push(contrast_row(key, &traces, window)?);
    }

    let mut frames = Vec::new();
    for e in manifest.iter().filter(|e| e.kind == EntryKind::Frame) {
        let path = output::resolve(run_dir, &e.path);
        let file = std::fs::File::open(&path).map_err(|err| CliError::io(&path, err))?;
        let frame = FrameBuffer::read_pgm(BufReader::new(file), e.bit_depth).map_err(|err| CliError::io(&path, err))?;
        frames.push((e.job(), e.frame_index.unwrap_or(0), frame));
    }
    out.entropy = entropy_rows(&frames)?;

    if out.entropy.is_empty() && out.contrast.is_empty() {
        return Err(CliError::validation(format!("{}: manifest lists no traces or frames", run_dir.display())));
    }
    Ok(out)
}

/// Writes the metric tables that have rows under `run_dir/metrics`.
pub fn write_output(run_dir: &Path, m: &MetricsOutput) -> Result<()> {
    let dir = run_dir.join(METRICS_DIR);
    if !m.entropy.is_empty() {
        let mut w = table(&["scenario", "fog_type", "visibility_m", "sensor", "frames", "bit_depth", "entropy_mean", "entropy_std"]);
        for r in &m.entropy {
            w.write_record([
                r.scenario.as_str().to_owned(),
                r.fog_type.as_str().to_owned(),
                format_sig9(r.visibility_m),
                r.sensor.as_str().to_owned(),
                r.frames.to_string(),
                r.bit_depth.to_string(),
                format_sig9(r.entropy_mean),
                format_sig9(r.entropy_std),
            ])
            .expect("in memory");
        }
        output::write_atomic(&dir.join(ENTROPY_FILE), &w.into_inner().expect("in memory"))?;
    }
    if !m.contrast.is_empty() {
        let mut w = table(&[
            "scenario",
            "fog_type",
            "visibility_m",
            "sensor",
            "window_start_m",
            "window_end_m",
            "i5",
            "i50",
            "i90",
            "michelson",
            "rms",
        ]);
        for r in &m.contrast {
            w.write_record([
                r.scenario.as_str().to_owned(),
                r.fog_type.as_str().to_owned(),
                format_sig9(r.visibility_m),
                r.sensor.as_str().to_owned(),
                format_sig9(r.window_start_m),
                format_sig9(r.window_end_m),
                format_sig9(r.i5),
                format_sig9(r.i50),
                format_sig9(r.i90),
                r.michelson.map(format_sig9).unwrap_or_default(),
                format_sig9(r.rms),
            ])
            .expect("in memory");
        }
        output::write_atomic(&dir.join(CONTRAST_FILE), &w.into_inner().expect("in memory"))?;
    }
    if !m.peaks.is_empty() {
        let mut w = table(&["scenario", "fog_type", "visibility_m", "sensor", "target_rho", "i_peak", "depth_m"]);
        for r in &m.peaks {
            w.write_record([
                r.scenario.as_str().to_owned(),
                r.fog_type.as_str().to_owned(),
                format_sig9(r.visibility_m),
                r.sensor.as_str().to_owned(),
                format_sig9(r.target_rho),
                format_sig9(r.i_peak),
                format_sig9(r.depth_m),
            ])
            .expect("in memory");
        }
        output::write_atomic(&dir.join(PEAKS_FILE), &w.into_inner().expect("in memory"))?;
    }
    Ok(())
}

fn table(header: &[&str]) -> csv::Writer<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in memory");
    w
}

/// Reads the metric tables present under `run_dir/metrics`; missing files yield `None`.
pub fn read_output(run_dir: &Path) -> Result<(Option<Vec<EntropyRow>>, Option<Vec<ContrastRow>>, Option<Vec<PeakRow>>)> {
    let dir = run_dir.join(METRICS_DIR);
    let load = |name: &str| dir.join(name);
    Ok((
        optional(&load(ENTROPY_FILE))?,
        optional(&load(CONTRAST_FILE))?,
        optional(&load(PEAKS_FILE))?,
    ))
}

fn optional<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Option<Vec<T>>> {
    if path.exists() {
        read_csv(path).map(Some)
    } else {
        Ok(None)
    }
}
