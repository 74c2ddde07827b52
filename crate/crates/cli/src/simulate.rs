//! `simulate`: target sweeps and rendered frames for every job of the grid.

use std::path::Path;

use fogbench_core::atmosphere::FogCondition;
use fogbench_core::scene::{derive_seed, entropy_layout, render_frame, simulate_sweep, ScenarioKind, SensorModel};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, SensorConfig};
use crate::error::{CliError, Result};
use crate::output::{self, EntryKind, JobKey, ManifestEntry, FRAMES_DIR, MANIFEST, RESOLVED_CONFIG, TRACES_DIR};
use crate::tracecsv::{self, format_sig9};

/// Offset separating frame seeds from the per-target sweep seeds of a job.
const FRAME_STREAM: u64 = 0x6672_616d_6573;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateSummary {
    pub jobs: usize,
    pub traces: usize,
    pub frames: usize,
    pub manifest: Vec<ManifestEntry>,
}

struct Job<'a> {
    index: usize,
    scenario: ScenarioKind,
    fog: FogCondition,
    sensor: &'a SensorConfig,
}

/// Jobs in output order: scenario, then fog type and visibility, then sensor.
fn jobs(config: &ExperimentConfig) -> Result<Vec<Job<'_>>> {
    let fogs = config.fog.conditions()?;
    let mut out = Vec::new();
    for &scenario in &config.scenarios {
        for fog in &fogs {
            for sensor in &config.sensors {
                out.push(Job { index: out.len(), scenario, fog: *fog, sensor });
            }
        }
    }
    Ok(out)
}

/// Runs every job and writes traces, frames, the resolved config and,
/// last, the manifest into the configured output directory.
pub fn simulate(config: &ExperimentConfig) -> Result<SimulateSummary> {
    config.validate()?;
    let run_dir = config.out_dir.clone().ok_or_else(|| CliError::validation("out_dir: not set"))?;
    std::fs::create_dir_all(&run_dir).map_err(|e| CliError::io(&run_dir, e))?;

    let jobs = jobs(config)?;
    let per_job: Vec<Vec<ManifestEntry>> =
        jobs.par_iter().map(|job| run_job(config, job, &run_dir)).collect::<Result<_>>()?;
    let manifest: Vec<ManifestEntry> = per_job.into_iter().flatten().collect();

    let resolved = ExperimentConfig { out_dir: None, ..config.clone() };
    output::write_atomic(&run_dir.join(RESOLVED_CONFIG), resolved.to_toml().as_bytes())?;
    output::write_atomic(&run_dir.join(MANIFEST), &output::manifest_bytes(&manifest))?;

    let traces = manifest.iter().filter(|e| e.kind == EntryKind::Trace).count();
    Ok(SimulateSummary { jobs: jobs.len(), traces, frames: manifest.len() - traces, manifest })
}

fn run_job(config: &ExperimentConfig, job: &Job<'_>, run_dir: &Path) -> Result<Vec<ManifestEntry>> {
    let seed = derive_seed(config.seed, job.index as u64);
    let sensor = job.sensor.model(seed);
    let scenario = ExperimentConfig::scenario(job.scenario);
    let key = JobKey {
        scenario: job.scenario,
        fog_type: job.fog.fog_type,
        visibility_m: job.fog.visibility_m,
        sensor: sensor.kind,
    };
    let stem = key.stem();
    let entry = |kind, path: String, target_rho, frame_index| ManifestEntry {
        kind,
        path,
        scenario: key.scenario,
        fog_type: key.fog_type,
        visibility_m: key.visibility_m,
        beta_per_m: job.fog.beta_per_m,
        sensor: key.sensor,
        bit_depth: sensor.bit_depth,
        target_rho,
        frame_index,
        seed,
    };
    let mut entries = Vec::new();

    let targets = config.reflectance_targets();
    let traces = simulate_sweep(&scenario, &job.fog, &sensor, &targets, config.step_m, config.bin_width_m)?;
    for trace in &traces {
        let rel = format!("{TRACES_DIR}/{stem}-rho{}.csv", format_sig9(trace.rho));
        let bytes = tracecsv::to_bytes(&tracecsv::rows_from_traces(std::slice::from_ref(trace)));
        output::write_atomic(&output::resolve(run_dir, &rel), &bytes)?;
        entries.push(entry(EntryKind::Trace, rel, Some(trace.rho), None));
    }

    if config.write_frames {
        let render_sensor = scaled(&sensor, config.render_scale);
        let layout = entropy_layout();
        let frame_seed = derive_seed(seed, FRAME_STREAM);
        for k in 0..config.frames_per_series {
            let frame = render_frame(&scenario, &job.fog, &render_sensor, &layout, derive_seed(frame_seed, k as u64))?;
            let rel = format!("{FRAMES_DIR}/{stem}-{k:03}.pgm");
            let mut bytes = Vec::new();
            frame.write_pgm(&mut bytes).expect("writing to memory");
            output::write_atomic(&output::resolve(run_dir, &rel), &bytes)?;
            entries.push(entry(EntryKind::Frame, rel, None, Some(k)));
        }
    }
    Ok(entries)
}

/// The sensor with its resolution scaled by `scale` (at least one pixel).
pub fn scaled(sensor: &SensorModel, scale: f64) -> SensorModel {
    let dim = |n: u32| ((f64::from(n) * scale).round() as u32).max(1);
    sensor.with_resolution(dim(sensor.width), dim(sensor.height))
}
