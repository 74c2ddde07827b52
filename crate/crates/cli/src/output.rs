//! Run directory layout, atomic file writes and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use fogbench_core::atmosphere::FogType;
use fogbench_core::scene::{ScenarioKind, SensorKind};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::tracecsv::format_sig9;

pub const MANIFEST: &str = "manifest.csv";
pub const RESOLVED_CONFIG: &str = "config.resolved.toml";
pub const TRACES_DIR: &str = "traces";
pub const FRAMES_DIR: &str = "frames";
pub const FITS_DIR: &str = "fits";
pub const METRICS_DIR: &str = "metrics";
pub const REPORT_DIR: &str = "report";

/// Writes `bytes` to `path` through a sibling temporary file and a rename,
/// creating parent directories as needed.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

/// Kind of file listed in the manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Trace,
    Frame,
}

/// Identifies one simulated (scenario, fog, sensor) job.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JobKey {
    pub scenario: ScenarioKind,
    pub fog_type: FogType,
    pub visibility_m: f64,
    pub sensor: SensorKind,
}

impl JobKey {
    /// File stem shared by the job's outputs, e.g. `passive-radiation-v55-gated`.
    pub fn stem(&self) -> String {
        format!(
            "{}-{}-v{}-{}",
            self.scenario.as_str(),
            self.fog_type.as_str(),
            format_sig9(self.visibility_m),
            self.sensor.as_str()
        )
    }

    /// Same job ignoring the sensor.
    pub fn same_condition(&self, other: &JobKey) -> bool {
        self.scenario == other.scenario && self.fog_type == other.fog_type && self.visibility_m == other.visibility_m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub kind: EntryKind,
    /// Relative to the run directory, with `/` separators.
    pub path: String,
    pub scenario: ScenarioKind,
    pub fog_type: FogType,
    pub visibility_m: f64,
    pub beta_per_m: f64,
    pub sensor: SensorKind,
    pub bit_depth: u8,
    pub target_rho: Option<f64>,
    pub frame_index: Option<usize>,
    pub seed: u64,
}

impl ManifestEntry {
    pub fn job(&self) -> JobKey {
        JobKey { scenario: self.scenario, fog_type: self.fog_type, visibility_m: self.visibility_m, sensor: self.sensor }
    }
}

pub fn manifest_bytes(entries: &[ManifestEntry]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for e in entries {
        w.serialize(e).expect("manifest entry serializes");
    }
    w.into_inner().expect("flush to memory")
}

pub fn read_manifest(run_dir: &Path) -> Result<Vec<ManifestEntry>> {
    let path = run_dir.join(MANIFEST);
    let file = fs::File::open(&path).map_err(|e| CliError::io(&path, e))?;
    let mut r = csv::Reader::from_reader(file);
    r.deserialize()
        .map(|row| row.map_err(|e| CliError::validation(format!("{}: {e}", path.display()))))
        .collect()
}

pub fn resolve(run_dir: &Path, relative: &str) -> PathBuf {
    relative.split('/').fold(run_dir.to_path_buf(), |p, part| p.join(part))
}
