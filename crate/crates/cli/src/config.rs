//! Experiment configuration.
//!
//! A run is described by one TOML file. Every field has a default, so an
//! empty file yields the full chamber grid: both fog types, four visibility
//! ranges, the passive scenario, both sensors and the three standard boards.
//! Command-line flags override file values.

use std::path::{Path, PathBuf};

use fogbench_core::atmosphere::{beta_from_visibility, FogCondition, FogType, DEFAULT_EPSILON};
use fogbench_core::gated::GatingScheme;
use fogbench_core::scene::{
    GatedSetup, NoiseModel, ReflectanceTarget, Scenario, ScenarioKind, SensorKind, SensorModel,
    DEFAULT_BIN_WIDTH_M, DEFAULT_STEP_M, STANDARD_REFLECTIVITIES,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Output directory used when neither a flag, the config nor `FOGBENCH_OUT` names one.
pub const DEFAULT_OUT_DIR: &str = "fogbench-out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub step_m: f64,
    pub bin_width_m: f64,
    /// Frames rendered per (scenario, fog, sensor) series.
    pub frames_per_series: usize,
    /// Rendered frame size as a fraction of the sensor resolution.
    pub render_scale: f64,
    pub write_frames: bool,
    /// Depth window for contrast metrics, in meters.
    pub contrast_window_m: [f64; 2],
    pub scenarios: Vec<ScenarioKind>,
    pub targets: Vec<f64>,
    pub fog: FogGrid,
    pub sensors: Vec<SensorConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: None,
            step_m: DEFAULT_STEP_M,
            bin_width_m: DEFAULT_BIN_WIDTH_M,
            frames_per_series: 10,
            render_scale: 0.25,
            write_frames: true,
            contrast_window_m: [5.0, 10.0],
            scenarios: vec![ScenarioKind::Passive],
            targets: STANDARD_REFLECTIVITIES.to_vec(),
            fog: FogGrid::default(),
            sensors: vec![SensorConfig::new(SensorKind::Standard), SensorConfig::new(SensorKind::Gated)],
        }
    }
}

/// Cross product of fog types and visibility ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FogGrid {
    pub types: Vec<FogType>,
    /// `[low, high]` visibility ranges in meters; each is simulated at its midpoint.
    pub visibility_ranges_m: Vec<[f64; 2]>,
}

impl Default for FogGrid {
    fn default() -> Self {
        Self {
            types: vec![FogType::Radiation, FogType::Advection],
            visibility_ranges_m: vec![[10.0, 20.0], [20.0, 30.0], [30.0, 40.0], [50.0, 60.0]],
        }
    }
}

impl FogGrid {
    pub fn conditions(&self) -> Result<Vec<FogCondition>> {
        let mut out = Vec::with_capacity(self.types.len() * self.visibility_ranges_m.len());
        for &fog_type in &self.types {
            for range in &self.visibility_ranges_m {
                out.push(FogCondition::new(fog_type, visibility_midpoint(*range))?);
            }
        }
        Ok(out)
    }
}

/// Single visibility standing in for a range, e.g. 50-60 m gives 55 m.
pub fn visibility_midpoint(range: [f64; 2]) -> f64 {
    0.5 * (range[0] + range[1])
}

/// One sensor of the run; unset fields take the sensor kind's defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    pub kind: SensorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bit_depth: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fov_h_rad: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub read_sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shot_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub laser_intensity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gating: Option<GatingScheme>,
}

impl SensorConfig {
    pub fn new(kind: SensorKind) -> Self {
        Self {
            kind,
            bit_depth: None,
            width: None,
            height: None,
            fov_h_rad: None,
            read_sigma: None,
            shot_scale: None,
            laser_intensity: None,
            gating: None,
        }
    }

    /// The sensor model with `seed` driving its sweep noise.
    pub fn model(&self, seed: u64) -> SensorModel {
        let mut model = match self.kind {
            SensorKind::Standard => SensorModel::standard(),
            SensorKind::Gated => SensorModel::gated(),
        };
        if let Some(b) = self.bit_depth {
            model.bit_depth = b;
        }
        if let Some(w) = self.width {
            model.width = w;
        }
        if let Some(h) = self.height {
            model.height = h;
        }
        if let Some(f) = self.fov_h_rad {
            model.fov_h_rad = f;
        }
        let defaults = NoiseModel::default();
        model.noise = NoiseModel {
            read_sigma: self.read_sigma.unwrap_or(defaults.read_sigma),
            shot_scale: self.shot_scale.unwrap_or(defaults.shot_scale),
            seed,
        };
        if let Some(g) = model.gating.as_mut() {
            if let Some(scheme) = self.gating {
                *g = GatedSetup { scheme, full_well: f64::from(scheme.micro_exposures), ..*g };
            }
            if let Some(l) = self.laser_intensity {
                g.laser_intensity = l;
            }
        }
        model
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| CliError::validation(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Validation(msg) => CliError::validation(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, msg: String| Err(CliError::validation(format!("{field}: {msg}")));
        if !(self.step_m > 0.0 && self.step_m.is_finite()) {
            return fail("step_m", format!("must be positive, got {}", self.step_m));
        }
        if !(self.bin_width_m > 0.0 && self.bin_width_m.is_finite()) {
            return fail("bin_width_m", format!("must be positive, got {}", self.bin_width_m));
        }
        if !(self.render_scale > 0.0 && self.render_scale <= 1.0) {
            return fail("render_scale", format!("must lie in (0, 1], got {}", self.render_scale));
        }
        let [lo, hi] = self.contrast_window_m;
        if !(lo >= 0.0 && hi > lo) {
            return fail("contrast_window_m", format!("needs 0 <= start < end, got [{lo}, {hi}]"));
        }
        if self.scenarios.is_empty() {
            return fail("scenarios", "at least one scenario is required".into());
        }
        if self.targets.is_empty() {
            return fail("targets", "at least one target is required".into());
        }
        for (i, &rho) in self.targets.iter().enumerate() {
            if !(0.0..=1.0).contains(&rho) {
                return fail(&format!("targets[{i}]"), format!("reflectivity must lie in [0, 1], got {rho}"));
            }
            if self.targets[..i].contains(&rho) {
                return fail(&format!("targets[{i}]"), format!("duplicate reflectivity {rho}"));
            }
        }
        if self.fog.types.is_empty() {
            return fail("fog.types", "at least one fog type is required".into());
        }
        if self.fog.visibility_ranges_m.is_empty() {
            return fail("fog.visibility_ranges_m", "at least one visibility range is required".into());
        }
        for (i, &[lo, hi]) in self.fog.visibility_ranges_m.iter().enumerate() {
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return fail(&format!("fog.visibility_ranges_m[{i}]"), format!("needs 0 < low <= high, got [{lo}, {hi}]"));
            }
            beta_from_visibility(visibility_midpoint([lo, hi]), DEFAULT_EPSILON)
                .map_err(|e| CliError::validation(format!("fog.visibility_ranges_m[{i}]: {e}")))?;
        }
        if self.sensors.is_empty() {
            return fail("sensors", "at least one sensor is required".into());
        }
        for (i, s) in self.sensors.iter().enumerate() {
            if self.sensors[..i].iter().any(|o| o.kind == s.kind) {
                return fail(&format!("sensors[{i}].kind"), format!("duplicate sensor kind {}", s.kind.as_str()));
            }
            if s.kind == SensorKind::Standard && (s.gating.is_some() || s.laser_intensity.is_some()) {
                return fail(&format!("sensors[{i}]"), "standard sensor takes no gating or laser settings".into());
            }
            s.model(0).validate().map_err(|e| CliError::validation(format!("sensors[{i}]: {e}")))?;
        }
        Ok(())
    }

    pub fn scenario(kind: ScenarioKind) -> Scenario {
        match kind {
            ScenarioKind::Passive => Scenario::passive(),
            ScenarioKind::OncomingCar => Scenario::oncoming_car(),
        }
    }

    pub fn reflectance_targets(&self) -> Vec<ReflectanceTarget> {
        let standard = ReflectanceTarget::standard_set();
        self.targets
            .iter()
            .enumerate()
            .map(|(i, &rho)| ReflectanceTarget { rho, ..standard[i % standard.len()] })
            .collect()
    }
}

/// Values given on the command line; `None` leaves the config value in place.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub bin_width_m: Option<f64>,
    pub step_m: Option<f64>,
}

impl Overrides {
    /// Applies flags over `config` and resolves the output directory:
    /// flag, then config, then `env_out` (the `FOGBENCH_OUT` value), then
    /// [`DEFAULT_OUT_DIR`].
    pub fn apply(&self, mut config: ExperimentConfig, env_out: Option<PathBuf>) -> Result<ExperimentConfig> {
        if let Some(s) = self.seed {
            config.seed = s;
        }
        if let Some(b) = self.bin_width_m {
            config.bin_width_m = b;
        }
        if let Some(s) = self.step_m {
            config.step_m = s;
        }
        config.out_dir = Some(
            self.out_dir
                .clone()
                .or(config.out_dir)
                .or(env_out)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR)),
        );
        config.validate()?;
        Ok(config)
    }
}
