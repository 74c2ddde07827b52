//! Synthetic fog-chamber experiments.
//!
//! The chamber is a box `chamber_length x chamber_width x chamber_height`
//! with the sensor car at the near end, centred laterally. Coordinates are
//! `x` lateral (positive to the right), `y` height above the floor and `z`
//! depth along the viewing axis.
//!
//! Standard-camera intensities follow the shifted scattering model with the
//! headlight onset `d0`; the source term is the headlight level scaled by the
//! target reflectivity and the two-way transmission to the onset. Gated
//! intensities come from [`gated_target_response`]. An oncoming car adds a
//! Gaussian corona around its headlights, suppressed for gated sensors by the
//! gated/ungated backscatter ratio.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atmosphere::{AdaptedModel, FogCondition};
use crate::error::{domain, invalid, Error, Result};
use crate::frame::FrameBuffer;
use crate::metrics::Region;
use crate::gated::{
    backscatter_integral, backscatter_suppression, gate_profile, gated_target_response, Exposure, GateProfile,
    GatingScheme,
};

/// Reflectivities of the calibrated target boards.
pub const STANDARD_REFLECTIVITIES: [f64; 3] = [0.05, 0.50, 0.90];
pub const DEFAULT_BIN_WIDTH_M: f64 = 1.0;
pub const DEFAULT_STEP_M: f64 = 0.25;
/// Edge length of a square reflectance board.
pub const TARGET_SIZE_M: f64 = 0.5;
/// Board depth used for entropy frames; inside the default gated slice.
pub const ENTROPY_LAYOUT_DEPTH_M: f64 = 20.0;
/// Central share of each image axis lit by both headlights and laser.
pub const ILLUMINATED_FRACTION: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReflectanceTarget {
    pub rho: f64,
    #[serde(default = "default_mount_height")]
    pub mount_height_m: f64,
    /// Lateral offset of the board centre from the viewing axis.
    #[serde(default)]
    pub lateral_m: f64,
}

fn default_mount_height() -> f64 {
    1.6
}

impl ReflectanceTarget {
    pub fn new(rho: f64) -> Result<Self> {
        let t = Self { rho, mount_height_m: default_mount_height(), lateral_m: 0.0 };
        t.validate()?;
        Ok(t)
    }

    /// The 5 %, 50 % and 90 % boards side by side, 0.8 m apart.
    pub fn standard_set() -> Vec<Self> {
        STANDARD_REFLECTIVITIES
            .iter()
            .enumerate()
            .map(|(i, &rho)| Self { rho, mount_height_m: default_mount_height(), lateral_m: 0.8 * (i as f64 - 1.0) })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(invalid(format!("target reflectivity must lie in [0, 1], got {}", self.rho)));
        }
        if !self.mount_height_m.is_finite() || !self.lateral_m.is_finite() {
            return Err(invalid("target position must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Passive,
    OncomingCar,
}

impl ScenarioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Passive => "passive",
            ScenarioKind::OncomingCar => "oncoming_car",
        }
    }
}

/// Headlights of an oncoming car facing the sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OncomingSource {
    /// Depth of the headlights along the viewing axis.
    pub position_m: f64,
    pub lateral_m: f64,
    pub height_m: f64,
    /// Peak corona level in chip units.
    pub intensity: f64,
    pub angular_sigma_rad: f64,
}

impl Default for OncomingSource {
    fn default() -> Self {
        Self { position_m: 30.0, lateral_m: 1.5, height_m: 0.7, intensity: 0.6, angular_sigma_rad: 0.1 }
    }
}

/// Free illumination constants of the standard-camera simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Illumination {
    /// Chip level of a perfectly white board at the headlight onset in clear air.
    pub headlight_intensity: f64,
    /// Horizon brightness `I_inf`.
    pub horizon_brightness: f64,
    /// Depth `d0` at which boards become fully illuminated.
    pub onset_m: f64,
    /// Air-light decay coefficient as a multiple of the fog's `beta`.
    pub airlight_decay_ratio: f64,
}

impl Default for Illumination {
    fn default() -> Self {
        Self { headlight_intensity: 0.8, horizon_brightness: 0.2, onset_m: 5.0, airlight_decay_ratio: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub chamber_length_m: f64,
    pub chamber_width_m: f64,
    pub chamber_height_m: f64,
    pub camera_height_m: f64,
    pub illumination: Illumination,
    pub oncoming_source: Option<OncomingSource>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self::passive()
    }
}

impl Scenario {
    /// Scenario 1: targets only.
    pub fn passive() -> Self {
        Self {
            kind: ScenarioKind::Passive,
            chamber_length_m: 30.0,
            chamber_width_m: 5.5,
            chamber_height_m: 2.0,
            camera_height_m: 1.3,
            illumination: Illumination::default(),
            oncoming_source: None,
        }
    }

    /// Scenario 2: an oncoming car with high beams at the far end.
    pub fn oncoming_car() -> Self {
        Self { kind: ScenarioKind::OncomingCar, oncoming_source: Some(OncomingSource::default()), ..Self::passive() }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("chamber_length_m", self.chamber_length_m),
            ("chamber_width_m", self.chamber_width_m),
            ("chamber_height_m", self.chamber_height_m),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.camera_height_m > 0.0 && self.camera_height_m < self.chamber_height_m) {
            return Err(invalid(format!("camera_height_m must lie inside the chamber, got {}", self.camera_height_m)));
        }
        let il = &self.illumination;
        if !(il.headlight_intensity >= 0.0 && il.horizon_brightness >= 0.0 && il.airlight_decay_ratio >= 0.0) {
            return Err(invalid("illumination constants must be nonnegative"));
        }
        if !(il.onset_m >= 0.0) {
            return Err(invalid(format!("illumination onset must be nonnegative, got {}", il.onset_m)));
        }
        match (self.kind, &self.oncoming_source) {
            (ScenarioKind::Passive, None) => Ok(()),
            (ScenarioKind::OncomingCar, Some(src)) => {
                if !(src.angular_sigma_rad > 0.0 && src.intensity >= 0.0 && src.position_m > 0.0) {
                    return Err(invalid("oncoming source needs positive position and angular sigma"));
                }
                Ok(())
            }
            (ScenarioKind::Passive, Some(_)) => Err(invalid("passive scenario must not have an oncoming source")),
            (ScenarioKind::OncomingCar, None) => Err(invalid("oncoming_car scenario requires an oncoming source")),
        }
    }

    fn source_direction(&self) -> Option<[f64; 3]> {
        self.oncoming_source
            .map(|s| normalize([s.lateral_m, s.height_m - self.camera_height_m, s.position_m]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    Standard,
    Gated,
}

impl SensorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SensorKind::Standard => "standard",
            SensorKind::Gated => "gated",
        }
    }
}

/// Per-pixel noise: Gaussian with `std = sqrt(read_sigma^2 + shot_scale * I)`.
///
/// For gated sensors the signal is accumulated over all micro exposures, so the
/// shot-like variance grows with the exposure count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    pub read_sigma: f64,
    pub shot_scale: f64,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self { read_sigma: 0.002, shot_scale: 2e-5, seed: 0 }
    }
}

impl NoiseModel {
    pub fn none() -> Self {
        Self { read_sigma: 0.0, shot_scale: 0.0, seed: 0 }
    }

    pub fn std_at(&self, intensity: f64) -> f64 {
        (self.read_sigma * self.read_sigma + self.shot_scale * intensity.max(0.0)).sqrt()
    }

    fn is_silent(&self) -> bool {
        self.read_sigma == 0.0 && self.shot_scale == 0.0
    }
}

/// Laser and normalization constants of a gated sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatedSetup {
    pub scheme: GatingScheme,
    /// Per-exposure return of a white board at zero range in clear air.
    pub laser_intensity: f64,
    /// Accumulated signal that maps to full scale.
    pub full_well: f64,
    /// Share of the scattered laser light that returns toward the sensor.
    pub backscatter_fraction: f64,
}

impl Default for GatedSetup {
    fn default() -> Self {
        let scheme = GatingScheme::default();
        Self { scheme, laser_intensity: 50.0, full_well: f64::from(scheme.micro_exposures), backscatter_fraction: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    pub kind: SensorKind,
    pub bit_depth: u8,
    pub width: u32,
    pub height: u32,
    /// Horizontal field of view.
    #[serde(default = "default_fov")]
    pub fov_h_rad: f64,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub gating: Option<GatedSetup>,
}

fn default_fov() -> f64 {
    0.6
}

impl SensorModel {
    /// 12-bit CMOS camera, 1980x1088.
    pub fn standard() -> Self {
        Self {
            kind: SensorKind::Standard,
            bit_depth: 12,
            width: 1980,
            height: 1088,
            fov_h_rad: default_fov(),
            noise: NoiseModel::default(),
            gating: None,
        }
    }

    /// Gated NIR camera, 1280x960, with the chamber gating scheme.
    pub fn gated() -> Self {
        Self {
            kind: SensorKind::Gated,
            bit_depth: 10,
            width: 1280,
            height: 960,
            fov_h_rad: default_fov(),
            noise: NoiseModel::default(),
            gating: Some(GatedSetup::default()),
        }
    }

    pub fn with_resolution(mut self, width: u32, height: u32) -> Self {
        self.width = width;
        self.height = height;
        self
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Self {
        self.noise = noise;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(8..=16).contains(&self.bit_depth) {
            return Err(invalid(format!("bit_depth must lie in [8, 16], got {}", self.bit_depth)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(invalid("sensor resolution must be positive"));
        }
        if !(self.fov_h_rad > 0.0 && self.fov_h_rad < std::f64::consts::PI) {
            return Err(invalid(format!("fov_h_rad must lie in (0, pi), got {}", self.fov_h_rad)));
        }
        if !(self.noise.read_sigma >= 0.0 && self.noise.shot_scale >= 0.0) {
            return Err(invalid("noise parameters must be nonnegative"));
        }
        match (self.kind, &self.gating) {
            (SensorKind::Standard, None) => Ok(()),
            (SensorKind::Gated, Some(g)) => {
                g.scheme.validate()?;
                if !(g.full_well > 0.0 && g.laser_intensity >= 0.0) {
                    return Err(invalid("gated sensor needs positive full_well and nonnegative laser_intensity"));
                }
                if !(0.0..=1.0).contains(&g.backscatter_fraction) {
                    return Err(invalid("backscatter_fraction must lie in [0, 1]"));
                }
                Ok(())
            }
            (SensorKind::Standard, Some(_)) => Err(invalid("standard sensor must not carry a gating scheme")),
            (SensorKind::Gated, None) => Err(invalid("gated sensor requires a gating scheme")),
        }
    }

    fn focal_px(&self) -> f64 {
        0.5 * f64::from(self.width) / (0.5 * self.fov_h_rad).tan()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub depth_m: f64,
    pub intensity: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthBin {
    pub center_m: f64,
    pub mean_intensity: f64,
    pub std: f64,
    pub count: usize,
}

/// Intensity-vs-depth observations of one reflectance target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetTrace {
    pub rho: f64,
    pub samples: Vec<TraceSample>,
    pub binned: Vec<DepthBin>,
}

impl TargetTrace {
    /// Builds a trace and its depth bins from raw samples.
    pub fn from_samples(rho: f64, samples: Vec<TraceSample>, bin_width_m: f64) -> Result<Self> {
        let binned = bin_by_depth(&samples, bin_width_m)?;
        Ok(Self { rho, samples, binned })
    }

    /// A trace that only carries already-binned statistics.
    pub fn from_bins(rho: f64, binned: Vec<DepthBin>) -> Self {
        Self { rho, samples: Vec::new(), binned }
    }
}

/// A board placed in the chamber for rendering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetPlacement {
    pub target: ReflectanceTarget,
    pub depth_m: f64,
}

/// Mixes a base seed with a job or stream index (SplitMix64 finalizer).
/// The standard boards side by side at [`ENTROPY_LAYOUT_DEPTH_M`].
pub fn entropy_layout() -> Vec<TargetPlacement> {
    ReflectanceTarget::standard_set()
        .into_iter()
        .map(|target| TargetPlacement { target, depth_m: ENTROPY_LAYOUT_DEPTH_M })
        .collect()
}

/// Centred region covering [`ILLUMINATED_FRACTION`] of each axis of a
/// `width x height` frame.
pub fn illuminated_region(width: u32, height: u32) -> Region {
    let w = ((f64::from(width) * ILLUMINATED_FRACTION).round() as u32).max(1);
    let h = ((f64::from(height) * ILLUMINATED_FRACTION).round() as u32).max(1);
    Region { x: (width - w) / 2, y: (height - h) / 2, width: w, height: h }
}

pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-bin mean and sample standard deviation, bins `[k w, (k+1) w)`.
///
/// Empty bins are omitted; the result is sorted by centre.
pub fn bin_by_depth(samples: &[TraceSample], bin_width_m: f64) -> Result<Vec<DepthBin>> {
    if !(bin_width_m > 0.0 && bin_width_m.is_finite()) {
        return Err(domain(format!("bin width must be positive, got {bin_width_m}")));
    }
    let mut groups: std::collections::BTreeMap<i64, Vec<f64>> = std::collections::BTreeMap::new();
    for s in samples {
        let k = (s.depth_m / bin_width_m).floor() as i64;
        groups.entry(k).or_default().push(s.intensity);
    }
    Ok(groups
        .into_iter()
        .map(|(k, values)| {
            let n = values.len();
            let mean = values.iter().sum::<f64>() / n as f64;
            let std = if n > 1 {
                (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            DepthBin { center_m: (k as f64 + 0.5) * bin_width_m, mean_intensity: mean, std, count: n }
        })
        .collect())
}

/// Corona glare seen by a standard camera at angle `theta_rad` from the oncoming headlights.
pub fn corona_intensity(scenario: &Scenario, fog: &FogCondition, theta_rad: f64) -> Result<f64> {
    let src = scenario
        .oncoming_source
        .filter(|_| scenario.kind == ScenarioKind::OncomingCar)
        .ok_or_else(|| invalid("corona requires an oncoming_car scenario"))?;
    let path = (src.position_m.powi(2) + src.lateral_m.powi(2) + (src.height_m - scenario.camera_height_m).powi(2)).sqrt();
    let sigma = src.angular_sigma_rad;
    let glare = src.intensity * (-theta_rad * theta_rad / (2.0 * sigma * sigma)).exp();
    Ok(glare * -(-fog.beta_per_m * path).exp_m1())
}

/// Corona for a gated sensor: the standard corona times the backscatter suppression ratio.
pub fn gated_corona_intensity(
    scenario: &Scenario,
    fog: &FogCondition,
    scheme: &GatingScheme,
    theta_rad: f64,
) -> Result<f64> {
    Ok(corona_intensity(scenario, fog, theta_rad)? * backscatter_suppression(scheme, fog))
}

/// Noise-free sensor response, precomputed for one (scenario, fog, sensor) job.
struct Response {
    kind: Kind,
    corona_peak: f64,
    corona_sigma: f64,
    source_dir: Option<[f64; 3]>,
}

enum Kind {
    Standard { template: AdaptedModel, source_level: f64, headlight: f64, beta: f64 },
    Gated { setup: GatedSetup, fog: FogCondition, profile: GateProfile, scale: f64, backscatter: f64 },
}

impl Response {
    fn new(scenario: &Scenario, fog: &FogCondition, sensor: &SensorModel) -> Result<Self> {
        let beta = fog.beta_per_m;
        let il = &scenario.illumination;
        let kind = match (&sensor.gating, sensor.kind) {
            (Some(g), SensorKind::Gated) => {
                let scale = g.laser_intensity * f64::from(g.scheme.micro_exposures) / g.full_well;
                let backscatter = scale * g.backscatter_fraction * backscatter_integral(&Exposure::from(&g.scheme), fog, 1.0);
                Kind::Gated { setup: *g, fog: *fog, profile: gate_profile(&g.scheme), scale, backscatter }
            }
            _ => Kind::Standard {
                template: AdaptedModel {
                    i0: 0.0,
                    i_inf: il.horizon_brightness,
                    d0_m: il.onset_m,
                    beta_per_m: beta,
                    beta_a_per_m: beta * il.airlight_decay_ratio,
                },
                source_level: il.headlight_intensity * (-2.0 * beta * il.onset_m).exp(),
                headlight: il.headlight_intensity,
                beta,
            },
        };
        let (corona_peak, corona_sigma) = match scenario.oncoming_source {
            Some(src) if scenario.kind == ScenarioKind::OncomingCar => {
                let peak = match (&sensor.gating, sensor.kind) {
                    (Some(g), SensorKind::Gated) => gated_corona_intensity(scenario, fog, &g.scheme, 0.0)?,
                    _ => corona_intensity(scenario, fog, 0.0)?,
                };
                (peak, src.angular_sigma_rad)
            }
            _ => (0.0, 1.0),
        };
        Ok(Self { kind, corona_peak, corona_sigma, source_dir: scenario.source_direction() })
    }

    /// Sweep sample of a board at depth `d`: the shifted model for standard
    /// cameras, the gated target response otherwise.
    fn board(&self, rho: f64, d: f64) -> Result<f64> {
        match &self.kind {
            Kind::Standard { template, source_level, .. } => Ok(AdaptedModel { i0: rho * source_level, ..*template }.eval(d)),
            Kind::Gated { setup, fog, .. } => {
                Ok(gated_target_response(&setup.scheme, fog, rho, setup.laser_intensity, d, setup.full_well)?.intensity)
            }
        }
    }

    /// Rendered surface of reflectivity `rho` at range `r`. Standard cameras
    /// see attenuation plus air-light with the co-moving headlights as a
    /// range-independent source.
    fn surface(&self, rho: f64, r: f64) -> f64 {
        match &self.kind {
            Kind::Standard { template, headlight, beta, .. } => {
                let transmission = (-beta * r).exp();
                rho * headlight * transmission + template.i_inf * (1.0 - transmission)
            }
            Kind::Gated { profile, scale, fog, .. } => {
                scale * profile.gain(r) * rho * (-2.0 * fog.beta_per_m * r).exp()
            }
        }
    }

    /// Signal of pixels that look past the far end of the chamber.
    fn background(&self, far_m: f64) -> f64 {
        match &self.kind {
            Kind::Standard { template, beta, .. } => template.i_inf * -(-beta * far_m).exp_m1(),
            Kind::Gated { .. } => 0.0,
        }
    }

    /// Range-independent additive level (gated fog backscatter).
    fn ambient(&self) -> f64 {
        match &self.kind {
            Kind::Gated { backscatter, .. } => *backscatter,
            Kind::Standard { .. } => 0.0,
        }
    }

    fn corona(&self, dir: [f64; 3]) -> f64 {
        match self.source_dir {
            Some(src) if self.corona_peak > 0.0 => {
                let cos = (dot(src, dir)).clamp(-1.0, 1.0);
                let theta = cos.acos();
                self.corona_peak * (-theta * theta / (2.0 * self.corona_sigma * self.corona_sigma)).exp()
            }
            _ => 0.0,
        }
    }
}

/// Moves each target along the viewing axis from `step_m` to the chamber end.
///
/// Model intensities are evaluated at the board's depth. Fog backscatter is a
/// whole-frame offset and only enters [`render_frame`].
///
/// Every depth yields one sample per target: the mean over the board's pixel
/// footprint, so its noise is the per-pixel noise divided by the square root
/// of the footprint. The `std` field carries the per-pixel noise.
pub fn simulate_sweep(
    scenario: &Scenario,
    fog: &FogCondition,
    sensor: &SensorModel,
    targets: &[ReflectanceTarget],
    step_m: f64,
    bin_width_m: f64,
) -> Result<Vec<TargetTrace>> {
    if targets.is_empty() {
        return Err(Error::Empty("target list"));
    }
    if !(step_m > 0.0 && step_m.is_finite()) {
        return Err(domain(format!("sweep step must be positive, got {step_m}")));
    }
    scenario.validate()?;
    sensor.validate()?;
    for t in targets {
        t.validate()?;
    }
    let response = Response::new(scenario, fog, sensor)?;
    let n_steps = (scenario.chamber_length_m / step_m + 1e-9).floor() as usize;
    let focal = sensor.focal_px();

    targets
        .iter()
        .enumerate()
        .map(|(idx, target)| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(sensor.noise.seed, idx as u64));
            let samples = (1..=n_steps)
                .map(|k| {
                    let depth = k as f64 * step_m;
                    let offset = [target.lateral_m, target.mount_height_m - scenario.camera_height_m, depth];
                    let clean = (response.board(target.rho, depth)? + response.corona(normalize(offset))).min(1.0);
                    let pixel_std = sensor.noise.std_at(clean);
                    let footprint = (focal * TARGET_SIZE_M / depth).powi(2).max(1.0);
                    let intensity = if sensor.noise.is_silent() {
                        clean
                    } else {
                        let z: f64 = rng.sample(StandardNormal);
                        (clean + z * pixel_std / footprint.sqrt()).clamp(0.0, 1.0)
                    };
                    Ok(TraceSample { depth_m: depth, intensity, std: pixel_std })
                })
                .collect::<Result<Vec<_>>>()?;
            TargetTrace::from_samples(target.rho, samples, bin_width_m)
        })
        .collect()
}

/// Renders one frame of the chamber as seen by `sensor`.
///
/// Rays hit the reflectance boards, the floor, the side walls or the ceiling;
/// the chamber surfaces carry a fixed tiled reflectivity pattern. Rays that
/// leave through the far end see pure air-light at the chamber length.
pub fn render_frame(
    scenario: &Scenario,
    fog: &FogCondition,
    sensor: &SensorModel,
    layout: &[TargetPlacement],
    rng_seed: u64,
) -> Result<FrameBuffer> {
    scenario.validate()?;
    sensor.validate()?;
    for p in layout {
        p.target.validate()?;
        let half = 0.5 * TARGET_SIZE_M;
        let inside = p.depth_m > 0.0
            && p.depth_m <= scenario.chamber_length_m
            && p.target.lateral_m.abs() + half <= 0.5 * scenario.chamber_width_m
            && p.target.mount_height_m - half >= 0.0
            && p.target.mount_height_m + half <= scenario.chamber_height_m;
        if !inside {
            return Err(invalid(format!(
                "target at depth {} m, lateral {} m lies outside the chamber",
                p.depth_m, p.target.lateral_m
            )));
        }
    }
    let response = Response::new(scenario, fog, sensor)?;
    let focal = sensor.focal_px();
    let (w, h) = (sensor.width as usize, sensor.height as usize);
    let full_scale = f64::from(((1u32 << sensor.bit_depth) - 1) as u16);
    let far = scenario.chamber_length_m;
    let background = response.background(far);

    let mut pixels = vec![0u16; w * h];
    pixels.par_chunks_mut(w).enumerate().for_each(|(row, out)| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(rng_seed, row as u64));
        let dy = -((row as f64 + 0.5) - 0.5 * h as f64) / focal;
        for (col, px) in out.iter_mut().enumerate() {
            let dx = ((col as f64 + 0.5) - 0.5 * w as f64) / focal;
            let dir = [dx, dy, 1.0];
            let len = norm(dir);
            let signal = match cast_ray(scenario, layout, dir) {
                Some((t, rho)) => response.surface(rho, t * len),
                None => background,
            };
            let clean = signal + response.ambient() + response.corona([dx / len, dy / len, 1.0 / len]);
            let value = if sensor.noise.is_silent() {
                clean
            } else {
                let z: f64 = rng.sample(StandardNormal);
                clean + z * sensor.noise.std_at(clean)
            };
            *px = quantize(value, full_scale);
        }
    });
    FrameBuffer::from_pixels(sensor.width, sensor.height, sensor.bit_depth, pixels)
}

/// Rounds half away from zero onto the sensor scale, then clamps.
fn quantize(value: f64, full_scale: f64) -> u16 {
    (value * full_scale).round().clamp(0.0, full_scale) as u16
}

/// Nearest hit along `dir` (with `dir.z == 1`), as ray parameter and reflectivity.
fn cast_ray(scenario: &Scenario, layout: &[TargetPlacement], dir: [f64; 3]) -> Option<(f64, f64)> {
    let [dx, dy, _] = dir;
    let cam_h = scenario.camera_height_m;
    let half_w = 0.5 * scenario.chamber_width_m;
    let length = scenario.chamber_length_m;

    let mut best: Option<(f64, f64)> = None;
    let mut consider = |t: f64, rho: f64| {
        if t > 0.0 && best.is_none_or(|(bt, _)| t < bt) {
            best = Some((t, rho));
        }
    };

    for p in layout {
        let t = p.depth_m;
        let x = t * dx;
        let y = cam_h + t * dy;
        let half = 0.5 * TARGET_SIZE_M;
        if (x - p.target.lateral_m).abs() <= half && (y - p.target.mount_height_m).abs() <= half {
            consider(t, p.target.rho);
        }
    }
    if dy < 0.0 {
        let t = -cam_h / dy;
        if t <= length {
            consider(t, tile_reflectivity(0, t * dx, t));
        }
    } else if dy > 0.0 {
        let t = (scenario.chamber_height_m - cam_h) / dy;
        if t <= length {
            consider(t, tile_reflectivity(1, t * dx, t));
        }
    }
    if dx != 0.0 {
        let t = half_w / dx.abs();
        if t <= length {
            consider(t, tile_reflectivity(2, cam_h + t * dy, t));
        }
    }
    best
}

/// Deterministic per-tile reflectivity in `[0.1, 0.7]` on a 0.5 m grid.
fn tile_reflectivity(face: u64, u: f64, depth: f64) -> f64 {
    let iu = (u / 0.5).floor() as i64 as u64;
    let iz = (depth / 0.5).floor() as i64 as u64;
    let h = derive_seed(face, iu.wrapping_mul(0x1F1F_1F1F) ^ iz);
    0.1 + 0.6 * ((h >> 11) as f64 / (1u64 << 53) as f64)
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    let n = norm(a);
    [a[0] / n, a[1] / n, a[2] / n]
}
