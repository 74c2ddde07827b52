//! Range-gated camera timing model.
//!
//! A laser pulse of length `t_laser` is emitted at time zero. The gate opens
//! `t_delay` after the end of the pulse and stays open for `t_gate`. Light
//! reflected at distance `d` returns during `[2d/c, 2d/c + t_laser]`, so the
//! sensitivity at `d` is the temporal overlap of that window with the gate,
//! normalized to a peak of one. With ideal rectangular windows the result is
//! a trapezoid in distance (a triangle when `t_laser == t_gate`).

use serde::{Deserialize, Serialize};

use crate::atmosphere::FogCondition;
use crate::error::{domain, invalid, Result};
use crate::quadrature::integrate_piecewise;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

const NS: f64 = 1e-9;
const BACKSCATTER_TOL: f64 = 1e-9;
/// Integration stops once the two-way transmission drops below this.
const BACKSCATTER_CUTOFF: f64 = 1e-12;

/// Timing of one gated slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GatingScheme {
    pub t_laser_ns: f64,
    pub t_delay_ns: f64,
    pub t_gate_ns: f64,
    pub micro_exposures: u32,
}

impl Default for GatingScheme {
    /// The single slice recorded in the 30 m fog chamber.
    fn default() -> Self {
        Self { t_laser_ns: 160.0, t_delay_ns: 90.0, t_gate_ns: 160.0, micro_exposures: 2000 }
    }
}

impl GatingScheme {
    pub fn new(t_laser_ns: f64, t_delay_ns: f64, t_gate_ns: f64, micro_exposures: u32) -> Result<Self> {
        let scheme = Self { t_laser_ns, t_delay_ns, t_gate_ns, micro_exposures };
        scheme.validate()?;
        Ok(scheme)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.t_laser_ns) {
            return Err(invalid(format!("t_laser_ns must be positive, got {}", self.t_laser_ns)));
        }
        if !positive(self.t_gate_ns) {
            return Err(invalid(format!("t_gate_ns must be positive, got {}", self.t_gate_ns)));
        }
        if !(self.t_delay_ns >= 0.0 && self.t_delay_ns.is_finite()) {
            return Err(invalid(format!("t_delay_ns must be nonnegative, got {}", self.t_delay_ns)));
        }
        if self.micro_exposures == 0 {
            return Err(invalid("micro_exposures must be at least 1"));
        }
        Ok(())
    }

    /// Nearest distance the slice can see: `c t_delay / 2`.
    pub fn slice_start_m(&self) -> f64 {
        round_trip_distance(self.t_delay_ns)
    }

    /// Farthest distance the slice can see.
    pub fn slice_end_m(&self) -> f64 {
        round_trip_distance(self.t_delay_ns + self.t_laser_ns + self.t_gate_ns)
    }

    /// Width of the region with nonzero sensitivity.
    pub fn slice_width_m(&self) -> f64 {
        self.slice_end_m() - self.slice_start_m()
    }

    pub fn profile(&self) -> GateProfile {
        gate_profile(self)
    }
}

/// Slice start distance for a scheme.
pub fn slice_start(scheme: &GatingScheme) -> f64 {
    scheme.slice_start_m()
}

fn round_trip_distance(t_ns: f64) -> f64 {
    SPEED_OF_LIGHT * t_ns * NS / 2.0
}

/// Normalized distance sensitivity of a gating scheme.
///
/// Gain rises linearly from `slice_start_m` to one at `slice_peak_m`, stays at
/// one until `plateau_end_m` and falls back to zero at `slice_end_m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateProfile {
    pub slice_start_m: f64,
    pub slice_peak_m: f64,
    pub plateau_end_m: f64,
    pub slice_end_m: f64,
}

/// Builds the trapezoidal gain profile of `scheme`.
pub fn gate_profile(scheme: &GatingScheme) -> GateProfile {
    let short = scheme.t_laser_ns.min(scheme.t_gate_ns);
    let long = scheme.t_laser_ns.max(scheme.t_gate_ns);
    GateProfile {
        slice_start_m: round_trip_distance(scheme.t_delay_ns),
        slice_peak_m: round_trip_distance(scheme.t_delay_ns + short),
        plateau_end_m: round_trip_distance(scheme.t_delay_ns + long),
        slice_end_m: round_trip_distance(scheme.t_delay_ns + scheme.t_laser_ns + scheme.t_gate_ns),
    }
}

impl GateProfile {
    /// Gain in `[0, 1]` at distance `d`.
    pub fn gain(&self, d: f64) -> f64 {
        if d <= self.slice_start_m || d >= self.slice_end_m {
            0.0
        } else if d < self.slice_peak_m {
            (d - self.slice_start_m) / (self.slice_peak_m - self.slice_start_m)
        } else if d <= self.plateau_end_m {
            1.0
        } else {
            (self.slice_end_m - d) / (self.slice_end_m - self.plateau_end_m)
        }
    }

    /// Area under the gain curve in meters.
    pub fn area_m(&self) -> f64 {
        0.5 * ((self.plateau_end_m - self.slice_peak_m) + (self.slice_end_m - self.slice_start_m))
    }

    /// Points where the gain is not differentiable.
    pub fn breakpoints(&self) -> [f64; 4] {
        [self.slice_start_m, self.slice_peak_m, self.plateau_end_m, self.slice_end_m]
    }

    /// Samples `(distance, gain)` on `[0, slice_end]` every `step_m`.
    pub fn sample(&self, step_m: f64) -> Result<Vec<(f64, f64)>> {
        if !(step_m > 0.0) {
            return Err(domain(format!("sampling step must be positive, got {step_m}")));
        }
        let n = (self.slice_end_m / step_m).ceil() as usize;
        Ok((0..=n).map(|i| {
            let d = i as f64 * step_m;
            (d, self.gain(d))
        })
        .collect())
    }
}

/// Gated sensor output for one target sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GatedResponse {
    /// Normalized chip value in `[0, 1]`.
    pub intensity: f64,
    /// Set when the accumulated signal exceeded the full-well scale and was clamped.
    pub saturated: bool,
}

/// Return from a target of reflectivity `rho` at distance `d`.
///
/// The per-exposure signal `laser_intensity * gain(d) * rho * exp(-2 beta d)`
/// is accumulated over all micro exposures and divided by `full_well`.
pub fn gated_target_response(
    scheme: &GatingScheme,
    fog: &FogCondition,
    rho: f64,
    laser_intensity: f64,
    d: f64,
    full_well: f64,
) -> Result<GatedResponse> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(domain(format!("distance must be positive, got {d}")));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(domain(format!("reflectivity must lie in [0, 1], got {rho}")));
    }
    if !(laser_intensity >= 0.0 && laser_intensity.is_finite()) {
        return Err(domain(format!("laser intensity must be nonnegative, got {laser_intensity}")));
    }
    if !(full_well > 0.0) {
        return Err(domain(format!("full-well scale must be positive, got {full_well}")));
    }
    let gain = gate_profile(scheme).gain(d);
    let per_exposure = laser_intensity * gain * rho * (-2.0 * fog.beta_per_m * d).exp();
    let accumulated = per_exposure * f64::from(scheme.micro_exposures) / full_well;
    Ok(if accumulated > 1.0 {
        GatedResponse { intensity: 1.0, saturated: true }
    } else {
        GatedResponse { intensity: accumulated, saturated: false }
    })
}

/// How the sensor integrates light over range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exposure {
    Gated(GateProfile),
    /// Conventional exposure: every range contributes with unit gain.
    Ungated,
}

impl Exposure {
    pub fn gain(&self, r: f64) -> f64 {
        match self {
            Exposure::Gated(profile) => profile.gain(r),
            Exposure::Ungated => 1.0,
        }
    }
}

impl From<&GatingScheme> for Exposure {
    fn from(scheme: &GatingScheme) -> Self {
        Exposure::Gated(gate_profile(scheme))
    }
}

/// Backscatter collected from the fog itself:
/// `laser_intensity * integral over r of gain(r) * beta * exp(-2 beta r)`.
///
/// The ungated integral is exactly `0.5 * laser_intensity` for any `beta > 0`.
pub fn backscatter_integral(exposure: &Exposure, fog: &FogCondition, laser_intensity: f64) -> f64 {
    match exposure {
        Exposure::Gated(profile) => {
            laser_intensity * backscatter_with_gain(|r| profile.gain(r), &profile.breakpoints(), fog.beta_per_m)
        }
        Exposure::Ungated => laser_intensity * backscatter_with_gain(|_| 1.0, &[], fog.beta_per_m),
    }
}

/// Backscatter integral for an arbitrary gain function.
///
/// `breakpoints` lists kinks of `gain`; supplying them keeps the adaptive
/// quadrature from chasing discontinuous derivatives.
pub fn backscatter_with_gain<G: Fn(f64) -> f64>(gain: G, breakpoints: &[f64], beta_per_m: f64) -> f64 {
    if !(beta_per_m > 0.0) {
        return 0.0;
    }
    let r_max = -BACKSCATTER_CUTOFF.ln() / (2.0 * beta_per_m);
    let integrand = |r: f64| gain(r) * beta_per_m * (-2.0 * beta_per_m * r).exp();
    integrate_piecewise(&integrand, 0.0, r_max, breakpoints, BACKSCATTER_TOL)
}

/// Gated-to-ungated backscatter ratio; below one whenever the slice starts past the sensor.
pub fn backscatter_suppression(scheme: &GatingScheme, fog: &FogCondition) -> f64 {
    let ungated = backscatter_integral(&Exposure::Ungated, fog, 1.0);
    if ungated == 0.0 {
        return 0.0;
    }
    backscatter_integral(&Exposure::from(scheme), fog, 1.0) / ungated
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atmosphere::FogType;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn fog_with_beta(beta: f64) -> FogCondition {
        FogCondition { beta_per_m: beta, ..FogCondition::new(FogType::Radiation, 30.0).unwrap() }
    }

    /// Overlap of the returned pulse with the gate by brute-force time stepping.
    fn overlap_oracle(scheme: &GatingScheme, d: f64) -> f64 {
        let tau = 2.0 * d / SPEED_OF_LIGHT / NS;
        let gate_open = scheme.t_laser_ns + scheme.t_delay_ns;
        let gate_close = gate_open + scheme.t_gate_ns;
        let steps = 200_000;
        let dt = scheme.t_laser_ns / steps as f64;
        let mut overlap = 0.0;
        for k in 0..steps {
            let t = tau + (k as f64 + 0.5) * dt;
            if t >= gate_open && t < gate_close {
                overlap += dt;
            }
        }
        overlap / scheme.t_laser_ns.min(scheme.t_gate_ns)
    }

    #[test]
    fn slice_start_examples() {
        let table = GatingScheme::default();
        assert_relative_eq!(table.slice_start_m(), 13.490_660_61, max_relative = 1e-12);
        assert!((table.slice_start_m() - 13.5).abs() < 0.02);
        assert_eq!(GatingScheme { t_delay_ns: 0.0, ..table }.slice_start_m(), 0.0);
        assert_relative_eq!(
            slice_start(&GatingScheme { t_delay_ns: 180.0, ..table }),
            26.981_321_22,
            max_relative = 1e-12
        );
    }

    #[test]
    fn table_profile_examples() {
        let profile = gate_profile(&GatingScheme::default());
        assert_eq!(profile.gain(13.49), 0.0);
        assert_eq!(profile.gain(profile.slice_start_m), 0.0);
        assert_relative_eq!(profile.slice_peak_m, 37.474_057_25, max_relative = 1e-12);
        assert_eq!(profile.gain(profile.slice_peak_m), 1.0);
        assert_eq!(profile.slice_peak_m, profile.plateau_end_m);
        assert_relative_eq!(profile.gain(25.482_358_93), 0.5, max_relative = 1e-9);
        assert_eq!(profile.gain(profile.slice_end_m + 1.0), 0.0);
    }

    #[test]
    fn profile_matches_overlap_oracle() {
        for scheme in [
            GatingScheme::default(),
            GatingScheme::new(100.0, 40.0, 250.0, 10).unwrap(),
            GatingScheme::new(300.0, 10.0, 80.0, 10).unwrap(),
        ] {
            let profile = scheme.profile();
            for i in 0..200 {
                let d = 0.4 * i as f64 + 0.1;
                assert!((profile.gain(d) - overlap_oracle(&scheme, d)).abs() < 1e-4, "d={d}");
            }
        }
    }

    #[test]
    fn profile_area_matches_closed_form() {
        let scheme = GatingScheme::new(100.0, 40.0, 250.0, 10).unwrap();
        let profile = scheme.profile();
        // trapezoid area in time is max(t_laser, t_gate) at unit height
        assert_relative_eq!(profile.area_m(), round_trip_distance(250.0), max_relative = 1e-12);
        let numeric = integrate_piecewise(&|d| profile.gain(d), 0.0, 100.0, &profile.breakpoints(), 1e-10);
        assert_relative_eq!(numeric, profile.area_m(), max_relative = 1e-9);
    }

    #[test]
    fn sampled_profile_within_bounds() {
        let samples = GatingScheme::default().profile().sample(0.25).unwrap();
        assert!(samples.iter().all(|&(_, g)| (0.0..=1.0).contains(&g)));
        assert!(GatingScheme::default().profile().sample(0.0).is_err());
    }

    #[test]
    fn scheme_validation() {
        assert!(GatingScheme::new(0.0, 90.0, 160.0, 1).is_err());
        assert!(GatingScheme::new(160.0, -1.0, 160.0, 1).is_err());
        assert!(GatingScheme::new(160.0, 90.0, 0.0, 1).is_err());
        assert!(GatingScheme::new(160.0, 90.0, 160.0, 0).is_err());
    }

    #[test]
    fn response_examples() {
        let scheme = GatingScheme::default();
        let fog = fog_with_beta(0.05);
        let m = f64::from(scheme.micro_exposures);
        assert_eq!(gated_target_response(&scheme, &fog, 0.9, 1.0, 10.0, m).unwrap().intensity, 0.0);
        assert_eq!(gated_target_response(&scheme, &fog, 0.0, 1.0, 20.0, m).unwrap().intensity, 0.0);
        let bright = gated_target_response(&scheme, &fog, 0.9, 1.0, 20.0, m).unwrap();
        let dark = gated_target_response(&scheme, &fog, 0.05, 1.0, 20.0, m).unwrap();
        assert!(!bright.saturated);
        assert_relative_eq!(bright.intensity / dark.intensity, 18.0, max_relative = 1e-12);
    }

    #[test]
    fn response_saturates() {
        let scheme = GatingScheme::default();
        let r = gated_target_response(&scheme, &fog_with_beta(0.0), 1.0, 10.0, 37.0, 1.0).unwrap();
        assert!(r.saturated);
        assert_eq!(r.intensity, 1.0);
        assert!(gated_target_response(&scheme, &fog_with_beta(0.0), 1.2, 1.0, 20.0, 1.0).is_err());
        assert!(gated_target_response(&scheme, &fog_with_beta(0.0), 0.5, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn backscatter_examples() {
        let fog = fog_with_beta(0.1);
        assert_eq!(backscatter_with_gain(|_| 0.0, &[], 0.1), 0.0);
        assert_relative_eq!(backscatter_integral(&Exposure::Ungated, &fog, 1.0), 0.5, max_relative = 1e-9);
        let gated = backscatter_integral(&Exposure::from(&GatingScheme::default()), &fog, 1.0);
        assert!(gated > 0.0 && gated < 0.5);
        // 40-digit reference quadrature of the trapezoid profile.
        assert_relative_eq!(gated, 0.006_903_091_159_116_540_3, max_relative = 1e-8);
        let ratio = backscatter_suppression(&GatingScheme::default(), &fog);
        assert_relative_eq!(ratio, 0.013_806_182_318_233_081, max_relative = 1e-8);
        assert_eq!(backscatter_integral(&Exposure::Ungated, &fog_with_beta(0.0), 1.0), 0.0);
    }

    proptest! {
        #[test]
        fn gain_bounded(d in 0.0f64..200.0, tl in 1.0f64..500.0, td in 0.0f64..500.0, tg in 1.0f64..500.0) {
            let g = GatingScheme::new(tl, td, tg, 1).unwrap().profile().gain(d);
            prop_assert!((0.0..=1.0).contains(&g));
        }

        #[test]
        fn slice_geometry_monotone(tl in 1.0f64..500.0, td in 0.0f64..500.0, tg in 1.0f64..500.0, bump in 0.1f64..100.0) {
            let base = GatingScheme::new(tl, td, tg, 1).unwrap();
            let later = GatingScheme { t_delay_ns: td + bump, ..base };
            let longer_pulse = GatingScheme { t_laser_ns: tl + bump, ..base };
            let longer_gate = GatingScheme { t_gate_ns: tg + bump, ..base };
            prop_assert!(later.slice_start_m() > base.slice_start_m());
            prop_assert!(longer_pulse.slice_width_m() > base.slice_width_m());
            prop_assert!(longer_gate.slice_width_m() > base.slice_width_m());
        }

        #[test]
        fn gating_suppresses_backscatter(tl in 10.0f64..400.0, td in 1.0f64..400.0, tg in 10.0f64..400.0, beta in 0.005f64..0.5) {
            let fog = fog_with_beta(beta);
            let scheme = GatingScheme::new(tl, td, tg, 1).unwrap();
            let gated = backscatter_integral(&Exposure::from(&scheme), &fog, 1.0);
            let ungated = backscatter_integral(&Exposure::Ungated, &fog, 1.0);
            prop_assert!(gated < ungated);
        }

        #[test]
        fn response_linear(rho in 0.0f64..0.5, laser in 0.0f64..0.5, d in 14.0f64..60.0) {
            let scheme = GatingScheme::default();
            let fog = fog_with_beta(0.05);
            let m = f64::from(scheme.micro_exposures);
            let one = gated_target_response(&scheme, &fog, rho, laser, d, m).unwrap().intensity;
            let two_rho = gated_target_response(&scheme, &fog, 2.0 * rho, laser, d, m).unwrap().intensity;
            let two_laser = gated_target_response(&scheme, &fog, rho, 2.0 * laser, d, m).unwrap().intensity;
            prop_assert!((two_rho - 2.0 * one).abs() < 1e-15);
            prop_assert!((two_laser - 2.0 * one).abs() < 1e-15);
        }
    }
}
