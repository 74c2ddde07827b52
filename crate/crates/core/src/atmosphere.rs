//! Closed-form fog optics.
//!
//! Intensities are normalized chip fractions (0 is black, 1 is full scale).
//! Distances are meters and attenuation coefficients are per meter. The
//! visibility relation uses the natural logarithm (Koschmieder's law):
//! `V = -ln(epsilon) / beta`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Contrast threshold commonly used for the meteorological visual range.
pub const DEFAULT_EPSILON: f64 = 0.05;

/// Fog droplet distribution offered by the fog chamber.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FogType {
    /// Small droplets.
    Radiation,
    /// Large droplets.
    Advection,
}

impl FogType {
    /// Mean droplet diameter in micrometers.
    pub fn default_droplet_diameter_um(self) -> f64 {
        match self {
            FogType::Radiation => 2.0,
            FogType::Advection => 6.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FogType::Radiation => "radiation",
            FogType::Advection => "advection",
        }
    }
}

impl std::fmt::Display for FogType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Atmospheric state of one experiment.
///
/// The droplet diameter is descriptive metadata; it never enters the optics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FogCondition {
    pub fog_type: FogType,
    pub visibility_m: f64,
    pub droplet_mean_diameter_um: f64,
    pub beta_per_m: f64,
}

impl FogCondition {
    /// Fog with the default 5 % contrast threshold and the fog type's default droplet size.
    pub fn new(fog_type: FogType, visibility_m: f64) -> Result<Self> {
        Self::with_epsilon(fog_type, visibility_m, DEFAULT_EPSILON)
    }

    pub fn with_epsilon(fog_type: FogType, visibility_m: f64, epsilon: f64) -> Result<Self> {
        let beta_per_m = beta_from_visibility(visibility_m, epsilon)?;
        Ok(Self {
            fog_type,
            visibility_m,
            droplet_mean_diameter_um: fog_type.default_droplet_diameter_um(),
            beta_per_m,
        })
    }

    pub fn with_droplet_diameter(mut self, diameter_um: f64) -> Result<Self> {
        if !(diameter_um > 0.0 && diameter_um.is_finite()) {
            return Err(domain(format!("droplet diameter must be positive, got {diameter_um}")));
        }
        self.droplet_mean_diameter_um = diameter_um;
        Ok(self)
    }

    /// True when `beta_per_m` agrees with the visibility for `epsilon` to `rel_tol`.
    pub fn is_consistent(&self, epsilon: f64, rel_tol: f64) -> bool {
        match beta_from_visibility(self.visibility_m, epsilon) {
            Ok(beta) => ((beta - self.beta_per_m) / beta).abs() <= rel_tol,
            Err(_) => false,
        }
    }
}

/// Parameters of the combined attenuation + air-light model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterParams {
    pub i0: f64,
    pub i_inf: f64,
    pub beta_per_m: f64,
    pub epsilon: f64,
}

impl ScatterParams {
    pub fn new(i0: f64, i_inf: f64, beta_per_m: f64) -> Result<Self> {
        let params = Self { i0, i_inf, beta_per_m, epsilon: DEFAULT_EPSILON };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        check_intensity("i0", self.i0)?;
        check_intensity("i_inf", self.i_inf)?;
        check_beta("beta", self.beta_per_m)?;
        check_epsilon(self.epsilon)
    }

    /// Visibility implied by `beta_per_m` and `epsilon`.
    pub fn visibility_m(&self) -> f64 {
        visibility_from_beta(self.beta_per_m, self.epsilon)
    }
}

/// Attenuation coefficient for a visibility: `-ln(epsilon) / V`.
pub fn beta_from_visibility(visibility_m: f64, epsilon: f64) -> Result<f64> {
    if !(visibility_m > 0.0) || visibility_m.is_nan() {
        return Err(domain(format!("visibility must be positive, got {visibility_m}")));
    }
    check_epsilon(epsilon)?;
    Ok(-epsilon.ln() / visibility_m)
}

/// Inverse of [`beta_from_visibility`]; infinite for clear air (`beta == 0`).
pub fn visibility_from_beta(beta_per_m: f64, epsilon: f64) -> f64 {
    -epsilon.ln() / beta_per_m
}

/// Point-source scene radiance `i0 / d^2`.
pub fn scene_radiance(i0: f64, d: f64) -> Result<f64> {
    check_distance(d)?;
    Ok(i0 / (d * d))
}

/// Scene radiance after one-way exponential decay through fog.
pub fn attenuated_intensity(i0: f64, beta_per_m: f64, d: f64) -> Result<f64> {
    check_beta("beta", beta_per_m)?;
    Ok(scene_radiance(i0, d)? * (-beta_per_m * d).exp())
}

/// Air-light accumulated along a path of length `d`: `I_inf (1 - exp(-beta d))`.
pub fn airlight(i_inf: f64, beta_per_m: f64, d: f64) -> Result<f64> {
    if !(d >= 0.0) {
        return Err(domain(format!("path length must be nonnegative, got {d}")));
    }
    check_intensity("i_inf", i_inf)?;
    check_beta("beta", beta_per_m)?;
    Ok(i_inf * -(-beta_per_m * d).exp_m1())
}

/// Attenuated scene radiance plus air-light; tends to `I_inf` for large `d`.
pub fn observed_intensity(params: &ScatterParams, d: f64) -> Result<f64> {
    Ok(attenuated_intensity(params.i0, params.beta_per_m, d)?
        + airlight(params.i_inf, params.beta_per_m, d)?)
}

/// The shifted scattering model used to describe headlight-illuminated targets:
///
/// `I(d) = i0 exp(-beta (d - d0)) + I_inf (1 - exp(-beta_a (d - d0)))`
///
/// For `d < d0` the shift is clamped at zero, so the model returns `i0`.
pub fn adapted_intensity(
    i0: f64,
    i_inf: f64,
    d0: f64,
    beta_per_m: f64,
    beta_a_per_m: f64,
    d: f64,
) -> Result<f64> {
    check_beta("beta", beta_per_m)?;
    check_beta("beta_a", beta_a_per_m)?;
    Ok(AdaptedModel { i0, i_inf, d0_m: d0, beta_per_m, beta_a_per_m }.eval(d))
}

/// Parameter set of the shifted scattering model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptedModel {
    pub i0: f64,
    pub i_inf: f64,
    pub d0_m: f64,
    pub beta_per_m: f64,
    pub beta_a_per_m: f64,
}

impl AdaptedModel {
    /// Evaluates the model without validation. Use [`adapted_intensity`] for checked input.
    #[inline]
    pub fn eval(&self, d: f64) -> f64 {
        let x = (d - self.d0_m).max(0.0);
        self.i0 * (-self.beta_per_m * x).exp() + self.i_inf * -(-self.beta_a_per_m * x).exp_m1()
    }
}

fn check_distance(d: f64) -> Result<()> {
    if d > 0.0 && d.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("distance must be positive and finite, got {d}")))
    }
}

fn check_beta(name: &str, beta: f64) -> Result<()> {
    if beta >= 0.0 && !beta.is_nan() {
        Ok(())
    } else {
        Err(domain(format!("{name} must be nonnegative, got {beta}")))
    }
}

fn check_intensity(name: &str, value: f64) -> Result<()> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("{name} must be finite and nonnegative, got {value}")))
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(domain(format!("epsilon must lie in (0, 1), got {epsilon}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn beta_for_fifty_meters() {
        let beta = beta_from_visibility(50.0, 0.05).unwrap();
        assert_relative_eq!(beta, 0.059_914_645_471_079_82, max_relative = 1e-14);
    }

    #[test]
    fn three_over_v_shorthand() {
        let exact = beta_from_visibility(30.0, 0.05).unwrap();
        assert_relative_eq!(exact, 0.099_857_742_451_799_7, max_relative = 1e-14);
        assert!((3.0 / 30.0 - exact).abs() / exact < 0.002);
    }

    #[test]
    fn beta_vanishes_for_clear_air() {
        assert!(beta_from_visibility(1e12, 0.05).unwrap() < 1e-11);
    }

    #[test]
    fn visibility_domain_errors() {
        assert!(beta_from_visibility(0.0, 0.05).is_err());
        assert!(beta_from_visibility(-5.0, 0.05).is_err());
        assert!(beta_from_visibility(50.0, 0.0).is_err());
        assert!(beta_from_visibility(50.0, 1.0).is_err());
        assert!(beta_from_visibility(f64::NAN, 0.05).is_err());
    }

    #[test]
    fn radiance_inverse_square() {
        assert_eq!(scene_radiance(1.0, 1.0).unwrap(), 1.0);
        assert_eq!(scene_radiance(1.0, 2.0).unwrap(), 0.25);
        assert_eq!(scene_radiance(0.0, 7.3).unwrap(), 0.0);
        assert!(scene_radiance(1.0, 0.0).is_err());
        assert!(scene_radiance(1.0, -1.0).is_err());
    }

    #[test]
    fn attenuation_examples() {
        assert_eq!(attenuated_intensity(0.7, 0.0, 3.0).unwrap(), scene_radiance(0.7, 3.0).unwrap());
        assert_relative_eq!(
            attenuated_intensity(1.0, 0.1, 10.0).unwrap(),
            0.003_678_794_411_714_423,
            max_relative = 1e-14
        );
        assert_eq!(attenuated_intensity(1.0, f64::INFINITY, 10.0).unwrap(), 0.0);
        assert!(attenuated_intensity(1.0, -0.1, 10.0).is_err());
    }

    #[test]
    fn airlight_examples() {
        assert_eq!(airlight(0.5, 0.1, 0.0).unwrap(), 0.0);
        assert_relative_eq!(airlight(0.5, 0.1, 1e4).unwrap(), 0.5);
        assert_relative_eq!(airlight(0.5, 0.1, 10.0).unwrap(), 0.316_060_279_414_278_84, max_relative = 1e-14);
        assert!(airlight(-0.5, 0.1, 1.0).is_err());
        assert!(airlight(0.5, 0.1, -1.0).is_err());
    }

    #[test]
    fn observed_examples() {
        let p = ScatterParams::new(1.0, 0.5, 0.1).unwrap();
        assert_relative_eq!(observed_intensity(&p, 10.0).unwrap(), 0.319_739_073_825_993_26, max_relative = 1e-14);

        let clear = ScatterParams::new(1.0, 0.5, 0.0).unwrap();
        assert_eq!(observed_intensity(&clear, 4.0).unwrap(), 1.0 / 16.0);

        assert!((observed_intensity(&p, 260.0).unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn adapted_examples() {
        assert_eq!(adapted_intensity(0.4, 0.2, 5.0, 0.06, 0.03, 5.0).unwrap(), 0.4);
        assert_relative_eq!(adapted_intensity(0.4, 0.2, 5.0, 0.06, 0.03, 1e4).unwrap(), 0.2);
        assert_relative_eq!(
            adapted_intensity(0.4, 0.2, 5.0, 0.06, 0.03, 15.0).unwrap(),
            0.271_361_010_301_267,
            max_relative = 1e-13
        );
        // clamp below the onset
        assert_eq!(adapted_intensity(0.4, 0.2, 5.0, 0.06, 0.03, 1.0).unwrap(), 0.4);
        assert!(adapted_intensity(0.4, 0.2, 5.0, -0.06, 0.03, 15.0).is_err());
        assert!(adapted_intensity(0.4, 0.2, 5.0, 0.06, -0.03, 15.0).is_err());
    }

    #[test]
    fn fog_condition_defaults() {
        let rad = FogCondition::new(FogType::Radiation, 40.0).unwrap();
        assert_eq!(rad.droplet_mean_diameter_um, 2.0);
        assert!(rad.is_consistent(0.05, 1e-15));
        let adv = FogCondition::new(FogType::Advection, 40.0).unwrap();
        assert_eq!(adv.droplet_mean_diameter_um, 6.0);
        assert_eq!(adv.beta_per_m, rad.beta_per_m);
        let custom = adv.with_droplet_diameter(4.5).unwrap();
        assert_eq!(custom.droplet_mean_diameter_um, 4.5);
        assert!(!FogCondition { beta_per_m: 0.2, ..rad }.is_consistent(0.05, 1e-6));
    }

    #[test]
    fn scatter_params_validation() {
        assert!(ScatterParams::new(-1.0, 0.5, 0.1).is_err());
        assert!(ScatterParams::new(1.0, f64::INFINITY, 0.1).is_err());
        let mut p = ScatterParams::new(1.0, 0.5, 0.1).unwrap();
        p.epsilon = 1.5;
        assert!(p.validate().is_err());
    }

    proptest! {
        #[test]
        fn visibility_round_trip(v in 0.1f64..1e4, eps in 0.001f64..0.999) {
            let beta = beta_from_visibility(v, eps).unwrap();
            let back = visibility_from_beta(beta, eps);
            prop_assert!(((back - v) / v).abs() < 1e-14);
        }

        #[test]
        fn beta_decreases_with_visibility(v in 0.1f64..1e4, dv in 0.01f64..100.0) {
            prop_assert!(beta_from_visibility(v + dv, 0.05).unwrap() < beta_from_visibility(v, 0.05).unwrap());
        }

        #[test]
        fn direct_term_is_nonnegative_and_decreasing(
            i0 in 0.0f64..10.0, i_inf in 0.0f64..1.0, beta in 0.0f64..1.0,
            d in 0.01f64..200.0, dd in 0.01f64..10.0,
        ) {
            let p = ScatterParams::new(i0, i_inf, beta).unwrap();
            let direct = observed_intensity(&p, d).unwrap() - airlight(i_inf, beta, d).unwrap();
            let direct_far = observed_intensity(&p, d + dd).unwrap() - airlight(i_inf, beta, d + dd).unwrap();
            prop_assert!(direct >= -1e-15);
            prop_assert!(direct_far <= direct + 1e-15);
            prop_assert!(observed_intensity(&p, d).unwrap().is_finite());
        }

        #[test]
        fn observed_monotone_in_intensities(
            i0 in 0.0f64..10.0, i_inf in 0.0f64..1.0, beta in 0.0f64..1.0,
            d in 0.01f64..200.0, bump in 0.0f64..1.0,
        ) {
            let base = observed_intensity(&ScatterParams::new(i0, i_inf, beta).unwrap(), d).unwrap();
            let more_i0 = observed_intensity(&ScatterParams::new(i0 + bump, i_inf, beta).unwrap(), d).unwrap();
            let more_inf = observed_intensity(&ScatterParams::new(i0, i_inf + bump, beta).unwrap(), d).unwrap();
            prop_assert!(more_i0 >= base);
            prop_assert!(more_inf >= base);
        }

        #[test]
        fn attenuation_monotone_in_beta(i0 in 0.0f64..10.0, beta in 0.0f64..1.0, db in 0.0f64..1.0, d in 0.01f64..100.0) {
            prop_assert!(attenuated_intensity(i0, beta + db, d).unwrap() <= attenuated_intensity(i0, beta, d).unwrap());
        }

        #[test]
        fn airlight_bounded_and_increasing(i_inf in 0.0f64..1.0, beta in 0.0f64..1.0, d in 0.0f64..500.0, dd in 0.0f64..10.0) {
            let a = airlight(i_inf, beta, d).unwrap();
            prop_assert!(a <= i_inf);
            prop_assert!(airlight(i_inf, beta, d + dd).unwrap() >= a);
        }

        #[test]
        fn adapted_reduces_to_observed(i0 in 0.0f64..10.0, i_inf in 0.0f64..1.0, beta in 0.0f64..1.0, d in 0.01f64..200.0) {
            let observed = observed_intensity(&ScatterParams::new(i0, i_inf, beta).unwrap(), d).unwrap();
            let adapted = adapted_intensity(i0 / (d * d), i_inf, 0.0, beta, beta, d).unwrap();
            prop_assert!((observed - adapted).abs() <= 1e-12 * observed.abs().max(1.0));
        }
    }
}
