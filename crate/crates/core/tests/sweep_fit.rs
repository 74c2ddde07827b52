//! Simulated sweeps fed back through the fitter.

use fogbench_core::atmosphere::{FogCondition, FogType};
use fogbench_core::fitting::{fit_adapted_model, FitProblem};
use fogbench_core::scene::{simulate_sweep, NoiseModel, ReflectanceTarget, Scenario, SensorModel};

#[test]
fn noise_free_standard_sweep_recovers_illumination_model() {
    let sensor = SensorModel::standard().with_noise(NoiseModel::none());
    for v in [20.0, 35.0, 55.0] {
        let fog = FogCondition::new(FogType::Advection, v).unwrap();
        let traces =
            simulate_sweep(&Scenario::passive(), &fog, &sensor, &ReflectanceTarget::standard_set(), 0.25, 1.0).unwrap();
        for trace in traces {
            let rho = trace.rho;
            let fit = fit_adapted_model(&FitProblem::new(trace, fog.beta_per_m).unwrap()).unwrap();
            assert!(fit.converged, "V {v} rho {rho}");
            let expected_i0 = rho * 0.8 * (-2.0 * fog.beta_per_m * 5.0).exp();
            assert!((fit.i0 - expected_i0).abs() < 0.02, "V {v} rho {rho}: i0 {} vs {expected_i0}", fit.i0);
            assert!((fit.i_inf - 0.2).abs() < 0.02, "V {v} rho {rho}: I_inf {}", fit.i_inf);
        }
    }
}

#[test]
fn noisy_sweeps_fit_deterministically() {
    let fog = FogCondition::new(FogType::Radiation, 30.0).unwrap();
    let sensor = SensorModel::standard().with_noise(NoiseModel { seed: 9, ..NoiseModel::default() });
    let run = || {
        simulate_sweep(&Scenario::passive(), &fog, &sensor, &ReflectanceTarget::standard_set(), 0.25, 1.0)
            .unwrap()
            .into_iter()
            .map(|t| fit_adapted_model(&FitProblem::new(t, fog.beta_per_m).unwrap()).unwrap())
            .collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}
