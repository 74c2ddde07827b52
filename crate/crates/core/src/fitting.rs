//! Least-squares estimation of the shifted scattering model
//!
//! `I(d) = i0 exp(-beta (d - d0)) + I_inf (1 - exp(-beta_a (d - d0)))`
//!
//! from a binned intensity trace, with `beta` fixed from the visibility and
//! `(i0, I_inf, d0, beta_a)` free. The solver is a damped Gauss-Newton
//! iteration (Levenberg-Marquardt with diagonal scaling): a trial step is
//! accepted only if it lowers the objective, damping shrinks tenfold on
//! acceptance and grows tenfold on rejection. Bounds are enforced by
//! projecting each trial point.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::atmosphere::AdaptedModel;
use crate::error::{domain, invalid, Error, Result};
use crate::scene::TargetTrace;

/// Number of free parameters.
pub const N_PARAMS: usize = 4;

/// How bins are weighted when no explicit weights are given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Weighting {
    Uniform,
    /// `1 / max(std, floor)` for bins with `std > 0`, else 1.
    InverseStd { floor: f64 },
}

impl Default for Weighting {
    fn default() -> Self {
        Weighting::InverseStd { floor: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitProblem {
    pub trace: TargetTrace,
    pub beta_per_m: f64,
    /// Explicit per-bin weights; overrides `weighting` when present.
    pub weights: Option<Vec<f64>>,
    pub weighting: Weighting,
}

impl FitProblem {
    pub fn new(trace: TargetTrace, beta_per_m: f64) -> Result<Self> {
        let problem = Self { trace, beta_per_m, weights: None, weighting: Weighting::default() };
        problem.validate()?;
        Ok(problem)
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        self.weights = Some(weights);
        self.validate()?;
        Ok(self)
    }

    pub fn with_weighting(mut self, weighting: Weighting) -> Self {
        self.weighting = weighting;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta_per_m > 0.0 && self.beta_per_m.is_finite()) {
            return Err(domain(format!("beta must be positive, got {}", self.beta_per_m)));
        }
        let n = self.trace.binned.len();
        if n < N_PARAMS {
            return Err(Error::Insufficient(format!("fit needs at least {N_PARAMS} bins, trace has {n}")));
        }
        if let Some(w) = &self.weights {
            if w.len() != n {
                return Err(invalid(format!("{} weights given for {n} bins", w.len())));
            }
            if w.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
                return Err(invalid("weights must be finite and nonnegative"));
            }
            if w.iter().all(|&x| x == 0.0) {
                return Err(invalid("all weights are zero"));
            }
        }
        Ok(())
    }

    pub fn bin_weights(&self) -> Vec<f64> {
        if let Some(w) = &self.weights {
            return w.clone();
        }
        self.trace
            .binned
            .iter()
            .map(|b| match self.weighting {
                Weighting::Uniform => 1.0,
                Weighting::InverseStd { floor } => {
                    if b.std > 0.0 {
                        1.0 / b.std.max(floor)
                    } else {
                        1.0
                    }
                }
            })
            .collect()
    }

    fn depth_span(&self) -> (f64, f64) {
        let first = self.trace.binned.first().map_or(0.0, |b| b.center_m);
        let last = self.trace.binned.last().map_or(0.0, |b| b.center_m);
        (first.min(last), first.max(last))
    }
}

/// Free parameters of the shifted model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    pub i0: f64,
    pub i_inf: f64,
    pub d0_m: f64,
    pub beta_a_per_m: f64,
}

impl FitParams {
    pub fn model(&self, beta_per_m: f64) -> AdaptedModel {
        AdaptedModel {
            i0: self.i0,
            i_inf: self.i_inf,
            d0_m: self.d0_m,
            beta_per_m,
            beta_a_per_m: self.beta_a_per_m,
        }
    }

    fn to_vector(self) -> Vector4<f64> {
        Vector4::new(self.i0, self.i_inf, self.d0_m, self.beta_a_per_m)
    }

    fn from_vector(v: &Vector4<f64>) -> Self {
        Self { i0: v[0], i_inf: v[1], d0_m: v[2], beta_a_per_m: v[3] }
    }

    fn check_bounds(&self) -> Result<()> {
        let ok = self.i0 >= 0.0 && self.i_inf >= 0.0 && self.beta_a_per_m >= 0.0 && self.d0_m.is_finite();
        if ok {
            Ok(())
        } else {
            Err(domain(format!("parameters out of bounds: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub i0: f64,
    pub i_inf: f64,
    pub d0_m: f64,
    pub beta_a_per_m: f64,
    /// Root mean square of the weighted residuals.
    pub rms_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Diagonal of `s^2 (J^T J)^-1`, `s^2` the residual variance; absent when singular.
    pub covariance_diag: Option<[f64; 4]>,
}

impl FitResult {
    pub fn params(&self) -> FitParams {
        FitParams { i0: self.i0, i_inf: self.i_inf, d0_m: self.d0_m, beta_a_per_m: self.beta_a_per_m }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iterations: usize,
    pub initial_damping: f64,
    /// Stop when the relative objective decrease of an accepted step falls below this.
    pub objective_rtol: f64,
    /// Stop when the infinity norm of a step falls below this.
    pub step_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { max_iterations: 200, initial_damping: 1e-3, objective_rtol: 1e-10, step_tol: 1e-12 }
    }
}

/// Weighted residuals `w_k (mean_k - I(d_k))`.
pub fn residuals(params: &FitParams, problem: &FitProblem) -> Result<Vec<f64>> {
    params.check_bounds()?;
    Ok(weighted_residuals(params, problem, &problem.bin_weights()))
}

fn weighted_residuals(params: &FitParams, problem: &FitProblem, weights: &[f64]) -> Vec<f64> {
    let model = params.model(problem.beta_per_m);
    problem.trace.binned.iter().zip(weights).map(|(b, w)| w * (b.mean_intensity - model.eval(b.center_m))).collect()
}

/// Partial derivatives of the model intensity at each bin depth, columns
/// ordered `(i0, I_inf, d0, beta_a)`.
///
/// Bins before the onset see the constant `i0`, so their row is `(1, 0, 0, 0)`.
pub fn jacobian(params: &FitParams, problem: &FitProblem) -> Result<Vec<[f64; 4]>> {
    params.check_bounds()?;
    Ok(problem.trace.binned.iter().map(|b| model_gradient(params, problem.beta_per_m, b.center_m)).collect())
}

/// Gradient of the model intensity with respect to `(i0, I_inf, d0, beta_a)` at depth `d`.
pub fn model_gradient(params: &FitParams, beta_per_m: f64, d: f64) -> [f64; 4] {
    let x = d - params.d0_m;
    if x < 0.0 {
        return [1.0, 0.0, 0.0, 0.0];
    }
    let decay = (-beta_per_m * x).exp();
    let decay_a = (-params.beta_a_per_m * x).exp();
    [
        decay,
        -(-params.beta_a_per_m * x).exp_m1(),
        beta_per_m * params.i0 * decay - params.beta_a_per_m * params.i_inf * decay_a,
        params.i_inf * x * decay_a,
    ]
}

/// Maximum number of onset depths tried as starting points.
const MAX_STARTS: usize = 12;

/// Starting points for the onset depth: bins from the brightest one up to
/// where the trace has fallen a quarter of the way toward its tail.
/// `i0` starts at the bin's own intensity, `I_inf` at the mean of the last
/// 10 % of bins and `beta_a` at `beta`.
pub fn initial_guesses(problem: &FitProblem) -> Vec<FitParams> {
    let bins = &problem.trace.binned;
    let mut peak_idx = 0;
    for (i, b) in bins.iter().enumerate() {
        if b.mean_intensity > bins[peak_idx].mean_intensity {
            peak_idx = i;
        }
    }
    let tail_len = (bins.len() / 10).max(1);
    let tail = &bins[bins.len() - tail_len..];
    let tail_mean = tail.iter().map(|b| b.mean_intensity).sum::<f64>() / tail_len as f64;
    let peak = bins[peak_idx].mean_intensity;
    let threshold = peak - 0.25 * (peak - tail_mean).abs();
    let last = bins[peak_idx..]
        .iter()
        .position(|b| b.mean_intensity < threshold)
        .map_or(bins.len() - 1, |k| peak_idx + k);
    let span = last - peak_idx + 1;
    let stride = span.div_ceil(MAX_STARTS).max(1);
    (peak_idx..=last)
        .step_by(stride)
        .map(|i| FitParams {
            i0: bins[i].mean_intensity.max(0.0),
            i_inf: tail_mean.max(0.0),
            d0_m: bins[i].center_m,
            beta_a_per_m: problem.beta_per_m,
        })
        .collect()
}

pub fn fit_adapted_model(problem: &FitProblem) -> Result<FitResult> {
    fit_adapted_model_with(problem, &SolverOptions::default(), |_, _, _| {})
}

/// Runs the solver from every starting point and keeps the lowest objective.
/// `on_accept(start, iteration, objective)` is called after every accepted step.
pub fn fit_adapted_model_with<F: FnMut(usize, usize, f64)>(
    problem: &FitProblem,
    options: &SolverOptions,
    mut on_accept: F,
) -> Result<FitResult> {
    problem.validate()?;
    let weights = problem.bin_weights();
    let mut best: Option<Run> = None;
    for (k, start) in initial_guesses(problem).into_iter().enumerate() {
        let run = solve_from(start, problem, &weights, options, |it, obj| on_accept(k, it, obj));
        if best.as_ref().is_none_or(|b| run.objective < b.objective) {
            best = Some(run);
        }
    }
    let run = best.expect("at least one starting point");

    let params = FitParams::from_vector(&run.p);
    let n = run.r.len();
    let covariance_diag = if n > N_PARAMS {
        let (normal, _) = normal_equations(&params, problem, &weights, &run.r);
        let variance = run.objective / (n - N_PARAMS) as f64;
        normal.try_inverse().map(|inv| {
            let d = inv.diagonal() * variance;
            [d[0], d[1], d[2], d[3]]
        })
    } else {
        None
    };

    Ok(FitResult {
        i0: params.i0,
        i_inf: params.i_inf,
        d0_m: params.d0_m,
        beta_a_per_m: params.beta_a_per_m,
        rms_residual: (run.objective / n as f64).sqrt(),
        iterations: run.iterations,
        converged: run.converged,
        covariance_diag,
    })
}

struct Run {
    p: Vector4<f64>,
    r: Vec<f64>,
    objective: f64,
    iterations: usize,
    converged: bool,
}

fn solve_from(
    start: FitParams,
    problem: &FitProblem,
    weights: &[f64],
    options: &SolverOptions,
    mut on_accept: impl FnMut(usize, f64),
) -> Run {
    let (d_min, d_max) = problem.depth_span();
    let project = |v: Vector4<f64>| {
        Vector4::new(v[0].max(0.0), v[1].max(0.0), v[2].clamp(d_min, d_max), v[3].max(0.0))
    };

    let mut p = project(start.to_vector());
    let mut r = weighted_residuals(&FitParams::from_vector(&p), problem, weights);
    let mut objective = sum_sq(&r);
    let mut damping = options.initial_damping;
    let mut converged = objective == 0.0;
    let mut iterations = 0;

    while !converged && iterations < options.max_iterations {
        iterations += 1;
        let (normal, gradient) = normal_equations(&FitParams::from_vector(&p), problem, weights, &r);
        let diag_floor = normal.diagonal().max() * 1e-12 + f64::MIN_POSITIVE;
        let mut damped = normal;
        for i in 0..N_PARAMS {
            damped[(i, i)] += damping * normal[(i, i)].max(diag_floor);
        }
        let Some(step) = damped.cholesky().map(|c| c.solve(&gradient)) else {
            damping *= 10.0;
            continue;
        };
        let trial = project(p + step);
        let actual_step = (trial - p).amax();
        let trial_r = weighted_residuals(&FitParams::from_vector(&trial), problem, weights);
        let trial_objective = sum_sq(&trial_r);

        if trial_objective < objective {
            let decrease = (objective - trial_objective) / objective;
            p = trial;
            r = trial_r;
            objective = trial_objective;
            damping = (damping / 10.0).max(1e-15);
            on_accept(iterations, objective);
            converged = objective == 0.0 || decrease < options.objective_rtol || actual_step < options.step_tol;
        } else {
            damping *= 10.0;
            converged = actual_step < options.step_tol;
        }
    }
    Run { p, r, objective, iterations, converged }
}

/// `J^T J` and `J^T r` for the weighted model Jacobian.
fn normal_equations(
    params: &FitParams,
    problem: &FitProblem,
    weights: &[f64],
    residuals: &[f64],
) -> (Matrix4<f64>, Vector4<f64>) {
    let mut normal = Matrix4::zeros();
    let mut gradient = Vector4::zeros();
    for ((bin, w), r) in problem.trace.binned.iter().zip(weights).zip(residuals) {
        let g = Vector4::from(model_gradient(params, problem.beta_per_m, bin.center_m)) * *w;
        normal += g * g.transpose();
        gradient += g * *r;
    }
    (normal, gradient)
}

fn sum_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Samples the fitted curve at `depths` for plotting.
pub fn fitted_curve(result: &FitResult, beta_per_m: f64, depths: impl IntoIterator<Item = f64>) -> Vec<(f64, f64)> {
    let model = result.params().model(beta_per_m);
    depths.into_iter().map(|d| (d, model.eval(d))).collect()
}
