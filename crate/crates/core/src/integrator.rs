//! Accelerated exponential Euler time stepping for the Galerkin system.
//!
//! One step of width `τ` reads, mode by mode,
//!
//! ```text
//! Y_{m+1,i} = e^{-λ_i τ} Y_{m,i} + (1 - e^{-λ_i τ})/λ_i · F_n(Y_m)_i + ε σ_i(τ) ξ_i,
//! σ_i(τ)²   = q_i (1 - e^{-2 λ_i τ}) / (2 λ_i),
//! ```
//!
//! so the linear part and the stochastic convolution over the step are both
//! exact; only the nonlinearity is frozen at the left node. Gaussian draws are
//! consumed step-major, then mode-major, from the trajectory's own stream.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::path::SpectralPath;
use crate::spectral::{phi1, OperatorSpec, SpectralField};
use crate::stream::GaussianStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    /// Time step `τ`.
    pub tau: f64,
    /// Noise scale `ε`.
    pub epsilon: f64,
    pub seed: u64,
    /// Emit every `stride`-th point of the output grid.
    pub stride: usize,
    /// Output sub-grid points per step (1 = step nodes only).
    pub substeps: usize,
    /// Reject `τ > τ₀(λ_1, L_F)`.
    pub enforce_stability: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            tau: 0.01,
            epsilon: 0.0,
            seed: 0,
            stride: 1,
            substeps: 1,
            enforce_stability: true,
        }
    }
}

impl IntegratorConfig {
    pub fn new(tau: f64, epsilon: f64, seed: u64) -> Self {
        IntegratorConfig {
            tau,
            epsilon,
            seed,
            ..Default::default()
        }
    }
}

/// Per-mode standard deviations of the exact convolution increment over `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseIncrementPlan {
    std_devs: Vec<f64>,
}

impl NoiseIncrementPlan {
    pub fn new(op: &OperatorSpec, dt: f64) -> Self {
        NoiseIncrementPlan {
            std_devs: op.convolution_variance(dt).into_iter().map(f64::sqrt).collect(),
        }
    }

    pub fn std_devs(&self) -> &[f64] {
        &self.std_devs
    }
}

/// Largest step `τ₀` with `(e^{λ_1 τ₀} - 1)/(λ_1 τ₀) = (λ_1 + L_F)/(2 L_F)`;
/// below it the second moment of the scheme stays bounded uniformly in time.
/// Returns `+∞` when `L_F = 0`.
pub fn max_stable_stepsize(lambda1: f64, lipschitz: f64) -> Result<f64> {
    if !(lambda1 > 0.0 && lambda1.is_finite()) {
        return Err(Error::domain(format!("lambda_1 must be positive, got {lambda1}")));
    }
    if !(lipschitz >= 0.0) {
        return Err(Error::domain(format!("L_F must be nonnegative, got {lipschitz}")));
    }
    if lipschitz == 0.0 {
        return Ok(f64::INFINITY);
    }
    if lipschitz >= lambda1 {
        return Err(Error::domain(format!(
            "L_F = {lipschitz} >= lambda_1 = {lambda1}: the drift is not dissipative"
        )));
    }
    let target = (lambda1 + lipschitz) / (2.0 * lipschitz);
    // g(x) = (e^x - 1)/x increases from 1 at x = 0 to infinity
    let g = |x: f64| x.exp_m1() / x;
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    while g(hi) < target {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi) / lambda1)
}

/// The scheme bound to a model and a step size.
#[derive(Debug, Clone)]
pub struct ExponentialEuler<'m> {
    model: &'m ModelSpec,
    tau: f64,
    epsilon: f64,
    substeps: usize,
    decay: Vec<f64>,
    weight: Vec<f64>,
    noise: NoiseIncrementPlan,
}

impl<'m> ExponentialEuler<'m> {
    pub fn new(model: &'m ModelSpec, cfg: &IntegratorConfig) -> Result<Self> {
        if !(cfg.tau > 0.0 && cfg.tau.is_finite()) {
            return Err(Error::config("integrator.tau", "must be positive and finite"));
        }
        if !(cfg.epsilon >= 0.0 && cfg.epsilon.is_finite()) {
            return Err(Error::config("integrator.epsilon", "must be nonnegative and finite"));
        }
        if cfg.substeps == 0 {
            return Err(Error::config("integrator.substeps", "must be at least 1"));
        }
        if cfg.enforce_stability {
            check_stability(model, cfg.tau)?;
        }
        let dt = cfg.tau / cfg.substeps as f64;
        let lambdas = model.operator.eigenvalues();
        Ok(ExponentialEuler {
            model,
            tau: cfg.tau,
            epsilon: cfg.epsilon,
            substeps: cfg.substeps,
            decay: lambdas.iter().map(|l| (-l * dt).exp()).collect(),
            weight: lambdas.iter().map(|l| phi1(*l, dt)).collect(),
            noise: NoiseIncrementPlan::new(&model.operator, dt),
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Advances `state` by one full step `τ`, calling `visit` after every
    /// sub-grid point (`substeps` calls per step). `step` is only used for
    /// divergence diagnostics.
    pub fn advance_with(
        &self,
        state: &mut [f64],
        rng: &mut GaussianStream,
        step: usize,
        mut visit: impl FnMut(&[f64]),
    ) -> Result<()> {
        let drift = if self.model.nonlinearity.is_zero() {
            None
        } else {
            let y = SpectralField::from_vec_unchecked(state.to_vec());
            Some(self.model.nonlinearity.apply(&y)?.into_vec())
        };
        for _ in 0..self.substeps {
            for i in 0..state.len() {
                let mut v = self.decay[i] * state[i];
                if let Some(f) = &drift {
                    v += self.weight[i] * f[i];
                }
                if self.epsilon > 0.0 {
                    v += self.epsilon * self.noise.std_devs[i] * rng.next_normal();
                }
                state[i] = v;
            }
            if state.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { step });
            }
            visit(state);
        }
        Ok(())
    }

    /// One step `Y_m -> Y_{m+1}`.
    pub fn step(&self, y: &SpectralField, rng: &mut GaussianStream, step: usize) -> Result<SpectralField> {
        y.check_dim(self.model.n(), "state")?;
        let mut state = y.coeffs().to_vec();
        self.advance_with(&mut state, rng, step, |_| {})?;
        Ok(SpectralField::from_vec_unchecked(state))
    }
}

fn check_stability(model: &ModelSpec, tau: f64) -> Result<()> {
    let lf = model.nonlinearity.lipschitz();
    if lf == 0.0 {
        return Ok(());
    }
    let tau0 = max_stable_stepsize(model.operator.lambda_min(), lf)
        .map_err(|e| Error::config("integrator.tau", e.to_string()))?;
    if tau > tau0 {
        return Err(Error::config(
            "integrator.tau",
            format!(
                "tau = {tau} exceeds the uniform-moment threshold tau_0 = {tau0} solving \
                 (exp(lambda_1 tau_0) - 1)/(lambda_1 tau_0) = (lambda_1 + L_F)/(2 L_F)"
            ),
        ));
    }
    Ok(())
}

/// Whether `τ ≤ τ₀` holds for the model (always true when `L_F = 0`).
pub fn is_stable_step(model: &ModelSpec, tau: f64) -> bool {
    check_stability(model, tau).is_ok()
}

/// One accelerated exponential Euler step with a fresh scheme.
pub fn exp_euler_step(
    y: &SpectralField,
    model: &ModelSpec,
    cfg: &IntegratorConfig,
    rng: &mut GaussianStream,
) -> Result<SpectralField> {
    let cfg = IntegratorConfig {
        substeps: 1,
        ..cfg.clone()
    };
    ExponentialEuler::new(model, &cfg)?.step(y, rng, 0)
}

/// Number of steps of width `tau` in `horizon`, requiring an integer ratio.
pub(crate) fn step_count(horizon: f64, tau: f64, what: &str) -> Result<usize> {
    let ratio = horizon / tau;
    let m = ratio.round();
    if !(m >= 1.0) || (ratio - m).abs() > 1e-9 * m {
        return Err(Error::Grid(format!(
            "{what}: {horizon} is not an integer multiple of {tau}"
        )));
    }
    Ok(m as usize)
}

/// Simulates trajectory number `trajectory` from `y` over `[0, horizon]`.
///
/// The returned path holds the scheme's nodes (or its continuous-time
/// interpolation on the `substeps` sub-grid), thinned by `stride`.
pub fn simulate_path(
    y: &SpectralField,
    horizon: f64,
    model: &ModelSpec,
    cfg: &IntegratorConfig,
    trajectory: u64,
) -> Result<SpectralPath> {
    y.check_dim(model.n(), "initial condition")?;
    let scheme = ExponentialEuler::new(model, cfg)?;
    let steps = step_count(horizon, cfg.tau, "horizon")?;
    let points = steps * cfg.substeps;
    if cfg.stride == 0 || !points.is_multiple_of(cfg.stride) {
        return Err(Error::config(
            "integrator.stride",
            format!("must divide the {points} output grid intervals"),
        ));
    }
    let mut rng = GaussianStream::new(cfg.seed, trajectory);
    let mut state = y.coeffs().to_vec();
    let mut nodes = Vec::with_capacity(points / cfg.stride + 1);
    nodes.push(y.clone());
    let mut counter = 0usize;
    for m in 0..steps {
        scheme.advance_with(&mut state, &mut rng, m, |s| {
            counter += 1;
            if counter.is_multiple_of(cfg.stride) {
                nodes.push(SpectralField::from_vec_unchecked(s.to_vec()));
            }
        })?;
    }
    let h = cfg.tau / cfg.substeps as f64 * cfg.stride as f64;
    SpectralPath::new(h, nodes)
}

/// Exact draw of `Γ^n(t) = ∫_0^t E_n(t-s) Q_n^{1/2} dW_n(s)`.
pub fn stochastic_convolution_sample(
    t: f64,
    op: &OperatorSpec,
    rng: &mut GaussianStream,
) -> Result<SpectralField> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("time must be >= 0, got {t}")));
    }
    let var = op.convolution_variance(t);
    Ok(SpectralField::from_vec_unchecked(
        var.iter().map(|v| v.sqrt() * rng.next_normal()).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::{NonlinearitySpec, ScalarFunction};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn tau_max_root() {
        let l1 = PI * PI;
        let tau0 = max_stable_stepsize(l1, 1.0).unwrap();
        // bisection oracle in test code: g(x) = (e^x - 1)/x = (π² + 1)/2
        let target = (l1 + 1.0) / 2.0;
        let (mut a, mut b) = (1e-9f64, 10.0);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if (m.exp() - 1.0) / m < target {
                a = m
            } else {
                b = m
            }
        }
        assert_relative_eq!(tau0, a / l1, max_relative = 1e-12);
        assert!((tau0 - 0.2816).abs() < 5e-5, "tau0 = {tau0}");
        let x = l1 * tau0;
        assert!((x.exp_m1() / x - target).abs() <= 1e-10);
        assert_eq!(max_stable_stepsize(l1, 0.0).unwrap(), f64::INFINITY);
        assert!(max_stable_stepsize(l1, l1).is_err());
    }

    #[test]
    fn deterministic_decay() {
        let model = ModelSpec::linear(3, 2.0).unwrap();
        let cfg = IntegratorConfig::new(0.1, 0.0, 1);
        let mut rng = GaussianStream::new(0, 0);
        let e1 = SpectralField::basis(3, 1).unwrap();
        let y = exp_euler_step(&e1, &model, &cfg, &mut rng).unwrap();
        assert_relative_eq!(y.coeffs()[0], (-PI * PI * 0.1).exp(), max_relative = 1e-15);
        let z = exp_euler_step(&SpectralField::zeros(3), &model, &cfg, &mut rng).unwrap();
        assert_eq!(z, SpectralField::zeros(3));
    }

    #[test]
    fn exact_linear_flow_on_nodes() {
        let model = ModelSpec::linear(2, 2.0).unwrap();
        let cfg = IntegratorConfig::new(0.1, 0.0, 1);
        let p = simulate_path(&SpectralField::basis(2, 1).unwrap(), 1.0, &model, &cfg, 0).unwrap();
        assert_eq!(p.len(), 11);
        for (k, z) in p.nodes().iter().enumerate() {
            let exact = (-PI * PI * k as f64 * 0.1).exp();
            assert!((z.coeffs()[0] - exact).abs() <= 1e-13);
        }
    }

    #[test]
    fn linear_drift_converges_to_shifted_decay() {
        let op = OperatorSpec::with_decay(1, 2.0).unwrap();
        let model = ModelSpec::new(op, NonlinearitySpec::LinearDiagonal(vec![-1.0])).unwrap();
        let cfg = IntegratorConfig::new(0.01, 0.0, 1);
        let p = simulate_path(&SpectralField::basis(1, 1).unwrap(), 1.0, &model, &cfg, 0).unwrap();
        let exact = (-(PI * PI + 1.0)).exp();
        assert!((exact - 1.903e-5).abs() < 1e-8);
        assert!((p.end().coeffs()[0] - exact).abs() <= 5e-3);
    }

    #[test]
    fn same_seed_same_path() {
        let op = OperatorSpec::with_decay(3, 2.0).unwrap();
        let nl = NonlinearitySpec::nemytskij(ScalarFunction::Sin { amplitude: 1.0 }, 3).unwrap();
        let model = ModelSpec::new(op, nl).unwrap();
        let cfg = IntegratorConfig::new(0.05, 0.5, 99);
        let y = SpectralField::new(vec![0.5, 0.1, 0.0]).unwrap();
        let a = simulate_path(&y, 1.0, &model, &cfg, 3).unwrap();
        let b = simulate_path(&y, 1.0, &model, &cfg, 3).unwrap();
        assert_eq!(a, b);
        let c = simulate_path(&y, 1.0, &model, &cfg, 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sub_grid_output_matches_interpolation() {
        let model = ModelSpec::linear(2, 2.0).unwrap();
        let cfg = IntegratorConfig {
            substeps: 4,
            ..IntegratorConfig::new(0.1, 0.0, 1)
        };
        let y = SpectralField::new(vec![1.0, -1.0]).unwrap();
        let p = simulate_path(&y, 0.5, &model, &cfg, 0).unwrap();
        assert_eq!(p.len(), 21);
        assert_relative_eq!(p.step(), 0.025);
        for (k, z) in p.nodes().iter().enumerate() {
            let t = k as f64 * 0.025;
            assert!((z.coeffs()[1] + (-4.0 * PI * PI * t).exp()).abs() < 1e-13);
        }
    }

    #[test]
    fn stability_guard() {
        let op = OperatorSpec::with_decay(2, 2.0).unwrap();
        let nl = NonlinearitySpec::nemytskij(ScalarFunction::Sin { amplitude: 1.0 }, 2).unwrap();
        let model = ModelSpec::new(op, nl).unwrap();
        let err = ExponentialEuler::new(&model, &IntegratorConfig::new(0.3, 0.0, 0)).unwrap_err();
        assert!(err.to_string().contains("tau_0"));
        let waived = IntegratorConfig {
            enforce_stability: false,
            ..IntegratorConfig::new(0.3, 0.0, 0)
        };
        assert!(ExponentialEuler::new(&model, &waived).is_ok());
    }

    #[test]
    fn divergence_names_the_step() {
        let op = OperatorSpec::with_noise(vec![1.0]).unwrap();
        let nl = NonlinearitySpec::nemytskij(
            ScalarFunction::custom("blowup", |s: f64| 1e300 * s * s, |s| 2e300 * s, 1.0),
            1,
        )
        .unwrap();
        let model = ModelSpec::new(op, nl).unwrap();
        let cfg = IntegratorConfig {
            enforce_stability: false,
            ..IntegratorConfig::new(0.1, 0.0, 0)
        };
        let err = simulate_path(&SpectralField::new(vec![1.0]).unwrap(), 1.0, &model, &cfg, 0);
        assert!(matches!(err, Err(Error::Divergence { .. }) | Err(Error::NonFiniteNonlinearity { .. })));
    }

    #[test]
    fn convolution_variance_values() {
        let op = OperatorSpec::with_decay(1, 2.0).unwrap();
        let l = PI * PI;
        let q = l.powi(-2);
        let v = op.convolution_variance(0.1)[0];
        assert_relative_eq!(v, q * (1.0 - (-2.0 * l * 0.1).exp()) / (2.0 * l), max_relative = 1e-13);
        assert!((v - 4.478357321944205e-4).abs() < 1e-15);
        let stationary = op.convolution_variance(1e3)[0];
        assert!((stationary - 5.200807366479263e-4).abs() < 1e-15);
        let mut rng = GaussianStream::new(1, 1);
        assert_eq!(
            stochastic_convolution_sample(0.0, &op, &mut rng).unwrap(),
            SpectralField::zeros(1)
        );
    }
}
