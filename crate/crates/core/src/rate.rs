//! Discrete evaluation of the path rate functionals
//!
//! ```text
//! I(z) = ½ ∫_0^T |Q_n^{-1/2}(ż - A_n z - F_n(z))|² dt      (Galerkin),
//! I(z) = ½ ∫_0^T |Q_n^{-1/2}(ż - A_n z - F_n(z(τ⌊t/τ⌋)))|² dt   (fully discrete),
//! ```
//!
//! with `I = +∞` unless `z(0) = y`. Paths are treated as piecewise linear
//! between nodes; each interval contributes one residual, which is also the
//! value of the minimizing piecewise-constant control on that interval.

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::integrator::step_count;
use crate::model::ModelSpec;
use crate::path::{Control, SpectralPath};
use crate::spectral::{phi1, SpectralField};

/// How the action integrand is discretized on each interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureRule {
    /// Forward difference for `ż`, drift at the interval midpoint. Second order.
    #[default]
    Midpoint,
    /// Inverts one exponential-integrator step: exact for paths produced by
    /// the skeleton solvers with a single substep, and for any substep count
    /// when the drift is linear.
    ExponentialFitted,
}

fn serialize_extended<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str("+inf")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    /// Action value, `f64::INFINITY` outside the effective domain.
    #[serde(serialize_with = "serialize_extended")]
    pub value: f64,
    pub h: f64,
    pub boundary_mismatch: f64,
    pub rule: QuadratureRule,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frozen_tau: Option<f64>,
}

impl RateReport {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }
}

/// `|z(0) - y| ≤ BOUNDARY_TOL · (1 + |y|)` is treated as `z(0) = y`.
pub const BOUNDARY_TOL: f64 = 1e-9;

/// Per-interval controls `ψ_k = Q_n^{-1/2} r_k` for residuals `r_k`.
/// `frozen` is the number of grid intervals per `τ`-cell.
fn interval_controls(
    model: &ModelSpec,
    z: &SpectralPath,
    rule: QuadratureRule,
    frozen: Option<usize>,
) -> Result<Vec<SpectralField>> {
    let n = model.n();
    if z.dim() != n {
        return Err(Error::domain(format!(
            "path has dimension {}, model has {n}",
            z.dim()
        )));
    }
    let h = z.step();
    let nodes = z.nodes();
    let inv_sq: Vec<f64> = model.operator.noise().iter().map(|q| 1.0 / q.sqrt()).collect();

    // Frozen nonlinearity values, one per τ-cell.
    let frozen_values = match frozen {
        Some(ratio) => Some(
            (0..z.intervals())
                .step_by(ratio)
                .map(|k| model.nonlinearity.apply(&nodes[k]))
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    let frozen_at = |k: usize| -> Option<&SpectralField> {
        let ratio = frozen?;
        frozen_values.as_ref().map(|v| &v[k / ratio])
    };

    let (rates, explicit) = match (rule, frozen) {
        (QuadratureRule::ExponentialFitted, None) => model.exponential_split(),
        _ => (model.operator.eigenvalues().to_vec(), true),
    };

    let mut out = Vec::with_capacity(z.intervals());
    for k in 0..z.intervals() {
        let (a, b) = (nodes[k].coeffs(), nodes[k + 1].coeffs());
        let mut r = vec![0.0; n];
        match rule {
            QuadratureRule::Midpoint => {
                let mid = SpectralField::from_vec_unchecked(
                    a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect(),
                );
                let f = match frozen_at(k) {
                    Some(f) => f.clone(),
                    None => model.nonlinearity.apply(&mid)?,
                };
                for i in 0..n {
                    r[i] = (b[i] - a[i]) / h + rates[i] * mid.coeffs()[i] - f.coeffs()[i];
                }
            }
            QuadratureRule::ExponentialFitted => {
                let f = match frozen_at(k) {
                    Some(f) => Some(f.clone()),
                    None if explicit => Some(model.nonlinearity.apply(&nodes[k])?),
                    None => None,
                };
                for i in 0..n {
                    let e = (-rates[i] * h).exp();
                    r[i] = (b[i] - e * a[i]) / phi1(rates[i], h);
                    if let Some(f) = &f {
                        r[i] -= f.coeffs()[i];
                    }
                }
            }
        }
        for i in 0..n {
            r[i] *= inv_sq[i];
        }
        out.push(SpectralField::from_vec_unchecked(r));
    }
    Ok(out)
}

fn report(
    model: &ModelSpec,
    z: &SpectralPath,
    y: &SpectralField,
    rule: QuadratureRule,
    frozen_tau: Option<f64>,
) -> Result<RateReport> {
    y.check_dim(model.n(), "initial state")?;
    let ratio = match frozen_tau {
        Some(tau) => Some(step_count(tau, z.step(), "frozen step vs path grid")?),
        None => None,
    };
    let mismatch = z.start().distance(y);
    let value = if mismatch > BOUNDARY_TOL * (1.0 + y.norm()) {
        f64::INFINITY
    } else {
        let controls = interval_controls(model, z, rule, ratio)?;
        let v = 0.5 * z.step() * controls.iter().map(SpectralField::norm_sq).sum::<f64>();
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    Ok(RateReport {
        value,
        h: z.step(),
        boundary_mismatch: mismatch,
        rule,
        frozen_tau,
    })
}

/// Galerkin rate functional `I^{n,y}_{0,T}(z)` with the midpoint rule.
pub fn rate_semi(model: &ModelSpec, z: &SpectralPath, y: &SpectralField) -> Result<RateReport> {
    report(model, z, y, QuadratureRule::Midpoint, None)
}

pub fn rate_semi_with(
    model: &ModelSpec,
    z: &SpectralPath,
    y: &SpectralField,
    rule: QuadratureRule,
) -> Result<RateReport> {
    report(model, z, y, rule, None)
}

/// Fully discrete rate functional `I^{n,τ,y}_{0,T}(z)`; `τ` must be a
/// multiple of the path's grid step.
pub fn rate_full(
    model: &ModelSpec,
    z: &SpectralPath,
    y: &SpectralField,
    tau: f64,
) -> Result<RateReport> {
    report(model, z, y, QuadratureRule::Midpoint, Some(tau))
}

pub fn rate_full_with(
    model: &ModelSpec,
    z: &SpectralPath,
    y: &SpectralField,
    tau: f64,
    rule: QuadratureRule,
) -> Result<RateReport> {
    report(model, z, y, rule, Some(tau))
}

/// Surrogate for the infinite-dimensional functional `I^x_{0,T}`: the Galerkin
/// functional at a large reference dimension.
pub fn rate_reference(
    reference: &ModelSpec,
    z: &SpectralPath,
    x: &SpectralField,
    rule: QuadratureRule,
) -> Result<RateReport> {
    report(reference, z, x, rule, None)
}

/// [`rate_reference`] plus the exact contribution `½|(I - P_N)φ|²` of the
/// driving control's modes beyond the reference dimension, when that tail is
/// known in closed form.
pub fn rate_reference_with_tail(
    reference: &ModelSpec,
    z: &SpectralPath,
    x: &SpectralField,
    rule: QuadratureRule,
    control_tail_norm_sq: f64,
) -> Result<RateReport> {
    let mut r = rate_reference(reference, z, x, rule)?;
    r.value += 0.5 * control_tail_norm_sq;
    Ok(r)
}

/// The piecewise-constant control that the midpoint rule attributes to `z`;
/// `½|ψ|²_{L²}` equals `rate_semi(z, z(0))`.
pub fn control_from_path(model: &ModelSpec, z: &SpectralPath) -> Result<Control> {
    control_from_path_with(model, z, QuadratureRule::Midpoint)
}

pub fn control_from_path_with(
    model: &ModelSpec,
    z: &SpectralPath,
    rule: QuadratureRule,
) -> Result<Control> {
    Control::new(z.step(), interval_controls(model, z, rule, None)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::{NonlinearitySpec, ScalarFunction};
    use crate::skeleton::{solve_skeleton, solve_skeleton_frozen, uncontrolled_flow};
    use crate::spectral::OperatorSpec;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn sin_model(n: usize, a: f64) -> ModelSpec {
        let op = OperatorSpec::with_decay(n, 2.0).unwrap();
        ModelSpec::new(op, NonlinearitySpec::nemytskij(ScalarFunction::Sin { amplitude: a }, n).unwrap()).unwrap()
    }

    #[test]
    fn uncontrolled_flow_has_negligible_action() {
        // midpoint residual of the exact flow is ≈ λ³h²/12 · z, so at h = 1e-3 the
        // 1e-10 level is reached for the first mode with unit noise
        let model = ModelSpec::new(OperatorSpec::with_noise(vec![1.0]).unwrap(), NonlinearitySpec::Zero).unwrap();
        for y in [0.5, -0.3, 0.1] {
            let y = SpectralField::new(vec![y]).unwrap();
            let z = uncontrolled_flow(&model, &y, 1e-3, 1000, 1).unwrap();
            assert!(rate_semi(&model, &z, &y).unwrap().value <= 1e-10);
        }
        // the exponentially fitted rule is exact for any spectrum
        let model = sin_model(4, 0.5);
        let y = SpectralField::new(vec![1.0, -0.5, 0.25, 0.1]).unwrap();
        let z = uncontrolled_flow(&model, &y, 1e-2, 100, 1).unwrap();
        let r = rate_semi_with(&model, &z, &y, QuadratureRule::ExponentialFitted).unwrap();
        assert!(r.value <= 1e-20, "{}", r.value);
    }

    #[test]
    fn boundary_mismatch_is_infinite() {
        let model = ModelSpec::linear(2, 2.0).unwrap();
        let y = SpectralField::new(vec![1.0, 0.0]).unwrap();
        let z = uncontrolled_flow(&model, &y, 0.01, 10, 1).unwrap();
        let other = SpectralField::new(vec![1.0, 1e-6]).unwrap();
        let r = rate_semi(&model, &z, &other).unwrap();
        assert!(!r.is_finite());
        assert!((r.boundary_mismatch - 1e-6).abs() < 1e-15);
        assert!(serde_json::to_string(&r).unwrap().contains("\"+inf\""));
        assert!(rate_semi(&model, &z, &SpectralField::zeros(3)).is_err());
    }

    #[test]
    fn skeleton_action_second_order() {
        let model = ModelSpec::linear(2, 2.0).unwrap();
        let y = SpectralField::new(vec![0.05, -0.01]).unwrap();
        let psi = SpectralField::new(vec![0.3, -0.2]).unwrap();
        let exact = 0.5 * psi.norm_sq();
        let errs: Vec<f64> = [100usize, 200, 400]
            .iter()
            .map(|&k| {
                let c = Control::constant(1.0 / k as f64, k, psi.clone()).unwrap();
                let z = solve_skeleton(&model, &y, &c, 1).unwrap();
                assert_relative_eq!(0.5 * c.l2_norm_sq(), exact, max_relative = 1e-12);
                (rate_semi(&model, &z, &y).unwrap().value - exact).abs()
            })
            .collect();
        let o1 = (errs[0] / errs[1]).log2();
        let o2 = (errs[1] / errs[2]).log2();
        assert!((o1 - 2.0).abs() < 0.3 && (o2 - 2.0).abs() < 0.3, "{errs:?}");
    }

    #[test]
    fn full_equals_semi_without_drift() {
        let model = ModelSpec::linear(3, 2.0).unwrap();
        let y = SpectralField::new(vec![0.1, 0.2, 0.3]).unwrap();
        let c = Control::from_fn(0.01, 100, |t| SpectralField::new(vec![t, 1.0 - t, 0.5]).unwrap()).unwrap();
        let z = solve_skeleton(&model, &y, &c, 4).unwrap();
        let semi = rate_semi(&model, &z, &y).unwrap().value;
        for tau in [0.01, 0.05, 0.1, 0.5] {
            assert_eq!(rate_full(&model, &z, &y, tau).unwrap().value.to_bits(), semi.to_bits());
        }
        assert!(matches!(rate_full(&model, &z, &y, 0.015), Err(Error::Grid(_))));
    }

    #[test]
    fn full_rate_gap_shrinks_with_tau() {
        let model = sin_model(3, 0.5);
        let y = SpectralField::zeros(3);
        let c = Control::from_fn(1.0 / 800.0, 800, |t| {
            SpectralField::new(vec![100.0 * (2.0 * t).sin(), 50.0 * t, 0.0]).unwrap()
        })
        .unwrap();
        let z = solve_skeleton(&model, &y, &c, 4).unwrap();
        let semi = rate_semi(&model, &z, &y).unwrap().value;
        let gaps: Vec<f64> = [0.1, 0.05, 0.025, 0.0125]
            .iter()
            .map(|&tau| (rate_full(&model, &z, &y, tau).unwrap().value - semi).abs())
            .collect();
        for w in gaps.windows(2) {
            assert!(w[1] < w[0], "{gaps:?}");
        }
        let order = (gaps[0] / gaps[3]).log2() / 3.0;
        assert!(order >= 1.0 - 0.05, "order {order}, {gaps:?}");
    }

    #[test]
    fn frozen_skeleton_recovers_control_norm() {
        let model = sin_model(2, 0.5);
        let y = SpectralField::new(vec![0.2, 0.0]).unwrap();
        let psi = SpectralField::new(vec![1.0, -2.0]).unwrap();
        let tau = 0.05;
        let mut last = f64::INFINITY;
        for k in [100usize, 200, 400] {
            let c = Control::constant(1.0 / k as f64, k, psi.clone()).unwrap();
            let z = solve_skeleton_frozen(&model, &y, &c, tau, 1).unwrap();
            let err = (rate_full(&model, &z, &y, tau).unwrap().value - 0.5 * c.l2_norm_sq()).abs();
            assert!(err < last);
            last = err;
            let exact = rate_full_with(&model, &z, &y, tau, QuadratureRule::ExponentialFitted).unwrap();
            assert_relative_eq!(exact.value, 0.5 * c.l2_norm_sq(), max_relative = 1e-10);
        }
        assert!(last < 1e-3);
    }

    #[test]
    fn control_extraction() {
        let model = ModelSpec::linear(1, 2.0).unwrap();
        let l = PI * PI;
        let q = model.operator.noise()[0];
        // straight line from 0.1 to -0.2 on [0, 1]
        let z = SpectralPath::new(
            0.1,
            (0..=10)
                .map(|k| SpectralField::new(vec![0.1 - 0.3 * k as f64 / 10.0]).unwrap())
                .collect(),
        )
        .unwrap();
        let psi = control_from_path(&model, &z).unwrap();
        for (k, v) in psi.values().iter().enumerate() {
            let mid = 0.1 - 0.3 * (k as f64 + 0.5) / 10.0;
            assert_relative_eq!(v.coeffs()[0], (-0.3 + l * mid) / q.sqrt(), max_relative = 1e-12);
        }
        let r = rate_semi(&model, &z, z.start()).unwrap();
        assert_eq!((0.5 * psi.l2_norm_sq()).to_bits(), r.value.to_bits());

        // round trip through the skeleton solver
        let model = sin_model(3, 0.5);
        let y = SpectralField::new(vec![0.3, 0.1, 0.0]).unwrap();
        let c = Control::from_fn(0.005, 200, |t| SpectralField::new(vec![(5.0 * t).cos(), t, 0.0]).unwrap()).unwrap();
        let z = solve_skeleton(&model, &y, &c, 16).unwrap();
        let back = solve_skeleton(&model, &y, &control_from_path(&model, &z).unwrap(), 16).unwrap();
        assert!(back.sup_distance(&z).unwrap() < 5e-3);
        let flow = uncontrolled_flow(&model, &y, 0.001, 1000, 1).unwrap();
        let psi = control_from_path_with(&model, &flow, QuadratureRule::ExponentialFitted).unwrap();
        assert!(psi.l2_norm_sq() < 1e-20);
    }

    #[test]
    fn reference_truncation_is_exact_beyond_band_limit() {
        let small = ModelSpec::linear(8, 2.0).unwrap();
        let big = ModelSpec::linear(16, 2.0).unwrap();
        let pad = |f: &SpectralField| {
            let mut v = f.coeffs().to_vec();
            v.resize(16, 0.0);
            SpectralField::new(v).unwrap()
        };
        let x = SpectralField::from_modes(8, |i| 1.0 / (i * i * i) as f64).unwrap();
        let c = Control::from_fn(0.01, 100, |t| SpectralField::from_modes(8, |i| t / i as f64).unwrap()).unwrap();
        let cb = Control::new(0.01, c.values().iter().map(pad).collect()).unwrap();
        let zs = solve_skeleton(&small, &x, &c, 1).unwrap();
        let zb = solve_skeleton(&big, &pad(&x), &cb, 1).unwrap();
        for rule in [QuadratureRule::Midpoint, QuadratureRule::ExponentialFitted] {
            let a = rate_reference(&small, &zs, &x, rule).unwrap().value;
            let b = rate_reference(&big, &zb, &pad(&x), rule).unwrap().value;
            assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }
        let exact = rate_reference(&big, &zb, &pad(&x), QuadratureRule::ExponentialFitted).unwrap().value;
        assert_relative_eq!(exact, 0.5 * c.l2_norm_sq(), max_relative = 1e-10);
        let flow = uncontrolled_flow(&big, &pad(&x), 0.01, 100, 1).unwrap();
        assert!(rate_reference(&big, &flow, &pad(&x), QuadratureRule::ExponentialFitted).unwrap().value <= 1e-10);
    }
}
