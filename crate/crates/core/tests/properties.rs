//! Randomized properties of the discretizations.

use proptest::prelude::*;
use spectral_ldp::nonlinearity::apply_f;
use spectral_ldp::quasipotential::{quasipotential_linear, quasipotential_linear_finite_t};
use spectral_ldp::rate::{rate_semi, rate_semi_with, QuadratureRule};
use spectral_ldp::skeleton::solve_skeleton;
use spectral_ldp::spectral::sobolev_norm_sq;
use spectral_ldp::*;

fn field(n: usize) -> impl Strategy<Value = SpectralField> {
    prop::collection::vec(-2.0f64..2.0, n).prop_map(|v| SpectralField::new(v).unwrap())
}

fn scalar_function() -> impl Strategy<Value = ScalarFunction> {
    (0usize..3, 0.05f64..3.0).prop_map(|(k, a)| match k {
        0 => ScalarFunction::Sin { amplitude: a },
        1 => ScalarFunction::Tanh { amplitude: a },
        _ => ScalarFunction::Bump { amplitude: a },
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grid_round_trip_and_discrete_parseval(u in (1usize..12).prop_flat_map(field), extra in 0usize..20) {
        let grid = SineGrid::new(u.dim() + extra).unwrap();
        let vals = grid.evaluate(&u).unwrap();
        let back = grid.synthesize_truncated(&vals, u.dim()).unwrap();
        for (a, b) in back.coeffs().iter().zip(u.coeffs()) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
        let discrete = vals.iter().map(|v| v * v).sum::<f64>() / (grid.points() + 1) as f64;
        prop_assert!((discrete - sobolev_norm_sq(&u, 0.0)).abs() <= 1e-11 * (1.0 + discrete));
    }

    /// Declared Lipschitz bounds hold for the projected Nemytskij operator.
    #[test]
    fn lipschitz_audit(f in scalar_function(), n in 1usize..8, seed in any::<u64>()) {
        let spec = NonlinearitySpec::nemytskij(f.clone(), n).unwrap();
        let l = spec.lipschitz();
        let mut s = GaussianStream::new(seed, 0);
        for _ in 0..8 {
            let u = SpectralField::new((0..n).map(|_| 2.0 * s.next_normal()).collect()).unwrap();
            let v = SpectralField::new((0..n).map(|_| 2.0 * s.next_normal()).collect()).unwrap();
            let d = apply_f(&spec, &u).unwrap().distance(&apply_f(&spec, &v).unwrap());
            prop_assert!(d <= l * u.distance(&v) * (1.0 + 1e-12) + 1e-14, "{f:?}: {d} > {l} * {}", u.distance(&v));
        }
    }

    #[test]
    fn semigroup_law(u in field(5), s in 0.0f64..0.3, t in 0.0f64..0.3) {
        let op = OperatorSpec::with_decay(5, 2.0).unwrap();
        let a = op.semigroup_apply(&op.semigroup_apply(&u, s).unwrap(), t).unwrap();
        let b = op.semigroup_apply(&u, s + t).unwrap();
        for (x, y) in a.coeffs().iter().zip(b.coeffs()) {
            prop_assert!((x - y).abs() <= 1e-14 * (1.0 + y.abs()));
        }
    }

    /// Rate functionals are nonnegative on arbitrary paths.
    #[test]
    fn rate_is_nonnegative(nodes in prop::collection::vec(field(3), 2..20), h in 0.001f64..0.2) {
        let model = ModelSpec::new(
            OperatorSpec::with_decay(3, 2.0).unwrap(),
            NonlinearitySpec::nemytskij(ScalarFunction::Sin { amplitude: 0.5 }, 3).unwrap(),
        ).unwrap();
        let z = SpectralPath::new(h, nodes).unwrap();
        for rule in [QuadratureRule::Midpoint, QuadratureRule::ExponentialFitted] {
            let r = rate_semi_with(&model, &z, z.start(), rule).unwrap();
            prop_assert!(r.value >= 0.0 && r.value.is_finite());
        }
    }

    /// With a linear drift the exponentially fitted rule inverts the skeleton
    /// solver exactly, so the action is half the control energy.
    #[test]
    fn skeleton_action_is_control_energy(
        b in prop::collection::vec(-3.0f64..3.0, 3),
        y in field(3),
        psi in prop::collection::vec(field(3), 1..30),
    ) {
        let model = ModelSpec::new(OperatorSpec::with_decay(3, 2.0).unwrap(), NonlinearitySpec::LinearDiagonal(b)).unwrap();
        let c = Control::new(0.02, psi).unwrap();
        let z = solve_skeleton(&model, &y, &c, 3).unwrap();
        let r = rate_semi_with(&model, &z, &y, QuadratureRule::ExponentialFitted).unwrap();
        let e = 0.5 * c.l2_norm_sq();
        prop_assert!((r.value - e).abs() <= 1e-9 * (1.0 + e), "{} vs {e}", r.value);
    }

    #[test]
    fn finite_horizon_quasipotential_decreases_to_the_limit(u in field(4), t in 0.05f64..2.0) {
        let model = ModelSpec::linear(4, 2.0).unwrap();
        let v = quasipotential_linear(&model, &u).unwrap();
        let a = quasipotential_linear_finite_t(&model, &u, t).unwrap();
        let b = quasipotential_linear_finite_t(&model, &u, 2.0 * t).unwrap();
        prop_assert!(a >= b * (1.0 - 1e-14) && b >= v * (1.0 - 1e-14));
    }

    #[test]
    fn step_size_threshold_solves_its_equation(lambda1 in 0.5f64..200.0, frac in 0.01f64..0.99) {
        let lf = frac * lambda1;
        let tau0 = max_stable_stepsize(lambda1, lf).unwrap();
        let x = lambda1 * tau0;
        let lhs = x.exp_m1() / x;
        let rhs = (lambda1 + lf) / (2.0 * lf);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs, "{lhs} vs {rhs}");
    }

    #[test]
    fn path_csv_round_trip(nodes in prop::collection::vec(field(2), 2..12), k in 1u32..64) {
        let h = 1.0 / k as f64;
        let z = SpectralPath::new(h, nodes).unwrap();
        let back = SpectralPath::from_csv(&z.to_csv(&["note".into()])).unwrap();
        prop_assert_eq!(back.nodes(), z.nodes());
        prop_assert!((back.step() - h).abs() <= 1e-12 * h);
    }

    /// Uncontrolled flows cost nothing up to the midpoint rule's quadrature error.
    #[test]
    fn uncontrolled_flow_cost_vanishes_with_h(y in -0.5f64..0.5) {
        let model = ModelSpec::new(OperatorSpec::with_noise(vec![1.0]).unwrap(), NonlinearitySpec::Zero).unwrap();
        let y = SpectralField::new(vec![y]).unwrap();
        let z = spectral_ldp::skeleton::uncontrolled_flow(&model, &y, 1e-3, 1000, 1).unwrap();
        prop_assert!(rate_semi(&model, &z, &y).unwrap().value <= 1e-10);
    }
}
