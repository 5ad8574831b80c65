//! Convergence of the discrete rate functions: spatial ladder in n, temporal
//! gap in τ, and the quasipotential of a linear model.
//!
//! cargo run --release --example preservation

use spectral_ldp::experiments::{
    algebraic_control, parabola_coefficients, quasipotential_preservation_study,
    spatial_preservation_study, temporal_gap_study,
};
use spectral_ldp::quasipotential::{GridPolicy, QuasipotentialOptions};
use spectral_ldp::rate::QuadratureRule;
use spectral_ldp::skeleton::solve_skeleton;
use spectral_ldp::*;

fn main() -> Result<()> {
    let big = 64;
    let reference = ModelSpec::new(
        OperatorSpec::with_decay(big, 2.0)?,
        NonlinearitySpec::nemytskij(ScalarFunction::Sin { amplitude: 1.0 }, big)?,
    )?;
    let x = parabola_coefficients(big)?;
    let phi = algebraic_control(big, 32, 3.0, 1.0, 0.01, 100)?;
    let spatial = spatial_preservation_study(&reference, &x, &phi, &[4, 8, 16, 32], 1, QuadratureRule::ExponentialFitted)?;
    print!("spatial\n{}", spatial.table());

    let small = reference.truncate(3)?;
    let h = 1.0 / 800.0;
    let psi = Control::from_fn(h, 800, |t| SpectralField::new(vec![100.0 * (2.0 * t).sin(), 50.0 * t, 0.0]).unwrap())?;
    let y = SpectralField::zeros(3);
    let z = solve_skeleton(&small, &y, &psi, 1)?;
    let temporal = temporal_gap_study(&small, &z, &y, &[0.1, 0.05, 0.025, 0.0125])?;
    print!("temporal\n{}", temporal.table());

    let linear = ModelSpec::linear(16, 2.0)?;
    let u = SpectralField::from_modes(16, |i| 0.1 * (i as f64).powi(-4))?;
    let mut opts = QuasipotentialOptions::default();
    opts.action.grid = GridPolicy::Step(0.01);
    opts.action.rule = QuadratureRule::ExponentialFitted;
    let qp = quasipotential_preservation_study(&linear, &u, &[2, 4, 8], &[0.1, 0.05], &[0.5, 1.0], 1, 2, &opts)?;
    print!("quasipotential, spatial\n{}", qp.spatial.table());
    print!("quasipotential, temporal\n{}", qp.temporal.table());
    Ok(())
}
