//! Evaluate the semi-discrete and fully discrete rate functionals of a
//! controlled skeleton path, and compare with the control energy.
//!
//! cargo run --release --example rate

use spectral_ldp::rate::{rate_full, rate_semi, rate_semi_with, QuadratureRule};
use spectral_ldp::skeleton::solve_skeleton;
use spectral_ldp::*;

fn main() -> Result<()> {
    let n = 4;
    let model = ModelSpec::new(
        OperatorSpec::with_decay(n, 2.0)?,
        NonlinearitySpec::nemytskij(ScalarFunction::Tanh { amplitude: 1.0 }, n)?,
    )?;
    let h = 0.0025;
    let control = Control::from_fn(h, 400, |t| {
        SpectralField::new(vec![3.0 * (2.0 * t).sin(), 1.0, 0.0, 0.0]).unwrap()
    })?;
    let y = SpectralField::zeros(n);
    let z = solve_skeleton(&model, &y, &control, 1)?;
    let energy = 0.5 * control.l2_norm_sq();

    let mid = rate_semi(&model, &z, &y)?;
    let fitted = rate_semi_with(&model, &z, &y, QuadratureRule::ExponentialFitted)?;
    println!("half control energy      {energy:.10}");
    println!("midpoint rule            {:.10}", mid.value);
    println!("exponentially fitted     {:.10}", fitted.value);
    for tau in [0.1, 0.05, 0.025, 0.0125] {
        let r = rate_full(&model, &z, &y, tau)?;
        println!("frozen drift, tau {tau:<7} {:.10}", r.value);
    }

    // a path that does not start at y lies outside the effective domain
    let off = rate_semi(&model, &z, &SpectralField::basis(n, 1)?)?;
    println!("wrong start: value {} (mismatch {:.3})", off.value, off.boundary_mismatch);
    Ok(())
}
