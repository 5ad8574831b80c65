//! Quasipotential of a target state: closed form for a linear drift, and the
//! horizon-ladder minimizer of the discrete action for a nonlinear one.
//!
//! cargo run --release --example quasipotential

use spectral_ldp::quasipotential::{
    minimize_quasipotential, quasipotential_linear, GridPolicy, QuasipotentialOptions,
};
use spectral_ldp::*;

fn main() -> Result<()> {
    let n = 3;
    let u = SpectralField::new(vec![0.02, -0.005, 0.001])?;
    let mut opts = QuasipotentialOptions::default();
    opts.action.grid = GridPolicy::IntervalsPerHorizon(100);
    let ladder = [0.25, 0.5, 1.0];

    let linear = ModelSpec::linear(n, 2.0)?;
    let exact = quasipotential_linear(&linear, &u)?;
    let found = minimize_quasipotential(&linear, &u, &ladder, &opts)?;
    println!("linear drift: exact {exact:.8}  minimizer {:.8}  (T* = {})", found.value, found.t_star);

    let model = ModelSpec::new(
        OperatorSpec::with_decay(n, 2.0)?,
        NonlinearitySpec::nemytskij(ScalarFunction::Sin { amplitude: 2.0 }, n)?,
    )?;
    let r = minimize_quasipotential(&model, &u, &ladder, &opts)?;
    for hv in &r.per_horizon {
        println!("  T = {:<5} V_T = {:.8}  |grad| = {:.1e}  {:?}", hv.horizon, hv.value, hv.grad_norm, hv.exit);
    }
    println!("sin drift: V ~ {:.8}  monotone {}  local only {}", r.value, r.monotone, r.local_only);
    Ok(())
}
