//! Sample a few noisy trajectories of the 8-mode equation with a sine drift
//! and print the first mode at a handful of times.
//!
//! cargo run --release --example simulate

use spectral_ldp::*;

fn main() -> Result<()> {
    let n = 8;
    let model = ModelSpec::new(
        OperatorSpec::with_decay(n, 2.0)?,
        NonlinearitySpec::nemytskij(ScalarFunction::Sin { amplitude: 1.0 }, n)?,
    )?;
    let tau0 = max_stable_stepsize(model.operator.lambda_min(), model.nonlinearity.lipschitz())?;
    let cfg = IntegratorConfig { stride: 10, ..IntegratorConfig::new(0.01, 0.1, 7) };
    println!("tau = {}  (stability bound {tau0:.6})", cfg.tau);

    let y = SpectralField::basis(n, 1)?.scaled(0.5);
    for traj in 0..3 {
        let z = simulate_path(&y, 1.0, &model, &cfg, traj)?;
        let u1 = z.mode(1);
        let row: Vec<String> = u1.iter().step_by(2).map(|v| format!("{v:+.4}")).collect();
        println!("trajectory {traj}: u_1 at t = 0, 0.2, .., 1.0: {}", row.join(" "));
    }

    // ε = 0 reproduces the deterministic flow
    let flow = simulate_path(&y, 1.0, &model, &IntegratorConfig { stride: 10, ..IntegratorConfig::new(0.01, 0.0, 0) }, 0)?;
    println!("deterministic |u(1)| = {:.6e}", flow.end().norm());
    Ok(())
}
