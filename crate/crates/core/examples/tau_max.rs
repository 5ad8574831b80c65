//! Largest stable step of the accelerated exponential Euler scheme for a few
//! dissipativity margins.
//!
//! cargo run --example tau_max

use spectral_ldp::max_stable_stepsize;

fn main() -> spectral_ldp::Result<()> {
    let l1 = std::f64::consts::PI.powi(2);
    for lip in [0.5, 1.0, 2.0, 5.0, 9.0] {
        println!("lambda_1 = {l1:.6}  L = {lip:<4}  tau_0 = {:.16}", max_stable_stepsize(l1, lip)?);
    }
    match max_stable_stepsize(l1, 12.0) {
        Ok(t) => println!("L = 12: {t}"),
        Err(e) => println!("L = 12: {e}"),
    }
    Ok(())
}
