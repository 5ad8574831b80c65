//! Gaussian tails of the numerical invariant measure and the exponential
//! moment of the stochastic convolution.
//!
//! cargo run --release --example tails

use spectral_ldp::montecarlo::{
    empirical_invariant_measure, fernique_moment_mc, tail_check, InvariantSampling,
};
use spectral_ldp::*;

fn main() -> Result<()> {
    let n = 8;
    let model = ModelSpec::new(
        OperatorSpec::with_decay(n, 2.0)?,
        NonlinearitySpec::nemytskij(ScalarFunction::Sin { amplitude: 1.0 }, n)?,
    )?;
    let eps = 1.0;
    let sampling = InvariantSampling { thin: 5, ..InvariantSampling::with_defaults(&model, eps, 0.01, 2000.0, 11)? };
    let states = empirical_invariant_measure(&model, &sampling)?;
    let rms = (states.iter().map(|s| s.norm_sq()).sum::<f64>() / states.len() as f64).sqrt();
    let radii: Vec<f64> = (1..=4).map(|k| k as f64 * rms).collect();
    let report = tail_check(&states, &radii, eps, &[0.01, 0.1])?;
    println!("{} states, rms norm {rms:.4}", report.samples);
    for e in &report.entries {
        println!("  K = {:.4}  mu(|u| > K) = {:.3e}  ({} hits)", e.k, e.mu_hat, e.hits);
    }
    println!("growth exponent {:?}  quadratic {:?}", report.growth_exponent, report.quadratic_growth);

    let op = &model.operator;
    let kappa = 0.5 * op.min_lambda_over_q();
    let f = fernique_moment_mc(op, kappa, 2.0, 100_000, 100, 5)?;
    println!(
        "E exp(kappa |Gamma(2)|^2), kappa = {kappa:.4}: mc {:.5} +- {:.5} (bootstrap {:.5})  exact {:.5}",
        f.mean, f.std_error, f.bootstrap_se, f.exact
    );
    Ok(())
}
