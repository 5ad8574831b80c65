//! Monte Carlo tube probabilities around a skeleton path and the scaled
//! log-probability -ε² log p̂ along a decreasing noise ladder, next to the
//! rate of the path and the infimum of the rate over the tube. At these noise
//! levels the scaled log is still far above its small-noise limit.
//!
//! cargo run --release --example tube_slope

use spectral_ldp::montecarlo::{ldp_slope, tube_infimum, TubeSampling};
use spectral_ldp::optimize::ProjectedOptions;
use spectral_ldp::rate::{rate_semi_with, QuadratureRule};
use spectral_ldp::skeleton::solve_skeleton;
use spectral_ldp::*;

fn main() -> Result<()> {
    let model = ModelSpec::new(OperatorSpec::with_noise(vec![1.0, 1.0])?, NonlinearitySpec::Zero)?;
    let control = Control::constant(0.05, 10, SpectralField::new(vec![1.5, 0.0])?)?;
    let z = solve_skeleton(&model, &SpectralField::zeros(2), &control, 1)?;
    let rule = QuadratureRule::ExponentialFitted;
    let action = rate_semi_with(&model, &z, z.start(), rule)?.value;

    let sampling = TubeSampling { tau: 0.01, samples: 20_000, seed: 3 };
    let delta = 0.15;
    let inf = tube_infimum(&model, &z, delta, rule, &ProjectedOptions::default())?;
    println!("path action {action:.5}  tube infimum {:.5}", inf.value);

    let fit = ldp_slope(&model, &z, delta, &[0.6, 0.5, 0.4, 0.35], &sampling)?;
    for e in &fit.entries {
        match e.scaled_log {
            Some(s) => println!("eps {:<5} p {:.4e} ({} hits)  -eps^2 log p {:.5}", e.epsilon, e.p_hat, e.hits, s),
            None => println!("eps {:<5} no hits in {} samples", e.epsilon, e.samples),
        }
    }
    println!("aggregate {:?}  trend in eps^2 {:?}", fit.aggregate, fit.trend);
    Ok(())
}
