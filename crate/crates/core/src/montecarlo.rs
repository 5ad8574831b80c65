//! Monte Carlo checks of the small-noise asymptotics: tube probabilities and
//! their `-ε² log p` scaling, exponential square moments of the stochastic
//! convolution, ergodic sampling of the invariant measure and its tails.
//!
//! Every trajectory (or sample chunk) draws from its own counter-based stream,
//! and hit counts are integer sums, so estimates do not depend on the number
//! of worker threads.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrator::{step_count, stochastic_convolution_sample, ExponentialEuler, IntegratorConfig};
use crate::model::ModelSpec;
use crate::optimize::{projected_gradient, ExitReason, ProjectedOptions};
use crate::path::SpectralPath;
use crate::quasipotential::ActionObjective;
use crate::rate::QuadratureRule;
use crate::spectral::{OperatorSpec, SpectralField};
use crate::stream::{ordered_map, GaussianStream};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MCEstimate {
    pub p_hat: f64,
    pub samples: u64,
    pub hits: u64,
    pub std_error: f64,
    pub seed: u64,
}

impl MCEstimate {
    fn from_hits(hits: u64, samples: u64, seed: u64) -> Self {
        let p = hits as f64 / samples as f64;
        MCEstimate {
            p_hat: p,
            samples,
            hits,
            std_error: (p * (1.0 - p) / samples as f64).sqrt(),
            seed,
        }
    }
}

/// Sampling parameters shared by the tube estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TubeSampling {
    /// Integrator step; must divide the path's grid step.
    pub tau: f64,
    pub samples: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TubeEstimate {
    #[serde(flatten)]
    pub estimate: MCEstimate,
    pub delta: f64,
    pub epsilon: f64,
    /// Largest jump of the target path between grid nodes; the sup-norm on
    /// `[0,T]` can exceed the grid maximum by roughly this much.
    pub grid_modulus: f64,
}

/// `P(max_k |X^ε(t_k) - z(t_k)| < δ)` over the nodes of `z`, simulated from
/// `X(0) = z(0)` with the accelerated exponential Euler scheme.
pub fn tube_probability(
    model: &ModelSpec,
    z: &SpectralPath,
    delta: f64,
    epsilon: f64,
    sampling: &TubeSampling,
) -> Result<TubeEstimate> {
    if sampling.samples == 0 {
        return Err(Error::domain("tube probability needs at least one sample"));
    }
    if !(delta > 0.0) {
        return Err(Error::domain(format!("tube radius must be positive, got {delta}")));
    }
    if z.dim() != model.n() {
        return Err(Error::domain("target path dimension differs from the model"));
    }
    let ratio = step_count(z.step(), sampling.tau, "path grid vs integrator step")?;
    let cfg = IntegratorConfig { tau: sampling.tau, epsilon, seed: sampling.seed, ..Default::default() };
    let scheme = ExponentialEuler::new(model, &cfg)?;
    let nodes = z.nodes();
    let d2 = delta * delta;

    let inside = |traj: usize| -> Result<bool> {
        let mut rng = GaussianStream::new(sampling.seed, traj as u64);
        let mut state = nodes[0].coeffs().to_vec();
        let mut step = 0usize;
        for target in &nodes[1..] {
            for _ in 0..ratio {
                scheme.advance_with(&mut state, &mut rng, step, |_| {})?;
                step += 1;
            }
            let dist: f64 = state.iter().zip(target.coeffs()).map(|(a, b)| (a - b).powi(2)).sum();
            if dist >= d2 {
                return Ok(false);
            }
        }
        Ok(true)
    };
    let outcomes = ordered_map(sampling.samples as usize, inside);
    let mut hits = 0u64;
    for o in outcomes {
        hits += o? as u64;
    }
    Ok(TubeEstimate {
        estimate: MCEstimate::from_hits(hits, sampling.samples, sampling.seed),
        delta,
        epsilon,
        grid_modulus: z.grid_modulus(),
    })
}

/// Entries with fewer hits are left out of the slope fit.
pub const MIN_HITS: u64 = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeEntry {
    pub epsilon: f64,
    pub p_hat: f64,
    pub std_error: f64,
    pub hits: u64,
    pub samples: u64,
    /// `-ε² log p̂`, absent when `p̂ = 0`.
    pub scaled_log: Option<f64>,
    /// Delta-method standard error of `scaled_log`.
    pub scaled_log_se: Option<f64>,
    pub resolved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeFit {
    pub delta: f64,
    pub entries: Vec<SlopeEntry>,
    /// Inverse-variance weighted mean of `-ε² log p̂` over resolved entries.
    pub aggregate: Option<f64>,
    /// Least-squares slope of `-ε² log p̂` against `ε²` (needs ≥ 2 resolved).
    pub trend: Option<f64>,
    pub inconclusive: bool,
}

/// `-ε² log P(|X^ε - z| < δ)` along a decreasing ladder of noise levels.
/// Ladder entry `j` uses seed `seed + j`.
pub fn ldp_slope(
    model: &ModelSpec,
    z: &SpectralPath,
    delta: f64,
    eps_ladder: &[f64],
    sampling: &TubeSampling,
) -> Result<SlopeFit> {
    if eps_ladder.is_empty() {
        return Err(Error::domain("epsilon ladder is empty"));
    }
    if eps_ladder.iter().any(|e| !(*e > 0.0)) || eps_ladder.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::domain("epsilon ladder must be positive and strictly decreasing"));
    }
    let mut entries = Vec::with_capacity(eps_ladder.len());
    for (j, &eps) in eps_ladder.iter().enumerate() {
        let s = TubeSampling { seed: sampling.seed.wrapping_add(j as u64), ..*sampling };
        let e = tube_probability(model, z, delta, eps, &s)?.estimate;
        let e2 = eps * eps;
        let (scaled_log, scaled_log_se) = if e.hits > 0 {
            (Some(-(e2 * e.p_hat.ln()) + 0.0), Some(e2 * e.std_error / e.p_hat))
        } else {
            (None, None)
        };
        entries.push(SlopeEntry {
            epsilon: eps,
            p_hat: e.p_hat,
            std_error: e.std_error,
            hits: e.hits,
            samples: e.samples,
            scaled_log,
            scaled_log_se,
            resolved: e.hits >= MIN_HITS,
        });
    }
    let resolved: Vec<&SlopeEntry> = entries.iter().filter(|e| e.resolved).collect();
    let aggregate = if resolved.is_empty() {
        None
    } else {
        // entries with p̂ = 1 have zero variance; fall back to equal weights
        let weights: Vec<f64> = resolved
            .iter()
            .map(|e| {
                let se = e.scaled_log_se.unwrap();
                if se > 0.0 {
                    1.0 / (se * se)
                } else {
                    f64::INFINITY
                }
            })
            .collect();
        if weights.iter().any(|w| w.is_infinite()) {
            let zero_var: Vec<f64> = resolved
                .iter()
                .zip(&weights)
                .filter(|(_, w)| w.is_infinite())
                .map(|(e, _)| e.scaled_log.unwrap())
                .collect();
            Some(zero_var.iter().sum::<f64>() / zero_var.len() as f64)
        } else {
            let wsum: f64 = weights.iter().sum();
            Some(resolved.iter().zip(&weights).map(|(e, w)| w * e.scaled_log.unwrap()).sum::<f64>() / wsum)
        }
    };
    let trend = if resolved.len() >= 2 {
        let xs: Vec<f64> = resolved.iter().map(|e| e.epsilon * e.epsilon).collect();
        let ys: Vec<f64> = resolved.iter().map(|e| e.scaled_log.unwrap()).collect();
        Some(least_squares_slope(&xs, &ys))
    } else {
        None
    };
    Ok(SlopeFit { delta, inconclusive: resolved.is_empty(), entries, aggregate, trend })
}

pub(crate) fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Serialize)]
pub struct TubeInfimum {
    pub value: f64,
    pub iterations: usize,
    pub exit: ExitReason,
    #[serde(skip)]
    pub path: SpectralPath,
}

/// `inf { I^{n,y}(w) : w(0) = z(0), max_k |w(t_k) - z(t_k)| ≤ δ }` on the grid
/// of `z`, by projected gradient on the free nodes (the endpoint is free).
pub fn tube_infimum(
    model: &ModelSpec,
    z: &SpectralPath,
    delta: f64,
    rule: QuadratureRule,
    opts: &ProjectedOptions,
) -> Result<TubeInfimum> {
    if !(delta > 0.0) {
        return Err(Error::domain(format!("tube radius must be positive, got {delta}")));
    }
    let n = model.n();
    let obj = ActionObjective::new(model, z.start().clone(), None, z.step(), z.intervals(), rule, None)?;
    let centre = obj.free_from_path(z)?;
    let project = |x: &mut [f64]| {
        for (xk, ck) in x.chunks_mut(n).zip(centre.chunks(n)) {
            let d2: f64 = xk.iter().zip(ck).map(|(a, b)| (a - b).powi(2)).sum();
            if d2 > delta * delta {
                let s = delta / d2.sqrt();
                for (a, b) in xk.iter_mut().zip(ck) {
                    *a = b + s * (*a - b);
                }
            }
        }
    };
    // start from the uncontrolled-ish straight hold at z(0), projected
    let x0: Vec<f64> = (0..z.intervals()).flat_map(|_| z.start().coeffs().iter().copied()).collect();
    let m = projected_gradient(|x, g| obj.value_and_gradient(x, g), project, x0, opts)?;
    Ok(TubeInfimum { value: m.value, iterations: m.iterations, exit: m.exit, path: obj.path(&m.x)? })
}

/// `E exp(κ |Γ^n(t)|²) = Π_i (1 - κ (q_i/λ_i)(1 - e^{-2λ_i t}))^{-1/2}`,
/// defined for `κ < min_i λ_i/q_i`.
pub fn fernique_moment_exact(op: &OperatorSpec, kappa: f64, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("time must be >= 0, got {t}")));
    }
    let kmax = op.min_lambda_over_q();
    if !(kappa >= 0.0 && kappa < kmax) {
        return Err(Error::domain(format!(
            "kappa = {kappa} must lie in [0, min lambda_i/q_i = {kmax}); the moment diverges otherwise"
        )));
    }
    let mut log = 0.0;
    for (l, q) in op.eigenvalues().iter().zip(op.noise()) {
        log += -0.5 * (-kappa * q / l * -(-2.0 * l * t).exp_m1()).ln_1p();
    }
    Ok(log.exp())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FerniqueEstimate {
    pub kappa: f64,
    pub t: f64,
    pub mean: f64,
    pub std_error: f64,
    pub bootstrap_se: f64,
    pub samples: u64,
    pub exact: f64,
    pub seed: u64,
    /// Set when `2κ` reaches the admissible bound, so the estimator has
    /// infinite variance and error bars are unreliable.
    pub heavy_tail_warning: bool,
}

const CHUNK: usize = 4096;

/// Monte Carlo estimate of `E exp(κ |Γ^n(t)|²)` from exact Gaussian draws,
/// with a nonparametric bootstrap standard error over `bootstrap` resamples.
pub fn fernique_moment_mc(
    op: &OperatorSpec,
    kappa: f64,
    t: f64,
    samples: u64,
    bootstrap: usize,
    seed: u64,
) -> Result<FerniqueEstimate> {
    let exact = fernique_moment_exact(op, kappa, t)?;
    if samples < 2 {
        return Err(Error::domain("Fernique estimate needs at least two samples"));
    }
    let samples_us = samples as usize;
    let chunks = samples_us.div_ceil(CHUNK);
    let parts = ordered_map(chunks, |c| -> Result<Vec<f64>> {
        let mut rng = GaussianStream::new(seed, c as u64);
        let len = CHUNK.min(samples_us - c * CHUNK);
        (0..len)
            .map(|_| Ok((kappa * stochastic_convolution_sample(t, op, &mut rng)?.norm_sq()).exp()))
            .collect()
    });
    let mut values = Vec::with_capacity(samples_us);
    for p in parts {
        values.extend(p?);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let boot = ordered_map(bootstrap, |b| {
        // streams beyond the sampling chunks
        let mut rng = GaussianStream::new(seed, (chunks + b) as u64);
        let mut s = 0.0;
        for _ in 0..samples_us {
            s += values[rng.next_index(samples_us)];
        }
        s / n
    });
    let bootstrap_se = if bootstrap >= 2 {
        let bm = boot.iter().sum::<f64>() / boot.len() as f64;
        (boot.iter().map(|v| (v - bm).powi(2)).sum::<f64>() / (boot.len() - 1) as f64).sqrt()
    } else {
        f64::NAN
    };
    Ok(FerniqueEstimate {
        kappa,
        t,
        mean,
        std_error: (var / n).sqrt(),
        bootstrap_se,
        samples,
        exact,
        seed,
        heavy_tail_warning: 2.0 * kappa >= op.min_lambda_over_q(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InvariantSampling {
    pub epsilon: f64,
    pub tau: f64,
    pub burn_in: f64,
    pub window: f64,
    /// Keep every `thin`-th step inside the averaging window.
    pub thin: usize,
    pub seed: u64,
}

impl InvariantSampling {
    /// Burn-in `10/c` with `c = λ_1 - L_F`, thinning every 10 steps.
    pub fn with_defaults(model: &ModelSpec, epsilon: f64, tau: f64, window: f64, seed: u64) -> Result<Self> {
        model.require_dissipative()?;
        let c = model.dissipativity();
        let burn = (10.0 / c / tau).ceil() * tau;
        Ok(InvariantSampling { epsilon, tau, burn_in: burn, window, thin: 10, seed })
    }
}

/// Thinned states of one long trajectory from `0` over `[T_b, T_b + T_a]`,
/// the time-average construction of the numerical invariant measure.
pub fn empirical_invariant_measure(model: &ModelSpec, s: &InvariantSampling) -> Result<Vec<SpectralField>> {
    if !(s.burn_in > 0.0 && s.window > 0.0) {
        return Err(Error::domain("burn-in and averaging window must be positive"));
    }
    if s.thin == 0 {
        return Err(Error::config("sampling.thin", "must be at least 1"));
    }
    let cfg = IntegratorConfig { tau: s.tau, epsilon: s.epsilon, seed: s.seed, ..Default::default() };
    let scheme = ExponentialEuler::new(model, &cfg)?;
    let burn = step_count(s.burn_in, s.tau, "burn-in vs step")?;
    let window = step_count(s.window, s.tau, "averaging window vs step")?;
    let mut rng = GaussianStream::new(s.seed, 0);
    let mut state = vec![0.0; model.n()];
    for m in 0..burn {
        scheme.advance_with(&mut state, &mut rng, m, |_| {})?;
    }
    let mut out = Vec::with_capacity(window / s.thin);
    for m in 0..window {
        scheme.advance_with(&mut state, &mut rng, burn + m, |_| {})?;
        if (m + 1) % s.thin == 0 {
            out.push(SpectralField::from_vec_unchecked(state.clone()));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailEntry {
    #[serde(rename = "K")]
    pub k: f64,
    pub mu_hat: f64,
    pub hits: u64,
    pub std_error: f64,
    /// `μ̂ = 0`: only `μ < 1/samples` can be claimed.
    pub below_resolution: bool,
    /// `-ε² log μ̂`.
    pub scaled_log: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaCheck {
    pub alpha: f64,
    /// Smallest ladder `K` with `μ̂(|u| > K) ≤ exp(-α/ε²)`, if any.
    #[serde(rename = "K")]
    pub k: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailReport {
    pub epsilon: f64,
    pub samples: u64,
    pub entries: Vec<TailEntry>,
    /// Log-log slope of `-log μ̂(K)` against `K` over resolved entries with
    /// `μ̂ ≤ 0.1`: 2 for Gaussian tails, 1 for exponential ones.
    pub growth_exponent: Option<f64>,
    /// `growth_exponent ≥ 1.5`; `None` with fewer than two tail entries.
    pub quadratic_growth: Option<bool>,
    pub alphas: Vec<AlphaCheck>,
}

/// Empirical tail `μ̂(|u| > K)` over a ladder of radii.
pub fn tail_check(samples: &[SpectralField], k_ladder: &[f64], epsilon: f64, alphas: &[f64]) -> Result<TailReport> {
    if samples.is_empty() {
        return Err(Error::domain("tail check needs samples"));
    }
    let norms: Vec<f64> = samples.iter().map(SpectralField::norm).collect();
    let n = norms.len() as u64;
    let e2 = epsilon * epsilon;
    let entries: Vec<TailEntry> = k_ladder
        .iter()
        .map(|&k| {
            let hits = norms.iter().filter(|r| **r > k).count() as u64;
            let est = MCEstimate::from_hits(hits, n, 0);
            TailEntry {
                k,
                mu_hat: est.p_hat,
                hits,
                std_error: est.std_error,
                below_resolution: hits == 0,
                scaled_log: (hits > 0).then(|| -(e2 * est.p_hat.ln()) + 0.0),
            }
        })
        .collect();
    // log-log slope of -log μ̂ against K in the tail region
    let tail: Vec<(f64, f64)> = entries
        .iter()
        .filter(|e| e.k > 0.0 && e.hits >= MIN_HITS && e.mu_hat <= 0.1)
        .map(|e| (e.k.ln(), (-e.mu_hat.ln()).ln()))
        .collect();
    let growth_exponent = if tail.len() >= 2 {
        let (xs, ys): (Vec<f64>, Vec<f64>) = tail.into_iter().unzip();
        Some(least_squares_slope(&xs, &ys))
    } else {
        None
    };
    let quadratic_growth = growth_exponent.map(|g| g >= 1.5);
    let alphas = alphas
        .iter()
        .map(|&alpha| AlphaCheck {
            alpha,
            k: entries.iter().find(|e| e.mu_hat <= (-alpha / e2).exp()).map(|e| e.k),
        })
        .collect();
    Ok(TailReport { epsilon, samples: n, entries, growth_exponent, quadratic_growth, alphas })
}
