//! Command-line front end: `spectral-ldp <command> --config run.toml`.
//!
//! Every command computes all of its results first and only then writes them,
//! each file through a temporary file in the output directory that is renamed
//! into place. Every file carries the configuration hash, the seed, the crate
//! version and the RNG algorithm, and nothing time-dependent.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{Format, FrozenConfig, PreserveKind};
use crate::error::{Error, Result};
use crate::experiments::{
    algebraic_control, quasipotential_preservation_study, spatial_preservation_study, temporal_gap_study,
    LadderReport,
};
use crate::integrator::{max_stable_stepsize, simulate_path};
use crate::montecarlo::{
    empirical_invariant_measure, fernique_moment_mc, ldp_slope, tail_check, tube_infimum, InvariantSampling,
    TubeSampling,
};
use crate::nonlinearity::NonlinearitySpec;
use crate::optimize::{LbfgsOptions, ProjectedOptions};
use crate::path::SpectralPath;
use crate::quasipotential::{
    minimize_quasipotential, minimize_quasipotential_full, quasipotential_linear, ActionOptions, GridPolicy,
    QuasipotentialOptions,
};
use crate::rate::{rate_full_with, rate_semi_with, QuadratureRule};
use crate::stream::{ordered_map, RNG_ALGORITHM};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "spectral-ldp", version, about = "Large-deviation studies for the spectral Galerkin heat equation")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true, value_name = "DIR", env = "SPECTRAL_LDP_OUT")]
    pub out: Option<PathBuf>,

    /// Overrides `integrator.seed`.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,

    /// Worker threads; overrides `runtime.threads`.
    #[arg(long, global = true, value_name = "N", env = "SPECTRAL_LDP_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Simulate trajectories with the exponential Euler scheme.
    Simulate,
    /// Evaluate the Galerkin and fully discrete rate functionals of a path.
    Rate,
    /// Minimize the action over a horizon ladder.
    Quasipotential,
    /// Monte Carlo tube probabilities against the rate functional.
    McVerify,
    /// Invariant-measure tails and the Fernique moment.
    TailCheck,
    /// Spatial, temporal or quasipotential preservation ladders.
    Preserve,
    /// Largest step size with uniformly bounded second moments.
    TauMax {
        /// Overrides the model's `λ_1`.
        #[arg(long)]
        lambda1: Option<f64>,
        /// Overrides the model's `L_F`.
        #[arg(long)]
        lipschitz: Option<f64>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Rate => "rate",
            Command::Quasipotential => "quasipotential",
            Command::McVerify => "mc-verify",
            Command::TailCheck => "tail-check",
            Command::Preserve => "preserve",
            Command::TauMax { .. } => "tau-max",
        }
    }
}

/// One output file.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub name: String,
    pub format: Format,
    pub contents: String,
}

/// What a command produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub summary: String,
    pub artifacts: Vec<Artifact>,
    pub written: Vec<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
struct Meta {
    command: &'static str,
    version: &'static str,
    config_hash: String,
    seed: u64,
    rng: &'static str,
    warnings: Vec<String>,
}

impl Meta {
    fn comment_lines(&self) -> Vec<String> {
        vec![
            format!("spectral-ldp {} {}", self.version, self.command),
            format!("config_hash={}", self.config_hash),
            format!("seed={}", self.seed),
            format!("rng={}", self.rng),
        ]
    }

    fn csv_header(&self) -> String {
        self.comment_lines().iter().map(|l| format!("# {l}\n")).collect()
    }
}

/// Long-format CSV body with a fixed header.
struct Csv {
    text: String,
}

impl Csv {
    fn new(meta: &Meta, columns: &[&str]) -> Self {
        let mut text = meta.csv_header();
        text.push_str(&columns.join(","));
        text.push('\n');
        Csv { text }
    }

    fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

struct Sink {
    meta: Meta,
    artifacts: Vec<Artifact>,
}

impl Sink {
    fn csv(&mut self, name: &str, csv: Csv) {
        self.artifacts.push(Artifact { name: format!("{name}.csv"), format: Format::Csv, contents: csv.text });
    }

    fn json(&mut self, name: &str, result: Value) {
        let doc = json!({ "meta": self.meta, "result": result });
        let mut contents = serde_json::to_string_pretty(&doc).expect("json");
        contents.push('\n');
        self.artifacts.push(Artifact { name: format!("{name}.json"), format: Format::Json, contents });
    }

    fn txt(&mut self, name: &str, body: &str) {
        let m = &self.meta;
        let contents = format!(
            "spectral-ldp {} {}  config_hash={}  seed={}\n\n{body}",
            m.version, m.command, m.config_hash, m.seed
        );
        self.artifacts.push(Artifact { name: format!("{name}.txt"), format: Format::Txt, contents });
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable result")
}

/// Writes every artifact to a temporary file in `dir` first and renames them
/// into place only once all writes have succeeded.
pub fn write_atomically(dir: &Path, artifacts: &[Artifact]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut staged = Vec::with_capacity(artifacts.len());
    for a in artifacts {
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
        tmp.write_all(a.contents.as_bytes())
            .and_then(|_| tmp.flush())
            .map_err(|e| Error::io(tmp.path(), e))?;
        staged.push((tmp, dir.join(&a.name)));
    }
    let mut written = Vec::with_capacity(staged.len());
    for (tmp, target) in staged {
        tmp.persist(&target).map_err(|e| Error::io(&target, e.error))?;
        written.push(target);
    }
    Ok(written)
}

fn no_config(command: &str) -> Error {
    Error::config("--config", format!("`{command}` needs a configuration file"))
}

/// Runs a parsed command line and writes its outputs.
pub fn run(cli: &Cli) -> Result<Outcome> {
    let frozen = match &cli.config {
        Some(p) => Some(FrozenConfig::load(p, cli.seed)?),
        None => None,
    };
    let threads = cli
        .threads
        .or_else(|| frozen.as_ref().map(|f| f.config.runtime.threads))
        .unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::config("runtime.threads", e.to_string()))?;

    let (meta, out_dir, formats) = match &frozen {
        Some(f) => (
            Meta {
                command: cli.command.name(),
                version: VERSION,
                config_hash: f.hash.clone(),
                seed: f.seed(),
                rng: RNG_ALGORITHM,
                warnings: f.warnings.clone(),
            },
            Some(cli.out.clone().unwrap_or_else(|| f.output_dir())),
            f.config.output.formats.clone(),
        ),
        None => {
            let Command::TauMax { lambda1, lipschitz } = &cli.command else {
                return Err(no_config(cli.command.name()));
            };
            let canonical = serde_json::to_string(&json!({ "lambda1": lambda1, "lipschitz": lipschitz })).unwrap();
            let hash = Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
            (
                Meta {
                    command: "tau-max",
                    version: VERSION,
                    config_hash: hash,
                    seed: cli.seed.unwrap_or(0),
                    rng: RNG_ALGORITHM,
                    warnings: Vec::new(),
                },
                cli.out.clone(),
                vec![Format::Csv, Format::Json, Format::Txt],
            )
        }
    };

    let mut sink = Sink { meta, artifacts: Vec::new() };
    let summary = pool.install(|| -> Result<String> {
        match (&cli.command, &frozen) {
            (Command::TauMax { lambda1, lipschitz }, f) => tau_max(f.as_ref(), *lambda1, *lipschitz, &mut sink),
            (_, None) => Err(no_config(cli.command.name())),
            (Command::Simulate, Some(f)) => simulate(f, &mut sink),
            (Command::Rate, Some(f)) => rate(f, &mut sink),
            (Command::Quasipotential, Some(f)) => quasipotential(f, &mut sink),
            (Command::McVerify, Some(f)) => mc_verify(f, &mut sink),
            (Command::TailCheck, Some(f)) => tail(f, &mut sink),
            (Command::Preserve, Some(f)) => preserve(f, &mut sink),
        }
    })?;

    let artifacts: Vec<Artifact> = sink.artifacts.into_iter().filter(|a| formats.contains(&a.format)).collect();
    let written = match out_dir {
        Some(dir) => write_atomically(&dir, &artifacts)?,
        None => Vec::new(),
    };
    Ok(Outcome { summary, artifacts, written })
}

/// Entry point of the binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            for p in &outcome.written {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn tau_max(f: Option<&FrozenConfig>, lambda1: Option<f64>, lipschitz: Option<f64>, sink: &mut Sink) -> Result<String> {
    let model = f.map(|f| f.config.model_spec()).transpose()?;
    let l1 = lambda1
        .or_else(|| model.as_ref().map(|m| m.operator.lambda_min()))
        .ok_or_else(|| Error::config("--lambda1", "required without a configuration file"))?;
    let lf = lipschitz
        .or_else(|| model.as_ref().map(|m| m.nonlinearity.lipschitz()))
        .ok_or_else(|| Error::config("--lipschitz", "required without a configuration file"))?;
    let tau0 = max_stable_stepsize(l1, lf)?;
    let x = l1 * tau0;
    let residual = if tau0.is_finite() { x.exp_m1() / x - (l1 + lf) / (2.0 * lf) } else { 0.0 };
    let mut csv = Csv::new(&sink.meta, &["lambda1", "lipschitz", "tau0", "residual"]);
    csv.row(&[num(l1), num(lf), num(tau0), num(residual)]);
    sink.csv("tau_max", csv);
    sink.json(
        "tau_max",
        json!({
            "lambda1": l1,
            "lipschitz": lf,
            "tau0": if tau0.is_finite() { json!(tau0) } else { json!("+inf") },
            "residual": residual,
        }),
    );
    let text = format!("lambda_1 = {l1}\nL_F      = {lf}\ntau_0    = {tau0}\nresidual = {residual:e}\n");
    sink.txt("tau_max", &text);
    Ok(text)
}

fn simulate(f: &FrozenConfig, sink: &mut Sink) -> Result<String> {
    let cfg = &f.config;
    let model = cfg.model_spec()?;
    let icfg = cfg.integrator_config();
    let y = cfg.initial()?;
    let horizon = cfg.integrator.horizon;
    let trajectories = cfg.study.simulate.clone().unwrap_or_default().trajectories;
    let paths = ordered_map(trajectories as usize, |k| simulate_path(&y, horizon, &model, &icfg, k as u64))
        .into_iter()
        .collect::<Result<Vec<SpectralPath>>>()?;

    let n = model.n();
    let mut columns = vec!["trajectory".to_string(), "t".to_string()];
    columns.extend((1..=n).map(|i| format!("mode_{i}")));
    let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut csv = Csv::new(&sink.meta, &cols);
    for (k, p) in paths.iter().enumerate() {
        for (j, z) in p.nodes().iter().enumerate() {
            let mut row = vec![k.to_string(), num(p.time(j))];
            row.extend(z.coeffs().iter().map(|c| num(*c)));
            csv.row(&row);
        }
    }

    let count = paths.len() as f64;
    let mean: Vec<f64> = (0..n).map(|i| paths.iter().map(|p| p.end().coeffs()[i]).sum::<f64>() / count).collect();
    let variance: Option<Vec<f64>> = (paths.len() > 1).then(|| {
        (0..n)
            .map(|i| paths.iter().map(|p| (p.end().coeffs()[i] - mean[i]).powi(2)).sum::<f64>() / (count - 1.0))
            .collect()
    });
    let lf = model.nonlinearity.lipschitz();
    let tau0 = max_stable_stepsize(model.operator.lambda_min(), lf).ok();
    let h = paths[0].step();

    let mut text = format!(
        "horizon {horizon}  tau {}  epsilon {}  trajectories {trajectories}  output step {h}\n\n{:>6} {:>24} {:>24}\n",
        icfg.tau, icfg.epsilon, "mode", "mean Y(T)", "variance Y(T)"
    );
    for i in 0..n {
        let v = variance.as_ref().map_or("-".to_string(), |v| format!("{:.12e}", v[i]));
        let _ = writeln!(text, "{:>6} {:>24.12e} {:>24}", i + 1, mean[i], v);
    }
    sink.csv("simulate", csv);
    sink.json(
        "simulate",
        json!({
            "horizon": horizon,
            "tau": icfg.tau,
            "epsilon": icfg.epsilon,
            "substeps": icfg.substeps,
            "stride": icfg.stride,
            "output_step": h,
            "trajectories": trajectories,
            "tau0": tau0.filter(|t| t.is_finite()),
            "final_mean": mean,
            "final_variance": variance,
        }),
    );
    sink.txt("simulate", &text);
    Ok(text)
}

fn rate(f: &FrozenConfig, sink: &mut Sink) -> Result<String> {
    let cfg = &f.config;
    let model = cfg.model_spec()?;
    let study = cfg.study.rate.clone().unwrap_or_default();
    let z = f.target_path(&model)?;
    let y = match &study.initial {
        Some(v) => cfg.field(v)?,
        None => z.start().clone(),
    };
    let mut reports = vec![("semi", None, rate_semi_with(&model, &z, &y, study.rule)?)];
    for &tau in &study.tau {
        reports.push(("full", Some(tau), rate_full_with(&model, &z, &y, tau, study.rule)?));
    }
    let mut csv = Csv::new(&sink.meta, &["functional", "tau", "rule", "value", "h", "boundary_mismatch"]);
    let mut text = format!("{:>6} {:>10} {:>24} {:>12}\n", "kind", "tau", "value", "h");
    for (kind, tau, r) in &reports {
        let rule = serde_json::to_value(r.rule).unwrap();
        csv.row(&[
            kind.to_string(),
            opt(*tau),
            rule.as_str().unwrap().to_string(),
            num(r.value),
            num(r.h),
            num(r.boundary_mismatch),
        ]);
        let _ = writeln!(
            text,
            "{:>6} {:>10} {:>24.15e} {:>12}",
            kind,
            tau.map_or("-".to_string(), num),
            r.value,
            r.h
        );
    }
    sink.csv("rate", csv);
    sink.json(
        "rate",
        json!({
            "intervals": z.intervals(),
            "horizon": z.horizon(),
            "reports": reports.iter().map(|(k, _, r)| json!({ "functional": k, "report": to_value(r) })).collect::<Vec<_>>(),
        }),
    );
    sink.txt("rate", &text);
    Ok(text)
}

fn quasipotential(f: &FrozenConfig, sink: &mut Sink) -> Result<String> {
    let cfg = &f.config;
    let model = cfg.model_spec()?;
    let study = cfg
        .study
        .quasipotential
        .clone()
        .ok_or_else(|| Error::config("study.quasipotential", "section is required for this command"))?;
    let u = cfg.field(&study.target)?;
    let grid = match (study.intervals, study.step) {
        (_, Some(h)) => GridPolicy::Step(h),
        (Some(k), None) => GridPolicy::IntervalsPerHorizon(k),
        (None, None) => GridPolicy::default(),
    };
    let opts = QuasipotentialOptions {
        action: ActionOptions {
            grid,
            rule: study.rule,
            lbfgs: LbfgsOptions { grad_tol: study.grad_tol, max_iter: study.max_iter, ..LbfgsOptions::default() },
        },
        multistart: study.multistart,
        seed: f.seed(),
        domain_cap: study.domain_cap,
        ..QuasipotentialOptions::default()
    };
    let res = match study.tau {
        Some(tau) => minimize_quasipotential_full(&model, &u, tau, &study.horizons, &opts)?,
        None => minimize_quasipotential(&model, &u, &study.horizons, &opts)?,
    };
    let closed = quasipotential_linear(&model, &u).ok();

    let mut csv = Csv::new(&sink.meta, &["T", "value", "h", "iterations", "grad_norm", "exit"]);
    let mut text = format!("{:>8} {:>24} {:>10} {:>12} {:>12}\n", "T", "value", "iter", "grad_norm", "exit");
    for hv in &res.per_horizon {
        let exit = serde_json::to_value(hv.exit).unwrap();
        let exit = exit.as_str().unwrap();
        csv.row(&[
            num(hv.horizon),
            num(hv.value),
            num(hv.h),
            hv.iterations.to_string(),
            num(hv.grad_norm),
            exit.to_string(),
        ]);
        let _ = writeln!(
            text,
            "{:>8} {:>24.15e} {:>10} {:>12.3e} {:>12}",
            hv.horizon, hv.value, hv.iterations, hv.grad_norm, exit
        );
    }
    let _ = writeln!(text, "\nV = {}  (T* = {})", res.value, res.t_star);
    if let Some(v) = closed {
        let _ = writeln!(text, "closed form V = {v}");
    }
    sink.csv("quasipotential", csv);
    sink.csv(
        "quasipotential_path",
        Csv { text: res.path.to_csv(&sink.meta.comment_lines()) },
    );
    let mut value = to_value(&res);
    value["closed_form"] = json!(closed);
    sink.json("quasipotential", value);
    sink.txt("quasipotential", &text);
    Ok(text)
}

fn mc_verify(f: &FrozenConfig, sink: &mut Sink) -> Result<String> {
    let cfg = &f.config;
    let model = cfg.model_spec()?;
    let study = cfg
        .study
        .mc_verify
        .clone()
        .ok_or_else(|| Error::config("study.mc_verify", "section is required for this command"))?;
    let z = f.target_path(&model)?;
    let action = rate_semi_with(&model, &z, z.start(), QuadratureRule::Midpoint)?.value;
    let sampling = TubeSampling { tau: study.tau.unwrap_or(cfg.integrator.tau), samples: study.samples, seed: f.seed() };
    let popts = ProjectedOptions { max_iter: study.infimum_max_iter, grad_tol: 1e-9, ..ProjectedOptions::default() };

    let mut fits = Vec::with_capacity(study.deltas.len());
    let mut infima = Vec::with_capacity(study.deltas.len());
    for &delta in &study.deltas {
        fits.push(ldp_slope(&model, &z, delta, &study.epsilons, &sampling)?);
        infima.push(if study.infimum {
            Some(tube_infimum(&model, &z, delta, QuadratureRule::Midpoint, &popts)?)
        } else {
            None
        });
    }

    let mut csv = Csv::new(
        &sink.meta,
        &[
            "delta", "epsilon", "p_hat", "std_error", "hits", "samples", "scaled_log", "scaled_log_se", "resolved",
            "tube_infimum",
        ],
    );
    let mut text = format!(
        "path action {action}\n\n{:>8} {:>8} {:>12} {:>8} {:>14} {:>14}\n",
        "delta", "eps", "p_hat", "hits", "-eps^2 log p", "tube inf"
    );
    for (fit, inf) in fits.iter().zip(&infima) {
        let iv = inf.as_ref().map(|i| i.value);
        for e in &fit.entries {
            csv.row(&[
                num(fit.delta),
                num(e.epsilon),
                num(e.p_hat),
                num(e.std_error),
                e.hits.to_string(),
                e.samples.to_string(),
                opt(e.scaled_log),
                opt(e.scaled_log_se),
                e.resolved.to_string(),
                opt(iv),
            ]);
            let _ = writeln!(
                text,
                "{:>8} {:>8} {:>12.5e} {:>8} {:>14} {:>14}",
                fit.delta,
                e.epsilon,
                e.p_hat,
                e.hits,
                e.scaled_log.map_or("-".to_string(), |v| format!("{v:.6}")),
                iv.map_or("-".to_string(), |v| format!("{v:.6}"))
            );
        }
    }
    // -ε² log p̂ should not increase with δ at a fixed ε
    let mut monotone_in_delta = true;
    let mut order: Vec<usize> = (0..fits.len()).collect();
    order.sort_by(|a, b| study.deltas[*a].total_cmp(&study.deltas[*b]));
    for w in order.windows(2) {
        for (a, b) in fits[w[0]].entries.iter().zip(&fits[w[1]].entries) {
            if let (Some(sa), Some(sb)) = (a.scaled_log, b.scaled_log) {
                monotone_in_delta &= sb <= sa;
            }
        }
    }
    let _ = writeln!(text, "\nnon-increasing in delta: {monotone_in_delta}");
    sink.csv("mc_verify", csv);
    sink.json(
        "mc_verify",
        json!({
            "path_action": action,
            "tau": sampling.tau,
            "samples": sampling.samples,
            "fits": to_value(&fits),
            "tube_infima": to_value(&infima),
            "non_increasing_in_delta": monotone_in_delta,
        }),
    );
    sink.txt("mc_verify", &text);
    Ok(text)
}

fn tail(f: &FrozenConfig, sink: &mut Sink) -> Result<String> {
    let cfg = &f.config;
    let model = cfg.model_spec()?;
    let study = cfg.study.tail_check.clone().unwrap_or_default();
    let eps = study.epsilon.unwrap_or(cfg.integrator.epsilon);
    if !(eps > 0.0) {
        return Err(Error::config("study.tail_check.epsilon", "the tail check needs a positive noise scale"));
    }
    let tau = cfg.integrator.tau;
    let mut sampling = InvariantSampling::with_defaults(&model, eps, tau, study.window, f.seed())?;
    if let Some(b) = study.burn_in {
        sampling.burn_in = b;
    }
    sampling.thin = study.thin;
    let samples = empirical_invariant_measure(&model, &sampling)?;

    let n = model.n();
    let lambdas = model.operator.eigenvalues();
    let q = model.operator.noise();
    let reference: Option<Vec<f64>> = matches!(model.nonlinearity, NonlinearitySpec::Zero)
        .then(|| (0..n).map(|i| eps * eps * q[i] / (2.0 * lambdas[i])).collect());
    let rms = eps * (0..n).map(|i| q[i] / (2.0 * lambdas[i])).sum::<f64>().sqrt();
    let radii = if study.radii.is_empty() { (1..=5).map(|k| k as f64 * rms).collect() } else { study.radii.clone() };
    let report = tail_check(&samples, &radii, eps, &study.alphas)?;

    let count = samples.len() as f64;
    let mut modes = Vec::with_capacity(n);
    for i in 0..n {
        let xs: Vec<f64> = samples.iter().map(|s| s.coeffs()[i]).collect();
        let mean = xs.iter().sum::<f64>() / count;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1.0);
        let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / count;
        let se = ((m4 - var * var).max(0.0) / count).sqrt();
        modes.push((mean, var, se));
    }
    let fernique = match &study.fernique {
        Some(fb) => {
            let kappa = fb.kappa_fraction * model.operator.min_lambda_over_q();
            Some(fernique_moment_mc(&model.operator, kappa, fb.t, fb.samples, fb.bootstrap, f.seed())?)
        }
        None => None,
    };

    let mut csv = Csv::new(&sink.meta, &["K", "mu_hat", "hits", "std_error", "below_resolution", "scaled_log"]);
    let mut text = format!(
        "epsilon {eps}  samples {}  burn-in {}  thin {}\n\n{:>14} {:>14} {:>8} {:>12}\n",
        report.samples, sampling.burn_in, sampling.thin, "K", "mu_hat", "hits", "-eps^2 log"
    );
    for e in &report.entries {
        csv.row(&[
            num(e.k),
            num(e.mu_hat),
            e.hits.to_string(),
            num(e.std_error),
            e.below_resolution.to_string(),
            opt(e.scaled_log),
        ]);
        let _ = writeln!(
            text,
            "{:>14.6e} {:>14.6e} {:>8} {:>12}",
            e.k,
            e.mu_hat,
            e.hits,
            e.scaled_log.map_or("-".to_string(), |v| format!("{v:.6}"))
        );
    }
    let mut mcsv = Csv::new(&sink.meta, &["mode", "mean", "variance", "variance_se", "reference_variance"]);
    let _ = writeln!(text, "\n{:>6} {:>14} {:>14} {:>14} {:>14}", "mode", "mean", "variance", "se", "reference");
    for (i, (mean, var, se)) in modes.iter().enumerate() {
        let r = reference.as_ref().map(|r| r[i]);
        mcsv.row(&[(i + 1).to_string(), num(*mean), num(*var), num(*se), opt(r)]);
        let _ = writeln!(
            text,
            "{:>6} {:>14.6e} {:>14.6e} {:>14.3e} {:>14}",
            i + 1,
            mean,
            var,
            se,
            r.map_or("-".to_string(), |v| format!("{v:.6e}"))
        );
    }
    if let Some(g) = report.growth_exponent {
        let _ = writeln!(text, "\ntail growth exponent {g:.4}");
    }
    if let Some(fe) = &fernique {
        let _ = writeln!(
            text,
            "Fernique kappa {}: MC {} +- {} vs exact {}",
            fe.kappa, fe.mean, fe.std_error, fe.exact
        );
    }
    sink.csv("tail_check", csv);
    sink.csv("tail_check_modes", mcsv);
    sink.json(
        "tail_check",
        json!({
            "sampling": to_value(&sampling),
            "tails": to_value(&report),
            "modes": modes.iter().enumerate().map(|(i, (m, v, s))| json!({
                "mode": i + 1, "mean": m, "variance": v, "variance_se": s,
                "reference_variance": reference.as_ref().map(|r| r[i]),
            })).collect::<Vec<_>>(),
            "fernique": fernique.as_ref().map(to_value),
        }),
    );
    sink.txt("tail_check", &text);
    Ok(text)
}

fn ladder_rows(csv: &mut Csv, section: &str, r: &LadderReport) {
    for (k, v) in r.values.iter().enumerate() {
        csv.row(&[
            section.to_string(),
            r.variable.clone(),
            num(*v),
            opt(r.path_errors.as_ref().map(|e| e[k])),
            num(r.rate_errors[k]),
            opt(r.cross_check.as_ref().map(|e| e[k])),
        ]);
    }
}

fn preserve(f: &FrozenConfig, sink: &mut Sink) -> Result<String> {
    let cfg = &f.config;
    let model = cfg.model_spec()?;
    let study = cfg
        .study
        .preserve
        .clone()
        .ok_or_else(|| Error::config("study.preserve", "section is required for this command"))?;
    let columns = ["section", "variable", "value", "path_error", "rate_error", "cross_check"];
    let mut csv = Csv::new(&sink.meta, &columns);
    let (value, text) = match study.kind {
        PreserveKind::Spatial => {
            let x = f.preserve_initial(study.initial)?;
            let horizon = cfg.integrator.horizon;
            let phi = algebraic_control(
                model.n(),
                study.control_modes.min(model.n()),
                study.control_power,
                study.control_amplitude,
                horizon / study.intervals as f64,
                study.intervals,
            )?;
            let r = spatial_preservation_study(&model, &x, &phi, &study.n_ladder, study.substeps, study.rule)?;
            ladder_rows(&mut csv, "spatial", &r);
            (to_value(&r), r.table())
        }
        PreserveKind::Temporal => {
            let z = f.target_path(&model)?;
            let r = temporal_gap_study(&model, &z, z.start(), &study.tau_ladder)?;
            ladder_rows(&mut csv, "temporal", &r);
            (to_value(&r), r.table())
        }
        PreserveKind::Quasipotential => {
            let u = cfg.field(&study.target)?;
            let opts = QuasipotentialOptions { seed: f.seed(), ..QuasipotentialOptions::default() };
            let r = quasipotential_preservation_study(
                &model,
                &u,
                &study.n_ladder,
                &study.tau_ladder,
                &study.horizons,
                study.temporal_n,
                study.minimizer_max_n,
                &opts,
            )?;
            ladder_rows(&mut csv, "spatial", &r.spatial);
            ladder_rows(&mut csv, "temporal", &r.temporal);
            (to_value(&r), format!("{}\n{}", r.spatial.table(), r.temporal.table()))
        }
    };
    sink.csv("preserve", csv);
    sink.json("preserve", value);
    sink.txt("preserve", &text);
    Ok(text)
}
