//! Run configuration: a TOML file with `[model]`, `[integrator]`, `[path]`,
//! `[study.*]`, `[output]` and `[runtime]` sections.
//!
//! A configuration goes through three stages. Parsing rejects unknown keys
//! and type errors, validation checks every value and reports the offending
//! key path, and freezing applies command-line overrides and computes the
//! canonical hash that every output embeds. See `docs/config.md` for the
//! full schema.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::experiments::parabola_coefficients;
use crate::integrator::IntegratorConfig;
use crate::model::ModelSpec;
use crate::nonlinearity::{NonlinearitySpec, ScalarFunction};
use crate::path::{Control, SpectralPath};
use crate::quasipotential::DEFAULT_LADDER;
use crate::rate::QuadratureRule;
use crate::skeleton::solve_skeleton;
use crate::spectral::{OperatorSpec, SpectralField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelBlock,
    #[serde(default)]
    pub integrator: IntegratorBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBlock>,
    #[serde(default)]
    pub study: StudyBlock,
    #[serde(default)]
    pub output: OutputBlock,
    #[serde(default)]
    pub runtime: RuntimeBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub n: usize,
    /// `q_i = λ_i^{-decay}`; exclusive with `noise`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay: Option<f64>,
    /// Explicit `q_1, ..., q_n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<Vec<f64>>,
    #[serde(default)]
    pub nonlinearity: NonlinearityBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NonlinearityKind {
    #[default]
    Zero,
    Linear,
    Sin,
    Tanh,
    Bump,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct NonlinearityBlock {
    #[serde(default)]
    pub kind: NonlinearityKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    /// Diagonal coefficients `b_i` for `kind = "linear"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Vec<f64>>,
    /// Collocation points of the pseudospectral evaluation (default `4n`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collocation: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorBlock {
    pub tau: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub horizon: f64,
    pub stride: usize,
    pub substeps: usize,
    pub enforce_stability: bool,
    /// Initial coefficients; missing trailing modes are zero.
    pub initial: Vec<f64>,
}

impl Default for IntegratorBlock {
    fn default() -> Self {
        IntegratorBlock {
            tau: 0.01,
            epsilon: 0.0,
            seed: 0,
            horizon: 1.0,
            stride: 1,
            substeps: 1,
            enforce_stability: true,
            initial: Vec::new(),
        }
    }
}

/// A target path: either read from a CSV file or built as the skeleton
/// path driven by a constant control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PathBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    /// Constant control coefficients (zero-padded); omitted means the
    /// uncontrolled flow.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<Vec<f64>>,
    /// Grid step; defaults to `integrator.tau`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    /// Defaults to `integrator.horizon`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    /// Defaults to `integrator.initial`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub substeps: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct StudyBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateStudy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<RateStudy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quasipotential: Option<QuasipotentialStudy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_verify: Option<McVerifyStudy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_check: Option<TailCheckStudy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preserve: Option<PreserveStudy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateStudy {
    pub trajectories: u64,
}

impl Default for SimulateStudy {
    fn default() -> Self {
        SimulateStudy { trajectories: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RateStudy {
    pub rule: QuadratureRule,
    /// Step sizes at which the fully discrete functional is also evaluated.
    pub tau: Vec<f64>,
    /// Initial state `y` of the functional; defaults to the path's first node.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuasipotentialStudy {
    pub target: Vec<f64>,
    pub horizons: Vec<f64>,
    /// Path intervals per horizon; exclusive with `step`.
    pub intervals: Option<usize>,
    pub step: Option<f64>,
    pub rule: QuadratureRule,
    /// Minimize the fully discrete action with this step.
    pub tau: Option<f64>,
    pub multistart: usize,
    pub domain_cap: f64,
    pub grad_tol: f64,
    pub max_iter: usize,
}

impl Default for QuasipotentialStudy {
    fn default() -> Self {
        QuasipotentialStudy {
            target: Vec::new(),
            horizons: DEFAULT_LADDER.to_vec(),
            intervals: None,
            step: None,
            rule: QuadratureRule::Midpoint,
            tau: None,
            multistart: 3,
            domain_cap: 1e8,
            grad_tol: 1e-7,
            max_iter: 50_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McVerifyStudy {
    pub deltas: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub samples: u64,
    /// Integrator step; defaults to `integrator.tau`.
    pub tau: Option<f64>,
    /// Also solve the tube-infimum problem for each radius.
    pub infimum: bool,
    pub infimum_max_iter: usize,
}

impl Default for McVerifyStudy {
    fn default() -> Self {
        McVerifyStudy {
            deltas: Vec::new(),
            epsilons: Vec::new(),
            samples: 10_000,
            tau: None,
            infimum: true,
            infimum_max_iter: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TailCheckStudy {
    /// Defaults to `integrator.epsilon`.
    pub epsilon: Option<f64>,
    pub window: f64,
    /// Defaults to `10/c` with `c = λ_1 - L_F`.
    pub burn_in: Option<f64>,
    pub thin: usize,
    /// Radii `K`; empty means 1..=5 stationary standard deviations.
    pub radii: Vec<f64>,
    pub alphas: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fernique: Option<FerniqueBlock>,
}

impl Default for TailCheckStudy {
    fn default() -> Self {
        TailCheckStudy {
            epsilon: None,
            window: 1000.0,
            burn_in: None,
            thin: 10,
            radii: Vec::new(),
            alphas: Vec::new(),
            fernique: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FerniqueBlock {
    /// `κ` as a fraction of `min λ_i/q_i`.
    pub kappa_fraction: f64,
    pub t: f64,
    pub samples: u64,
    pub bootstrap: usize,
}

impl Default for FerniqueBlock {
    fn default() -> Self {
        FerniqueBlock {
            kappa_fraction: 0.5,
            t: 2.0,
            samples: 100_000,
            bootstrap: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PreserveKind {
    #[default]
    Spatial,
    Temporal,
    Quasipotential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitialShape {
    /// `ξ(1 - ξ)`.
    #[default]
    Parabola,
    Zero,
    /// `integrator.initial`.
    Config,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreserveStudy {
    pub kind: PreserveKind,
    pub n_ladder: Vec<usize>,
    pub tau_ladder: Vec<f64>,
    /// Spatial: initial state of the reference path.
    pub initial: InitialShape,
    /// Spatial: control `amplitude · i^{-power}` on the first `control_modes` modes.
    pub control_power: f64,
    pub control_amplitude: f64,
    pub control_modes: usize,
    /// Spatial: control intervals over `integrator.horizon`.
    pub intervals: usize,
    pub substeps: usize,
    pub rule: QuadratureRule,
    /// Quasipotential: target state and horizon ladder.
    pub target: Vec<f64>,
    pub horizons: Vec<f64>,
    pub temporal_n: usize,
    pub minimizer_max_n: usize,
}

impl Default for PreserveStudy {
    fn default() -> Self {
        PreserveStudy {
            kind: PreserveKind::Spatial,
            n_ladder: Vec::new(),
            tau_ladder: Vec::new(),
            initial: InitialShape::Parabola,
            control_power: 3.0,
            control_amplitude: 1.0,
            control_modes: 32,
            intervals: 100,
            substeps: 1,
            rule: QuadratureRule::ExponentialFitted,
            target: Vec::new(),
            horizons: vec![0.5, 1.0, 2.0],
            temporal_n: 1,
            minimizer_max_n: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Txt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    /// Relative paths are resolved against the configuration file's directory.
    pub dir: String,
    pub formats: Vec<Format>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock {
            dir: "out".into(),
            formats: vec![Format::Csv, Format::Json, Format::Txt],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RuntimeBlock {
    /// Worker threads; 0 lets the pool decide.
    pub threads: usize,
}

fn bad(path: &str, message: impl Into<String>) -> Error {
    Error::config(path, message)
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(bad(path, format!("must be positive and finite, got {v}")))
    }
}

fn all_finite(path: &str, v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(k) => Err(bad(&format!("{path}[{k}]"), "must be finite")),
        None => Ok(()),
    }
}

fn positive_list(path: &str, v: &[f64], required: bool) -> Result<()> {
    if required && v.is_empty() {
        return Err(bad(path, "must not be empty"));
    }
    for (k, x) in v.iter().enumerate() {
        positive(&format!("{path}[{k}]"), *x)?;
    }
    Ok(())
}

fn at_most_n(path: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() > n {
        return Err(bad(path, format!("has {} entries but the model has {n} modes", v.len())));
    }
    all_finite(path, v)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            what: "configuration".into(),
            message: e.to_string().trim_end().to_string(),
        })
    }

    /// Checks every present block; returns advisory warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        let m = &self.model;
        if m.n == 0 {
            return Err(bad("model.n", "must be at least 1"));
        }
        match (&m.decay, &m.noise) {
            (Some(_), Some(_)) => return Err(bad("model", "set either `decay` or `noise`, not both")),
            (None, None) => return Err(bad("model", "one of `decay` or `noise` is required")),
            (Some(d), None) => {
                if !d.is_finite() {
                    return Err(bad("model.decay", "must be finite"));
                }
                if !(*d > 1.5 && *d <= 2.0) {
                    warnings.push(format!("model.decay = {d} lies outside the range (3/2, 2]"));
                }
            }
            (None, Some(q)) => {
                if q.len() != m.n {
                    return Err(bad("model.noise", format!("has {} entries, expected n = {}", q.len(), m.n)));
                }
                positive_list("model.noise", q, true)?;
            }
        }
        let nl = &m.nonlinearity;
        match nl.kind {
            NonlinearityKind::Zero => {}
            NonlinearityKind::Linear => {
                let b = nl
                    .coefficients
                    .as_ref()
                    .ok_or_else(|| bad("model.nonlinearity.coefficients", "required for kind = \"linear\""))?;
                if b.len() != m.n {
                    return Err(bad(
                        "model.nonlinearity.coefficients",
                        format!("has {} entries, expected n = {}", b.len(), m.n),
                    ));
                }
                all_finite("model.nonlinearity.coefficients", b)?;
            }
            NonlinearityKind::Sin | NonlinearityKind::Tanh | NonlinearityKind::Bump => {
                let a = nl
                    .amplitude
                    .ok_or_else(|| bad("model.nonlinearity.amplitude", "required for this kind"))?;
                if !a.is_finite() {
                    return Err(bad("model.nonlinearity.amplitude", "must be finite"));
                }
                if let Some(c) = nl.collocation {
                    if c < m.n {
                        return Err(bad(
                            "model.nonlinearity.collocation",
                            format!("{c} points cannot resolve {} modes", m.n),
                        ));
                    }
                }
            }
        }
        if nl.kind != NonlinearityKind::Linear && nl.coefficients.is_some() {
            return Err(bad("model.nonlinearity.coefficients", "only used with kind = \"linear\""));
        }

        let ig = &self.integrator;
        positive("integrator.tau", ig.tau)?;
        positive("integrator.horizon", ig.horizon)?;
        if !(ig.epsilon.is_finite() && ig.epsilon >= 0.0) {
            return Err(bad("integrator.epsilon", format!("must be >= 0, got {}", ig.epsilon)));
        }
        if ig.stride == 0 {
            return Err(bad("integrator.stride", "must be at least 1"));
        }
        if ig.substeps == 0 {
            return Err(bad("integrator.substeps", "must be at least 1"));
        }
        at_most_n("integrator.initial", &ig.initial, m.n)?;

        if let Some(p) = &self.path {
            if p.file.is_some() && (p.control.is_some() || p.step.is_some() || p.horizon.is_some() || p.start.is_some()) {
                return Err(bad("path", "`file` excludes `control`, `step`, `horizon` and `start`"));
            }
            if let Some(c) = &p.control {
                at_most_n("path.control", c, m.n)?;
            }
            if let Some(s) = &p.start {
                at_most_n("path.start", s, m.n)?;
            }
            if let Some(h) = p.step {
                positive("path.step", h)?;
            }
            if let Some(t) = p.horizon {
                positive("path.horizon", t)?;
            }
            if p.substeps == 0 {
                return Err(bad("path.substeps", "must be at least 1"));
            }
        }

        let s = &self.study;
        if let Some(sim) = &s.simulate {
            if sim.trajectories == 0 {
                return Err(bad("study.simulate.trajectories", "must be at least 1"));
            }
        }
        if let Some(r) = &s.rate {
            positive_list("study.rate.tau", &r.tau, false)?;
            if let Some(y) = &r.initial {
                at_most_n("study.rate.initial", y, m.n)?;
            }
        }
        if let Some(q) = &s.quasipotential {
            if q.target.len() != m.n {
                return Err(bad(
                    "study.quasipotential.target",
                    format!("has {} entries, expected n = {}", q.target.len(), m.n),
                ));
            }
            all_finite("study.quasipotential.target", &q.target)?;
            positive_list("study.quasipotential.horizons", &q.horizons, true)?;
            if q.intervals.is_some() && q.step.is_some() {
                return Err(bad("study.quasipotential", "set either `intervals` or `step`, not both"));
            }
            if let Some(k) = q.intervals {
                if k < 2 {
                    return Err(bad("study.quasipotential.intervals", "must be at least 2"));
                }
            }
            if let Some(h) = q.step {
                positive("study.quasipotential.step", h)?;
            }
            if let Some(t) = q.tau {
                positive("study.quasipotential.tau", t)?;
            }
            positive("study.quasipotential.domain_cap", q.domain_cap)?;
            positive("study.quasipotential.grad_tol", q.grad_tol)?;
            if q.max_iter == 0 {
                return Err(bad("study.quasipotential.max_iter", "must be at least 1"));
            }
        }
        if let Some(mc) = &s.mc_verify {
            positive_list("study.mc_verify.deltas", &mc.deltas, true)?;
            positive_list("study.mc_verify.epsilons", &mc.epsilons, true)?;
            if mc.epsilons.windows(2).any(|w| !(w[1] < w[0])) {
                return Err(bad("study.mc_verify.epsilons", "must be strictly decreasing"));
            }
            if mc.samples == 0 {
                return Err(bad("study.mc_verify.samples", "must be at least 1"));
            }
            if let Some(t) = mc.tau {
                positive("study.mc_verify.tau", t)?;
            }
        }
        if let Some(tc) = &s.tail_check {
            if let Some(e) = tc.epsilon {
                positive("study.tail_check.epsilon", e)?;
            }
            positive("study.tail_check.window", tc.window)?;
            if let Some(b) = tc.burn_in {
                positive("study.tail_check.burn_in", b)?;
            }
            if tc.thin == 0 {
                return Err(bad("study.tail_check.thin", "must be at least 1"));
            }
            positive_list("study.tail_check.radii", &tc.radii, false)?;
            positive_list("study.tail_check.alphas", &tc.alphas, false)?;
            if let Some(f) = &tc.fernique {
                if !(f.kappa_fraction >= 0.0 && f.kappa_fraction < 1.0) {
                    return Err(bad("study.tail_check.fernique.kappa_fraction", "must lie in [0, 1)"));
                }
                if !(f.t.is_finite() && f.t >= 0.0) {
                    return Err(bad("study.tail_check.fernique.t", "must be >= 0"));
                }
                if f.samples < 2 {
                    return Err(bad("study.tail_check.fernique.samples", "must be at least 2"));
                }
            }
        }
        if let Some(p) = &s.preserve {
            match p.kind {
                PreserveKind::Spatial => {
                    if p.n_ladder.is_empty() {
                        return Err(bad("study.preserve.n_ladder", "must not be empty"));
                    }
                    if p.intervals == 0 {
                        return Err(bad("study.preserve.intervals", "must be at least 1"));
                    }
                    if p.control_modes == 0 {
                        return Err(bad("study.preserve.control_modes", "must be at least 1"));
                    }
                }
                PreserveKind::Temporal => {
                    positive_list("study.preserve.tau_ladder", &p.tau_ladder, true)?;
                }
                PreserveKind::Quasipotential => {
                    if p.n_ladder.is_empty() {
                        return Err(bad("study.preserve.n_ladder", "must not be empty"));
                    }
                    positive_list("study.preserve.tau_ladder", &p.tau_ladder, true)?;
                    positive_list("study.preserve.horizons", &p.horizons, true)?;
                    if p.target.len() != m.n {
                        return Err(bad(
                            "study.preserve.target",
                            format!("has {} entries, expected n = {}", p.target.len(), m.n),
                        ));
                    }
                    all_finite("study.preserve.target", &p.target)?;
                }
            }
            if p.n_ladder.iter().any(|k| *k == 0 || *k > m.n) {
                return Err(bad("study.preserve.n_ladder", format!("entries must lie in 1..={}", m.n)));
            }
            if p.substeps == 0 {
                return Err(bad("study.preserve.substeps", "must be at least 1"));
            }
        }
        if self.output.dir.is_empty() {
            return Err(bad("output.dir", "must not be empty"));
        }
        if self.output.formats.is_empty() {
            return Err(bad("output.formats", "must not be empty"));
        }
        // surface construction errors (e.g. non-dissipative linear drift) early
        self.model_spec().map_err(|e| bad("model", e.to_string()))?;
        Ok(warnings)
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        let m = &self.model;
        let op = match (&m.decay, &m.noise) {
            (Some(d), _) => OperatorSpec::with_decay(m.n, *d)?,
            (None, Some(q)) => OperatorSpec::with_noise(q.clone())?,
            (None, None) => return Err(bad("model", "one of `decay` or `noise` is required")),
        };
        let nl = &m.nonlinearity;
        let points = nl.collocation.unwrap_or(4 * m.n);
        let amp = nl.amplitude.unwrap_or(1.0);
        let f = match nl.kind {
            NonlinearityKind::Zero => NonlinearitySpec::Zero,
            NonlinearityKind::Linear => NonlinearitySpec::LinearDiagonal(nl.coefficients.clone().unwrap_or_default()),
            NonlinearityKind::Sin => {
                NonlinearitySpec::nemytskij_with_grid(ScalarFunction::Sin { amplitude: amp }, points)?
            }
            NonlinearityKind::Tanh => {
                NonlinearitySpec::nemytskij_with_grid(ScalarFunction::Tanh { amplitude: amp }, points)?
            }
            NonlinearityKind::Bump => {
                NonlinearitySpec::nemytskij_with_grid(ScalarFunction::Bump { amplitude: amp }, points)?
            }
        };
        ModelSpec::new(op, f)
    }

    /// Zero-padded coefficient vector of length `model.n`.
    pub fn field(&self, coeffs: &[f64]) -> Result<SpectralField> {
        let mut v = coeffs.to_vec();
        v.resize(self.model.n, 0.0);
        SpectralField::new(v)
    }

    pub fn initial(&self) -> Result<SpectralField> {
        self.field(&self.integrator.initial)
    }

    pub fn integrator_config(&self) -> IntegratorConfig {
        let ig = &self.integrator;
        IntegratorConfig {
            tau: ig.tau,
            epsilon: ig.epsilon,
            seed: ig.seed,
            stride: ig.stride,
            substeps: ig.substeps,
            enforce_stability: ig.enforce_stability,
        }
    }
}

/// A validated configuration with overrides applied and its hash computed.
#[derive(Debug, Clone)]
pub struct FrozenConfig {
    pub config: RunConfig,
    /// Directory against which relative paths are resolved.
    pub base_dir: PathBuf,
    pub hash: String,
    pub warnings: Vec<String>,
    path_file: Option<(PathBuf, String)>,
}

#[derive(Serialize)]
struct Hashed<'a> {
    model: &'a ModelBlock,
    integrator: &'a IntegratorBlock,
    path: &'a Option<PathBlock>,
    study: &'a StudyBlock,
}

impl FrozenConfig {
    /// Parses, validates and freezes the file at `path`.
    pub fn load(path: &Path, seed: Option<u64>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = RunConfig::parse(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse {
                what: format!("configuration {}", path.display()),
                message,
            },
            other => other,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::freeze(cfg, base, seed)
    }

    pub fn freeze(mut config: RunConfig, base_dir: PathBuf, seed: Option<u64>) -> Result<Self> {
        if let Some(s) = seed {
            config.integrator.seed = s;
        }
        let warnings = config.validate()?;
        let path_file = match config.path.as_ref().and_then(|p| p.file.as_ref()) {
            Some(f) => {
                let full = base_dir.join(f);
                let text = std::fs::read_to_string(&full).map_err(|e| Error::io(&full, e))?;
                Some((full, text))
            }
            None => None,
        };
        let canonical = serde_json::to_string(&Hashed {
            model: &config.model,
            integrator: &config.integrator,
            path: &config.path,
            study: &config.study,
        })
        .expect("configuration serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        if let Some((_, text)) = &path_file {
            hasher.update([0u8]);
            hasher.update(text.as_bytes());
        }
        let hash = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
        Ok(FrozenConfig {
            config,
            base_dir,
            hash,
            warnings,
            path_file,
        })
    }

    pub fn seed(&self) -> u64 {
        self.config.integrator.seed
    }

    pub fn output_dir(&self) -> PathBuf {
        self.base_dir.join(&self.config.output.dir)
    }

    /// The target path described by `[path]`, or the uncontrolled flow from
    /// `integrator.initial` when the block is absent.
    pub fn target_path(&self, model: &ModelSpec) -> Result<SpectralPath> {
        let cfg = &self.config;
        let block = cfg.path.clone().unwrap_or_default();
        if let Some((full, text)) = &self.path_file {
            let z = SpectralPath::from_csv(text).map_err(|e| bad("path.file", format!("{}: {e}", full.display())))?;
            if z.dim() != model.n() {
                return Err(bad(
                    "path.file",
                    format!("path has {} modes, the model has {}", z.dim(), model.n()),
                ));
            }
            return Ok(z);
        }
        let step = block.step.unwrap_or(cfg.integrator.tau);
        let horizon = block.horizon.unwrap_or(cfg.integrator.horizon);
        let intervals = crate::integrator::step_count(horizon, step, "path horizon vs path step")
            .map_err(|e| bad("path.step", e.to_string()))?;
        let start = match &block.start {
            Some(s) => cfg.field(s)?,
            None => cfg.initial()?,
        };
        let value = cfg.field(block.control.as_deref().unwrap_or(&[]))?;
        let control = Control::constant(step, intervals, value)?;
        solve_skeleton(model, &start, &control, block.substeps)
    }

    /// Initial state for the spatial preservation study.
    pub fn preserve_initial(&self, shape: InitialShape) -> Result<SpectralField> {
        match shape {
            InitialShape::Parabola => parabola_coefficients(self.config.model.n),
            InitialShape::Zero => Ok(SpectralField::zeros(self.config.model.n)),
            InitialShape::Config => self.config.initial(),
        }
    }
}
