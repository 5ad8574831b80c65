//! Quasipotentials `V^n(u) = inf { I^{n,0}_{0,T}(z) : T > 0, z(0) = 0, z(T) = u }`
//! and their fully discrete counterparts `V^{n,τ}`, computed by minimizing the
//! discrete action over interior path nodes on a ladder of horizons.
//!
//! With `F ≡ 0` (or a linear-diagonal `F` folded into the decay rates) every
//! mode is a scalar Ornstein-Uhlenbeck control problem, solved in closed form by
//! [`quasipotential_linear_finite_t`] and [`quasipotential_linear`].

use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrator::step_count;
use crate::model::ModelSpec;
use crate::optimize::{lbfgs, ExitReason, LbfgsOptions};
use crate::path::SpectralPath;
use crate::rate::QuadratureRule;
use crate::spectral::{phi1, SpectralField};
use crate::stream::GaussianStream;

fn linear_rates_for(model: &ModelSpec, u: &SpectralField) -> Result<Vec<f64>> {
    u.check_dim(model.n(), "target state")?;
    let rates = model.linear_rates().ok_or_else(|| {
        Error::NotApplicable("closed-form quasipotential needs a zero or linear-diagonal drift".into())
    })?;
    if let Some(r) = rates.iter().find(|r| **r <= 0.0) {
        return Err(Error::domain(format!("decay rate {r} is not positive")));
    }
    Ok(rates)
}

/// `V(u) = Σ_i λ_i u_i² / q_i` for the Ornstein-Uhlenbeck case (with `λ_i`
/// replaced by `λ_i - b_i` when `F = diag(b)`).
pub fn quasipotential_linear(model: &ModelSpec, u: &SpectralField) -> Result<f64> {
    let rates = linear_rates_for(model, u)?;
    let q = model.operator.noise();
    Ok((0..model.n()).map(|i| rates[i] * u.coeffs()[i].powi(2) / q[i]).sum())
}

/// Optimal cost of steering `0 → u` in time `T`:
/// `Σ_i λ_i u_i² / (q_i (1 - e^{-2λ_i T}))`.
pub fn quasipotential_linear_finite_t(model: &ModelSpec, u: &SpectralField, horizon: f64) -> Result<f64> {
    if !(horizon > 0.0) {
        return Err(Error::domain(format!("horizon must be positive, got {horizon}")));
    }
    let rates = linear_rates_for(model, u)?;
    let q = model.operator.noise();
    Ok((0..model.n())
        .map(|i| rates[i] * u.coeffs()[i].powi(2) / (q[i] * -(-2.0 * rates[i] * horizon).exp_m1()))
        .sum())
}

/// The discrete action `½ h Σ_k |Q^{-1/2} r_k|²` as a function of the free
/// path nodes, with its exact gradient.
///
/// Node 0 is fixed to `start`. Node `K` is fixed to `end` when given and free
/// otherwise. Free nodes are stored consecutively, `n` coefficients each.
#[derive(Debug, Clone)]
pub struct ActionObjective<'m> {
    model: &'m ModelSpec,
    start: SpectralField,
    end: Option<SpectralField>,
    step: f64,
    intervals: usize,
    rule: QuadratureRule,
    frozen: Option<usize>,
    rates: Vec<f64>,
    explicit: bool,
}

impl<'m> ActionObjective<'m> {
    /// `tau = Some(τ)` selects the frozen-argument action of the fully
    /// discrete scheme; `τ` must be a multiple of `step`.
    pub fn new(
        model: &'m ModelSpec,
        start: SpectralField,
        end: Option<SpectralField>,
        step: f64,
        intervals: usize,
        rule: QuadratureRule,
        tau: Option<f64>,
    ) -> Result<Self> {
        let n = model.n();
        start.check_dim(n, "start state")?;
        if let Some(e) = &end {
            e.check_dim(n, "end state")?;
        }
        if !(step > 0.0 && step.is_finite()) || intervals < 1 {
            return Err(Error::domain("action grid needs a positive step and at least one interval"));
        }
        let frozen = match tau {
            Some(tau) => {
                let ratio = step_count(tau, step, "frozen step vs path grid")?;
                step_count(step * intervals as f64, tau, "horizon vs frozen step")?;
                Some(ratio)
            }
            None => None,
        };
        let (rates, explicit) = match (rule, frozen) {
            (QuadratureRule::ExponentialFitted, None) => model.exponential_split(),
            _ => (model.operator.eigenvalues().to_vec(), !model.nonlinearity.is_zero()),
        };
        Ok(ActionObjective { model, start, end, step, intervals, rule, frozen, rates, explicit })
    }

    pub fn dim(&self) -> usize {
        self.free_nodes() * self.model.n()
    }

    fn free_nodes(&self) -> usize {
        match self.end {
            Some(_) => self.intervals - 1,
            None => self.intervals,
        }
    }

    fn node<'a>(&'a self, x: &'a [f64], k: usize) -> &'a [f64] {
        let n = self.model.n();
        if k == 0 {
            self.start.coeffs()
        } else if k == self.intervals && self.end.is_some() {
            self.end.as_ref().unwrap().coeffs()
        } else {
            &x[(k - 1) * n..k * n]
        }
    }

    fn add_grad(&self, grad: &mut [f64], k: usize, g: &[f64]) {
        if k == 0 || (k == self.intervals && self.end.is_some()) {
            return;
        }
        let n = self.model.n();
        for (a, b) in grad[(k - 1) * n..k * n].iter_mut().zip(g) {
            *a += b;
        }
    }

    /// Full path for a given vector of free nodes.
    pub fn path(&self, x: &[f64]) -> Result<SpectralPath> {
        let nodes = (0..=self.intervals)
            .map(|k| SpectralField::new(self.node(x, k).to_vec()))
            .collect::<Result<Vec<_>>>()?;
        SpectralPath::new(self.step, nodes)
    }

    /// Free nodes of a path on this objective's grid.
    pub fn free_from_path(&self, z: &SpectralPath) -> Result<Vec<f64>> {
        if z.intervals() != self.intervals || z.dim() != self.model.n() {
            return Err(Error::Grid("path does not match the objective's grid".into()));
        }
        Ok(z.nodes()[1..=self.free_nodes()]
            .iter()
            .flat_map(|f| f.coeffs().iter().copied())
            .collect())
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        let mut g = vec![0.0; x.len()];
        self.value_and_gradient(x, &mut g)
    }

    pub fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        let n = self.model.n();
        if x.len() != self.dim() || grad.len() != self.dim() {
            return Err(Error::domain("free-node vector has the wrong length"));
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        let h = self.step;
        let q = self.model.operator.noise();
        let f_spec = &self.model.nonlinearity;
        let field = |s: &[f64]| SpectralField::from_vec_unchecked(s.to_vec());

        let frozen_vals = match self.frozen {
            Some(r) => Some(
                (0..self.intervals)
                    .step_by(r)
                    .map(|k| f_spec.apply(&field(self.node(x, k))))
                    .collect::<Result<Vec<_>>>()?,
            ),
            None => None,
        };
        let mut cell_w = frozen_vals.as_ref().map(|v| vec![vec![0.0; n]; v.len()]);

        let mut value = 0.0;
        let mut r = vec![0.0; n];
        let mut w = vec![0.0; n];
        let mut ga = vec![0.0; n];
        let mut gb = vec![0.0; n];
        for k in 0..self.intervals {
            let (a, b) = (self.node(x, k), self.node(x, k + 1));
            let cell = self.frozen.map(|ratio| k / ratio);
            match self.rule {
                QuadratureRule::Midpoint => {
                    let mid = field(&a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect::<Vec<_>>());
                    let f = match (cell, &frozen_vals) {
                        (Some(c), Some(v)) => Some(v[c].clone()),
                        _ if self.explicit => Some(f_spec.apply(&mid)?),
                        _ => None,
                    };
                    for i in 0..n {
                        r[i] = (b[i] - a[i]) / h + self.rates[i] * mid.coeffs()[i];
                        if let Some(f) = &f {
                            r[i] -= f.coeffs()[i];
                        }
                        w[i] = h * r[i] / q[i];
                        value += 0.5 * h * r[i] * r[i] / q[i];
                    }
                    let jt = if cell.is_none() && self.explicit {
                        Some(f_spec.derivative(&mid, &field(&w))?)
                    } else {
                        None
                    };
                    for i in 0..n {
                        let common = 0.5 * self.rates[i] * w[i] - jt.as_ref().map_or(0.0, |j| 0.5 * j.coeffs()[i]);
                        ga[i] = -w[i] / h + common;
                        gb[i] = w[i] / h + common;
                    }
                }
                QuadratureRule::ExponentialFitted => {
                    let f = match (cell, &frozen_vals) {
                        (Some(c), Some(v)) => Some(v[c].clone()),
                        _ if self.explicit => Some(f_spec.apply(&field(a))?),
                        _ => None,
                    };
                    let mut decay = vec![0.0; n];
                    for i in 0..n {
                        let p = phi1(self.rates[i], h);
                        decay[i] = (-self.rates[i] * h).exp() / p;
                        r[i] = b[i] / p - decay[i] * a[i];
                        if let Some(f) = &f {
                            r[i] -= f.coeffs()[i];
                        }
                        w[i] = h * r[i] / q[i];
                        value += 0.5 * h * r[i] * r[i] / q[i];
                        gb[i] = w[i] / p;
                        ga[i] = -decay[i] * w[i];
                    }
                    if cell.is_none() && self.explicit {
                        let jt = f_spec.derivative(&field(a), &field(&w))?;
                        for (g, j) in ga.iter_mut().zip(jt.coeffs()) {
                            *g -= j;
                        }
                    }
                }
            }
            if let (Some(c), Some(cw)) = (cell, cell_w.as_mut()) {
                for i in 0..n {
                    cw[c][i] += w[i];
                }
            }
            self.add_grad(grad, k, &ga);
            self.add_grad(grad, k + 1, &gb);
        }
        if let (Some(ratio), Some(cw)) = (self.frozen, cell_w) {
            if self.explicit {
                for (c, wsum) in cw.iter().enumerate() {
                    let k = c * ratio;
                    let jt = f_spec.derivative(&field(self.node(x, k)), &field(wsum))?;
                    let neg: Vec<f64> = jt.coeffs().iter().map(|v| -v).collect();
                    self.add_grad(grad, k, &neg);
                }
            }
        }
        Ok(value)
    }

    /// Per-mode variable scaling that roughly equalizes the Hessian diagonal.
    fn scaling(&self) -> Vec<f64> {
        let q = self.model.operator.noise();
        let per_mode: Vec<f64> = (0..self.model.n())
            .map(|i| (q[i] / (1.0 + (self.rates[i] * self.step).powi(2))).sqrt())
            .collect();
        (0..self.free_nodes()).flat_map(|_| per_mode.iter().copied()).collect()
    }
}

/// Rule for choosing the path grid of a horizon `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridPolicy {
    /// `h = T / K`.
    IntervalsPerHorizon(usize),
    /// Fixed `h`; must divide every horizon.
    Step(f64),
}

impl Default for GridPolicy {
    fn default() -> Self {
        GridPolicy::IntervalsPerHorizon(400)
    }
}

impl GridPolicy {
    /// `(h, K)` for horizon `T`.
    pub fn grid(&self, horizon: f64) -> Result<(f64, usize)> {
        match *self {
            GridPolicy::IntervalsPerHorizon(k) if k >= 2 => Ok((horizon / k as f64, k)),
            GridPolicy::IntervalsPerHorizon(k) => Err(Error::domain(format!("{k} intervals per horizon is too few"))),
            GridPolicy::Step(h) => {
                let k = step_count(horizon, h, "horizon vs path step")?;
                if k < 2 {
                    return Err(Error::Grid(format!("horizon {horizon} holds fewer than two steps of {h}")));
                }
                Ok((h, k))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionOptions {
    pub grid: GridPolicy,
    pub rule: QuadratureRule,
    pub lbfgs: LbfgsOptions,
}

impl Default for ActionOptions {
    fn default() -> Self {
        ActionOptions {
            grid: GridPolicy::default(),
            rule: QuadratureRule::Midpoint,
            lbfgs: LbfgsOptions { grad_tol: 1e-7, max_iter: 50_000, ..LbfgsOptions::default() },
        }
    }
}

#[derive(Debug, Clone)]
pub struct ActionMinimum {
    pub value: f64,
    pub path: SpectralPath,
    pub iterations: usize,
    /// `|∇J|_∞` with respect to the free nodes at exit.
    pub grad_norm: f64,
    pub exit: ExitReason,
    pub h: f64,
}

/// Straight line `0 → u` (or `start → u`) on `intervals` intervals.
fn straight_line(start: &SpectralField, end: &SpectralField, h: f64, intervals: usize) -> Result<SpectralPath> {
    let nodes = (0..=intervals)
        .map(|k| {
            let s = k as f64 / intervals as f64;
            start.scaled(1.0 - s).axpy(s, end)
        })
        .collect();
    SpectralPath::new(h, nodes)
}

/// Linear interpolation of `z` to `intervals` intervals over normalized time.
fn time_dilate(z: &SpectralPath, h: f64, intervals: usize) -> Result<SpectralPath> {
    let old = z.intervals();
    let nodes = (0..=intervals)
        .map(|k| {
            let s = k as f64 / intervals as f64 * old as f64;
            let j = (s.floor() as usize).min(old - 1);
            let w = s - j as f64;
            z.nodes()[j].scaled(1.0 - w).axpy(w, &z.nodes()[j + 1])
        })
        .collect();
    SpectralPath::new(h, nodes)
}

fn minimize_objective(obj: &ActionObjective, init: &SpectralPath, opts: &LbfgsOptions) -> Result<ActionMinimum> {
    let scale = obj.scaling();
    let x0: Vec<f64> = obj.free_from_path(init)?.iter().zip(&scale).map(|(z, s)| z / s).collect();
    let mut z = vec![0.0; x0.len()];
    let m = lbfgs(
        |x, g| {
            for i in 0..x.len() {
                z[i] = x[i] * scale[i];
            }
            let v = obj.value_and_gradient(&z, g)?;
            for i in 0..g.len() {
                g[i] *= scale[i];
            }
            Ok(v)
        },
        x0,
        opts,
    )?;
    let zf: Vec<f64> = m.x.iter().zip(&scale).map(|(x, s)| x * s).collect();
    let mut g = vec![0.0; zf.len()];
    let value = obj.value_and_gradient(&zf, &mut g)?;
    Ok(ActionMinimum {
        value,
        path: obj.path(&zf)?,
        iterations: m.iterations,
        grad_norm: g.iter().fold(0.0, |a, b| a.max(b.abs())),
        exit: m.exit,
        h: obj.step,
    })
}

fn minimize_action_impl(
    model: &ModelSpec,
    u: &SpectralField,
    horizon: f64,
    tau: Option<f64>,
    opts: &ActionOptions,
    init: Option<&SpectralPath>,
) -> Result<ActionMinimum> {
    let (h, k) = opts.grid.grid(horizon)?;
    let zero = SpectralField::zeros(model.n());
    let obj = ActionObjective::new(model, zero.clone(), Some(u.clone()), h, k, opts.rule, tau)?;
    let init = match init {
        Some(z) if z.intervals() == k => z.clone(),
        Some(z) => time_dilate(z, h, k)?,
        None => straight_line(&zero, u, h, k)?,
    };
    minimize_objective(&obj, &init, &opts.lbfgs)
}

/// Minimizes the Galerkin action over paths with `z(0) = 0`, `z(T) = u`.
/// Endpoints are fixed nodes; `init` (resampled to the grid if needed)
/// defaults to the straight line.
pub fn minimize_action(
    model: &ModelSpec,
    u: &SpectralField,
    horizon: f64,
    opts: &ActionOptions,
    init: Option<&SpectralPath>,
) -> Result<ActionMinimum> {
    minimize_action_impl(model, u, horizon, None, opts, init)
}

/// As [`minimize_action`] for the frozen-argument action with step `τ`.
pub fn minimize_action_full(
    model: &ModelSpec,
    u: &SpectralField,
    horizon: f64,
    tau: f64,
    opts: &ActionOptions,
    init: Option<&SpectralPath>,
) -> Result<ActionMinimum> {
    minimize_action_impl(model, u, horizon, Some(tau), opts, init)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuasipotentialOptions {
    pub action: ActionOptions,
    /// Extra randomly perturbed starts per horizon for nonlinear drifts.
    pub multistart: usize,
    pub seed: u64,
    /// Targets whose every ladder value exceeds this are flagged.
    pub domain_cap: f64,
    /// Relative value tolerance used when comparing quasipotentials.
    pub value_tol: f64,
}

impl Default for QuasipotentialOptions {
    fn default() -> Self {
        QuasipotentialOptions {
            action: ActionOptions::default(),
            multistart: 3,
            seed: 0,
            domain_cap: 1e8,
            value_tol: 1e-6,
        }
    }
}

pub const DEFAULT_LADDER: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonValue {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub value: f64,
    pub h: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub exit: ExitReason,
}

#[derive(Debug, Clone, Serialize)]
pub struct QuasipotentialResult {
    pub value: f64,
    #[serde(rename = "T_star")]
    pub t_star: f64,
    pub per_horizon: Vec<HorizonValue>,
    pub grad_norm: f64,
    pub iterations: usize,
    pub h: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    /// Per-horizon values are non-increasing along the ladder.
    pub monotone: bool,
    /// `|V(T_last) - V(T_prev)|`, a proxy for the residual under-estimate.
    pub ladder_gap: f64,
    /// Random restarts used per horizon; nonzero means only local optimality.
    pub multistart: usize,
    pub local_only: bool,
    pub possibly_outside_domain: bool,
    pub all_converged: bool,
    #[serde(skip)]
    pub path: SpectralPath,
}

fn perturbed(init: &SpectralPath, u: &SpectralField, stream: &mut GaussianStream) -> Result<SpectralPath> {
    let amp = 0.1 * u.coeffs().iter().fold(1e-3f64, |m, v| m.max(v.abs()));
    let dir: Vec<f64> = (0..u.dim()).map(|_| amp * stream.next_normal()).collect();
    let k = init.intervals();
    let nodes = init
        .nodes()
        .iter()
        .enumerate()
        .map(|(j, z)| {
            let bump = (std::f64::consts::PI * j as f64 / k as f64).sin();
            let mut c = z.coeffs().to_vec();
            for (ci, d) in c.iter_mut().zip(&dir) {
                *ci += bump * d;
            }
            SpectralField::from_vec_unchecked(c)
        })
        .collect();
    SpectralPath::new(init.step(), nodes)
}

fn ladder_impl(
    model: &ModelSpec,
    u: &SpectralField,
    tau: Option<f64>,
    ladder: &[f64],
    opts: &QuasipotentialOptions,
) -> Result<QuasipotentialResult> {
    if ladder.is_empty() {
        return Err(Error::domain("horizon ladder is empty"));
    }
    if ladder.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("horizon ladder must be strictly increasing"));
    }
    u.check_dim(model.n(), "target state")?;
    let nonlinear = matches!(model.nonlinearity, crate::NonlinearitySpec::Nemytskij(_));
    let restarts = if nonlinear { opts.multistart } else { 0 };
    let mut stream = GaussianStream::new(opts.seed, 0);

    let mut per = Vec::with_capacity(ladder.len());
    let mut best: Option<(usize, ActionMinimum)> = None;
    let mut prev: Option<SpectralPath> = None;
    for (idx, &t) in ladder.iter().enumerate() {
        let mut m = minimize_action_impl(model, u, t, tau, &opts.action, prev.as_ref())?;
        for _ in 0..restarts {
            let start = perturbed(&m.path, u, &mut stream)?;
            let alt = minimize_action_impl(model, u, t, tau, &opts.action, Some(&start))?;
            if alt.value < m.value {
                m = alt;
            }
        }
        per.push(HorizonValue {
            horizon: t,
            value: m.value,
            h: m.h,
            iterations: m.iterations,
            grad_norm: m.grad_norm,
            exit: m.exit,
        });
        prev = Some(m.path.clone());
        if best.as_ref().is_none_or(|(_, b)| m.value < b.value) {
            best = Some((idx, m));
        }
    }
    let (bi, b) = best.unwrap();
    let slack = |v: f64| opts.value_tol * v.abs().max(1.0);
    let monotone = per.windows(2).all(|w| w[1].value <= w[0].value + slack(w[0].value));
    let ladder_gap = match per.len() {
        0 | 1 => 0.0,
        l => (per[l - 1].value - per[l - 2].value).abs(),
    };
    Ok(QuasipotentialResult {
        value: b.value,
        t_star: ladder[bi],
        grad_norm: b.grad_norm,
        iterations: per.iter().map(|p| p.iterations).sum(),
        h: b.h,
        tau,
        monotone,
        ladder_gap,
        multistart: restarts,
        local_only: nonlinear,
        possibly_outside_domain: per.iter().all(|p| p.value > opts.domain_cap),
        all_converged: per
            .iter()
            .all(|p| matches!(p.exit, ExitReason::Converged | ExitReason::RoundingFloor)),
        per_horizon: per,
        path: b.path,
    })
}

/// `V^n(u)` approximated by the minimum over a horizon ladder, with warm
/// starts carried from each horizon to the next.
pub fn minimize_quasipotential(
    model: &ModelSpec,
    u: &SpectralField,
    ladder: &[f64],
    opts: &QuasipotentialOptions,
) -> Result<QuasipotentialResult> {
    ladder_impl(model, u, None, ladder, opts)
}

/// `V^{n,τ}(u)`; `τ` must divide every horizon and be a multiple of the grid step.
pub fn minimize_quasipotential_full(
    model: &ModelSpec,
    u: &SpectralField,
    tau: f64,
    ladder: &[f64],
    opts: &QuasipotentialOptions,
) -> Result<QuasipotentialResult> {
    ladder_impl(model, u, Some(tau), ladder, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::{NonlinearitySpec, ScalarFunction};
    use crate::rate::{rate_full_with, rate_semi_with};
    use crate::spectral::OperatorSpec;
    use crate::stream::GaussianStream;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn sin_model(n: usize) -> ModelSpec {
        ModelSpec::new(
            OperatorSpec::with_decay(n, 2.0).unwrap(),
            NonlinearitySpec::nemytskij(ScalarFunction::Sin { amplitude: 0.5 }, n).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn closed_forms() {
        let m = ModelSpec::linear(1, 2.0).unwrap();
        let u = SpectralField::new(vec![0.1]).unwrap();
        let v = quasipotential_linear(&m, &u).unwrap();
        assert_relative_eq!(v, PI.powi(6) * 0.01, max_relative = 1e-12);
        assert_relative_eq!(v, 9.613891935753043, max_relative = 1e-12);
        let vt = quasipotential_linear_finite_t(&m, &u, 1.0).unwrap();
        assert_relative_eq!(vt / v - 1.0, (-2.0 * PI * PI).exp(), max_relative = 1e-6);
        let short = quasipotential_linear_finite_t(&m, &u, 0.05).unwrap();
        assert_relative_eq!(short, v / (1.0 - (-0.1 * PI * PI).exp()), max_relative = 1e-14);
        assert_relative_eq!(short, 15.3275, max_relative = 1e-4);

        let m2 = ModelSpec::linear(2, 2.0).unwrap();
        let u2 = SpectralField::new(vec![0.3, -0.2]).unwrap();
        let expect = PI.powi(6) * 0.09 + (2.0 * PI).powi(6) * 0.04;
        assert_relative_eq!(quasipotential_linear(&m2, &u2).unwrap(), expect, max_relative = 1e-12);
        assert!(matches!(quasipotential_linear(&sin_model(2), &u2), Err(Error::NotApplicable(_))));
        assert_eq!(quasipotential_linear(&m2, &SpectralField::zeros(2)).unwrap(), 0.0);
    }

    #[test]
    fn finite_horizon_formula_matches_one_dimensional_minimization() {
        // exact discrete optimum of ½h Σψ_k² over piecewise-constant ψ for the
        // exponentially fitted scheme, driven to the limit h → 0
        let (l, q, u, t) = (PI * PI, 0.3f64, 0.7, 0.4);
        let k = 200_000usize;
        let h = t / k as f64;
        let p = phi1(l, h);
        let gram: f64 = (0..k).map(|j| (-2.0 * l * h * (k - 1 - j) as f64).exp()).sum::<f64>() * p * p * q / h;
        let discrete = 0.5 * u * u / gram;
        let m = ModelSpec::new(OperatorSpec::with_noise(vec![q]).unwrap(), NonlinearitySpec::Zero).unwrap();
        let exact = quasipotential_linear_finite_t(&m, &SpectralField::new(vec![u]).unwrap(), t).unwrap();
        assert_relative_eq!(discrete, exact, max_relative = 1e-6);
    }

    fn check_gradient(obj: &ActionObjective, x: &[f64]) {
        let mut g = vec![0.0; x.len()];
        obj.value_and_gradient(x, &mut g).unwrap();
        let mut s = GaussianStream::new(99, 1);
        for _ in 0..10 {
            let j = (s.next_normal().abs() * 1e6) as usize % x.len();
            let scale = x[j].abs().max(1e-2);
            let e = 1e-6 * scale;
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += e;
            xm[j] -= e;
            let fd = (obj.value(&xp).unwrap() - obj.value(&xm).unwrap()) / (2.0 * e);
            let rel = (fd - g[j]).abs() / g[j].abs().max(1e-8);
            assert!(rel <= 1e-5, "component {j}: fd {fd} vs analytic {}", g[j]);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut s = GaussianStream::new(5, 0);
        for model in [sin_model(3), ModelSpec::linear(3, 2.0).unwrap()] {
            let u = SpectralField::new(vec![0.3, -0.1, 0.05]).unwrap();
            for rule in [QuadratureRule::Midpoint, QuadratureRule::ExponentialFitted] {
                for tau in [None, Some(0.1)] {
                    for end in [Some(u.clone()), None] {
                        let obj = ActionObjective::new(&model, SpectralField::zeros(3), end, 0.01, 40, rule, tau).unwrap();
                        let x: Vec<f64> = (0..obj.dim()).map(|_| 0.02 * s.next_normal()).collect();
                        check_gradient(&obj, &x);
                    }
                }
            }
        }
    }

    #[test]
    fn objective_matches_rate_functionals() {
        let model = sin_model(2);
        let u = SpectralField::new(vec![0.2, 0.1]).unwrap();
        let mut s = GaussianStream::new(8, 0);
        for rule in [QuadratureRule::Midpoint, QuadratureRule::ExponentialFitted] {
            let obj = ActionObjective::new(&model, SpectralField::zeros(2), Some(u.clone()), 0.02, 50, rule, None).unwrap();
            let x: Vec<f64> = (0..obj.dim()).map(|_| 0.2 * s.next_normal()).collect();
            let z = obj.path(&x).unwrap();
            let zero = SpectralField::zeros(2);
            assert_relative_eq!(obj.value(&x).unwrap(), rate_semi_with(&model, &z, &zero, rule).unwrap().value, max_relative = 1e-13);
            let full = ActionObjective::new(&model, zero.clone(), Some(u.clone()), 0.02, 50, rule, Some(0.1)).unwrap();
            assert_relative_eq!(full.value(&x).unwrap(), rate_full_with(&model, &z, &zero, 0.1, rule).unwrap().value, max_relative = 1e-13);
        }
    }

    #[test]
    fn scalar_minimization_matches_oracle() {
        let model = ModelSpec::linear(1, 2.0).unwrap();
        let u = SpectralField::new(vec![0.1]).unwrap();
        let m = minimize_action(&model, &u, 1.0, &ActionOptions::default(), None).unwrap();
        assert!(m.exit == ExitReason::Converged || m.exit == ExitReason::RoundingFloor, "{:?} after {}", m.exit, m.iterations);
        let oracle = quasipotential_linear_finite_t(&model, &u, 1.0).unwrap();
        assert!((m.value / oracle - 1.0).abs() < 0.02, "{} vs {oracle}", m.value);
        let l = PI * PI;
        let prof = |t: f64| 0.1 * (l * t).sinh() / l.sinh();
        let err = (0..=400).map(|k| (m.path.nodes()[k].coeffs()[0] - prof(k as f64 / 400.0)).abs()).fold(0.0, f64::max);
        assert!(err <= 5e-3, "profile error {err}");
    }

    #[test]
    fn zero_target_and_decoupling() {
        let model = ModelSpec::linear(2, 2.0).unwrap();
        let zero = SpectralField::zeros(2);
        let m = minimize_action(&model, &zero, 0.5, &ActionOptions::default(), None).unwrap();
        assert!(m.value <= 1e-10);
        assert!(m.path.nodes().iter().all(|z| z.norm() < 1e-12));

        let u = SpectralField::new(vec![0.1, 0.02]).unwrap();
        let joint = minimize_action(&model, &u, 0.5, &ActionOptions::default(), None).unwrap().value;
        let parts: f64 = (1..=2)
            .map(|i| {
                let op = OperatorSpec::with_noise(vec![model.operator.noise()[i - 1]]).unwrap();
                let op = op.absorb_linear(&[op.eigenvalues()[0] - model.operator.eigenvalues()[i - 1]]).unwrap();
                let single = ModelSpec::new(op, NonlinearitySpec::Zero).unwrap();
                let ui = SpectralField::new(vec![u.coeffs()[i - 1]]).unwrap();
                minimize_action(&single, &ui, 0.5, &ActionOptions::default(), None).unwrap().value
            })
            .sum();
        assert_relative_eq!(joint, parts, max_relative = 1e-6);
    }

    #[test]
    fn ladder_approaches_quasipotential() {
        let model = ModelSpec::linear(1, 2.0).unwrap();
        let u = SpectralField::new(vec![0.1]).unwrap();
        let r = minimize_quasipotential(&model, &u, &[0.25, 0.5, 1.0, 2.0], &QuasipotentialOptions::default()).unwrap();
        assert!(r.monotone && r.all_converged && !r.local_only);
        for p in &r.per_horizon {
            let oracle = quasipotential_linear_finite_t(&model, &u, p.horizon).unwrap();
            assert!((p.value / oracle - 1.0).abs() < 0.02, "T={} {} vs {oracle}", p.horizon, p.value);
        }
        let v = quasipotential_linear(&model, &u).unwrap();
        assert!((r.value / v - 1.0).abs() < 0.03);
        assert!(r.path.end().distance(&u) == 0.0 && r.path.start().norm() == 0.0);

        let single = minimize_quasipotential(&model, &u, &[1.0], &QuasipotentialOptions::default()).unwrap();
        let direct = minimize_action(&model, &u, 1.0, &ActionOptions::default(), None).unwrap();
        assert_eq!(single.value, direct.value);
        let zero = minimize_quasipotential(&model, &SpectralField::zeros(1), &[0.5, 1.0], &QuasipotentialOptions::default()).unwrap();
        assert!(zero.value <= 1e-12);
    }

    #[test]
    fn full_quasipotential_identities() {
        let model = ModelSpec::linear(2, 2.0).unwrap();
        let u = SpectralField::new(vec![0.1, 0.01]).unwrap();
        let opts = QuasipotentialOptions::default();
        let ladder = [0.5, 1.0];
        let semi = minimize_quasipotential(&model, &u, &ladder, &opts).unwrap();
        for tau in [0.1, 0.05] {
            let full = minimize_quasipotential_full(&model, &u, tau, &ladder, &opts).unwrap();
            assert!((full.value - semi.value).abs() <= 2.0 * opts.value_tol * semi.value);
        }
        assert!(minimize_quasipotential_full(&model, &u, 0.3, &ladder, &opts).is_err());

        let nl = sin_model(2);
        let opts = QuasipotentialOptions { multistart: 1, ..Default::default() };
        let semi = minimize_quasipotential(&nl, &u, &ladder, &opts).unwrap();
        assert!(semi.local_only && semi.multistart == 1);
        let gaps: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&tau| (minimize_quasipotential_full(&nl, &u, tau, &ladder, &opts).unwrap().value - semi.value).abs())
            .collect();
        assert!(gaps[1] < gaps[0] && gaps[2] < gaps[1], "{gaps:?}");
    }
}
