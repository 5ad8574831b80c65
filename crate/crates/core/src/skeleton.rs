//! Controlled deterministic dynamics `dz/dt = A_n z + F_n(z) + Q_n^{1/2} ψ(t)`.
//!
//! Solutions are marched with an exponential integrator: on each sub-interval
//! of width `h' = h / substeps` the affine ODE with the nonlinearity frozen at
//! the left endpoint is integrated exactly. A linear-diagonal drift is folded
//! into the exponent, so Zero and linear models are solved exactly at any
//! refinement.

use crate::error::{Error, Result};
use crate::integrator::step_count;
use crate::model::ModelSpec;
use crate::path::{Control, SpectralPath};
use crate::spectral::{phi1, project, SpectralField};

/// Default internal refinement per control interval.
pub const DEFAULT_SUBSTEPS: usize = 16;

enum Drift<'a> {
    /// Nonlinearity evaluated at every sub-interval's left endpoint.
    Current(&'a ModelSpec),
    /// Nonlinearity frozen at the last node of a `ratio`-interval cell.
    Frozen { model: &'a ModelSpec, ratio: usize },
    None,
}

fn march(
    rates: &[f64],
    noise: &[f64],
    y: &SpectralField,
    control: &Control,
    substeps: usize,
    drift: Drift<'_>,
) -> Result<SpectralPath> {
    let n = rates.len();
    y.check_dim(n, "initial condition")?;
    control.values()[0].check_dim(n, "control")?;
    if substeps == 0 {
        return Err(Error::domain("substeps must be at least 1"));
    }
    let dt = control.step() / substeps as f64;
    let decay: Vec<f64> = rates.iter().map(|r| (-r * dt).exp()).collect();
    let weight: Vec<f64> = rates.iter().map(|r| phi1(*r, dt)).collect();
    let sq: Vec<f64> = noise.iter().map(|q| q.sqrt()).collect();

    let mut z = y.coeffs().to_vec();
    let mut nodes = Vec::with_capacity(control.intervals() + 1);
    nodes.push(y.clone());
    let mut frozen: Option<Vec<f64>> = None;
    for (k, psi) in control.values().iter().enumerate() {
        let forcing: Vec<f64> = psi.coeffs().iter().zip(&sq).map(|(p, s)| s * p).collect();
        if let Drift::Frozen { model, ratio } = &drift {
            if k % ratio == 0 {
                let zk = SpectralField::from_vec_unchecked(z.clone());
                frozen = Some(model.nonlinearity.apply(&zk)?.into_vec());
            }
        }
        for _ in 0..substeps {
            let f = match &drift {
                Drift::Current(model) => {
                    let zs = SpectralField::from_vec_unchecked(z.clone());
                    Some(model.nonlinearity.apply(&zs)?.into_vec())
                }
                Drift::Frozen { .. } => frozen.clone(),
                Drift::None => None,
            };
            for i in 0..n {
                let g = match &f {
                    Some(f) => f[i] + forcing[i],
                    None => forcing[i],
                };
                z[i] = decay[i] * z[i] + weight[i] * g;
            }
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: k });
        }
        nodes.push(SpectralField::from_vec_unchecked(z.clone()));
    }
    SpectralPath::new(control.step(), nodes)
}

/// Solves the skeleton equation driven by `control` from `y`, emitting nodes
/// on the control grid.
pub fn solve_skeleton(
    model: &ModelSpec,
    y: &SpectralField,
    control: &Control,
    substeps: usize,
) -> Result<SpectralPath> {
    let (rates, explicit) = model.exponential_split();
    let drift = if explicit {
        Drift::Current(model)
    } else {
        Drift::None
    };
    march(&rates, model.operator.noise(), y, control, substeps, drift)
}

/// Skeleton of the time-discrete scheme: the nonlinearity is evaluated at the
/// state `z(τ⌊t/τ⌋)` of the last `τ`-node. `τ` must be an integer multiple of
/// the control step.
pub fn solve_skeleton_frozen(
    model: &ModelSpec,
    y: &SpectralField,
    control: &Control,
    tau: f64,
    substeps: usize,
) -> Result<SpectralPath> {
    let ratio = step_count(tau, control.step(), "frozen step vs control step")?;
    march(
        model.operator.eigenvalues(),
        model.operator.noise(),
        y,
        control,
        substeps,
        Drift::Frozen { model, ratio },
    )
}

/// The uncontrolled flow from `y` on a grid of `intervals` steps of width `step`.
pub fn uncontrolled_flow(
    model: &ModelSpec,
    y: &SpectralField,
    step: f64,
    intervals: usize,
    substeps: usize,
) -> Result<SpectralPath> {
    let control = Control::zeros(model.n(), step, intervals)?;
    solve_skeleton(model, y, &control, substeps)
}

/// The `n`-mode skeleton path started at `P_n x` and driven by `P_n φ`, the
/// approximating family for a reference skeleton path of dimension `N`.
pub fn build_zn(
    reference: &ModelSpec,
    x: &SpectralField,
    phi: &Control,
    n: usize,
    substeps: usize,
) -> Result<SpectralPath> {
    x.check_dim(reference.n(), "reference initial condition")?;
    phi.values()[0].check_dim(reference.n(), "reference control")?;
    if n == 0 || n > reference.n() {
        return Err(Error::domain(format!(
            "Galerkin dimension {n} outside 1..={}",
            reference.n()
        )));
    }
    let model = reference.truncate(n)?;
    solve_skeleton(&model, &project(x, n)?, &phi.project(n)?, substeps)
}
