//! Eigenbasis representation of the Galerkin space `H_n`.
//!
//! A state `u = Σ u_i e_i` is stored by its coefficients against the Dirichlet
//! sine basis `e_i(ξ) = √2 sin(iπξ)` on (0, 1). Every linear operator used by
//! the crate (the Laplacian `A`, the noise covariance `Q`, the semigroup
//! `E(t) = e^{tA}` and their fractional powers) is diagonal in this basis, so
//! all of them are applied exactly, coefficient by coefficient.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustdct::{Dst1, DctPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Eigenvalue `λ_i = π² i²` of `-A` for the Dirichlet Laplacian on (0, 1).
pub fn eigenvalue(i: usize) -> Result<f64> {
    if i == 0 {
        return Err(Error::domain("eigenvalue index must be >= 1"));
    }
    let i = i as f64;
    Ok(PI * PI * i * i)
}

/// `(1 - e^{-rate·dt}) / rate`, the exact integral of `e^{-rate·s}` over `[0, dt]`.
pub(crate) fn phi1(rate: f64, dt: f64) -> f64 {
    let x = rate * dt;
    if x.abs() < 1e-10 {
        dt * (1.0 - 0.5 * x)
    } else {
        -(-x).exp_m1() / rate
    }
}

/// A point of `H_n`, stored as its sine-basis coefficients.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpectralField(Vec<f64>);

impl fmt::Debug for SpectralField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("SpectralField").field(&self.0).finish()
    }
}

impl SpectralField {
    /// Wraps a coefficient vector, rejecting non-finite entries.
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::domain(format!(
                "coefficient {} (mode {}) is not finite",
                coeffs[i],
                i + 1
            )));
        }
        Ok(SpectralField(coeffs))
    }

    /// Wraps a coefficient vector without the finiteness check.
    pub(crate) fn from_vec_unchecked(coeffs: Vec<f64>) -> Self {
        SpectralField(coeffs)
    }

    pub fn zeros(n: usize) -> Self {
        SpectralField(vec![0.0; n])
    }

    /// The basis vector `e_mode` (1-based mode index) in `H_n`.
    pub fn basis(n: usize, mode: usize) -> Result<Self> {
        if mode == 0 || mode > n {
            return Err(Error::domain(format!(
                "mode {mode} outside 1..={n}"
            )));
        }
        let mut c = vec![0.0; n];
        c[mode - 1] = 1.0;
        Ok(SpectralField(c))
    }

    /// Builds a field from a function of the 1-based mode index.
    pub fn from_modes(n: usize, f: impl Fn(usize) -> f64) -> Result<Self> {
        Self::new((1..=n).map(f).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    /// Squared `L²` norm (Parseval).
    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dot(&self, other: &SpectralField) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    /// `|self - other|` over the common modes plus the tails of the longer field.
    pub fn distance(&self, other: &SpectralField) -> f64 {
        let common = self.dim().min(other.dim());
        let mut acc = 0.0;
        for i in 0..common {
            let d = self.0[i] - other.0[i];
            acc += d * d;
        }
        acc += self.0[common..].iter().map(|c| c * c).sum::<f64>();
        acc += other.0[common..].iter().map(|c| c * c).sum::<f64>();
        acc.sqrt()
    }

    pub fn scaled(&self, s: f64) -> SpectralField {
        SpectralField(self.0.iter().map(|c| c * s).collect())
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &SpectralField) -> SpectralField {
        debug_assert_eq!(self.dim(), other.dim());
        SpectralField(self.0.iter().zip(&other.0).map(|(a, b)| a + s * b).collect())
    }

    pub(crate) fn check_dim(&self, n: usize, what: &str) -> Result<()> {
        if self.dim() != n {
            return Err(Error::domain(format!(
                "{what} has dimension {}, expected {n}",
                self.dim()
            )));
        }
        Ok(())
    }
}

impl From<SpectralField> for Vec<f64> {
    fn from(f: SpectralField) -> Self {
        f.0
    }
}

/// `|u|²_{Ḣ^γ} = Σ λ_i^γ u_i²`.
pub fn sobolev_norm_sq(u: &SpectralField, gamma: f64) -> f64 {
    u.coeffs()
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let i = (k + 1) as f64;
            (PI * PI * i * i).powf(gamma) * c * c
        })
        .sum()
}

/// The Galerkin projection `P_n`: keep the first `n` coefficients.
pub fn project(u: &SpectralField, n: usize) -> Result<SpectralField> {
    if n == 0 || n > u.dim() {
        return Err(Error::domain(format!(
            "cannot project a field of dimension {} onto {n} modes",
            u.dim()
        )));
    }
    Ok(SpectralField(u.coeffs()[..n].to_vec()))
}

/// `|(I - P_n) u|²`, the energy discarded by [`project`].
pub fn projection_tail_sq(u: &SpectralField, n: usize) -> f64 {
    u.coeffs().iter().skip(n).map(|c| c * c).sum()
}

/// The operators `A_n`, `Q_n` of a Galerkin model, all diagonal in the sine basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    eigenvalues: Vec<f64>,
    noise: Vec<f64>,
    decay: Option<f64>,
    shift: Option<Vec<f64>>,
}

impl OperatorSpec {
    /// Noise spectrum `q_i = λ_i^{-decay}`.
    pub fn with_decay(n: usize, decay: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("Galerkin dimension must be positive"));
        }
        if !decay.is_finite() {
            return Err(Error::domain("noise decay exponent must be finite"));
        }
        let eigenvalues = (1..=n).map(|i| eigenvalue(i).unwrap()).collect::<Vec<_>>();
        let noise = eigenvalues.iter().map(|l: &f64| l.powf(-decay)).collect();
        Ok(OperatorSpec {
            eigenvalues,
            noise,
            decay: Some(decay),
            shift: None,
        })
    }

    /// Explicit noise spectrum; every `q_i` must be strictly positive.
    pub fn with_noise(noise: Vec<f64>) -> Result<Self> {
        if noise.is_empty() {
            return Err(Error::domain("Galerkin dimension must be positive"));
        }
        if let Some(i) = noise.iter().position(|q| !(q.is_finite() && *q > 0.0)) {
            return Err(Error::domain(format!(
                "noise eigenvalue q_{} = {} is not strictly positive",
                i + 1,
                noise[i]
            )));
        }
        let eigenvalues = (1..=noise.len()).map(|i| eigenvalue(i).unwrap()).collect();
        Ok(OperatorSpec {
            eigenvalues,
            noise,
            decay: None,
            shift: None,
        })
    }

    /// Replaces `A` by `A + B` for a diagonal `B = diag(b_i)`, i.e. the decay
    /// rates become `λ_i - b_i`. This is how a linear drift is folded into the
    /// linear operator so that the remaining nonlinearity vanishes.
    pub fn absorb_linear(&self, b: &[f64]) -> Result<Self> {
        if b.len() != self.n() {
            return Err(Error::domain(format!(
                "linear coefficients have length {}, expected {}",
                b.len(),
                self.n()
            )));
        }
        let eigenvalues = self
            .eigenvalues
            .iter()
            .zip(b)
            .map(|(l, b)| l - b)
            .collect::<Vec<_>>();
        if eigenvalues.iter().any(|l| *l <= 0.0) {
            return Err(Error::domain(
                "absorbed linear part makes A + B non-dissipative",
            ));
        }
        let mut shift = self.shift.clone().unwrap_or_else(|| vec![0.0; self.n()]);
        for (s, bi) in shift.iter_mut().zip(b) {
            *s += bi;
        }
        Ok(OperatorSpec {
            eigenvalues,
            noise: self.noise.clone(),
            decay: self.decay,
            shift: Some(shift),
        })
    }

    /// Restriction to the first `n` modes.
    pub fn truncate(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.n() {
            return Err(Error::domain(format!(
                "cannot truncate a {}-mode operator to {n} modes",
                self.n()
            )));
        }
        Ok(OperatorSpec {
            eigenvalues: self.eigenvalues[..n].to_vec(),
            noise: self.noise[..n].to_vec(),
            decay: self.decay,
            shift: self.shift.as_ref().map(|s| s[..n].to_vec()),
        })
    }

    /// Same operator family extended (or truncated) to `n` modes. Requires
    /// a decay exponent when extending beyond the stored spectrum.
    pub fn resized(&self, n: usize) -> Result<Self> {
        if n <= self.n() {
            return self.truncate(n);
        }
        match (self.decay, &self.shift) {
            (Some(d), None) => Self::with_decay(n, d),
            _ => Err(Error::domain(
                "only decay-parametrized, unshifted operators can be extended",
            )),
        }
    }

    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Decay rates of `-A_n` (`λ_i`, or `λ_i - b_i` after [`absorb_linear`](Self::absorb_linear)).
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn noise(&self) -> &[f64] {
        &self.noise
    }

    pub fn decay(&self) -> Option<f64> {
        self.decay
    }

    pub fn shift(&self) -> Option<&[f64]> {
        self.shift.as_deref()
    }

    /// Smallest decay rate (`λ_1` for the unshifted Laplacian).
    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// `min_i λ_i / q_i`, the admissibility bound for exponential square moments.
    pub fn min_lambda_over_q(&self) -> f64 {
        self.eigenvalues
            .iter()
            .zip(&self.noise)
            .map(|(l, q)| l / q)
            .fold(f64::INFINITY, f64::min)
    }

    /// Whether the decay exponent lies in the range `(3/2, 2]` for which
    /// `q_i = λ_i^{-δ}` satisfies the trace and range conditions on `A`, `Q`.
    /// `None` for explicit spectra, whose compliance cannot be certified from
    /// finitely many modes.
    pub fn assumption_compliant(&self) -> Option<bool> {
        self.decay.map(|d| d > 1.5 && d <= 2.0)
    }

    /// `E_n(t) u`: multiply mode `i` by `e^{-λ_i t}`.
    pub fn semigroup_apply(&self, u: &SpectralField, t: f64) -> Result<SpectralField> {
        if !(t >= 0.0) {
            return Err(Error::domain(format!("semigroup time must be >= 0, got {t}")));
        }
        u.check_dim(self.n(), "field")?;
        Ok(SpectralField(
            u.coeffs()
                .iter()
                .zip(&self.eigenvalues)
                .map(|(c, l)| c * (-l * t).exp())
                .collect(),
        ))
    }

    /// `A_n u` (note the sign: `A = -diag(λ_i)`).
    pub fn a_apply(&self, u: &SpectralField) -> Result<SpectralField> {
        u.check_dim(self.n(), "field")?;
        Ok(SpectralField(
            u.coeffs()
                .iter()
                .zip(&self.eigenvalues)
                .map(|(c, l)| -l * c)
                .collect(),
        ))
    }

    pub fn q_sqrt_apply(&self, u: &SpectralField) -> Result<SpectralField> {
        u.check_dim(self.n(), "field")?;
        Ok(SpectralField(
            u.coeffs()
                .iter()
                .zip(&self.noise)
                .map(|(c, q)| c * q.sqrt())
                .collect(),
        ))
    }

    pub fn q_inv_sqrt_apply(&self, u: &SpectralField) -> Result<SpectralField> {
        u.check_dim(self.n(), "field")?;
        Ok(SpectralField(
            u.coeffs()
                .iter()
                .zip(&self.noise)
                .map(|(c, q)| c / q.sqrt())
                .collect(),
        ))
    }

    /// Per-mode variance `q_i (1 - e^{-2λ_i t}) / (2λ_i)` of the stochastic
    /// convolution `Γ^n(t)`.
    pub fn convolution_variance(&self, t: f64) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .zip(&self.noise)
            .map(|(l, q)| q * phi1(2.0 * l, t))
            .collect()
    }
}

/// Interior collocation grid `ξ_k = k / (M + 1)`, `k = 1..M`, paired with a
/// type-I discrete sine transform.
#[derive(Clone)]
pub struct SineGrid {
    points: usize,
    dst: Arc<dyn Dst1<f64>>,
}

impl fmt::Debug for SineGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SineGrid").field("points", &self.points).finish()
    }
}

impl PartialEq for SineGrid {
    fn eq(&self, other: &Self) -> bool {
        self.points == other.points
    }
}

impl SineGrid {
    pub fn new(points: usize) -> Result<Self> {
        if points == 0 {
            return Err(Error::domain("collocation grid needs at least one point"));
        }
        let dst = DctPlanner::new().plan_dst1(points);
        Ok(SineGrid { points, dst })
    }

    pub fn points(&self) -> usize {
        self.points
    }

    /// Grid abscissa of the `k`-th point (0-based).
    pub fn abscissa(&self, k: usize) -> f64 {
        (k + 1) as f64 / (self.points + 1) as f64
    }

    /// Point values `u(ξ_k) = Σ u_i √2 sin(iπξ_k)`.
    pub fn evaluate(&self, u: &SpectralField) -> Result<Vec<f64>> {
        if u.dim() > self.points {
            return Err(Error::domain(format!(
                "collocation grid of {} points cannot resolve {} modes",
                self.points,
                u.dim()
            )));
        }
        let mut buf = vec![0.0; self.points];
        buf[..u.dim()].copy_from_slice(u.coeffs());
        self.dst.process_dst1(&mut buf);
        let s = std::f64::consts::SQRT_2;
        buf.iter_mut().for_each(|v| *v *= s);
        Ok(buf)
    }

    /// Sine coefficients (all `M` of them) of grid data; exact inverse of
    /// [`evaluate`](Self::evaluate) for fields band-limited to `M` modes.
    pub fn synthesize(&self, values: &[f64]) -> Result<SpectralField> {
        if values.len() != self.points {
            return Err(Error::domain(format!(
                "expected {} grid values, got {}",
                self.points,
                values.len()
            )));
        }
        let mut buf = values.to_vec();
        self.dst.process_dst1(&mut buf);
        let s = std::f64::consts::SQRT_2 / (self.points + 1) as f64;
        buf.iter_mut().for_each(|v| *v *= s);
        Ok(SpectralField(buf))
    }

    /// [`synthesize`](Self::synthesize) followed by truncation to `n` modes.
    pub fn synthesize_truncated(&self, values: &[f64], n: usize) -> Result<SpectralField> {
        let mut full = self.synthesize(values)?;
        if n > self.points {
            return Err(Error::domain(format!(
                "cannot keep {n} modes from a {}-point grid",
                self.points
            )));
        }
        full.0.truncate(n);
        Ok(full)
    }
}

/// Free-function form of [`SineGrid::evaluate`].
pub fn evaluate_on_grid(u: &SpectralField, points: usize) -> Result<Vec<f64>> {
    if points < u.dim() {
        return Err(Error::domain(format!(
            "grid size {points} is smaller than the field dimension {}",
            u.dim()
        )));
    }
    SineGrid::new(points)?.evaluate(u)
}

/// Free-function form of [`SineGrid::synthesize`].
pub fn synthesize_from_grid(values: &[f64]) -> Result<SpectralField> {
    SineGrid::new(values.len())?.synthesize(values)
}
