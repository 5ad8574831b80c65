//! Drift nonlinearities `F` and their Galerkin projections `F_n = P_n F`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::spectral::{OperatorSpec, SineGrid, SpectralField};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Scalar function `f` of a Nemytskij operator `F(u)(ξ) = f(u(ξ))`.
#[derive(Clone)]
pub enum ScalarFunction {
    /// `a·sin(s)`
    Sin { amplitude: f64 },
    /// `a·tanh(s)`
    Tanh { amplitude: f64 },
    /// `a·s·exp(-s²)`
    Bump { amplitude: f64 },
    /// User closure with a declared bound `sup |f'|`.
    Custom {
        name: String,
        value: ScalarFn,
        derivative: ScalarFn,
        lipschitz: f64,
    },
}

impl fmt::Debug for ScalarFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarFunction::Sin { amplitude } => write!(f, "{amplitude}*sin(s)"),
            ScalarFunction::Tanh { amplitude } => write!(f, "{amplitude}*tanh(s)"),
            ScalarFunction::Bump { amplitude } => write!(f, "{amplitude}*s*exp(-s^2)"),
            ScalarFunction::Custom { name, lipschitz, .. } => {
                write!(f, "{name} (L = {lipschitz})")
            }
        }
    }
}

impl ScalarFunction {
    pub fn custom(
        name: impl Into<String>,
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
        lipschitz: f64,
    ) -> Self {
        ScalarFunction::Custom {
            name: name.into(),
            value: Arc::new(value),
            derivative: Arc::new(derivative),
            lipschitz,
        }
    }

    pub fn value(&self, s: f64) -> f64 {
        match self {
            ScalarFunction::Sin { amplitude } => amplitude * s.sin(),
            ScalarFunction::Tanh { amplitude } => amplitude * s.tanh(),
            ScalarFunction::Bump { amplitude } => amplitude * s * (-s * s).exp(),
            ScalarFunction::Custom { value, .. } => value(s),
        }
    }

    pub fn derivative(&self, s: f64) -> f64 {
        match self {
            ScalarFunction::Sin { amplitude } => amplitude * s.cos(),
            ScalarFunction::Tanh { amplitude } => {
                let c = s.cosh();
                amplitude / (c * c)
            }
            ScalarFunction::Bump { amplitude } => amplitude * (1.0 - 2.0 * s * s) * (-s * s).exp(),
            ScalarFunction::Custom { derivative, .. } => derivative(s),
        }
    }

    /// `sup |f'|`. For the built-ins the supremum is attained at `s = 0`.
    pub fn lipschitz(&self) -> f64 {
        match self {
            ScalarFunction::Sin { amplitude }
            | ScalarFunction::Tanh { amplitude }
            | ScalarFunction::Bump { amplitude } => amplitude.abs(),
            ScalarFunction::Custom { lipschitz, .. } => *lipschitz,
        }
    }
}

/// Pseudospectral Nemytskij operator: collocate, apply `f`, transform back.
#[derive(Debug, Clone)]
pub struct Nemytskij {
    function: ScalarFunction,
    grid: SineGrid,
}

impl Nemytskij {
    pub fn new(function: ScalarFunction, collocation_points: usize) -> Result<Self> {
        let l = function.lipschitz();
        if !(l.is_finite() && l >= 0.0) {
            return Err(Error::domain(format!(
                "declared Lipschitz bound {l} must be finite and nonnegative"
            )));
        }
        Ok(Nemytskij {
            function,
            grid: SineGrid::new(collocation_points)?,
        })
    }

    pub fn function(&self) -> &ScalarFunction {
        &self.function
    }

    pub fn grid(&self) -> &SineGrid {
        &self.grid
    }

    fn pointwise(&self, u: &SpectralField, g: impl Fn(usize, f64) -> f64) -> Result<SpectralField> {
        let mut values = self.grid.evaluate(u)?;
        for (k, v) in values.iter_mut().enumerate() {
            let out = g(k, *v);
            if !out.is_finite() {
                return Err(Error::NonFiniteNonlinearity {
                    xi: self.grid.abscissa(k),
                    value: out,
                });
            }
            *v = out;
        }
        self.grid.synthesize_truncated(&values, u.dim())
    }
}

/// Drift nonlinearity of the model.
#[derive(Debug, Clone)]
pub enum NonlinearitySpec {
    Zero,
    /// `F(u) = Σ b_i u_i e_i`.
    LinearDiagonal(Vec<f64>),
    Nemytskij(Nemytskij),
}

impl NonlinearitySpec {
    /// Nemytskij operator with the default collocation size `4n`.
    pub fn nemytskij(function: ScalarFunction, n: usize) -> Result<Self> {
        Ok(NonlinearitySpec::Nemytskij(Nemytskij::new(function, 4 * n)?))
    }

    pub fn nemytskij_with_grid(function: ScalarFunction, points: usize) -> Result<Self> {
        Ok(NonlinearitySpec::Nemytskij(Nemytskij::new(function, points)?))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, NonlinearitySpec::Zero)
    }

    /// Global Lipschitz constant `L_F` (declared for Nemytskij operators).
    pub fn lipschitz(&self) -> f64 {
        match self {
            NonlinearitySpec::Zero => 0.0,
            NonlinearitySpec::LinearDiagonal(b) => b.iter().fold(0.0, |m, x| f64::max(m, x.abs())),
            NonlinearitySpec::Nemytskij(nm) => nm.function.lipschitz(),
        }
    }

    /// Whether `F(0) = 0`.
    pub fn preserves_zero(&self) -> bool {
        match self {
            NonlinearitySpec::Zero | NonlinearitySpec::LinearDiagonal(_) => true,
            NonlinearitySpec::Nemytskij(nm) => nm.function.value(0.0) == 0.0,
        }
    }

    /// Restriction to the first `n` modes (`F_n = P_n F`). A Nemytskij operator
    /// keeps its collocation grid, which must still resolve `n` modes.
    pub fn truncate(&self, n: usize) -> Result<Self> {
        match self {
            NonlinearitySpec::Zero => Ok(NonlinearitySpec::Zero),
            NonlinearitySpec::LinearDiagonal(b) => {
                if n > b.len() {
                    return Err(Error::domain(format!(
                        "cannot restrict {} linear coefficients to {n} modes",
                        b.len()
                    )));
                }
                Ok(NonlinearitySpec::LinearDiagonal(b[..n].to_vec()))
            }
            NonlinearitySpec::Nemytskij(nm) => {
                if n > nm.grid.points() {
                    return Err(Error::domain(format!(
                        "collocation grid of {} points cannot resolve {n} modes",
                        nm.grid.points()
                    )));
                }
                Ok(NonlinearitySpec::Nemytskij(nm.clone()))
            }
        }
    }

    /// `F_n(u)`.
    pub fn apply(&self, u: &SpectralField) -> Result<SpectralField> {
        match self {
            NonlinearitySpec::Zero => Ok(SpectralField::zeros(u.dim())),
            NonlinearitySpec::LinearDiagonal(b) => {
                u.check_dim(b.len(), "field")?;
                Ok(SpectralField::from_vec_unchecked(
                    u.coeffs().iter().zip(b).map(|(x, b)| b * x).collect(),
                ))
            }
            NonlinearitySpec::Nemytskij(nm) => nm.pointwise(u, |_, s| nm.function.value(s)),
        }
    }

    /// Directional derivative `F_n'(u) v`. The operator is symmetric in the
    /// sine basis for every kind, so this also applies the adjoint.
    pub fn derivative(&self, u: &SpectralField, v: &SpectralField) -> Result<SpectralField> {
        if u.dim() != v.dim() {
            return Err(Error::domain(format!(
                "derivative direction has dimension {}, state has {}",
                v.dim(),
                u.dim()
            )));
        }
        match self {
            NonlinearitySpec::Zero => Ok(SpectralField::zeros(u.dim())),
            NonlinearitySpec::LinearDiagonal(b) => {
                v.check_dim(b.len(), "direction")?;
                Ok(SpectralField::from_vec_unchecked(
                    v.coeffs().iter().zip(b).map(|(x, b)| b * x).collect(),
                ))
            }
            NonlinearitySpec::Nemytskij(nm) => {
                let us = nm.grid.evaluate(u)?;
                nm.pointwise(v, |k, vk| nm.function.derivative(us[k]) * vk)
            }
        }
    }
}

/// `F_n(u)` (free-function form).
pub fn apply_f(spec: &NonlinearitySpec, u: &SpectralField) -> Result<SpectralField> {
    spec.apply(u)
}

/// `F_n'(u) v` (free-function form).
pub fn apply_f_derivative(
    spec: &NonlinearitySpec,
    u: &SpectralField,
    v: &SpectralField,
) -> Result<SpectralField> {
    spec.derivative(u, v)
}

/// `c = λ_1 - L_F`; a nonpositive value means the drift is not dissipative.
pub fn dissipativity_constant(spec: &NonlinearitySpec, op: &OperatorSpec) -> f64 {
    op.lambda_min() - spec.lipschitz()
}
