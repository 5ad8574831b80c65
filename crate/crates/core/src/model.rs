use crate::error::{Error, Result};
use crate::nonlinearity::{dissipativity_constant, NonlinearitySpec};
use crate::spectral::{OperatorSpec, SpectralField};

/// A Galerkin model `dX = (A_n X + F_n(X)) dt + ε Q_n^{1/2} dW_n`.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub operator: OperatorSpec,
    pub nonlinearity: NonlinearitySpec,
}

impl ModelSpec {
    pub fn new(operator: OperatorSpec, nonlinearity: NonlinearitySpec) -> Result<Self> {
        if let NonlinearitySpec::LinearDiagonal(b) = &nonlinearity {
            if b.len() != operator.n() {
                return Err(Error::domain(format!(
                    "linear drift has {} coefficients for a {}-mode operator",
                    b.len(),
                    operator.n()
                )));
            }
        }
        if let NonlinearitySpec::Nemytskij(nm) = &nonlinearity {
            if nm.grid().points() < operator.n() {
                return Err(Error::domain(format!(
                    "collocation grid of {} points cannot resolve {} modes",
                    nm.grid().points(),
                    operator.n()
                )));
            }
        }
        Ok(ModelSpec {
            operator,
            nonlinearity,
        })
    }

    /// Linear model (`F ≡ 0`) with `q_i = λ_i^{-decay}`.
    pub fn linear(n: usize, decay: f64) -> Result<Self> {
        Self::new(OperatorSpec::with_decay(n, decay)?, NonlinearitySpec::Zero)
    }

    pub fn n(&self) -> usize {
        self.operator.n()
    }

    /// The model restricted to the first `n` modes.
    pub fn truncate(&self, n: usize) -> Result<Self> {
        Self::new(self.operator.truncate(n)?, self.nonlinearity.truncate(n)?)
    }

    /// `c = λ_1 - L_F`.
    pub fn dissipativity(&self) -> f64 {
        dissipativity_constant(&self.nonlinearity, &self.operator)
    }

    /// Checks `F(0) = 0` and `L_F < λ_1`.
    pub fn require_dissipative(&self) -> Result<()> {
        if !self.nonlinearity.preserves_zero() {
            return Err(Error::domain("nonlinearity does not vanish at zero"));
        }
        let c = self.dissipativity();
        if c <= 0.0 {
            return Err(Error::domain(format!(
                "L_F = {} is not below lambda_1 = {} (dissipativity constant {c})",
                self.nonlinearity.lipschitz(),
                self.operator.lambda_min()
            )));
        }
        Ok(())
    }

    /// Decay rates with any linear-diagonal drift folded in (`λ_i - b_i`), or
    /// `None` when the drift is genuinely nonlinear.
    pub fn linear_rates(&self) -> Option<Vec<f64>> {
        let l = self.operator.eigenvalues();
        match &self.nonlinearity {
            NonlinearitySpec::Zero => Some(l.to_vec()),
            NonlinearitySpec::LinearDiagonal(b) => {
                Some(l.iter().zip(b).map(|(l, b)| l - b).collect())
            }
            NonlinearitySpec::Nemytskij(_) => None,
        }
    }

    /// Rates treated exactly by exponential marches plus whether an explicit
    /// (frozen) nonlinear term remains.
    pub(crate) fn exponential_split(&self) -> (Vec<f64>, bool) {
        match self.linear_rates() {
            Some(r) => (r, false),
            None => (self.operator.eigenvalues().to_vec(), true),
        }
    }

    /// Full drift `A_n u + F_n(u)`.
    pub fn drift(&self, u: &SpectralField) -> Result<SpectralField> {
        let a = self.operator.a_apply(u)?;
        let f = self.nonlinearity.apply(u)?;
        Ok(a.axpy(1.0, &f))
    }
}
