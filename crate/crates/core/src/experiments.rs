//! Convergence studies for the preservation of rate functions under spatial
//! truncation and time stepping.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::montecarlo::least_squares_slope;
use crate::path::{Control, SpectralPath};
use crate::quasipotential::{
    minimize_quasipotential, minimize_quasipotential_full, quasipotential_linear, QuasipotentialOptions,
};
use crate::rate::{rate_full, rate_reference, rate_semi, rate_semi_with, QuadratureRule};
use crate::skeleton::{build_zn, solve_skeleton};
use crate::spectral::{project, SpectralField};
use crate::stream::ordered_map;

/// Sine coefficients of `ξ(1 - ξ)`: `4√2/(iπ)³` for odd `i`, zero for even `i`.
pub fn parabola_coefficients(n: usize) -> Result<SpectralField> {
    SpectralField::from_modes(n, |i| {
        if i % 2 == 1 {
            4.0 * std::f64::consts::SQRT_2 / (i as f64 * std::f64::consts::PI).powi(3)
        } else {
            0.0
        }
    })
}

/// Time-constant control with coefficients `amplitude · i^{-power}` on the
/// first `modes` of `n`.
pub fn algebraic_control(
    n: usize,
    modes: usize,
    power: f64,
    amplitude: f64,
    step: f64,
    intervals: usize,
) -> Result<Control> {
    let v = SpectralField::from_modes(n, |i| if i <= modes { amplitude * (i as f64).powf(-power) } else { 0.0 })?;
    Control::constant(step, intervals, v)
}

/// Least-squares slope of `log err` against `log x` over at least three
/// positive errors; `None` otherwise.
pub fn fit_order(x: &[f64], errors: &[f64]) -> Option<f64> {
    if x.len() != errors.len() || x.len() < 3 || errors.iter().any(|e| !(*e > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let le: Vec<f64> = errors.iter().map(|v| v.ln()).collect();
    Some(least_squares_slope(&lx, &le))
}

/// Non-increasing with each step allowed to rise by at most 5%.
fn monotone_within_band(errors: &[f64]) -> bool {
    errors.windows(2).all(|w| w[1] <= 1.05 * w[0])
}

fn strictly_decreasing(errors: &[f64]) -> bool {
    errors.windows(2).all(|w| w[1] < w[0])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderReport {
    pub variable: String,
    pub values: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path_errors: Option<Vec<f64>>,
    pub rate_errors: Vec<f64>,
    /// Independent estimate of the rate errors (quadrature or minimizer based).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cross_check: Option<Vec<f64>>,
    /// Observed convergence order of the rate errors; in `τ` for time
    /// ladders and in `1/n` for mode ladders.
    pub order: Option<f64>,
    pub path_order: Option<f64>,
    pub monotone: bool,
    pub strictly_decreasing: bool,
    pub pass: bool,
    pub notes: Vec<String>,
}

impl LadderReport {
    /// Plain-text table, one row per ladder value.
    pub fn table(&self) -> String {
        let mut s = format!("{:>12} {:>16} {:>16} {:>16}\n", self.variable, "path_error", "rate_error", "cross_check");
        for (k, v) in self.values.iter().enumerate() {
            let p = self.path_errors.as_ref().map_or("-".to_string(), |e| format!("{:.6e}", e[k]));
            let c = self.cross_check.as_ref().map_or("-".to_string(), |e| format!("{:.6e}", e[k]));
            s.push_str(&format!("{:>12} {:>16} {:>16.6e} {:>16}\n", v, p, self.rate_errors[k], c));
        }
        if let Some(o) = self.order {
            s.push_str(&format!("order {o:.4}\n"));
        }
        s.push_str(&format!("pass {}\n", self.pass));
        s
    }
}

fn check_ladder(values: &[f64], increasing: bool) -> Result<()> {
    if values.is_empty() {
        return Err(Error::domain("ladder is empty"));
    }
    let ok = values.windows(2).all(|w| if increasing { w[1] > w[0] } else { w[1] < w[0] });
    if !ok {
        return Err(Error::domain(format!(
            "ladder must be strictly {}",
            if increasing { "increasing" } else { "decreasing" }
        )));
    }
    Ok(())
}

/// Spatial path-rate preservation. For each `n`, `z_n` solves the `n`-mode
/// skeleton equation from `P_n x` driven by `P_n φ`; the report lists
/// `|z - z_n|_{C([0,T];H)}` against the reference path and the exact rate
/// error `½|(I - P_n)φ|²`, with the quadrature value
/// `|I_ref(z) - I^n(z_n)|` as a cross-check.
pub fn spatial_preservation_study(
    reference: &ModelSpec,
    x: &SpectralField,
    phi: &Control,
    n_ladder: &[usize],
    substeps: usize,
    rule: QuadratureRule,
) -> Result<LadderReport> {
    let big = reference.n();
    check_ladder(&n_ladder.iter().map(|n| *n as f64).collect::<Vec<_>>(), true)?;
    if n_ladder.iter().any(|n| *n == 0 || *n > big) {
        return Err(Error::domain(format!("ladder entries must lie in 1..={big}")));
    }
    let mut notes = Vec::new();
    let h2 = crate::spectral::sobolev_norm_sq(x, 2.0);
    let upper: f64 = x
        .coeffs()
        .iter()
        .enumerate()
        .skip(big / 2)
        .map(|(k, c)| (std::f64::consts::PI * (k + 1) as f64).powi(4) * c * c)
        .sum();
    if !h2.is_finite() || (h2 > 0.0 && upper > 0.5 * h2) {
        notes.push(format!(
            "initial condition may not lie in H^2: upper half of modes carries {upper:.3e} of the squared norm {h2:.3e}"
        ));
    }

    let z = solve_skeleton(reference, x, phi, substeps)?;
    let i_ref = rate_reference(reference, &z, x, rule)?.value;
    let rows = ordered_map(n_ladder.len(), |j| -> Result<(f64, f64, f64)> {
        let n = n_ladder[j];
        let zn = build_zn(reference, x, phi, n, substeps)?;
        let path_err = z.sup_distance(&zn)?;
        let tail: f64 = phi.step()
            * phi.values().iter().map(|v| v.coeffs()[n..].iter().map(|c| c * c).sum::<f64>()).sum::<f64>();
        let small = reference.truncate(n)?;
        let i_n = rate_semi_with(&small, &zn, &project(x, n)?, rule)?.value;
        Ok((path_err, 0.5 * tail, (i_ref - i_n).abs()))
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let path_errors: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let rate_errors: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let cross: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let inv_n: Vec<f64> = n_ladder.iter().map(|n| 1.0 / *n as f64).collect();
    let monotone = monotone_within_band(&path_errors) && monotone_within_band(&rate_errors);
    Ok(LadderReport {
        variable: "n".into(),
        values: n_ladder.iter().map(|n| *n as f64).collect(),
        order: fit_order(&inv_n, &rate_errors),
        path_order: fit_order(&inv_n, &path_errors),
        strictly_decreasing: strictly_decreasing(&path_errors) && strictly_decreasing(&rate_errors),
        pass: monotone,
        monotone,
        path_errors: Some(path_errors),
        rate_errors,
        cross_check: Some(cross),
        notes,
    })
}

/// Temporal rate gap `|I^{n,y}(z) - I^{n,τ,y}(z)|` along a decreasing `τ` ladder.
pub fn temporal_gap_study(
    model: &ModelSpec,
    z: &SpectralPath,
    y: &SpectralField,
    tau_ladder: &[f64],
) -> Result<LadderReport> {
    check_ladder(tau_ladder, false)?;
    let mut notes = Vec::new();
    let gaps = if model.nonlinearity.is_zero() {
        // validate grids even though every gap is zero
        for &tau in tau_ladder {
            rate_full(model, z, y, tau)?;
        }
        notes.push("F = 0: rate functionals coincide, gaps are exactly zero".into());
        vec![0.0; tau_ladder.len()]
    } else {
        let semi = rate_semi(model, z, y)?.value;
        let g = ordered_map(tau_ladder.len(), |j| -> Result<f64> {
            Ok((rate_full(model, z, y, tau_ladder[j])?.value - semi).abs())
        });
        g.into_iter().collect::<Result<Vec<_>>>()?
    };
    let zero = gaps.iter().all(|g| *g == 0.0);
    let monotone = monotone_within_band(&gaps);
    Ok(LadderReport {
        variable: "tau".into(),
        values: tau_ladder.to_vec(),
        path_errors: None,
        order: fit_order(tau_ladder, &gaps),
        path_order: None,
        strictly_decreasing: zero || strictly_decreasing(&gaps),
        pass: zero || strictly_decreasing(&gaps),
        monotone,
        rate_errors: gaps,
        cross_check: None,
        notes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuasipotentialPreservation {
    pub spatial: LadderReport,
    pub temporal: LadderReport,
}

/// Quasipotential preservation for a zero or linear-diagonal drift.
///
/// Spatial: `V(u) - V^n(P_n u) = Σ_{i>n} λ_i u_i²/q_i` in closed form, with
/// the minimizer's `V^n` as a cross-check for `n ≤ minimizer_max_n` (relative
/// disagreement, `NaN` where skipped). Temporal: `|V^n - V^{n,τ}|` at
/// `n = temporal_n` from the minimizer for each `τ`.
#[allow(clippy::too_many_arguments)]
pub fn quasipotential_preservation_study(
    reference: &ModelSpec,
    u: &SpectralField,
    n_ladder: &[usize],
    tau_ladder: &[f64],
    horizons: &[f64],
    temporal_n: usize,
    minimizer_max_n: usize,
    opts: &QuasipotentialOptions,
) -> Result<QuasipotentialPreservation> {
    let rates = reference.linear_rates().ok_or_else(|| {
        Error::NotApplicable("quasipotential preservation is only established for zero or linear drift".into())
    })?;
    u.check_dim(reference.n(), "target state")?;
    check_ladder(&n_ladder.iter().map(|n| *n as f64).collect::<Vec<_>>(), true)?;
    check_ladder(tau_ladder, false)?;
    let big = reference.n();
    if n_ladder.iter().chain(std::iter::once(&temporal_n)).any(|n| *n == 0 || *n > big) {
        return Err(Error::domain(format!("mode counts must lie in 1..={big}")));
    }
    let q = reference.operator.noise();
    let v_full = quasipotential_linear(reference, u)?;

    let rows = ordered_map(n_ladder.len(), |j| -> Result<(f64, f64)> {
        let n = n_ladder[j];
        let tail: f64 = (n..big).map(|i| rates[i] * u.coeffs()[i].powi(2) / q[i]).sum();
        let cross = if n <= minimizer_max_n {
            let small = reference.truncate(n)?;
            let pu = project(u, n)?;
            let closed = quasipotential_linear(&small, &pu)?;
            let found = minimize_quasipotential(&small, &pu, horizons, opts)?.value;
            if closed > 0.0 {
                (found - closed).abs() / closed
            } else {
                found
            }
        } else {
            f64::NAN
        };
        Ok((tail, cross))
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let errors: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let inv_n: Vec<f64> = n_ladder.iter().map(|n| 1.0 / *n as f64).collect();
    let monotone = monotone_within_band(&errors);
    let spatial = LadderReport {
        variable: "n".into(),
        values: n_ladder.iter().map(|n| *n as f64).collect(),
        path_errors: None,
        order: fit_order(&inv_n, &errors),
        path_order: None,
        strictly_decreasing: strictly_decreasing(&errors),
        pass: monotone,
        monotone,
        rate_errors: errors,
        cross_check: Some(rows.iter().map(|r| r.1).collect()),
        notes: vec![format!("V(u) at reference dimension {big}: {v_full}")],
    };

    let small = reference.truncate(temporal_n)?;
    let pu = project(u, temporal_n)?;
    let semi = minimize_quasipotential(&small, &pu, horizons, opts)?.value;
    let gaps = ordered_map(tau_ladder.len(), |j| -> Result<f64> {
        Ok((minimize_quasipotential_full(&small, &pu, tau_ladder[j], horizons, opts)?.value - semi).abs())
    });
    let gaps = gaps.into_iter().collect::<Result<Vec<_>>>()?;
    let tol = 2.0 * opts.value_tol * semi.max(1.0);
    let within = gaps.iter().all(|g| *g <= tol);
    let temporal = LadderReport {
        variable: "tau".into(),
        values: tau_ladder.to_vec(),
        path_errors: None,
        order: None,
        path_order: None,
        strictly_decreasing: strictly_decreasing(&gaps),
        monotone: monotone_within_band(&gaps),
        pass: within,
        rate_errors: gaps,
        cross_check: None,
        notes: vec![format!("n = {temporal_n}, V^n = {semi}, tolerance {tol:.3e}")],
    };
    Ok(QuasipotentialPreservation { spatial, temporal })
}
