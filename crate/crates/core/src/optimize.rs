//! Smooth unconstrained and projected first-order minimizers on flat
//! `Vec<f64>` variables.
//!
//! Objectives are closures `f(x, grad) -> Result<value>` that fill `grad`.
//! An `Err` or non-finite value during a line search counts as `+∞` and
//! shrinks the step; at the starting point it is returned to the caller.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExitReason {
    Converged,
    MaxIterations,
    /// No sufficient decrease along the search direction within the
    /// backtracking budget; usually the objective is flat to rounding.
    LineSearchFailed,
    /// The objective stopped decreasing by more than rounding for
    /// `stall_iters` consecutive iterations; the value is as accurate as the
    /// arithmetic allows but the gradient test was not met.
    RoundingFloor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm_inf: f64,
    pub iterations: usize,
    pub exit: ExitReason,
}

impl Minimum {
    pub fn converged(&self) -> bool {
        self.exit == ExitReason::Converged
    }

    /// Converged, or stalled at the rounding floor of the objective.
    pub fn settled(&self) -> bool {
        matches!(self.exit, ExitReason::Converged | ExitReason::RoundingFloor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    /// Exit when `|∇f|_∞ ≤ grad_tol`.
    pub grad_tol: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
    pub stall_iters: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            memory: 10,
            max_iter: 20_000,
            grad_tol: 1e-9,
            armijo: 1e-4,
            max_backtracks: 60,
            stall_iters: 25,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn eval<F>(f: &mut F, x: &[f64], g: &mut [f64]) -> f64
where
    F: FnMut(&[f64], &mut [f64]) -> Result<f64>,
{
    match f(x, g) {
        Ok(v) if v.is_finite() && g.iter().all(|c| c.is_finite()) => v,
        _ => f64::INFINITY,
    }
}

/// Limited-memory BFGS with the two-loop recursion and Armijo backtracking.
pub fn lbfgs<F>(mut f: F, x0: Vec<f64>, opts: &LbfgsOptions) -> Result<Minimum>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<f64>,
{
    if opts.memory == 0 {
        return Err(Error::domain("L-BFGS memory must be positive"));
    }
    let dim = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; dim];
    let mut fx = f(&x, &mut g)?;
    if !fx.is_finite() {
        return Err(Error::domain("objective is not finite at the starting point"));
    }
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho: Vec<f64> = Vec::new();
    let mut x_new = vec![0.0; dim];
    let mut g_new = vec![0.0; dim];
    let mut dir = vec![0.0; dim];
    let mut alpha = vec![0.0; opts.memory];
    let mut stalled = 0;

    for iter in 0..opts.max_iter {
        let gn = norm_inf(&g);
        if gn <= opts.grad_tol {
            return Ok(Minimum { x, value: fx, grad_norm_inf: gn, iterations: iter, exit: ExitReason::Converged });
        }

        dir.copy_from_slice(&g);
        let m = s_hist.len();
        for j in (0..m).rev() {
            alpha[j] = rho[j] * dot(&s_hist[j], &dir);
            for (d, y) in dir.iter_mut().zip(&y_hist[j]) {
                *d -= alpha[j] * y;
            }
        }
        let gamma = match m {
            0 => 1.0 / dot(&g, &g).sqrt().max(f64::MIN_POSITIVE),
            _ => dot(&s_hist[m - 1], &y_hist[m - 1]) / dot(&y_hist[m - 1], &y_hist[m - 1]),
        };
        for d in dir.iter_mut() {
            *d *= gamma;
        }
        for j in 0..m {
            let beta = rho[j] * dot(&y_hist[j], &dir);
            for (d, s) in dir.iter_mut().zip(&s_hist[j]) {
                *d += (alpha[j] - beta) * s;
            }
        }
        for d in dir.iter_mut() {
            *d = -*d;
        }
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            // lost descent: restart from steepest descent
            s_hist.clear();
            y_hist.clear();
            rho.clear();
            let scale = 1.0 / dot(&g, &g).sqrt();
            for (d, gi) in dir.iter_mut().zip(&g) {
                *d = -gi * scale;
            }
            slope = dot(&g, &dir);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            for i in 0..dim {
                x_new[i] = x[i] + step * dir[i];
            }
            let f_new = eval(&mut f, &x_new, &mut g_new);
            if f_new <= fx + opts.armijo * step * slope {
                accepted = Some(f_new);
                break;
            }
            step *= 0.5;
        }
        let Some(f_new) = accepted else {
            return Ok(Minimum { x, value: fx, grad_norm_inf: gn, iterations: iter, exit: ExitReason::LineSearchFailed });
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if s_hist.len() == opts.memory {
                s_hist.remove(0);
                y_hist.remove(0);
                rho.remove(0);
            }
            s_hist.push(s);
            y_hist.push(y);
            rho.push(1.0 / sy);
        }
        if fx - f_new <= 4.0 * f64::EPSILON * fx.abs() {
            stalled += 1;
        } else {
            stalled = 0;
        }
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        fx = f_new;
        if stalled >= opts.stall_iters {
            let gn = norm_inf(&g);
            let exit = if gn <= opts.grad_tol { ExitReason::Converged } else { ExitReason::RoundingFloor };
            return Ok(Minimum { x, value: fx, grad_norm_inf: gn, iterations: iter + 1, exit });
        }
    }
    let gn = norm_inf(&g);
    let exit = if gn <= opts.grad_tol { ExitReason::Converged } else { ExitReason::MaxIterations };
    Ok(Minimum { x, value: fx, grad_norm_inf: gn, iterations: opts.max_iter, exit })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedOptions {
    pub max_iter: usize,
    /// Exit when the projected-gradient step `|x - P(x - ∇f/L)|_∞ · L` falls below this.
    pub grad_tol: f64,
    /// Initial Lipschitz estimate; increased by backtracking.
    pub lipschitz: f64,
}

impl Default for ProjectedOptions {
    fn default() -> Self {
        ProjectedOptions { max_iter: 50_000, grad_tol: 1e-9, lipschitz: 1.0 }
    }
}

/// Accelerated projected gradient (FISTA with backtracking and adaptive
/// restart) for `min f(x)` over a closed convex set given by its projection.
pub fn projected_gradient<F, P>(mut f: F, project: P, x0: Vec<f64>, opts: &ProjectedOptions) -> Result<Minimum>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<f64>,
    P: Fn(&mut [f64]),
{
    let dim = x0.len();
    let mut x = x0;
    project(&mut x);
    let mut gx = vec![0.0; dim];
    let mut fx = f(&x, &mut gx)?;
    if !fx.is_finite() {
        return Err(Error::domain("objective is not finite at the starting point"));
    }
    let mut lip = opts.lipschitz.max(f64::MIN_POSITIVE);
    let mut yv = x.clone();
    let mut gy = gx.clone();
    let mut fy = fx;
    let mut t: f64 = 1.0;
    let mut cand = vec![0.0; dim];
    let mut gc = vec![0.0; dim];
    let mut last_gap = f64::INFINITY;

    for iter in 0..opts.max_iter {
        // backtracking on the quadratic upper model at y
        let fc = loop {
            for i in 0..dim {
                cand[i] = yv[i] - gy[i] / lip;
            }
            project(&mut cand);
            let fc = eval(&mut f, &cand, &mut gc);
            let mut model = fy;
            for i in 0..dim {
                let d = cand[i] - yv[i];
                model += gy[i] * d + 0.5 * lip * d * d;
            }
            if fc <= model + 1e-12 * model.abs() {
                break fc;
            }
            lip *= 2.0;
            if !lip.is_finite() {
                return Err(Error::domain("projected gradient: Lipschitz estimate overflowed"));
            }
        };
        let gap = cand.iter().zip(&yv).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) * lip;
        last_gap = gap;
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        if gap <= opts.grad_tol {
            let (x, value) = if fc <= fx { (cand, fc) } else { (x, fx) };
            return Ok(Minimum { x, value, grad_norm_inf: gap, iterations: iter + 1, exit: ExitReason::Converged });
        }
        if fc > fx && t > 1.0 {
            // adaptive restart: drop momentum, restart from x
            t = 1.0;
            yv.copy_from_slice(&x);
            gy.copy_from_slice(&gx);
            fy = fx;
            continue;
        }
        let mom = (t - 1.0) / t_next;
        for i in 0..dim {
            yv[i] = cand[i] + mom * (cand[i] - x[i]);
        }
        project(&mut yv);
        std::mem::swap(&mut x, &mut cand);
        std::mem::swap(&mut gx, &mut gc);
        fx = fc;
        fy = eval(&mut f, &yv, &mut gy);
        t = t_next;
        // let the estimate relax so a pessimistic early L does not stall progress
        lip *= 0.95;
    }
    Ok(Minimum { x, value: fx, grad_norm_inf: last_gap, iterations: opts.max_iter, exit: ExitReason::MaxIterations })
}
