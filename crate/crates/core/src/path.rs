//! Time-discretized paths `z ∈ C([0,T]; H_n)` and piecewise-constant controls
//! `ψ ∈ L²(0,T; H_n)` on uniform grids.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::spectral::SpectralField;

fn check_step(step: f64) -> Result<()> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::domain(format!("grid step must be positive, got {step}")));
    }
    Ok(())
}

/// Nodes `z(kh)`, `k = 0..=K`, of a path starting at time 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPath {
    step: f64,
    nodes: Vec<SpectralField>,
}

impl SpectralPath {
    pub fn new(step: f64, nodes: Vec<SpectralField>) -> Result<Self> {
        check_step(step)?;
        if nodes.len() < 2 {
            return Err(Error::domain("a path needs at least two nodes"));
        }
        let n = nodes[0].dim();
        for (k, z) in nodes.iter().enumerate() {
            z.check_dim(n, &format!("node {k}"))?;
            if !z.is_finite() {
                return Err(Error::domain(format!("node {k} is not finite")));
            }
        }
        Ok(SpectralPath { step, nodes })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn nodes(&self) -> &[SpectralField] {
        &self.nodes
    }

    pub fn into_nodes(self) -> Vec<SpectralField> {
        self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of grid intervals.
    pub fn intervals(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.step * self.intervals() as f64
    }

    pub fn dim(&self) -> usize {
        self.nodes[0].dim()
    }

    pub fn start(&self) -> &SpectralField {
        &self.nodes[0]
    }

    pub fn end(&self) -> &SpectralField {
        self.nodes.last().unwrap()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    /// Values of one mode (1-based) along the path.
    pub fn mode(&self, mode: usize) -> Vec<f64> {
        self.nodes.iter().map(|z| z.coeffs()[mode - 1]).collect()
    }

    /// Grid approximation of `|self - other|_{C([0,T];H)}`; paths of different
    /// dimension are compared with the missing modes taken as zero.
    pub fn sup_distance(&self, other: &SpectralPath) -> Result<f64> {
        if self.nodes.len() != other.nodes.len() || (self.step - other.step).abs() > 1e-12 * self.step {
            return Err(Error::Grid(format!(
                "paths live on different grids ({} nodes, h = {}) vs ({} nodes, h = {})",
                self.nodes.len(),
                self.step,
                other.nodes.len(),
                other.step
            )));
        }
        Ok(self
            .nodes
            .iter()
            .zip(&other.nodes)
            .map(|(a, b)| a.distance(b))
            .fold(0.0, f64::max))
    }

    /// Largest jump between consecutive nodes, a proxy for the modulus of
    /// continuity on the grid.
    pub fn grid_modulus(&self) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| w[0].distance(&w[1]))
            .fold(0.0, f64::max)
    }

    /// Every `stride`-th node (the last node is always kept when it falls on the stride).
    pub fn subsample(&self, stride: usize) -> Result<SpectralPath> {
        if stride == 0 || !self.intervals().is_multiple_of(stride) {
            return Err(Error::Grid(format!(
                "stride {stride} does not divide {} intervals",
                self.intervals()
            )));
        }
        SpectralPath::new(
            self.step * stride as f64,
            self.nodes.iter().step_by(stride).cloned().collect(),
        )
    }

    /// CSV with header `t,mode_1,...,mode_n`, preceded by `# ...` comment lines.
    pub fn to_csv(&self, comments: &[String]) -> String {
        let mut out = String::new();
        for c in comments {
            let _ = writeln!(out, "# {c}");
        }
        out.push('t');
        for i in 1..=self.dim() {
            let _ = write!(out, ",mode_{i}");
        }
        out.push('\n');
        for (k, z) in self.nodes.iter().enumerate() {
            let _ = write!(out, "{}", self.time(k));
            for c in z.coeffs() {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }

    /// Parses the format written by [`to_csv`](Self::to_csv). The grid step is
    /// recovered from the time column, which must be uniform.
    pub fn from_csv(text: &str) -> Result<SpectralPath> {
        let parse_err = |m: String| Error::Parse {
            what: "path CSV".into(),
            message: m,
        };
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| parse_err("empty file".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.first() != Some(&"t") || cols.len() < 2 {
            return Err(parse_err(format!("bad header `{header}`")));
        }
        let n = cols.len() - 1;
        let mut times = Vec::new();
        let mut nodes = Vec::new();
        for (row, line) in lines.enumerate() {
            let vals = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| parse_err(format!("row {}: {e}", row + 1)))?;
            if vals.len() != n + 1 {
                return Err(parse_err(format!(
                    "row {} has {} columns, expected {}",
                    row + 1,
                    vals.len(),
                    n + 1
                )));
            }
            times.push(vals[0]);
            nodes.push(SpectralField::new(vals[1..].to_vec())?);
        }
        if times.len() < 2 {
            return Err(parse_err("need at least two rows".into()));
        }
        let step = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
        for (k, t) in times.iter().enumerate() {
            if (t - times[0] - k as f64 * step).abs() > 1e-9 * (1.0 + t.abs()) {
                return Err(parse_err(format!("time column is not uniform at row {}", k + 1)));
            }
        }
        SpectralPath::new(step, nodes)
    }
}

/// Piecewise-constant control: `ψ(t) = ψ_k` on `[kh, (k+1)h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Control {
    step: f64,
    values: Vec<SpectralField>,
}

impl Control {
    pub fn new(step: f64, values: Vec<SpectralField>) -> Result<Self> {
        check_step(step)?;
        if values.is_empty() {
            return Err(Error::domain("a control needs at least one interval"));
        }
        let n = values[0].dim();
        for (k, v) in values.iter().enumerate() {
            v.check_dim(n, &format!("control interval {k}"))?;
            if !v.is_finite() {
                return Err(Error::domain(format!("control interval {k} is not finite")));
            }
        }
        Ok(Control { step, values })
    }

    /// The same value on `intervals` intervals of width `step`.
    pub fn constant(step: f64, intervals: usize, value: SpectralField) -> Result<Self> {
        Self::new(step, vec![value; intervals])
    }

    /// `ψ_k = g(t_k + h/2)` sampled at interval midpoints.
    pub fn from_fn(
        step: f64,
        intervals: usize,
        g: impl Fn(f64) -> SpectralField,
    ) -> Result<Self> {
        Self::new(
            step,
            (0..intervals).map(|k| g((k as f64 + 0.5) * step)).collect(),
        )
    }

    pub fn zeros(n: usize, step: f64, intervals: usize) -> Result<Self> {
        Self::constant(step, intervals, SpectralField::zeros(n))
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn values(&self) -> &[SpectralField] {
        &self.values
    }

    pub fn intervals(&self) -> usize {
        self.values.len()
    }

    pub fn horizon(&self) -> f64 {
        self.step * self.values.len() as f64
    }

    pub fn dim(&self) -> usize {
        self.values[0].dim()
    }

    /// `|ψ|²_{L²(0,T;H)} = h Σ_k |ψ_k|²`, exact for piecewise-constant controls.
    pub fn l2_norm_sq(&self) -> f64 {
        self.step * self.values.iter().map(SpectralField::norm_sq).sum::<f64>()
    }

    /// `P_n ψ`.
    pub fn project(&self, n: usize) -> Result<Control> {
        let values = self
            .values
            .iter()
            .map(|v| crate::spectral::project(v, n))
            .collect::<Result<Vec<_>>>()?;
        Control::new(self.step, values)
    }

    /// Refines every interval into `factor` equal pieces.
    pub fn refine(&self, factor: usize) -> Result<Control> {
        if factor == 0 {
            return Err(Error::domain("refinement factor must be positive"));
        }
        let values = self
            .values
            .iter()
            .flat_map(|v| std::iter::repeat_n(v.clone(), factor))
            .collect();
        Control::new(self.step / factor as f64, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(c: &[f64]) -> SpectralField {
        SpectralField::new(c.to_vec()).unwrap()
    }

    #[test]
    fn csv_round_trip() {
        let p = SpectralPath::new(0.1, vec![f(&[1.0, -0.5]), f(&[0.25, 1e-17]), f(&[0.1, 3.0])]).unwrap();
        let text = p.to_csv(&["seed=1".into()]);
        assert!(text.starts_with("# seed=1\nt,mode_1,mode_2\n0,1,-0.5\n"));
        let q = SpectralPath::from_csv(&text).unwrap();
        assert_eq!(q.nodes(), p.nodes());
        assert!((q.step() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(SpectralPath::new(0.1, vec![f(&[1.0])]).is_err());
        assert!(SpectralPath::new(0.0, vec![f(&[1.0]), f(&[1.0])]).is_err());
        assert!(SpectralPath::new(0.1, vec![f(&[1.0]), f(&[1.0, 2.0])]).is_err());
        assert!(SpectralPath::from_csv("t,mode_1\n0,1\n0.1,2\n0.3,3\n").is_err());
        assert!(SpectralPath::from_csv("x,mode_1\n0,1\n").is_err());
    }

    #[test]
    fn control_norms() {
        let c = Control::constant(0.25, 4, f(&[1.0, 2.0])).unwrap();
        assert_eq!(c.l2_norm_sq(), 5.0);
        assert_eq!(c.project(1).unwrap().l2_norm_sq(), 1.0);
        assert_eq!(c.refine(3).unwrap().l2_norm_sq(), 5.0);
        assert_eq!(c.horizon(), 1.0);
    }

    #[test]
    fn sup_distance_pads_missing_modes() {
        let a = SpectralPath::new(1.0, vec![f(&[1.0, 1.0]), f(&[0.0, 2.0])]).unwrap();
        let b = SpectralPath::new(1.0, vec![f(&[1.0]), f(&[0.0])]).unwrap();
        assert_eq!(a.sup_distance(&b).unwrap(), 2.0);
    }
}
