use super::{density_unchecked, DistributionSpec, Label};
use crate::error::{Error, Result};

// 4-point Gauss–Legendre rule on [-1, 1].
const GL_NODES: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
const GL_WEIGHTS: [f64; 4] = [
    0.347_854_845_137_453_9,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_9,
];

/// Quadrature grid.
///
/// The domain is split into uniform panels, each carrying a 4-point
/// Gauss–Legendre rule, so `points_per_axis / 4` panels per axis. In 1-D,
/// `breaks` adds panel edges at known discontinuities of the integrand; no
/// node ever sits on a break.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub points_per_axis: usize,
    /// Explicit bounds per axis; defaults to ±8σ of every component.
    pub bounds: Option<Vec<(f64, f64)>>,
    pub breaks: Vec<f64>,
}

impl Default for Grid {
    fn default() -> Self {
        Grid { points_per_axis: 1 << 14, bounds: None, breaks: Vec::new() }
    }
}

impl Grid {
    pub fn with_points(points_per_axis: usize) -> Self {
        Grid { points_per_axis, ..Grid::default() }
    }

    /// Default resolution for a dimension: 2^14 nodes per axis in 1-D and
    /// 2^10 in 2-D.
    pub fn for_dimension(d: usize) -> Self {
        if d >= 2 {
            Grid::with_points(1 << 10)
        } else {
            Grid::default()
        }
    }

    pub fn with_breaks(mut self, breaks: Vec<f64>) -> Self {
        self.breaks = breaks;
        self
    }

    pub fn with_bounds(mut self, bounds: Vec<(f64, f64)>) -> Self {
        self.bounds = Some(bounds);
        self
    }

    pub fn doubled(&self) -> Self {
        Grid { points_per_axis: self.points_per_axis * 2, ..self.clone() }
    }

    fn panels(&self) -> usize {
        (self.points_per_axis / 4).max(1)
    }
}

/// `(node, weight)` pairs for one axis over `[lo, hi]`, splitting at the
/// interior breaks.
pub(crate) fn axis_rule(lo: f64, hi: f64, panels: usize, breaks: &[f64]) -> Vec<(f64, f64)> {
    let mut edges: Vec<f64> = breaks.iter().copied().filter(|b| *b > lo && *b < hi).collect();
    edges.push(lo);
    edges.push(hi);
    edges.sort_by(f64::total_cmp);
    edges.dedup();
    let total = hi - lo;
    let mut rule = Vec::with_capacity(panels * 4 + 4 * edges.len());
    for seg in edges.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let n = ((panels as f64) * (b - a) / total).ceil().max(1.0) as usize;
        let h = (b - a) / n as f64;
        for k in 0..n {
            let left = a + h * k as f64;
            let mid = left + 0.5 * h;
            for (node, weight) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
                rule.push((mid + 0.5 * h * node, 0.5 * h * weight));
            }
        }
    }
    rule
}

/// Deterministic quadrature estimate of `E_{X ~ μ_label}[f(X)]` (d ≤ 2).
pub fn integrate<F>(f: F, spec: &DistributionSpec, label: Label, grid: &Grid) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let d = spec.dimension;
    if d > 2 {
        return Err(Error::UnsupportedDimension(d));
    }
    let bounds = grid.bounds.clone().unwrap_or_else(|| spec.bounds(label, 8.0));
    if bounds.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: bounds.len() });
    }
    let panels = grid.panels();
    match d {
        1 => {
            let rule = axis_rule(bounds[0].0, bounds[0].1, panels, &grid.breaks);
            let mut acc = 0.0;
            let mut x = [0.0];
            for (node, w) in rule {
                x[0] = node;
                let dens = density_unchecked(spec, label, &x);
                if dens > 0.0 {
                    acc += w * dens * f(&x);
                }
            }
            Ok(acc)
        }
        _ => {
            let rx = axis_rule(bounds[0].0, bounds[0].1, panels, &[]);
            let ry = axis_rule(bounds[1].0, bounds[1].1, panels, &[]);
            let mut acc = 0.0;
            let mut x = [0.0, 0.0];
            for &(nx, wx) in &rx {
                x[0] = nx;
                let mut row = 0.0;
                for &(ny, wy) in &ry {
                    x[1] = ny;
                    let dens = density_unchecked(spec, label, &x);
                    if dens > 0.0 {
                        row += wy * dens * f(&x);
                    }
                }
                acc += wx * row;
            }
            Ok(acc)
        }
    }
}
