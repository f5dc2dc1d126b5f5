//! Synthetic ground-truth distributions.
//!
//! A [`DistributionSpec`] is a class prior plus one Gaussian mixture with
//! diagonal covariance per class. Everything downstream (risks, scores,
//! best responses) is evaluated against it either in closed form, by
//! quadrature ([`integrate`]) or by Monte Carlo over [`sample_labeled`].

mod empirical;
mod normal;
mod quadrature;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

pub use empirical::{pushforward_empirical, sample_labeled, sample_rng, EmpiricalMeasure, LabeledSample, Transport, BUDGET_TOLERANCE};
pub use normal::{std_normal_cdf, std_normal_pdf};
pub use quadrature::{integrate, Grid};
pub(crate) use quadrature::axis_rule;

/// True class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "-1")]
    Neg,
    #[serde(rename = "1")]
    Pos,
}

impl Label {
    pub const BOTH: [Label; 2] = [Label::Neg, Label::Pos];

    pub fn sign(self) -> i8 {
        match self {
            Label::Neg => -1,
            Label::Pos => 1,
        }
    }

    pub fn value(self) -> f64 {
        f64::from(self.sign())
    }

    pub fn other(self) -> Label {
        match self {
            Label::Neg => Label::Pos,
            Label::Pos => Label::Neg,
        }
    }

    pub fn from_sign(s: i64) -> Result<Label> {
        match s {
            -1 => Ok(Label::Neg),
            1 => Ok(Label::Pos),
            other => Err(Error::InvalidInput(format!("label must be -1 or 1, got {other}"))),
        }
    }
}

/// One diagonal-covariance Gaussian component of a class conditional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Component {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl Component {
    pub fn new(weight: f64, mean: Vec<f64>, var: Vec<f64>) -> Self {
        Component { weight, mean, var }
    }

    /// Unweighted density at `x`.
    pub fn density(&self, x: &[f64]) -> f64 {
        let mut log_d = 0.0;
        for ((&xi, &m), &v) in x.iter().zip(&self.mean).zip(&self.var) {
            let z = xi - m;
            log_d += -0.5 * z * z / v - 0.5 * (2.0 * std::f64::consts::PI * v).ln();
        }
        log_d.exp()
    }

    pub fn std(&self, axis: usize) -> f64 {
        self.var[axis].sqrt()
    }
}

/// Ground-truth distribution: prior of label +1 and both class conditionals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionSpec {
    pub prior_pos: f64,
    pub dimension: usize,
    pub components_pos: Vec<Component>,
    pub components_neg: Vec<Component>,
}

impl DistributionSpec {
    /// Single-Gaussian-per-class spec with isotropic variance.
    pub fn gaussian_pair(prior_pos: f64, mean_neg: Vec<f64>, mean_pos: Vec<f64>, var: f64) -> Self {
        let d = mean_pos.len();
        DistributionSpec {
            prior_pos,
            dimension: d,
            components_pos: vec![Component::new(1.0, mean_pos, vec![var; d])],
            components_neg: vec![Component::new(1.0, mean_neg, vec![var; d])],
        }
    }

    /// The 1-D game used throughout: N(-1, 1) vs N(+1, 1) with equal priors.
    pub fn symmetric_1d() -> Self {
        Self::gaussian_pair(0.5, vec![-1.0], vec![1.0], 1.0)
    }

    /// Two-component mixture per class on the plane, XOR layout: +1 around
    /// (1, 1) and (-1, -1), -1 around (1, -1) and (-1, 1), each with
    /// isotropic variance `var`.
    pub fn xor_2d(var: f64) -> Self {
        let comp = |m: [f64; 2]| Component::new(0.5, m.to_vec(), vec![var; 2]);
        DistributionSpec {
            prior_pos: 0.5,
            dimension: 2,
            components_pos: vec![comp([1.0, 1.0]), comp([-1.0, -1.0])],
            components_neg: vec![comp([1.0, -1.0]), comp([-1.0, 1.0])],
        }
    }

    pub fn prior(&self, label: Label) -> f64 {
        match label {
            Label::Pos => self.prior_pos,
            Label::Neg => 1.0 - self.prior_pos,
        }
    }

    pub fn components(&self, label: Label) -> &[Component] {
        match label {
            Label::Pos => &self.components_pos,
            Label::Neg => &self.components_neg,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.prior_pos > 0.0 && self.prior_pos < 1.0) {
            return Err(Error::InvalidInput(format!(
                "prior_pos must lie in (0,1), got {}",
                self.prior_pos
            )));
        }
        if self.dimension == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        for label in Label::BOTH {
            let comps = self.components(label);
            if comps.is_empty() {
                return Err(Error::InvalidInput(format!("class {} has no components", label.sign())));
            }
            let mut total = 0.0;
            for c in comps {
                if c.mean.len() != self.dimension || c.var.len() != self.dimension {
                    return Err(Error::DimensionMismatch {
                        expected: self.dimension,
                        got: c.mean.len().max(c.var.len()),
                    });
                }
                if !(c.weight >= 0.0) {
                    return Err(Error::InvalidInput("mixture weights must be nonnegative".into()));
                }
                if c.var.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                    return Err(Error::InvalidInput("variances must be positive".into()));
                }
                total += c.weight;
            }
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidInput(format!(
                    "class {} mixture weights sum to {total}, expected 1",
                    label.sign()
                )));
            }
        }
        Ok(())
    }

    /// Per-axis bounds covering `k` standard deviations of every component
    /// of one class.
    pub fn bounds(&self, label: Label, k: f64) -> Vec<(f64, f64)> {
        (0..self.dimension)
            .map(|axis| {
                self.components(label).iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
                    let s = c.std(axis);
                    (lo.min(c.mean[axis] - k * s), hi.max(c.mean[axis] + k * s))
                })
            })
            .collect()
    }

    /// Bounds covering both classes.
    pub fn joint_bounds(&self, k: f64) -> Vec<(f64, f64)> {
        let a = self.bounds(Label::Neg, k);
        let b = self.bounds(Label::Pos, k);
        a.iter().zip(&b).map(|(x, y)| (x.0.min(y.0), x.1.max(y.1))).collect()
    }

    /// Largest component standard deviation over all axes and classes.
    pub fn max_std(&self) -> f64 {
        Label::BOTH
            .iter()
            .flat_map(|&l| self.components(l).iter())
            .flat_map(|c| c.var.iter())
            .fold(0.0_f64, |m, &v| m.max(v.sqrt()))
    }

    /// Distribution of the scaled decision value `(w·x + b) / scale` of a
    /// linear function, which is again a Gaussian mixture in one dimension.
    pub fn project_linear(&self, w: &[f64], b: f64, scale: f64) -> Result<DistributionSpec> {
        check_dim(self.dimension, w.len())?;
        let project = |comps: &[Component]| -> Vec<Component> {
            comps
                .iter()
                .map(|c| {
                    let m: f64 = w.iter().zip(&c.mean).map(|(wi, mi)| wi * mi).sum::<f64>() + b;
                    let v: f64 = w.iter().zip(&c.var).map(|(wi, vi)| wi * wi * vi).sum();
                    Component::new(c.weight, vec![m / scale], vec![v / (scale * scale)])
                })
                .collect()
        };
        Ok(DistributionSpec {
            prior_pos: self.prior_pos,
            dimension: 1,
            components_pos: project(&self.components_pos),
            components_neg: project(&self.components_neg),
        })
    }

    /// Class-conditional mass of the interval `(lo, hi)` for a 1-D spec.
    pub fn interval_mass(&self, label: Label, lo: f64, hi: f64) -> f64 {
        if !(hi > lo) {
            return 0.0;
        }
        self.components(label)
            .iter()
            .map(|c| {
                let (m, s) = (c.mean[0], c.std(0));
                c.weight * normal::interval_prob((lo - m) / s, (hi - m) / s)
            })
            .sum()
    }

    /// `∫_(lo,hi) |x - p| dμ_label(x)` for a 1-D spec.
    pub fn interval_abs_moment(&self, label: Label, lo: f64, hi: f64, p: f64) -> f64 {
        if !(hi > lo) {
            return 0.0;
        }
        let below = (lo, hi.min(p));
        let above = (lo.max(p), hi);
        self.components(label)
            .iter()
            .map(|c| {
                let (m, s) = (c.mean[0], c.std(0));
                // ∫_a^b (x - p) dN(m, s²) = (m - p)·P(a<X<b) + s·(φ(a') - φ(b'))
                let signed = |a: f64, b: f64| -> f64 {
                    if !(b > a) {
                        return 0.0;
                    }
                    let (za, zb) = ((a - m) / s, (b - m) / s);
                    (m - p) * normal::interval_prob(za, zb) + s * (std_normal_pdf(za) - std_normal_pdf(zb))
                };
                c.weight * (signed(above.0, above.1) - signed(below.0, below.1))
            })
            .sum()
    }
}

/// Class-conditional density μ_label(x).
pub fn density(spec: &DistributionSpec, label: Label, x: &[f64]) -> Result<f64> {
    check_dim(spec.dimension, x.len())?;
    Ok(density_unchecked(spec, label, x))
}

pub(crate) fn density_unchecked(spec: &DistributionSpec, label: Label, x: &[f64]) -> f64 {
    spec.components(label).iter().map(|c| c.weight * c.density(x)).sum()
}

/// Posterior probability of label +1 at `x`. Returns 0.5 where both
/// weighted densities vanish.
pub fn posterior(spec: &DistributionSpec, x: &[f64]) -> Result<f64> {
    check_dim(spec.dimension, x.len())?;
    let p = spec.prior(Label::Pos) * density_unchecked(spec, Label::Pos, x);
    let n = spec.prior(Label::Neg) * density_unchecked(spec, Label::Neg, x);
    if p + n == 0.0 {
        return Ok(0.5);
    }
    Ok(p / (p + n))
}
