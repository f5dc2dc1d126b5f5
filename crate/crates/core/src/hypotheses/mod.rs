//! Deterministic classifiers `h = sign ∘ g` and their finite mixtures.

mod mixture;
pub mod profile;
mod region;

use serde::{Deserialize, Serialize};

use crate::distributions::{density_unchecked, DistributionSpec, Label};
use crate::error::{check_dim, Error, Result};
use crate::norm::{sign, NormKind};
use crate::training::mlp::MlpModel;

pub use mixture::MixedClassifier;
pub use profile::{ErrorProfile, Profile1d, Run};
pub use region::{Interval, Region};

/// Scan window for 1-D kinds whose boundary has no closed form and which
/// carry no distribution to size it from.
pub const DEFAULT_WINDOW: (f64, f64) = (-20.0, 20.0);
const SCAN_POINTS: usize = 20_001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    #[serde(rename = "+")]
    Pos,
    #[serde(rename = "-")]
    Neg,
}

impl Orientation {
    pub fn value(self) -> f64 {
        match self {
            Orientation::Pos => 1.0,
            Orientation::Neg => -1.0,
        }
    }
}

/// Probabilities of the outputs -1, 0 (boundary) and +1.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OutputDistribution {
    pub neg: f64,
    pub abstain: f64,
    pub pos: f64,
}

impl OutputDistribution {
    pub fn deterministic(s: i8) -> Self {
        match s.signum() {
            1 => OutputDistribution { pos: 1.0, ..Default::default() },
            -1 => OutputDistribution { neg: 1.0, ..Default::default() },
            _ => OutputDistribution { abstain: 1.0, ..Default::default() },
        }
    }

    pub fn prob(&self, label: Label) -> f64 {
        match label {
            Label::Pos => self.pos,
            Label::Neg => self.neg,
        }
    }

    /// Probability of not outputting `label`; abstention is an error.
    pub fn error(&self, label: Label) -> f64 {
        match label {
            Label::Pos => self.neg + self.abstain,
            Label::Neg => self.pos + self.abstain,
        }
    }

    pub fn negated(&self) -> Self {
        OutputDistribution { neg: self.pos, abstain: self.abstain, pos: self.neg }
    }

    pub fn add_scaled(&self, other: &Self, w: f64) -> Self {
        OutputDistribution { neg: self.neg + w * other.neg, abstain: self.abstain + w * other.abstain, pos: self.pos + w * other.pos }
    }

    pub fn total(&self) -> f64 {
        self.neg + self.abstain + self.pos
    }

    pub fn deterministic_sign(&self) -> Option<i8> {
        if self.pos == 1.0 {
            Some(1)
        } else if self.neg == 1.0 {
            Some(-1)
        } else if self.abstain == 1.0 {
            Some(0)
        } else {
            None
        }
    }
}

/// Anything that outputs a (possibly random) label.
pub trait Classifier: Send + Sync {
    /// Input dimension, `None` when any dimension is accepted.
    fn dimension(&self) -> Option<usize>;
    fn output_distribution(&self, x: &[f64]) -> Result<OutputDistribution>;
    /// Exact piecewise description in 1-D, scanning `window` where no closed
    /// form exists.
    fn profile_1d(&self, window: (f64, f64)) -> Result<Profile1d>;

    fn error_prob(&self, x: &[f64], label: Label) -> Result<f64> {
        Ok(self.output_distribution(x)?.error(label))
    }

    /// `(w, b)` when the classifier is `sign(w·x + b)`.
    fn linear_form(&self) -> Option<(Vec<f64>, f64)> {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Hypothesis {
    /// 1-D, `g(x) = orientation·(x − t)`.
    Threshold { t: f64, orientation: Orientation },
    /// `g(x) = w·x + b`.
    Linear { w: Vec<f64>, b: f64 },
    Mlp { model: MlpModel },
    /// `g(x) = ν₁μ₁(x) − ν₋₁μ₋₁(x)`.
    Bayes { spec: DistributionSpec },
    /// `−g` inside the region, `g` elsewhere. Discontinuous.
    RegionFlip { base: Box<Hypothesis>, region: Region },
    /// 1-D labels on the intervals between sorted breaks and at the breaks
    /// themselves. Discontinuous; `g` is the label.
    Piecewise1d { breaks: Vec<f64>, interval_labels: Vec<i8>, point_labels: Vec<i8> },
    /// 2-D labels on a `bins × bins` grid over `[lo, hi]`, row-major in the
    /// first coordinate; points outside use the nearest cell. Discontinuous.
    Grid2d { lo: [f64; 2], hi: [f64; 2], bins: usize, labels: Vec<i8> },
}

/// Bayes classifier of the spec.
pub fn bayes_optimal(spec: &DistributionSpec) -> Hypothesis {
    Hypothesis::Bayes { spec: spec.clone() }
}

pub fn decision_value(h: &Hypothesis, x: &[f64]) -> Result<f64> {
    h.decision_value(x)
}

pub fn predict(h: &Hypothesis, x: &[f64]) -> Result<i8> {
    h.predict(x)
}

pub fn attackable_region(h: &Hypothesis, delta: f64, norm: NormKind) -> Result<(Region, Region)> {
    h.attackable_region(delta, norm)
}

impl Hypothesis {
    pub fn threshold(t: f64, orientation: Orientation) -> Self {
        Hypothesis::Threshold { t, orientation }
    }

    pub fn linear(w: Vec<f64>, b: f64) -> Self {
        Hypothesis::Linear { w, b }
    }

    pub fn flip(base: Hypothesis, region: Region) -> Self {
        Hypothesis::RegionFlip { base: Box::new(base), region }
    }

    pub fn piecewise(profile: &Profile1d) -> Result<Self> {
        let to_sign = |d: &OutputDistribution| {
            d.deterministic_sign().ok_or_else(|| Error::InvalidInput("profile is not deterministic".into()))
        };
        Ok(Hypothesis::Piecewise1d {
            breaks: profile.breaks.clone(),
            interval_labels: profile.intervals.iter().map(to_sign).collect::<Result<_>>()?,
            point_labels: profile.points.iter().map(to_sign).collect::<Result<_>>()?,
        })
    }

    pub fn dimension(&self) -> Option<usize> {
        match self {
            Hypothesis::Threshold { .. } | Hypothesis::Piecewise1d { .. } => Some(1),
            Hypothesis::Linear { w, .. } => Some(w.len()),
            Hypothesis::Mlp { model } => Some(model.input_dim()),
            Hypothesis::Bayes { spec } => Some(spec.dimension),
            Hypothesis::RegionFlip { base, .. } => base.dimension(),
            Hypothesis::Grid2d { .. } => Some(2),
        }
    }

    pub fn is_continuous(&self) -> bool {
        !matches!(self, Hypothesis::RegionFlip { .. } | Hypothesis::Piecewise1d { .. } | Hypothesis::Grid2d { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Hypothesis::Threshold { t, .. } if !t.is_finite() => Err(Error::InvalidInput("threshold must be finite".into())),
            Hypothesis::Linear { w, b } if w.is_empty() || !b.is_finite() || w.iter().any(|v| !v.is_finite()) => {
                Err(Error::InvalidInput("linear parameters must be finite and nonempty".into()))
            }
            Hypothesis::Mlp { model } => model.validate(),
            Hypothesis::Bayes { spec } => spec.validate(),
            Hypothesis::RegionFlip { base, .. } => base.validate(),
            Hypothesis::Piecewise1d { breaks, interval_labels, point_labels } => {
                if interval_labels.len() != breaks.len() + 1 || point_labels.len() != breaks.len() {
                    return Err(Error::InvalidInput("piecewise label counts do not match breaks".into()));
                }
                if breaks.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::InvalidInput("piecewise breaks must be strictly increasing".into()));
                }
                Ok(())
            }
            Hypothesis::Grid2d { bins, labels, lo, hi } => {
                if *bins == 0 || labels.len() != bins * bins || !(hi[0] > lo[0] && hi[1] > lo[1]) {
                    return Err(Error::InvalidInput("invalid grid classifier".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        if let Some(d) = self.dimension() {
            check_dim(d, x.len())?;
        }
        Ok(match self {
            Hypothesis::Threshold { t, orientation } => orientation.value() * (x[0] - t),
            Hypothesis::Linear { w, b } => w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + b,
            Hypothesis::Mlp { model } => model.decision(x)?,
            Hypothesis::Bayes { spec } => {
                spec.prior(Label::Pos) * density_unchecked(spec, Label::Pos, x)
                    - spec.prior(Label::Neg) * density_unchecked(spec, Label::Neg, x)
            }
            Hypothesis::RegionFlip { base, region } => {
                let g = base.decision_value(x)?;
                if region.contains(x)? {
                    -g
                } else {
                    g
                }
            }
            Hypothesis::Piecewise1d { breaks, interval_labels, point_labels } => {
                let s = match breaks.binary_search_by(|b| b.total_cmp(&x[0])) {
                    Ok(j) => point_labels[j],
                    Err(j) => interval_labels[j],
                };
                f64::from(s)
            }
            Hypothesis::Grid2d { lo, hi, bins, labels } => {
                let cell = |axis: usize| {
                    let u = (x[axis] - lo[axis]) / (hi[axis] - lo[axis]) * *bins as f64;
                    (u.floor().max(0.0) as usize).min(bins - 1)
                };
                f64::from(labels[cell(0) * bins + cell(1)])
            }
        })
    }

    /// Three-valued sign of the decision value.
    pub fn predict(&self, x: &[f64]) -> Result<i8> {
        Ok(sign(self.decision_value(x)?) as i8)
    }

    /// `(P_h(δ), N_h(δ))`: points of each decision region within `δ` of the
    /// region's complement.
    pub fn attackable_region(&self, delta: f64, norm: NormKind) -> Result<(Region, Region)> {
        if !(delta >= 0.0) {
            return Err(Error::InvalidInput(format!("budget must be nonnegative, got {delta}")));
        }
        match (self, self.dimension()) {
            (Hypothesis::Linear { w, b }, Some(d)) if d > 1 => {
                let n2 = NormKind::L2.norm(w);
                if n2 == 0.0 {
                    return Ok((Region::intervals(vec![]), Region::intervals(vec![])));
                }
                // distance to the hyperplane is |g|/‖w‖_*; express it in the slab's ℓ2 scale
                let width = delta * norm.dual_norm(w) / n2;
                let pos = Region::Slab { w: w.clone(), b: *b, lo: 0.0, hi: width };
                let neg = Region::Slab { w: w.iter().map(|v| -v).collect(), b: -b, lo: 0.0, hi: width };
                Ok((pos, neg))
            }
            (_, Some(1)) => {
                let p = self.profile_1d(DEFAULT_WINDOW)?;
                let pick = |s: i8| {
                    Region::intervals(p.attackable_runs(s, delta).into_iter().map(|(r, _)| Interval::from_run(r)).collect())
                };
                Ok((pick(1), pick(-1)))
            }
            (Hypothesis::Mlp { .. } | Hypothesis::Grid2d { .. } | Hypothesis::Bayes { .. } | Hypothesis::RegionFlip { .. }, Some(2)) => {
                let band = |side| Region::Band { hypothesis: Box::new(self.clone()), delta, side, norm, resolution: 201 };
                Ok((band(Label::Pos), band(Label::Neg)))
            }
            (_, d) => Err(Error::Unsupported(format!("attackable region for this hypothesis in dimension {d:?}"))),
        }
    }

    /// Membership in `P_h(δ)` (side +1) or `N_h(δ)` (side -1).
    pub fn in_band(&self, x: &[f64], delta: f64, side: Label, norm: NormKind, resolution: usize) -> Result<bool> {
        if self.predict(x)? != side.sign() {
            return Ok(false);
        }
        match self {
            Hypothesis::Threshold { t, .. } => Ok((x[0] - t).abs() <= delta),
            Hypothesis::Linear { w, .. } => {
                let dn = norm.dual_norm(w);
                Ok(dn > 0.0 && self.decision_value(x)?.abs() / dn <= delta)
            }
            _ if self.dimension() == Some(1) => {
                let window = (x[0] - 2.0 * delta - 1.0, x[0] + 2.0 * delta + 1.0);
                let p = self.profile_1d(window)?;
                Ok(p.attackable_runs(side.sign(), delta).iter().any(|(r, _)| r.contains(x[0])))
            }
            _ if x.len() == 2 => {
                let k = resolution.max(2);
                for i in 0..k {
                    for j in 0..k {
                        let v = [
                            -delta + 2.0 * delta * i as f64 / (k - 1) as f64,
                            -delta + 2.0 * delta * j as f64 / (k - 1) as f64,
                        ];
                        if norm.norm(&v) > delta {
                            continue;
                        }
                        let z = [x[0] + v[0], x[1] + v[1]];
                        if self.predict(&z)? != side.sign() {
                            return Ok(true);
                        }
                    }
                }
                Ok(false)
            }
            _ => Err(Error::UnsupportedDimension(x.len())),
        }
    }

    fn scan_window(&self, window: (f64, f64)) -> (f64, f64) {
        match self {
            Hypothesis::Bayes { spec } => {
                let b = spec.joint_bounds(12.0)[0];
                (b.0.min(window.0), b.1.max(window.1))
            }
            _ => window,
        }
    }
}

/// Sign-change scan of a continuous 1-D function over `window`, refined by
/// bisection. Outside the window the sign at the nearest end is assumed.
fn scan_profile(g: impl Fn(f64) -> Result<f64>, window: (f64, f64)) -> Result<Profile1d> {
    let (lo, hi) = window;
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidInput(format!("invalid scan window {window:?}")));
    }
    let s = |x: f64| -> Result<i8> { Ok(sign(g(x)?) as i8) };
    let n = SCAN_POINTS;
    let xs: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let signs = xs.iter().map(|&x| s(x)).collect::<Result<Vec<_>>>()?;
    let mut breaks = Vec::new();
    let mut left_signs = Vec::new();
    let mut i = 0;
    while i + 1 < n {
        if signs[i] == signs[i + 1] {
            i += 1;
            continue;
        }
        if signs[i + 1] == 0 && i + 2 < n && signs[i + 2] != 0 {
            // exact zero hit on the grid
            breaks.push(xs[i + 1]);
            left_signs.push(signs[i]);
            i += 2;
            continue;
        }
        let (mut a, mut b) = (xs[i], xs[i + 1]);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if !(m > a && m < b) {
                break;
            }
            if s(m)? == signs[i] {
                a = m;
            } else {
                b = m;
            }
        }
        breaks.push(b);
        left_signs.push(signs[i]);
        i += 1;
    }
    let mut intervals = Vec::with_capacity(breaks.len() + 1);
    intervals.push(OutputDistribution::deterministic(signs[0]));
    for j in 1..=breaks.len() {
        let probe = if j == breaks.len() { hi.max(breaks[j - 1]) } else { profile::interval_probe(&breaks, j) };
        let v = if j == breaks.len() { signs[n - 1] } else { s(probe)? };
        intervals.push(OutputDistribution::deterministic(v));
    }
    let mut points = Vec::with_capacity(breaks.len());
    for (j, &b) in breaks.iter().enumerate() {
        let (l, r) = (left_signs[j], intervals[j + 1].deterministic_sign().unwrap_or(0));
        let v = if l * r < 0 { 0 } else { s(b)? };
        points.push(OutputDistribution::deterministic(v));
    }
    Ok(Profile1d { breaks, intervals, points }.simplified())
}

impl Classifier for Hypothesis {
    fn dimension(&self) -> Option<usize> {
        Hypothesis::dimension(self)
    }

    fn output_distribution(&self, x: &[f64]) -> Result<OutputDistribution> {
        Ok(OutputDistribution::deterministic(self.predict(x)?))
    }

    fn linear_form(&self) -> Option<(Vec<f64>, f64)> {
        match self {
            Hypothesis::Threshold { t, orientation } => Some((vec![orientation.value()], -orientation.value() * t)),
            Hypothesis::Linear { w, b } => Some((w.clone(), *b)),
            _ => None,
        }
    }

    fn profile_1d(&self, window: (f64, f64)) -> Result<Profile1d> {
        if self.dimension() != Some(1) {
            return Err(Error::UnsupportedDimension(self.dimension().unwrap_or(0)));
        }
        match self {
            Hypothesis::Threshold { t, orientation } => {
                let o = orientation.value() as i8;
                Ok(Profile1d::from_labels(vec![*t], &[-o, o], &[0]))
            }
            Hypothesis::Linear { w, b } => {
                if w[0] == 0.0 {
                    return Ok(Profile1d::constant(OutputDistribution::deterministic(sign(*b) as i8)));
                }
                let o = sign(w[0]) as i8;
                Ok(Profile1d::from_labels(vec![-b / w[0]], &[-o, o], &[0]))
            }
            Hypothesis::Piecewise1d { breaks, interval_labels, point_labels } => {
                self.validate()?;
                Ok(Profile1d::from_labels(breaks.clone(), interval_labels, point_labels))
            }
            Hypothesis::RegionFlip { base, region } => {
                let runs = region
                    .runs_1d()?
                    .ok_or_else(|| Error::Unsupported("region has no exact 1-D description".into()))?;
                Ok(base.profile_1d(window)?.flipped_on(&runs))
            }
            Hypothesis::Bayes { .. } | Hypothesis::Mlp { .. } => scan_profile(|x| self.decision_value(&[x]), self.scan_window(window)),
            Hypothesis::Grid2d { .. } => Err(Error::UnsupportedDimension(2)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::std_normal_cdf;

    #[test]
    fn decision_values() {
        assert_eq!(Hypothesis::threshold(0.0, Orientation::Pos).decision_value(&[0.3]).unwrap(), 0.3);
        assert_eq!(Hypothesis::linear(vec![1.0, 0.0], 0.0).decision_value(&[0.3, 7.0]).unwrap(), 0.3);
        let b = bayes_optimal(&DistributionSpec::symmetric_1d());
        assert_eq!(b.decision_value(&[0.0]).unwrap(), 0.0);
        assert!(Hypothesis::linear(vec![1.0, 0.0], 0.0).decision_value(&[0.3]).is_err());
    }

    #[test]
    fn three_valued_predict() {
        let h = Hypothesis::threshold(0.0, Orientation::Pos);
        assert_eq!(h.predict(&[2.0]).unwrap(), 1);
        assert_eq!(h.predict(&[0.0]).unwrap(), 0);
        assert_eq!(h.predict(&[-2.0]).unwrap(), -1);
        let f = Hypothesis::flip(h, Region::intervals(vec![Interval::left_open(0.0, 0.5)]));
        assert_eq!(f.predict(&[0.25]).unwrap(), -1);
        assert_eq!(f.predict(&[0.75]).unwrap(), 1);
    }

    #[test]
    fn double_flip_is_identity() {
        let region = Region::intervals(vec![Interval::left_open(-0.3, 0.5)]);
        let h = Hypothesis::threshold(0.1, Orientation::Neg);
        let ff = Hypothesis::flip(Hypothesis::flip(h.clone(), region.clone()), region);
        for k in -50..50 {
            let x = [k as f64 * 0.021];
            assert_eq!(ff.decision_value(&x).unwrap(), h.decision_value(&x).unwrap());
        }
    }

    #[test]
    fn bayes_profile_of_symmetric_game_is_threshold_at_zero() {
        let b = bayes_optimal(&DistributionSpec::symmetric_1d());
        let p = b.profile_1d(DEFAULT_WINDOW).unwrap();
        assert_eq!(p.breaks.len(), 1);
        assert!(p.breaks[0].abs() < 1e-12, "{:?}", p.breaks);
        assert_eq!(p.intervals[0].deterministic_sign(), Some(-1));
        assert_eq!(p.intervals[1].deterministic_sign(), Some(1));
        // Risk of the Bayes classifier is Φ(−1)
        let spec = DistributionSpec::symmetric_1d();
        let risk = 0.5 * spec.interval_mass(Label::Pos, f64::NEG_INFINITY, p.breaks[0])
            + 0.5 * spec.interval_mass(Label::Neg, p.breaks[0], f64::INFINITY);
        assert!((risk - std_normal_cdf(-1.0)).abs() < 1e-12);
    }

    #[test]
    fn bayes_with_unequal_variances_has_two_boundaries() {
        let spec = DistributionSpec {
            prior_pos: 0.5,
            dimension: 1,
            components_pos: vec![crate::distributions::Component::new(1.0, vec![0.0], vec![4.0])],
            components_neg: vec![crate::distributions::Component::new(1.0, vec![0.0], vec![1.0])],
        };
        let p = bayes_optimal(&spec).profile_1d(DEFAULT_WINDOW).unwrap();
        // equal densities where x² = 8 ln 2 / 3
        let r = (8.0 * 2f64.ln() / 3.0).sqrt();
        assert_eq!(p.breaks.len(), 2);
        assert!((p.breaks[1] - r).abs() < 1e-9 && (p.breaks[0] + r).abs() < 1e-9, "{:?} vs {r}", p.breaks);
    }

    #[test]
    fn threshold_attackable_region() {
        let h = Hypothesis::threshold(0.0, Orientation::Pos);
        let (p, n) = h.attackable_region(0.5, NormKind::L2).unwrap();
        assert_eq!(p, Region::intervals(vec![Interval::left_open(0.0, 0.5)]));
        assert_eq!(n, Region::intervals(vec![Interval::right_open(-0.5, 0.0)]));
        let (p, n) = h.attackable_region(0.0, NormKind::L2).unwrap();
        assert_eq!(p, Region::intervals(vec![]));
        assert_eq!(n, Region::intervals(vec![]));
    }

    #[test]
    fn linear_band_width_is_the_budget() {
        let h = Hypothesis::linear(vec![3.0, 4.0], -1.0);
        let (p, n) = h.attackable_region(0.2, NormKind::L2).unwrap();
        // unit normal (0.6, 0.8); boundary point (0.12, 0.16)
        let at = |d: f64| [0.12 + 0.6 * d, 0.16 + 0.8 * d];
        assert!(p.contains(&at(0.19)).unwrap() && !p.contains(&at(0.21)).unwrap());
        assert!(n.contains(&at(-0.19)).unwrap() && !n.contains(&at(-0.21)).unwrap());
        assert!(!p.contains(&at(-0.1)).unwrap());
    }

    #[test]
    fn mlp_band_by_grid_search() {
        let model = MlpModel::linear(&[1.0, 0.0], 0.0);
        let h = Hypothesis::Mlp { model };
        let (p, _) = h.attackable_region(0.3, NormKind::Linf).unwrap();
        assert!(p.contains(&[0.25, 0.0]).unwrap());
        assert!(!p.contains(&[0.35, 0.0]).unwrap());
    }

    #[test]
    fn json_kind_discriminator() {
        let h = Hypothesis::threshold(0.5, Orientation::Neg);
        let s = serde_json::to_string(&h).unwrap();
        assert_eq!(s, r#"{"kind":"threshold","t":0.5,"orientation":"-"}"#);
        let m: Hypothesis = serde_json::from_str(r#"{"kind":"mlp","model":{"sizes":[1,1],"weights":[[2.0]],"biases":[[0.5]]}}"#).unwrap();
        assert_eq!(m.decision_value(&[1.0]).unwrap(), 2.5);
        assert!(serde_json::from_str::<Hypothesis>(r#"{"kind":"threshold","t":0,"orientation":"+","x":1}"#).is_err());
    }
}
