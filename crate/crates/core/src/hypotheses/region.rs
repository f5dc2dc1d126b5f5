use serde::{Deserialize, Serialize};

use super::profile::Run;
use super::{Classifier, Hypothesis};
use crate::distributions::Label;
use crate::error::{check_dim, Error, Result};
use crate::norm::NormKind;

/// 1-D interval with explicit end inclusion. Ends may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interval {
    #[serde(with = "crate::serde_ext")]
    pub lo: f64,
    #[serde(with = "crate::serde_ext")]
    pub hi: f64,
    #[serde(default)]
    pub lo_closed: bool,
    #[serde(default)]
    pub hi_closed: bool,
}

impl Interval {
    pub fn open(lo: f64, hi: f64) -> Self {
        Interval { lo, hi, lo_closed: false, hi_closed: false }
    }

    /// `(lo, hi]`
    pub fn left_open(lo: f64, hi: f64) -> Self {
        Interval { lo, hi, lo_closed: false, hi_closed: true }
    }

    /// `[lo, hi)`
    pub fn right_open(lo: f64, hi: f64) -> Self {
        Interval { lo, hi, lo_closed: true, hi_closed: false }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.as_run().contains(x)
    }

    pub fn as_run(&self) -> Run {
        Run { lo: self.lo, hi: self.hi, lo_closed: self.lo_closed, hi_closed: self.hi_closed }
    }

    pub fn from_run(r: Run) -> Self {
        Interval { lo: r.lo, hi: r.hi, lo_closed: r.lo_closed, hi_closed: r.hi_closed }
    }
}

/// A measurable set of inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Region {
    /// Finite union of 1-D intervals.
    Intervals { intervals: Vec<Interval> },
    /// `{x : lo < (w·x + b)/‖w‖₂ ≤ hi}`; a halfspace when one end is infinite.
    Slab {
        w: Vec<f64>,
        b: f64,
        #[serde(with = "crate::serde_ext")]
        lo: f64,
        #[serde(with = "crate::serde_ext")]
        hi: f64,
    },
    /// Attackable band `P_h(δ)` (side +1) or `N_h(δ)` (side -1).
    /// For networks membership is decided by a grid search over the ball
    /// with `resolution` points per axis, so it is approximate.
    Band {
        hypothesis: Box<Hypothesis>,
        delta: f64,
        side: Label,
        #[serde(default)]
        norm: NormKind,
        #[serde(default = "default_resolution")]
        resolution: usize,
    },
}

fn default_resolution() -> usize {
    201
}

impl Region {
    pub fn intervals(intervals: Vec<Interval>) -> Self {
        Region::Intervals { intervals }
    }

    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        match self {
            Region::Intervals { intervals } => {
                check_dim(1, x.len())?;
                Ok(intervals.iter().any(|i| i.contains(x[0])))
            }
            Region::Slab { w, b, lo, hi } => {
                check_dim(w.len(), x.len())?;
                let n = NormKind::L2.norm(w);
                if n == 0.0 {
                    return Err(Error::InvalidInput("slab normal must be nonzero".into()));
                }
                let u = (w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + b) / n;
                Ok(u > *lo && u <= *hi)
            }
            Region::Band { hypothesis, delta, side, norm, resolution } => {
                hypothesis.in_band(x, *delta, *side, *norm, *resolution)
            }
        }
    }

    /// Exact 1-D description when one is available.
    pub fn runs_1d(&self) -> Result<Option<Vec<Run>>> {
        match self {
            Region::Intervals { intervals } => Ok(Some(intervals.iter().map(Interval::as_run).collect())),
            Region::Slab { w, b, lo, hi } if w.len() == 1 => {
                let a = w[0].abs();
                if a == 0.0 {
                    return Err(Error::InvalidInput("slab normal must be nonzero".into()));
                }
                // u = sign(w)·x + b/|w|
                let (s, c) = (w[0].signum(), b / a);
                let run = if s > 0.0 {
                    Run { lo: lo - c, hi: hi - c, lo_closed: false, hi_closed: true }
                } else {
                    Run { lo: c - hi, hi: c - lo, lo_closed: true, hi_closed: false }
                };
                Ok(Some(vec![run]))
            }
            Region::Band { hypothesis, delta, side, .. } if hypothesis.dimension() == Some(1) => {
                let p = hypothesis.profile_1d(super::DEFAULT_WINDOW)?;
                Ok(Some(p.attackable_runs(side.sign(), *delta).into_iter().map(|(r, _)| r).collect()))
            }
            _ => Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypotheses::Orientation;

    #[test]
    fn interval_membership() {
        let i = Interval::left_open(0.0, 0.5);
        assert!(!i.contains(0.0) && i.contains(0.5) && i.contains(0.2) && !i.contains(0.6));
    }

    #[test]
    fn slab_matches_runs() {
        let r = Region::Slab { w: vec![-2.0], b: 1.0, lo: 0.0, hi: 1.0 };
        let runs = r.runs_1d().unwrap().unwrap();
        for k in -40..40 {
            let x = k as f64 * 0.05 + 0.013;
            assert_eq!(r.contains(&[x]).unwrap(), runs[0].contains(x), "{x}");
        }
    }

    #[test]
    fn band_of_threshold() {
        let h = Hypothesis::threshold(0.0, Orientation::Pos);
        let r = Region::Band { hypothesis: Box::new(h), delta: 0.5, side: Label::Pos, norm: NormKind::L2, resolution: 11 };
        assert!(r.contains(&[0.5]).unwrap());
        assert!(!r.contains(&[0.51]).unwrap());
        assert!(!r.contains(&[-0.1]).unwrap());
        let runs = r.runs_1d().unwrap().unwrap();
        assert_eq!(runs.len(), 1);
        assert_eq!((runs[0].lo, runs[0].hi), (0.0, 0.5));
    }

    #[test]
    fn json_with_infinite_end() {
        let r = Region::intervals(vec![Interval::open(f64::NEG_INFINITY, 1.0)]);
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"-inf\""), "{s}");
        let back: Region = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
    }
}
