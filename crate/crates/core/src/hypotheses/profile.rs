//! Piecewise-constant description of a 1-D classifier.
//!
//! The real line is cut at sorted `breaks`; the classifier's output
//! distribution is constant on every open interval between consecutive
//! breaks and is recorded separately at each break point.

use serde::{Deserialize, Serialize};

use super::OutputDistribution;
use crate::distributions::Label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile1d {
    pub breaks: Vec<f64>,
    /// `breaks.len() + 1` entries, interval `j` is `(breaks[j-1], breaks[j])`.
    pub intervals: Vec<OutputDistribution>,
    pub points: Vec<OutputDistribution>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loc {
    Interval(usize),
    Point(usize),
}

/// Expected error (output ≠ label, abstention counted as an error) as a
/// piecewise-constant function.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorProfile {
    pub breaks: Vec<f64>,
    pub levels: Vec<f64>,
    pub points: Vec<f64>,
}

/// Maximal run of points sharing one deterministic output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Run {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl Run {
    pub fn contains(&self, x: f64) -> bool {
        (x > self.lo || (self.lo_closed && x == self.lo)) && (x < self.hi || (self.hi_closed && x == self.hi))
    }
}

fn locate_in(breaks: &[f64], x: f64) -> Loc {
    match breaks.binary_search_by(|b| b.total_cmp(&x)) {
        Ok(j) => Loc::Point(j),
        Err(j) => Loc::Interval(j),
    }
}

impl Profile1d {
    pub fn constant(d: OutputDistribution) -> Self {
        Profile1d { breaks: Vec::new(), intervals: vec![d], points: Vec::new() }
    }

    /// Deterministic profile from per-interval and per-break outputs.
    pub fn from_labels(breaks: Vec<f64>, interval_labels: &[i8], point_labels: &[i8]) -> Self {
        Profile1d {
            breaks,
            intervals: interval_labels.iter().map(|&s| OutputDistribution::deterministic(s)).collect(),
            points: point_labels.iter().map(|&s| OutputDistribution::deterministic(s)).collect(),
        }
    }

    pub fn locate(&self, x: f64) -> Loc {
        locate_in(&self.breaks, x)
    }

    pub fn at(&self, x: f64) -> OutputDistribution {
        match self.locate(x) {
            Loc::Interval(j) => self.intervals[j],
            Loc::Point(j) => self.points[j],
        }
    }

    /// Drop breaks across which nothing changes.
    pub fn simplified(&self) -> Self {
        let mut breaks = Vec::new();
        let mut intervals = vec![self.intervals[0]];
        let mut points = Vec::new();
        for (j, &b) in self.breaks.iter().enumerate() {
            let left = *intervals.last().unwrap();
            let right = self.intervals[j + 1];
            if left == self.points[j] && right == self.points[j] {
                continue;
            }
            breaks.push(b);
            points.push(self.points[j]);
            intervals.push(right);
        }
        Profile1d { breaks, intervals, points }
    }

    /// Weighted combination `Σ w_i p_i` of several profiles.
    pub fn mixture(profiles: &[Profile1d], weights: &[f64]) -> Self {
        let mut breaks: Vec<f64> = profiles.iter().flat_map(|p| p.breaks.iter().copied()).collect();
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let combine = |pick: &dyn Fn(&Profile1d) -> OutputDistribution| {
            let mut acc = OutputDistribution::default();
            for (p, &w) in profiles.iter().zip(weights) {
                acc = acc.add_scaled(&pick(p), w);
            }
            acc
        };
        let mut intervals = Vec::with_capacity(breaks.len() + 1);
        for j in 0..=breaks.len() {
            let probe = interval_probe(&breaks, j);
            intervals.push(combine(&|p| p.at(probe)));
        }
        let points = breaks.iter().map(|&b| combine(&|p| p.at(b))).collect();
        Profile1d { breaks, intervals, points }.simplified()
    }

    /// Pointwise negation of the output on the given runs.
    pub fn flipped_on(&self, region: &[Run]) -> Self {
        let mut breaks = self.breaks.clone();
        for r in region {
            for v in [r.lo, r.hi] {
                if v.is_finite() {
                    breaks.push(v);
                }
            }
        }
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let eval = |x: f64| {
            let d = self.at(x);
            if region.iter().any(|r| r.contains(x)) {
                d.negated()
            } else {
                d
            }
        };
        let intervals = (0..=breaks.len()).map(|j| eval(interval_probe(&breaks, j))).collect();
        let points = breaks.iter().map(|&b| eval(b)).collect();
        Profile1d { breaks, intervals, points }.simplified()
    }

    pub fn error_profile(&self, label: Label) -> ErrorProfile {
        ErrorProfile {
            breaks: self.breaks.clone(),
            levels: self.intervals.iter().map(|d| d.error(label)).collect(),
            points: self.points.iter().map(|d| d.error(label)).collect(),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        self.intervals.iter().chain(&self.points).all(|d| d.deterministic_sign().is_some())
    }

    /// Maximal runs where the output is deterministically `sign`.
    pub fn runs(&self, sign: i8) -> Vec<Run> {
        let is = |d: &OutputDistribution| d.deterministic_sign() == Some(sign);
        let mut runs = Vec::new();
        let mut open: Option<(f64, bool)> = if is(&self.intervals[0]) { Some((f64::NEG_INFINITY, false)) } else { None };
        for (j, &b) in self.breaks.iter().enumerate() {
            let p_in = is(&self.points[j]);
            let right_in = is(&self.intervals[j + 1]);
            match open {
                Some((lo, lo_closed)) => {
                    if !p_in {
                        runs.push(Run { lo, hi: b, lo_closed, hi_closed: false });
                        open = if right_in { Some((b, false)) } else { None };
                    } else if !right_in {
                        runs.push(Run { lo, hi: b, lo_closed, hi_closed: true });
                        open = None;
                    }
                }
                None => {
                    if p_in && right_in {
                        open = Some((b, true));
                    } else if p_in {
                        runs.push(Run { lo: b, hi: b, lo_closed: true, hi_closed: true });
                    } else if right_in {
                        open = Some((b, false));
                    }
                }
            }
        }
        if let Some((lo, lo_closed)) = open {
            runs.push(Run { lo, hi: f64::INFINITY, lo_closed, hi_closed: false });
        }
        runs
    }

    /// Parts of the `sign` region within distance `delta` of its complement,
    /// together with the run they belong to.
    pub fn attackable_runs(&self, sign: i8, delta: f64) -> Vec<(Run, Run)> {
        let mut out = Vec::new();
        for run in self.runs(sign) {
            let left_open_end = run.lo.is_finite();
            let right_open_end = run.hi.is_finite();
            if run.lo == run.hi {
                // isolated point: every neighbourhood meets the complement
                out.push((run, run));
                continue;
            }
            if left_open_end && right_open_end && run.hi - run.lo <= 2.0 * delta {
                out.push((run, run));
                continue;
            }
            if left_open_end {
                let hi = run.lo + delta;
                if hi > run.lo || run.lo_closed {
                    out.push((Run { lo: run.lo, hi: hi.min(run.hi), lo_closed: run.lo_closed, hi_closed: hi < run.hi || run.hi_closed }, run));
                }
            }
            if right_open_end {
                let lo = run.hi - delta;
                if lo < run.hi || run.hi_closed {
                    out.push((Run { lo: lo.max(run.lo), hi: run.hi, lo_closed: lo > run.lo || run.lo_closed, hi_closed: run.hi_closed }, run));
                }
            }
        }
        out
    }
}

/// A point strictly inside interval `j` of the partition defined by `breaks`.
pub(crate) fn interval_probe(breaks: &[f64], j: usize) -> f64 {
    let n = breaks.len();
    if n == 0 {
        0.0
    } else if j == 0 {
        breaks[0] - 1.0
    } else if j == n {
        breaks[n - 1] + 1.0
    } else {
        let m = 0.5 * (breaks[j - 1] + breaks[j]);
        if m > breaks[j - 1] && m < breaks[j] {
            m
        } else {
            breaks[j - 1]
        }
    }
}

impl ErrorProfile {
    pub fn locate(&self, x: f64) -> Loc {
        locate_in(&self.breaks, x)
    }

    pub fn at(&self, x: f64) -> f64 {
        match self.locate(x) {
            Loc::Interval(j) => self.levels[j],
            Loc::Point(j) => self.points[j],
        }
    }

    /// Interval `j` as `(lo, hi)`, possibly infinite.
    pub fn interval(&self, j: usize) -> (f64, f64) {
        let lo = if j == 0 { f64::NEG_INFINITY } else { self.breaks[j - 1] };
        let hi = if j == self.breaks.len() { f64::INFINITY } else { self.breaks[j] };
        (lo, hi)
    }

    /// Split `(lo, hi)` at the breaks (shifted by `shift`, i.e. evaluating
    /// the profile at `x + shift`) and call `f(lo, hi, level)` per part.
    pub fn for_each_part(&self, lo: f64, hi: f64, shift: f64, mut f: impl FnMut(f64, f64, f64)) {
        if !(hi > lo) {
            return;
        }
        let mut a = lo;
        let mut j = match self.locate(lo + shift) {
            Loc::Interval(j) => j,
            Loc::Point(j) => j + 1,
        };
        loop {
            let b = if j < self.breaks.len() { (self.breaks[j] - shift).min(hi) } else { hi };
            if b > a {
                f(a, b, self.levels[j]);
            }
            if b >= hi || j >= self.breaks.len() {
                break;
            }
            a = b;
            j += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn threshold() -> Profile1d {
        Profile1d::from_labels(vec![0.0], &[-1, 1], &[0])
    }

    #[test]
    fn locate_and_errors() {
        let p = threshold();
        assert_eq!(p.locate(-0.1), Loc::Interval(0));
        assert_eq!(p.locate(0.0), Loc::Point(0));
        let e = p.error_profile(Label::Pos);
        assert_eq!((e.at(-1.0), e.at(0.0), e.at(1.0)), (1.0, 1.0, 0.0));
        let e = p.error_profile(Label::Neg);
        assert_eq!((e.at(-1.0), e.at(0.0), e.at(1.0)), (0.0, 1.0, 1.0));
    }

    #[test]
    fn runs_of_threshold() {
        let p = threshold();
        let pos = p.runs(1);
        assert_eq!(pos, vec![Run { lo: 0.0, hi: f64::INFINITY, lo_closed: false, hi_closed: false }]);
        let att = p.attackable_runs(1, 0.5);
        assert_eq!(att.len(), 1);
        assert_eq!((att[0].0.lo, att[0].0.hi, att[0].0.lo_closed, att[0].0.hi_closed), (0.0, 0.5, false, true));
        assert!(p.attackable_runs(1, 0.0).is_empty());
    }

    #[test]
    fn mixture_of_opposites_is_half() {
        let p = threshold();
        let q = Profile1d::from_labels(vec![0.0], &[1, -1], &[0]);
        let m = Profile1d::mixture(&[p, q], &[0.5, 0.5]);
        assert_eq!(m.at(3.0).error(Label::Pos), 0.5);
        assert_eq!(m.at(-3.0).error(Label::Neg), 0.5);
        assert_eq!(m.at(0.0).error(Label::Neg), 1.0);
    }

    #[test]
    fn flip_creates_band() {
        let p = threshold();
        let f = p.flipped_on(&[Run { lo: 0.0, hi: 0.5, lo_closed: false, hi_closed: true }]);
        assert_eq!(f.breaks, vec![0.0, 0.5]);
        assert_eq!(f.at(0.25).deterministic_sign(), Some(-1));
        assert_eq!(f.at(0.5).deterministic_sign(), Some(-1));
        assert_eq!(f.at(0.75).deterministic_sign(), Some(1));
        assert_eq!(f.at(0.0).deterministic_sign(), Some(0));
    }

    #[test]
    fn parts_split_at_shifted_breaks() {
        let e = threshold().error_profile(Label::Pos);
        let mut parts = Vec::new();
        e.for_each_part(-1.0, 1.0, 0.5, |a, b, l| parts.push((a, b, l)));
        assert_eq!(parts, vec![(-1.0, -0.5, 1.0), (-0.5, 1.0, 0.0)]);
    }
}
