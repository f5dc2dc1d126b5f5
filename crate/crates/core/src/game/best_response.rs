//! Best responses of both players.
//!
//! The attacker's response to a 1-D classifier is computed from its error
//! profile: for every `x` the candidates are staying, jumping to a break
//! point, or entering a neighbouring interval, and the decision only
//! changes at finitely many event points, so it is evaluated once per
//! elementary interval and merged into pieces.

use super::attack_map::{Action, AttackMap, Piece};
use super::oracle::OracleGrid;
use super::score::profile_window;
use super::{GameConfig, Penalty, OVERSHOOT};
use crate::distributions::{axis_rule, density_unchecked, DistributionSpec, Label, Transport};
use crate::error::{Error, Result};
use crate::hypotheses::{Classifier, ErrorProfile, Hypothesis, Interval, MixedClassifier, Profile1d};

const TIE: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
struct Candidate {
    value: f64,
    cost: f64,
    /// 0 stay, 1 interval target, 2 break point target
    rank: u8,
    dist: f64,
    target: f64,
    action: Action,
}

impl Candidate {
    /// Whether `self` should replace `best`.
    fn beats(&self, best: &Candidate, penalty: Penalty) -> bool {
        if self.value > best.value + TIE {
            return true;
        }
        if self.value < best.value - TIE {
            return false;
        }
        if best.rank == 0 {
            return false;
        }
        if self.rank == 0 {
            return true;
        }
        if self.cost != best.cost {
            return self.cost < best.cost;
        }
        if penalty == Penalty::Mass && self.rank != best.rank {
            return self.rank < best.rank;
        }
        if self.dist != best.dist {
            return self.dist < best.dist;
        }
        self.target < best.target
    }
}

/// Best response of one label against the error profile `e`.
struct Responder<'a> {
    e: &'a ErrorProfile,
    cfg: &'a GameConfig,
}

impl Responder<'_> {
    fn interval_overshoot(&self, j: usize) -> f64 {
        let (a, b) = self.e.interval(j);
        if a.is_finite() && b.is_finite() {
            OVERSHOOT.min(0.5 * (b - a))
        } else {
            OVERSHOOT
        }
    }

    fn best_at(&self, x: f64) -> Candidate {
        let (eps, lambda) = (self.cfg.epsilon, self.cfg.lambda);
        let mut best = Candidate { value: self.e.at(x), cost: 0.0, rank: 0, dist: 0.0, target: x, action: Action::Identity };
        let mut offer = |c: Candidate| {
            if c.beats(&best, self.cfg.penalty) {
                best = c;
            }
        };
        for (k, &b) in self.e.breaks.iter().enumerate() {
            let d = (b - x).abs();
            if d > 0.0 && d <= eps {
                let cost = self.cfg.cost(d);
                offer(Candidate { value: self.e.points[k] - lambda * cost, cost, rank: 2, dist: d, target: b, action: Action::ToPoint { z: b } });
            }
        }
        for j in 0..self.e.levels.len() {
            let (a, b) = self.e.interval(j);
            if x > a && x < b {
                continue;
            }
            let ov = self.interval_overshoot(j);
            let (d, sign, edge) = if x <= a { (a - x, 1.0, a) } else { (x - b, -1.0, b) };
            if !(d < eps) {
                continue;
            }
            let (dist, target, action) = if d + ov <= eps {
                let z = edge + sign * ov;
                (d + ov, z, Action::ToPoint { z })
            } else {
                (eps, x + sign * eps, Action::Translate { s: sign * eps })
            };
            let cost = self.cfg.cost(dist);
            offer(Candidate { value: self.e.levels[j] - lambda * cost, cost, rank: 1, dist, target, action });
        }
        best
    }

    /// Points where the optimal decision may change.
    fn events(&self) -> Vec<f64> {
        let (eps, lambda) = (self.cfg.epsilon, self.cfg.lambda);
        let mut ev: Vec<f64> = Vec::new();
        // (target, value at zero cost) of every point-like target
        let mut targets: Vec<(f64, f64)> = Vec::new();
        let mut constants: Vec<f64> = Vec::new();
        for (k, &b) in self.e.breaks.iter().enumerate() {
            ev.extend([b, b - eps, b + eps]);
            targets.push((b, self.e.points[k]));
        }
        for j in 0..self.e.levels.len() {
            let (a, b) = self.e.interval(j);
            let ov = self.interval_overshoot(j);
            let l = self.e.levels[j];
            constants.extend([l, l - lambda * self.cfg.cost(eps), l - lambda]);
            if a.is_finite() {
                ev.extend([a - eps, a + ov - eps]);
                targets.push((a + ov, l));
            }
            if b.is_finite() {
                ev.extend([b + eps, b - ov + eps]);
                targets.push((b - ov, l));
            }
        }
        if self.cfg.penalty == Penalty::Norm {
            for (i, &(z1, v1)) in targets.iter().enumerate() {
                for &c in &constants {
                    ev.extend([z1 - (v1 - c) / lambda, z1 + (v1 - c) / lambda]);
                }
                for &(z2, v2) in &targets[i + 1..] {
                    // v1 - λ|x - z1| = v2 - λ|x - z2| with x between the targets
                    ev.push((v1 - v2 + lambda * (z1 + z2)) / (2.0 * lambda));
                    ev.push((v2 - v1 + lambda * (z1 + z2)) / (2.0 * lambda));
                }
            }
        }
        ev.retain(|v| v.is_finite());
        ev.sort_by(f64::total_cmp);
        ev.dedup();
        ev
    }

    fn pieces(&self) -> Vec<Piece> {
        let ev = self.events();
        // elementary segments in order: (lo, hi, is_point)
        let mut segs: Vec<(f64, f64, Action)> = Vec::with_capacity(2 * ev.len() + 1);
        let mut prev = f64::NEG_INFINITY;
        for &p in &ev {
            let probe = if prev.is_finite() { 0.5 * (prev + p) } else { p - 1.0 };
            if probe > prev && probe < p {
                segs.push((prev, p, self.best_at(probe).action));
            }
            segs.push((p, p, self.best_at(p).action));
            prev = p;
        }
        let probe = if prev.is_finite() { prev + 1.0 } else { 0.0 };
        segs.push((prev, f64::INFINITY, self.best_at(probe).action));
        merge_segments(&segs)
    }
}

/// Merge consecutive elementary segments with equal actions into pieces,
/// dropping identity pieces.
fn merge_segments(segs: &[(f64, f64, Action)]) -> Vec<Piece> {
    let mut out: Vec<Piece> = Vec::new();
    let mut i = 0;
    while i < segs.len() {
        let action = segs[i].2;
        let mut j = i;
        while j + 1 < segs.len() && segs[j + 1].2 == action {
            j += 1;
        }
        if action != Action::Identity {
            let (first, last) = (segs[i], segs[j]);
            let lo_closed = first.0 == first.1;
            let hi_closed = last.0 == last.1;
            out.push(Piece::new(Interval { lo: first.0, hi: last.1, lo_closed, hi_closed }, action));
        }
        i = j + 1;
    }
    out
}

/// Optimal attack pieces for one label against an error profile.
pub(crate) fn response_pieces(e: &ErrorProfile, cfg: &GameConfig) -> Vec<Piece> {
    Responder { e, cfg }.pieces()
}

/// `Some((t, s))` when the profile is a deterministic threshold with
/// boundary `t`, `+1` on the side `s`.
pub(crate) fn as_threshold(p: &Profile1d) -> Option<(f64, f64)> {
    if p.breaks.len() != 1 || !p.is_deterministic() {
        return None;
    }
    let (l, r) = (p.intervals[0].deterministic_sign()?, p.intervals[1].deterministic_sign()?);
    if l == -r && l != 0 {
        Some((p.breaks[0], f64::from(r)))
    } else {
        None
    }
}

/// Best response to a 1-D classifier given by its profile.
pub fn best_response_attack_profile(profile: &Profile1d, cfg: &GameConfig) -> Result<AttackMap> {
    cfg.validate()?;
    if cfg.penalty == Penalty::None {
        if let Some((_, side)) = as_threshold(profile) {
            // every point moves the full budget toward the other class
            let whole = Interval::open(f64::NEG_INFINITY, f64::INFINITY);
            return Ok(AttackMap::Piecewise1d {
                budget: cfg.epsilon,
                norm_kind: cfg.norm_kind,
                pos: vec![Piece::new(whole, Action::Translate { s: -side * cfg.epsilon })],
                neg: vec![Piece::new(whole, Action::Translate { s: side * cfg.epsilon })],
            });
        }
    }
    Ok(AttackMap::Piecewise1d {
        budget: cfg.epsilon,
        norm_kind: cfg.norm_kind,
        pos: response_pieces(&profile.error_profile(Label::Pos), cfg),
        neg: response_pieces(&profile.error_profile(Label::Neg), cfg),
    })
}

/// Closed-form best response where one exists: 1-D classifiers and linear
/// classifiers in any dimension. Other models get the grid-search attack.
pub fn best_response_attack(h: &Hypothesis, spec: &DistributionSpec, cfg: &GameConfig) -> Result<AttackMap> {
    h.validate()?;
    best_response_attack_mixed(&MixedClassifier::single(h.clone()), spec, cfg)
}

/// Best response to a randomized classifier.
pub fn best_response_attack_mixed(m: &MixedClassifier, spec: &DistributionSpec, cfg: &GameConfig) -> Result<AttackMap> {
    cfg.validate()?;
    m.validate()?;
    let d = m.dimension().unwrap_or(spec.dimension);
    if d != spec.dimension {
        return Err(Error::DimensionMismatch { expected: spec.dimension, got: d });
    }
    if d == 1 {
        return best_response_attack_profile(&m.profile_1d(profile_window(spec, cfg))?, cfg);
    }
    if let Some((w, b)) = m.linear_form() {
        let threshold = Profile1d::from_labels(vec![0.0], &[-1, 1], &[0]);
        let inner = best_response_attack_profile(&threshold, cfg)?;
        if let AttackMap::Piecewise1d { pos, neg, .. } = inner {
            return Ok(AttackMap::Linear { budget: cfg.epsilon, norm_kind: cfg.norm_kind, w, b, pos, neg });
        }
    }
    Ok(AttackMap::Pointwise { cfg: *cfg, model: m.clone(), grid: OracleGrid::default() })
}

/// The transported 1-D class conditionals `φ_y # μ_y`: continuous parts
/// (source interval and shift) plus atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct Transported1d {
    /// `(lo, hi, s)`: density `μ(z − s)` for `z − s ∈ (lo, hi)`.
    pub parts: [Vec<(f64, f64, f64)>; 2],
    /// `(z, mass)` atoms, mass not weighted by the prior.
    pub atoms: [Vec<(f64, f64)>; 2],
}

fn idx(label: Label) -> usize {
    if label == Label::Pos {
        0
    } else {
        1
    }
}

impl Transported1d {
    pub fn density(&self, spec: &DistributionSpec, label: Label, z: f64) -> f64 {
        self.parts[idx(label)]
            .iter()
            .filter(|(lo, hi, s)| z - s > *lo && z - s < *hi)
            .map(|(_, _, s)| density_unchecked(spec, label, &[z - s]))
            .sum()
    }

    pub fn atoms(&self, label: Label) -> &[(f64, f64)] {
        &self.atoms[idx(label)]
    }

    fn discontinuities(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .parts
            .iter()
            .flatten()
            .flat_map(|&(lo, hi, s)| [lo + s, hi + s])
            .chain(self.atoms.iter().flatten().map(|a| a.0))
            .filter(|v| v.is_finite())
            .collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }
}

/// Pushforward of a 1-D spec under a piecewise attack.
pub fn transported_1d(spec: &DistributionSpec, attack: &AttackMap) -> Result<Transported1d> {
    if spec.dimension != 1 {
        return Err(Error::UnsupportedDimension(spec.dimension));
    }
    let mut out = Transported1d { parts: [Vec::new(), Vec::new()], atoms: [Vec::new(), Vec::new()] };
    for label in [Label::Pos, Label::Neg] {
        let pieces: &[Piece] = match attack {
            AttackMap::Identity { .. } => &[],
            AttackMap::Piecewise1d { .. } => attack.pieces(label).unwrap_or(&[]),
            _ => return Err(Error::Unsupported("transported density needs a 1-D piecewise attack".into())),
        };
        let (parts, atoms) = (&mut out.parts[idx(label)], &mut out.atoms[idx(label)]);
        let mut cur = f64::NEG_INFINITY;
        for p in pieces {
            if p.lo() > cur {
                parts.push((cur, p.lo(), 0.0));
            }
            match p.action {
                Action::Identity => parts.push((p.lo(), p.hi(), 0.0)),
                Action::Translate { s } => parts.push((p.lo(), p.hi(), s)),
                Action::ToPoint { z } => {
                    let mass = spec.interval_mass(label, p.lo(), p.hi());
                    if mass > 0.0 {
                        match atoms.iter_mut().find(|a| a.0 == z) {
                            Some(a) => a.1 += mass,
                            None => atoms.push((z, mass)),
                        }
                    }
                }
            }
            cur = p.hi();
        }
        if cur < f64::INFINITY {
            parts.push((cur, f64::INFINITY, 0.0));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    Ok(out)
}

/// Points per segment for the sign scan of the transported posterior.
const DEFENDER_SCAN: usize = 400;

fn defender_1d(spec: &DistributionSpec, attack: &AttackMap, cfg: &GameConfig) -> Result<Hypothesis> {
    let t = transported_1d(spec, attack)?;
    let (np, nn) = (spec.prior(Label::Pos), spec.prior(Label::Neg));
    let diff = |z: f64| np * t.density(spec, Label::Pos, z) - nn * t.density(spec, Label::Neg, z);
    let sign_of = |v: f64| if v >= 0.0 { 1i8 } else { -1 };
    let window = profile_window(spec, cfg);
    let mut edges: Vec<f64> = t.discontinuities().into_iter().filter(|v| *v > window.0 && *v < window.1).collect();
    edges.insert(0, window.0);
    edges.push(window.1);

    // sign changes of the continuous part; (point, left sign, right sign)
    let mut crossings: Vec<f64> = Vec::new();
    for seg in edges.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        if !(b > a) {
            continue;
        }
        let h = (b - a) / DEFENDER_SCAN as f64;
        let mut prev_z = a + 0.5 * h;
        let mut prev_s = sign_of(diff(prev_z));
        for k in 1..DEFENDER_SCAN {
            let z = a + (k as f64 + 0.5) * h;
            let s = sign_of(diff(z));
            if s != prev_s {
                let (mut lo, mut hi) = (prev_z, z);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if !(mid > lo && mid < hi) {
                        break;
                    }
                    if sign_of(diff(mid)) == prev_s {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                crossings.push(0.5 * (lo + hi));
            }
            prev_z = z;
            prev_s = s;
        }
    }

    let mut breaks: Vec<f64> = edges[1..edges.len() - 1].to_vec();
    breaks.extend(&crossings);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let interval_labels: Vec<i8> = (0..=breaks.len())
        .map(|j| sign_of(diff(crate::hypotheses::profile::interval_probe(&breaks, j))))
        .collect();
    let atom_mass = |label: Label, z: f64| t.atoms(label).iter().find(|a| a.0 == z).map_or(0.0, |a| a.1);
    let point_labels: Vec<i8> = breaks
        .iter()
        .enumerate()
        .map(|(k, &b)| {
            let (ap, an) = (np * atom_mass(Label::Pos, b), nn * atom_mass(Label::Neg, b));
            if ap > 0.0 || an > 0.0 {
                sign_of(ap - an)
            } else if interval_labels[k] == interval_labels[k + 1] {
                interval_labels[k]
            } else {
                0
            }
        })
        .collect();
    Hypothesis::piecewise(&Profile1d::from_labels(breaks, &interval_labels, &point_labels).simplified())
}

/// Bins per axis of the 2-D defender response.
const DEFENDER_BINS: usize = 48;

fn defender_2d(spec: &DistributionSpec, attack: &AttackMap, cfg: &GameConfig) -> Result<Hypothesis> {
    let bounds = spec.joint_bounds(4.0);
    let (lo, hi) = (
        [bounds[0].0 - cfg.epsilon, bounds[1].0 - cfg.epsilon],
        [bounds[0].1 + cfg.epsilon, bounds[1].1 + cfg.epsilon],
    );
    let bins = DEFENDER_BINS;
    let cell = |z: &[f64], axis: usize| {
        let u = (z[axis] - lo[axis]) / (hi[axis] - lo[axis]) * bins as f64;
        (u.floor().max(0.0) as usize).min(bins - 1)
    };
    let panels = match cfg.eval {
        super::EvalMethod::Quadrature { points } => (points / 4).max(1),
        _ => 64,
    };
    let rx = axis_rule(bounds[0].0, bounds[0].1, panels, &[]);
    let ry = axis_rule(bounds[1].0, bounds[1].1, panels, &[]);
    let mut mass = vec![0.0f64; bins * bins];
    for label in [Label::Pos, Label::Neg] {
        let sign = label.value();
        for &(nx, wx) in &rx {
            for &(ny, wy) in &ry {
                let x = [nx, ny];
                let dens = density_unchecked(spec, label, &x);
                if dens == 0.0 {
                    continue;
                }
                let z = attack.transport(&x, label)?;
                mass[cell(&z, 0) * bins + cell(&z, 1)] += sign * spec.prior(label) * wx * wy * dens;
            }
        }
    }
    let bayes = Hypothesis::Bayes { spec: spec.clone() };
    let mut labels = Vec::with_capacity(bins * bins);
    for i in 0..bins {
        for j in 0..bins {
            let m = mass[i * bins + j];
            labels.push(if m > 0.0 {
                1
            } else if m < 0.0 {
                -1
            } else {
                let c = [
                    lo[0] + (i as f64 + 0.5) * (hi[0] - lo[0]) / bins as f64,
                    lo[1] + (j as f64 + 0.5) * (hi[1] - lo[1]) / bins as f64,
                ];
                if bayes.decision_value(&c)? >= 0.0 {
                    1
                } else {
                    -1
                }
            });
        }
    }
    Ok(Hypothesis::Grid2d { lo, hi, bins, labels })
}

/// Bayes classifier of the transported distribution. Ties and equal atoms
/// go to +1. In 1-D the result is exact up to root finding; in 2-D it is a
/// binned approximation.
pub fn best_response_defender(attack: &AttackMap, spec: &DistributionSpec, cfg: &GameConfig) -> Result<Hypothesis> {
    spec.validate()?;
    if attack.is_identity() {
        return Ok(Hypothesis::Bayes { spec: spec.clone() });
    }
    match spec.dimension {
        1 => defender_1d(spec, attack, cfg),
        2 => defender_2d(spec, attack, cfg),
        d => Err(Error::UnsupportedDimension(d)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypotheses::Orientation;

    fn threshold_profile() -> Profile1d {
        Profile1d::from_labels(vec![0.0], &[-1, 1], &[0])
    }

    fn pieces_for(penalty: Penalty, label: Label) -> Vec<Piece> {
        let cfg = GameConfig::new(penalty, 0.3, 0.5).unwrap();
        response_pieces(&threshold_profile().error_profile(label), &cfg)
    }

    #[test]
    fn mass_response_matches_closed_form() {
        let p = pieces_for(Penalty::Mass, Label::Pos);
        // at exactly ε only the boundary point itself is in reach
        assert_eq!(p.len(), 3, "{p:?}");
        assert_eq!(p[2].action, Action::ToPoint { z: 0.0 });
        assert_eq!((p[2].lo(), p[2].hi()), (0.5, 0.5));
        assert_eq!(p[0].action, Action::ToPoint { z: -OVERSHOOT });
        assert_eq!((p[0].lo(), p[0].interval.lo_closed), (0.0, false));
        assert!((p[0].hi() - (0.5 - OVERSHOOT)).abs() < 1e-15 && p[0].interval.hi_closed);
        assert_eq!(p[1].action, Action::Translate { s: -0.5 });
        assert_eq!((p[1].hi(), p[1].interval.hi_closed), (0.5, false));
    }

    #[test]
    fn norm_response_projects() {
        let p = pieces_for(Penalty::Norm, Label::Pos);
        assert_eq!(p.len(), 1, "{p:?}");
        assert_eq!(p[0].action, Action::ToPoint { z: 0.0 });
        assert_eq!((p[0].lo(), p[0].hi(), p[0].interval.lo_closed, p[0].interval.hi_closed), (0.0, 0.5, false, true));
        let n = pieces_for(Penalty::Norm, Label::Neg);
        assert_eq!(n.len(), 1);
        assert_eq!((n[0].lo(), n[0].hi(), n[0].interval.lo_closed, n[0].interval.hi_closed), (-0.5, 0.0, true, false));
    }

    #[test]
    fn unbounded_adversary_translates_everything() {
        let spec = DistributionSpec::symmetric_1d();
        let cfg = GameConfig::new(Penalty::None, 0.3, 0.5).unwrap();
        let m = best_response_attack(&Hypothesis::threshold(0.0, Orientation::Pos), &spec, &cfg).unwrap();
        assert_eq!(m.transport(&[3.0], Label::Pos).unwrap(), vec![2.5]);
        assert_eq!(m.transport(&[-3.0], Label::Neg).unwrap(), vec![-2.5]);
    }

    #[test]
    fn far_away_points_stay() {
        let m = best_response_attack_profile(&threshold_profile(), &GameConfig::new(Penalty::Mass, 0.3, 0.5).unwrap()).unwrap();
        assert_eq!(m.transport(&[0.6], Label::Pos).unwrap(), vec![0.6]);
        assert_eq!(m.transport(&[-0.2], Label::Pos).unwrap(), vec![-0.2]);
        assert_eq!(m.transport(&[0.2], Label::Neg).unwrap(), vec![0.2]);
        assert!(m.validate().is_ok());
    }

    #[test]
    fn linear_response_in_two_dimensions() {
        let spec = DistributionSpec::gaussian_pair(0.5, vec![-1.0, 0.0], vec![1.0, 0.0], 1.0);
        let cfg = GameConfig::new(Penalty::Norm, 0.3, 0.5).unwrap();
        let h = Hypothesis::linear(vec![2.0, 0.0], 0.0);
        let m = best_response_attack(&h, &spec, &cfg).unwrap();
        let z = m.transport(&[0.3, 1.0], Label::Pos).unwrap();
        assert!(z[0].abs() < 1e-15 && (z[1] - 1.0).abs() < 1e-15, "{z:?}");
    }

    #[test]
    fn defender_against_identity_is_bayes() {
        let spec = DistributionSpec::symmetric_1d();
        let cfg = GameConfig::new(Penalty::Mass, 0.3, 0.5).unwrap();
        let h = best_response_defender(&AttackMap::identity(), &spec, &cfg).unwrap();
        assert_eq!(h, Hypothesis::Bayes { spec });
    }

    #[test]
    fn defender_reacts_to_mass_attack() {
        let spec = DistributionSpec::symmetric_1d();
        let cfg = GameConfig::new(Penalty::Mass, 0.3, 0.5).unwrap();
        let phi = best_response_attack_profile(&threshold_profile(), &cfg).unwrap();
        let h = best_response_defender(&phi, &spec, &cfg).unwrap();
        // vacated (0, ε) now belongs to -1, and the atom just left of 0 to +1
        assert_eq!(h.predict(&[0.25]).unwrap(), -1);
        assert_eq!(h.predict(&[-OVERSHOOT]).unwrap(), 1);
        assert_eq!(h.predict(&[-0.25]).unwrap(), 1);
        assert_eq!(h.predict(&[2.0]).unwrap(), 1);
        assert_eq!(h.predict(&[-2.0]).unwrap(), -1);
    }
}
