//! Checks of the game-theoretic claims: best-response dynamics never settle
//! on a pure equilibrium, mixing a classifier with its region flip lowers
//! the worst-case score, and weak duality on finite strategy grids.

use serde::{Deserialize, Serialize};

use super::attack_map::{Action, AttackMap};
use super::best_response::{best_response_attack, best_response_attack_mixed, best_response_attack_profile, best_response_defender};
use super::oracle::{oracle_score, OracleGrid};
use super::score::{adversarial_score, profile_window};
use super::{GameConfig, Penalty};
use crate::distributions::{integrate, DistributionSpec, Grid, Label};
use crate::error::{Error, Result};
use crate::hypotheses::{Classifier, Hypothesis, Interval, MixedClassifier, Orientation, Region};

/// Minimum improvement or gap counted as strict.
pub const STRICT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashRound {
    pub round: usize,
    /// Score of the standing classifier against its best-response attack.
    pub score_before: f64,
    /// Score of the defender's best response against the same attack.
    pub score_after: f64,
    pub improvement: f64,
    pub defender: Hypothesis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashReport {
    pub config: GameConfig,
    pub rounds: Vec<NashRound>,
    pub threshold: f64,
    pub pass: bool,
}

/// Alternate attacker and defender best responses from the Bayes
/// classifier and record how much the defender gains each round.
pub fn verify_no_pure_nash(spec: &DistributionSpec, cfg: &GameConfig, rounds: usize) -> Result<NashReport> {
    cfg.validate()?;
    spec.validate()?;
    if spec.dimension != 1 {
        return Err(Error::UnsupportedDimension(spec.dimension));
    }
    let mut h = Hypothesis::Bayes { spec: spec.clone() };
    let mut out = Vec::with_capacity(rounds);
    for round in 1..=rounds {
        let phi = best_response_attack(&h, spec, cfg)?;
        let before = adversarial_score(&h, &phi, spec, cfg)?.score;
        let next = best_response_defender(&phi, spec, cfg)?;
        let after = adversarial_score(&next, &phi, spec, cfg)?.score;
        out.push(NashRound { round, score_before: before, score_after: after, improvement: before - after, defender: next.clone() });
        h = next;
    }
    let pass = out.iter().all(|r| r.improvement > STRICT);
    Ok(NashReport { config: *cfg, rounds: out, threshold: STRICT, pass })
}

/// Open interval of mixture weights on `h₁` for which the gap is
/// guaranteed.
pub fn admissible_alpha_range(cfg: &GameConfig, delta: Option<f64>) -> Result<(f64, f64)> {
    let l = cfg.lambda;
    match cfg.penalty {
        Penalty::Mass => Ok((l.max(1.0 - l), 1.0)),
        Penalty::Norm => {
            let d = delta.ok_or_else(|| Error::Config("norm penalty needs a margin delta".into()))?;
            if !(d > 0.0 && d < cfg.epsilon) {
                return Err(Error::OutOfRange { name: "delta", value: d, lo: 0.0, hi: cfg.epsilon });
            }
            Ok(((1.0 - l * d).max(l * (cfg.epsilon - d)), 1.0))
        }
        Penalty::None => Err(Error::Unsupported("randomization gap needs a penalized adversary".into())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub config: GameConfig,
    pub alpha_thm: f64,
    pub delta: Option<f64>,
    pub admissible: (f64, f64),
    /// Flipped region, in the frame where `h₁` is `+1` to the right of
    /// its boundary.
    pub region: Interval,
    /// Exact worst-case scores.
    pub score_h1: f64,
    pub score_mixture: f64,
    pub gap: f64,
    /// Gap from the region-wise terms of the proof.
    pub formula_gap: f64,
    pub oracle_score_h1: Option<f64>,
    pub oracle_score_mixture: Option<f64>,
    pub oracle_gap: Option<f64>,
    pub pass: bool,
}

/// Resolution of the brute-force cross-check in [`randomization_gap`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub grid: OracleGrid,
    /// Quadrature nodes over the line.
    pub points: usize,
}

impl Default for OracleCheck {
    fn default() -> Self {
        OracleCheck { grid: OracleGrid { per_side: 1 << 11 }, points: 2048 }
    }
}

/// Worst-case score of `h₁` against that of the mixture
/// `α·h₁ + (1 − α)·h₂`, where `h₂` flips `h₁` on `U`: the whole attackable
/// band `P_{h₁}(ε)` for the mass penalty, or its part within `ε − δ` of the
/// boundary for the norm penalty.
///
/// `h₁` must be a 1-D threshold-type classifier. A classifier that is `+1`
/// on the left is handled by reflecting the line.
pub fn randomization_gap(
    h1: &Hypothesis,
    spec: &DistributionSpec,
    cfg: &GameConfig,
    alpha_thm: f64,
    delta: Option<f64>,
    oracle: Option<OracleCheck>,
) -> Result<GapReport> {
    cfg.validate()?;
    spec.validate()?;
    if spec.dimension != 1 || h1.dimension() != Some(1) {
        return Err(Error::Unsupported("randomization gap is computed in one dimension".into()));
    }
    let admissible = admissible_alpha_range(cfg, delta)?;
    if !(alpha_thm > admissible.0 && alpha_thm < admissible.1) {
        return Err(Error::OutOfRange { name: "alpha_thm", value: alpha_thm, lo: admissible.0, hi: admissible.1 });
    }
    let profile = h1.profile_1d(profile_window(spec, cfg))?;
    let (t, side) = super::best_response::as_threshold(&profile)
        .ok_or_else(|| Error::Unsupported("h1 must be a single-boundary classifier".into()))?;
    let (spec, t) = if side > 0.0 { (spec.clone(), t) } else { (spec.project_linear(&[-1.0], 0.0, 1.0)?, -t) };
    let spec = &spec;
    let h1 = Hypothesis::threshold(t, Orientation::Pos);

    let eps = cfg.epsilon;
    let u = match cfg.penalty {
        Penalty::Mass => eps,
        _ => eps - delta.unwrap_or(0.0),
    };
    let region = Interval::left_open(t, t + u);
    let h2 = Hypothesis::flip(h1.clone(), Region::intervals(vec![region]));
    let mix = MixedClassifier::new(vec![h1.clone(), h2], vec![alpha_thm, 1.0 - alpha_thm])?;

    let phi = best_response_attack(&h1, spec, cfg)?;
    let phi_mix = best_response_attack_mixed(&mix, spec, cfg)?;
    let score_h1 = adversarial_score(&h1, &phi, spec, cfg)?.score;
    let score_mixture = adversarial_score(&mix, &phi_mix, spec, cfg)?.score;
    let gap = score_h1 - score_mixture;

    let formula_gap = match cfg.penalty {
        Penalty::Mass => mass_formula(spec, cfg, t, alpha_thm, &phi),
        _ => norm_formula(spec, cfg, t, u, alpha_thm, &phi)?,
    };

    let (mut oh, mut om, mut og) = (None, None, None);
    if let Some(check) = oracle {
        let mut breaks: Vec<f64> = Vec::new();
        for map in [&phi, &phi_mix] {
            for label in [Label::Pos, Label::Neg] {
                breaks.extend(map.pieces(label).unwrap_or(&[]).iter().flat_map(|p| [p.lo(), p.hi()]).filter(|v| v.is_finite()));
            }
        }
        let quad = Grid::with_points(check.points).with_breaks(breaks);
        let a = oracle_score(&h1, spec, cfg, &check.grid, &quad)?;
        let b = oracle_score(&mix, spec, cfg, &check.grid, &quad)?;
        oh = Some(a);
        om = Some(b);
        og = Some(a - b);
    }
    let pass = gap > STRICT && formula_gap > STRICT && og.is_none_or(|g| g > STRICT);
    Ok(GapReport {
        config: *cfg,
        alpha_thm,
        delta,
        admissible,
        region,
        score_h1,
        score_mixture,
        gap,
        formula_gap,
        oracle_score_h1: oh,
        oracle_score_mixture: om,
        oracle_gap: og,
        pass,
    })
}

/// Points of label -1 sent into `(lo, hi]` by the attack, excluding those
/// already there.
fn preimage(phi: &AttackMap, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let inside = |z: f64| z > lo && z <= hi;
    let mut out = Vec::new();
    for p in phi.pieces(Label::Neg).unwrap_or(&[]) {
        let (a, b) = match p.action {
            Action::Identity => continue,
            Action::ToPoint { z } if inside(z) => (p.lo(), p.hi()),
            Action::ToPoint { .. } => continue,
            Action::Translate { s } => (p.lo().max(lo - s), p.hi().min(hi - s)),
        };
        // drop the part already inside the region
        for (c, d) in [(a, b.min(lo)), (a.max(hi), b)] {
            if d > c {
                out.push((c, d));
            }
        }
    }
    out
}

fn mass_formula(spec: &DistributionSpec, cfg: &GameConfig, t: f64, alpha: f64, phi: &AttackMap) -> f64 {
    let (l, eps) = (cfg.lambda, cfg.epsilon);
    let (np, nn) = (spec.prior(Label::Pos), spec.prior(Label::Neg));
    let mu = |label, a, b| spec.interval_mass(label, a, b);
    let u_pos = mu(Label::Pos, t, t + eps);
    let u_neg = mu(Label::Neg, t, t + eps);
    let plus_pos = mu(Label::Pos, t + eps, t + 2.0 * eps);
    let minus_neg: f64 = preimage(phi, t, t + eps).iter().map(|&(a, b)| mu(Label::Neg, a, b)).sum();
    (1.0 - l - (1.0 - alpha).max(1.0 - l)) * np * u_pos + (1.0 - alpha.max(1.0 - l)) * nn * u_neg
        - (1.0 - alpha - l).max(0.0) * np * plus_pos
        + (1.0 - l - (alpha - l).max(0.0)) * nn * minus_neg
}

fn norm_formula(spec: &DistributionSpec, cfg: &GameConfig, t: f64, u: f64, alpha: f64, phi: &AttackMap) -> Result<f64> {
    let (l, eps) = (cfg.lambda, cfg.epsilon);
    let (np, nn) = (spec.prior(Label::Pos), spec.prior(Label::Neg));
    let over = |label: Label, a: f64, b: f64, f: &dyn Fn(f64) -> f64| -> Result<f64> {
        if !(b > a) {
            return Ok(0.0);
        }
        integrate(|x| f(x[0]), spec, label, &Grid::with_points(1 << 12).with_bounds(vec![(a, b)]))
    };
    let d_p = |x: f64| x - t;
    let d_uplus = |x: f64| t + u - x;
    let d_u_right = |x: f64| x - (t + u);
    let t1 = np * over(Label::Pos, t, t + u, &|x| (1.0 - l * d_p(x)) - (1.0 - alpha).max(1.0 - l * d_p(x)))?;
    let t2 = nn * over(Label::Neg, t, t + u, &|x| 1.0 - alpha.max(1.0 - l * d_uplus(x)))?;
    let t3 = -np * over(Label::Pos, t + eps, t + u + eps, &|x| (1.0 - alpha - l * d_u_right(x)).max(0.0))?;
    let t4 = np
        * over(Label::Pos, t + u, t + eps, &|x| {
            (1.0 - l * d_p(x)) - (1.0 - alpha - l * d_u_right(x)).max(1.0 - l * d_p(x))
        })?;
    let mut t5 = 0.0;
    for (a, b) in preimage(phi, t, t + u) {
        // left of the boundary the nearest point of U and of the rest of
        // the +1 side coincide at t
        t5 += nn * over(Label::Neg, a, b, &|x| {
            let d = (t - x).abs();
            (1.0 - l * d) - 0.0f64.max(1.0 - l * d).max(alpha - l * d)
        })?;
    }
    Ok(t1 + t2 + t3 + t4 + t5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub thresholds: Vec<f64>,
    pub attack_targets: Vec<f64>,
    /// `payoff[i][j]`: score of threshold `i` against the attack built for
    /// threshold `j`.
    pub payoff: Vec<Vec<f64>>,
    pub max_min: f64,
    pub min_max: f64,
    pub holds: bool,
    pub strict: bool,
}

/// Finite game between thresholds `threshold(t_i, +)` and the best-response
/// attacks against `threshold(s_j, +)`.
pub fn weak_duality(spec: &DistributionSpec, cfg: &GameConfig, thresholds: &[f64], attack_targets: &[f64]) -> Result<DualityReport> {
    if spec.dimension != 1 {
        return Err(Error::UnsupportedDimension(spec.dimension));
    }
    if thresholds.is_empty() || attack_targets.is_empty() {
        return Err(Error::InvalidInput("strategy grids must be nonempty".into()));
    }
    let attacks = attack_targets
        .iter()
        .map(|&s| {
            let p = Hypothesis::threshold(s, Orientation::Pos).profile_1d((-1.0, 1.0))?;
            best_response_attack_profile(&p, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let payoff = thresholds
        .iter()
        .map(|&t| {
            let h = Hypothesis::threshold(t, Orientation::Pos);
            attacks.iter().map(|a| Ok(adversarial_score(&h, a, spec, cfg)?.score)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let max_min = (0..attack_targets.len())
        .map(|j| payoff.iter().map(|row| row[j]).fold(f64::INFINITY, f64::min))
        .fold(f64::NEG_INFINITY, f64::max);
    let min_max = payoff.iter().map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max)).fold(f64::INFINITY, f64::min);
    Ok(DualityReport {
        thresholds: thresholds.to_vec(),
        attack_targets: attack_targets.to_vec(),
        payoff,
        max_min,
        min_max,
        holds: max_min <= min_max + 1e-12,
        strict: min_max - max_min > STRICT,
    })
}
