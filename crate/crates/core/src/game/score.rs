use std::cell::RefCell;

use serde::{Deserialize, Serialize};

use super::attack_map::{Action, AttackMap, Piece};
use super::{EvalMethod, GameConfig, Penalty};
use crate::distributions::{integrate, sample_labeled, DistributionSpec, Grid, Label, Transport};
use crate::error::{Error, Result};
use crate::hypotheses::{Classifier, ErrorProfile, Profile1d};

/// Regularized adversarial score and its parts.
///
/// `score = unpenalized − λ·penalty_value`, `unpenalized = risk_term +
/// attack_zone_pos + attack_zone_neg`, where the zone terms are the
/// prior-weighted error gained by moving each class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub score: f64,
    pub unpenalized: f64,
    pub risk_term: f64,
    pub attack_zone_pos: f64,
    pub attack_zone_neg: f64,
    pub penalty_value: f64,
    pub lambda: f64,
    pub method: String,
    /// Standard error of `score` for Monte Carlo estimates.
    pub stderr: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
struct ClassTerms {
    base: f64,
    attacked: f64,
    cost: f64,
}

impl ScoreReport {
    fn assemble(spec: &DistributionSpec, cfg: &GameConfig, pos: ClassTerms, neg: ClassTerms, method: &str) -> Self {
        let (np, nn) = (spec.prior(Label::Pos), spec.prior(Label::Neg));
        let risk_term = np * pos.base + nn * neg.base;
        let unpenalized = np * pos.attacked + nn * neg.attacked;
        let penalty_value = np * pos.cost + nn * neg.cost;
        ScoreReport {
            score: unpenalized - cfg.lambda * penalty_value,
            unpenalized,
            risk_term,
            attack_zone_pos: np * (pos.attacked - pos.base),
            attack_zone_neg: nn * (neg.attacked - neg.base),
            penalty_value,
            lambda: cfg.lambda,
            method: method.to_string(),
            stderr: None,
        }
    }
}

/// Window for scanning 1-D profiles of models without closed forms.
pub(crate) fn profile_window(spec: &DistributionSpec, cfg: &GameConfig) -> (f64, f64) {
    let b = spec.joint_bounds(12.0);
    let (lo, hi) = b.first().copied().unwrap_or((-20.0, 20.0));
    (lo.min(-20.0) - 2.0 * cfg.epsilon, hi.max(20.0) + 2.0 * cfg.epsilon)
}

fn move_cost(cfg: &GameConfig, spec: &DistributionSpec, label: Label, lo: f64, hi: f64, action: Action) -> f64 {
    match (cfg.penalty, action) {
        (_, Action::Identity) | (Penalty::None, _) => 0.0,
        (_, Action::Translate { s: 0.0 }) => 0.0,
        (Penalty::Mass, _) => spec.interval_mass(label, lo, hi),
        (Penalty::Norm, Action::Translate { s }) => s.abs() * spec.interval_mass(label, lo, hi),
        (Penalty::Norm, Action::ToPoint { z }) => spec.interval_abs_moment(label, lo, hi, z),
    }
}

/// Closed-form terms for one label of a 1-D spec.
fn exact_class(spec: &DistributionSpec, label: Label, e: &ErrorProfile, pieces: &[Piece], cfg: &GameConfig) -> ClassTerms {
    let mut t = ClassTerms::default();
    e.for_each_part(f64::NEG_INFINITY, f64::INFINITY, 0.0, |a, b, level| t.base += level * spec.interval_mass(label, a, b));
    let mut cur = f64::NEG_INFINITY;
    let apply = |lo: f64, hi: f64, action: Action, t: &mut ClassTerms| {
        if !(hi > lo) {
            return;
        }
        match action {
            Action::Identity => e.for_each_part(lo, hi, 0.0, |a, b, level| t.attacked += level * spec.interval_mass(label, a, b)),
            Action::Translate { s } => e.for_each_part(lo, hi, s, |a, b, level| t.attacked += level * spec.interval_mass(label, a, b)),
            Action::ToPoint { z } => t.attacked += e.at(z) * spec.interval_mass(label, lo, hi),
        }
        t.cost += move_cost(cfg, spec, label, lo, hi, action);
    };
    for p in pieces {
        apply(cur, p.lo(), Action::Identity, &mut t);
        apply(p.lo(), p.hi(), p.action, &mut t);
        cur = p.hi();
    }
    apply(cur, f64::INFINITY, Action::Identity, &mut t);
    t
}

fn exact_1d(spec: &DistributionSpec, profile: &Profile1d, attack: Option<&AttackMap>, cfg: &GameConfig) -> ScoreReport {
    let terms = |label: Label| {
        let pieces = attack.and_then(|a| a.pieces(label)).unwrap_or(&[]);
        exact_class(spec, label, &profile.error_profile(label), pieces, cfg)
    };
    ScoreReport::assemble(spec, cfg, terms(Label::Pos), terms(Label::Neg), "exact")
}

/// `(w, b)` and `(w', b')` describe the same boundary and orientation.
fn same_halfspace(a: &(Vec<f64>, f64), b: &(Vec<f64>, f64)) -> bool {
    let na = a.0.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.0.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 || a.0.len() != b.0.len() {
        return false;
    }
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * (1.0 + x.abs().max(y.abs()));
    a.0.iter().zip(&b.0).all(|(x, y)| close(x / na, y / nb)) && close(a.1 / na, b.1 / nb)
}

fn try_exact<C: Classifier + ?Sized>(
    model: &C,
    attack: &AttackMap,
    spec: &DistributionSpec,
    cfg: &GameConfig,
) -> Result<Option<ScoreReport>> {
    match attack {
        AttackMap::Identity { .. } | AttackMap::Piecewise1d { .. } if spec.dimension == 1 => {
            let profile = model.profile_1d(profile_window(spec, cfg))?;
            Ok(Some(exact_1d(spec, &profile, Some(attack), cfg)))
        }
        AttackMap::Identity { .. } | AttackMap::Linear { .. } => {
            let Some(form) = model.linear_form() else { return Ok(None) };
            let (w, b, norm) = match attack {
                AttackMap::Linear { w, b, norm_kind, .. } => {
                    if !same_halfspace(&form, &(w.clone(), *b)) {
                        return Ok(None);
                    }
                    (w.clone(), *b, *norm_kind)
                }
                _ => (form.0.clone(), form.1, cfg.norm_kind),
            };
            let dn = norm.dual_norm(&w);
            if dn == 0.0 {
                return Ok(None);
            }
            let projected = spec.project_linear(&w, b, dn)?;
            let threshold = Profile1d::from_labels(vec![0.0], &[-1, 1], &[0]);
            let inner = match attack {
                AttackMap::Linear { pos, neg, budget, .. } => {
                    AttackMap::Piecewise1d { budget: *budget, norm_kind: norm, pos: pos.clone(), neg: neg.clone() }
                }
                _ => AttackMap::identity(),
            };
            Ok(Some(exact_1d(&projected, &threshold, Some(&inner), cfg)))
        }
        _ => Ok(None),
    }
}

/// Integrates `f` against `μ_label`, surfacing the first error it raised.
fn integrate_fallible(
    f: impl Fn(&[f64]) -> Result<f64>,
    spec: &DistributionSpec,
    label: Label,
    grid: &Grid,
) -> Result<f64> {
    let failure = RefCell::new(None);
    let v = integrate(
        |x| match f(x) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        },
        spec,
        label,
        grid,
    )?;
    match failure.into_inner() {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

fn quadrature<C: Classifier + ?Sized>(
    model: &C,
    attack: &AttackMap,
    spec: &DistributionSpec,
    cfg: &GameConfig,
    points: Option<usize>,
) -> Result<ScoreReport> {
    let mut grid = match points {
        Some(p) => Grid::with_points(p),
        None => Grid::for_dimension(spec.dimension),
    };
    if spec.dimension == 1 {
        let mut breaks: Vec<f64> = [Label::Pos, Label::Neg]
            .iter()
            .filter_map(|&l| attack.pieces(l))
            .flatten()
            .flat_map(|p| [p.lo(), p.hi()])
            .filter(|v| v.is_finite())
            .collect();
        if let Ok(p) = model.profile_1d(profile_window(spec, cfg)) {
            breaks.extend(&p.breaks);
        }
        grid = grid.with_breaks(breaks);
    }
    let norm = attack.norm_kind();
    let mut terms = [ClassTerms::default(); 2];
    for (slot, label) in terms.iter_mut().zip([Label::Pos, Label::Neg]) {
        slot.base = integrate_fallible(|x| model.error_prob(x, label), spec, label, &grid)?;
        slot.attacked = integrate_fallible(|x| model.error_prob(&attack.transport(x, label)?, label), spec, label, &grid)?;
        slot.cost = integrate_fallible(|x| Ok(cfg.cost(norm.distance(x, &attack.transport(x, label)?))), spec, label, &grid)?;
    }
    Ok(ScoreReport::assemble(spec, cfg, terms[0], terms[1], "quadrature"))
}

fn monte_carlo<C: Classifier + ?Sized>(
    model: &C,
    attack: &AttackMap,
    spec: &DistributionSpec,
    cfg: &GameConfig,
    n: usize,
    seed: u64,
) -> Result<ScoreReport> {
    let sample = sample_labeled(spec, n, seed)?;
    let norm = attack.norm_kind();
    let mut sums = [ClassTerms::default(); 2];
    let (mut sv, mut sv2) = (0.0, 0.0);
    for s in &sample.samples {
        let z = attack.transport(&s.point, s.label)?;
        let base = model.error_prob(&s.point, s.label)?;
        let attacked = model.error_prob(&z, s.label)?;
        let cost = cfg.cost(norm.distance(&s.point, &z));
        let t = &mut sums[if s.label == Label::Pos { 0 } else { 1 }];
        t.base += base;
        t.attacked += attacked;
        t.cost += cost;
        let v = attacked - cfg.lambda * cost;
        sv += v;
        sv2 += v * v;
    }
    let nf = n as f64;
    let risk_term = (sums[0].base + sums[1].base) / nf;
    let unpenalized = (sums[0].attacked + sums[1].attacked) / nf;
    let penalty_value = (sums[0].cost + sums[1].cost) / nf;
    let mean = sv / nf;
    let var = if n > 1 { (sv2 - nf * mean * mean).max(0.0) / (nf - 1.0) } else { 0.0 };
    Ok(ScoreReport {
        score: unpenalized - cfg.lambda * penalty_value,
        unpenalized,
        risk_term,
        attack_zone_pos: (sums[0].attacked - sums[0].base) / nf,
        attack_zone_neg: (sums[1].attacked - sums[1].base) / nf,
        penalty_value,
        lambda: cfg.lambda,
        method: "monte_carlo".into(),
        stderr: Some((var / nf).sqrt()),
    })
}

/// Sample size used when no deterministic method applies.
const FALLBACK_SAMPLES: usize = 100_000;

/// `E[err(h(φ(x)), y)] − λ·Ω(φ)` under the configured evaluation method.
pub fn adversarial_score<C: Classifier + ?Sized>(
    model: &C,
    attack: &AttackMap,
    spec: &DistributionSpec,
    cfg: &GameConfig,
) -> Result<ScoreReport> {
    cfg.validate()?;
    spec.validate()?;
    attack.validate()?;
    if let Some(d) = model.dimension() {
        if d != spec.dimension {
            return Err(Error::DimensionMismatch { expected: spec.dimension, got: d });
        }
    }
    match cfg.eval {
        EvalMethod::Exact => {
            if let Some(r) = try_exact(model, attack, spec, cfg)? {
                return Ok(r);
            }
            if spec.dimension <= 2 {
                quadrature(model, attack, spec, cfg, None)
            } else {
                monte_carlo(model, attack, spec, cfg, FALLBACK_SAMPLES, 0)
            }
        }
        EvalMethod::Quadrature { points } => quadrature(model, attack, spec, cfg, Some(points)),
        EvalMethod::MonteCarlo { n, seed } => monte_carlo(model, attack, spec, cfg, n, seed),
    }
}

/// Natural risk: the score of the identity attack.
pub fn risk<C: Classifier + ?Sized>(model: &C, spec: &DistributionSpec, eval: EvalMethod) -> Result<f64> {
    let cfg = GameConfig { penalty: Penalty::Mass, lambda: 0.5, epsilon: 1.0, norm_kind: Default::default(), eval };
    Ok(adversarial_score(model, &AttackMap::identity(), spec, &cfg)?.risk_term)
}

/// `Ω(φ)`: moved mass or expected displacement, 0 without a penalty.
pub fn penalty(attack: &AttackMap, spec: &DistributionSpec, cfg: &GameConfig) -> Result<f64> {
    // the classifier does not enter Ω; any fixed one will do
    let constant = Profile1d::constant(crate::hypotheses::OutputDistribution::deterministic(1));
    struct Constant(Profile1d);
    impl Classifier for Constant {
        fn dimension(&self) -> Option<usize> {
            None
        }
        fn output_distribution(&self, _: &[f64]) -> Result<crate::hypotheses::OutputDistribution> {
            Ok(self.0.intervals[0])
        }
        fn profile_1d(&self, _: (f64, f64)) -> Result<Profile1d> {
            Ok(self.0.clone())
        }
        fn linear_form(&self) -> Option<(Vec<f64>, f64)> {
            None
        }
    }
    let model = Constant(constant);
    if let AttackMap::Linear { w, b, norm_kind, pos, neg, budget } = attack {
        let dn = norm_kind.dual_norm(w);
        if dn > 0.0 && matches!(cfg.eval, EvalMethod::Exact) {
            let projected = spec.project_linear(w, *b, dn)?;
            let inner = AttackMap::Piecewise1d { budget: *budget, norm_kind: *norm_kind, pos: pos.clone(), neg: neg.clone() };
            return Ok(adversarial_score(&model, &inner, &projected, cfg)?.penalty_value);
        }
    }
    Ok(adversarial_score(&model, attack, spec, cfg)?.penalty_value)
}

/// Independent evaluation of the best-response score of a deterministic
/// classifier as natural risk plus the attackable zones:
/// `R(h) + Σ_y ν_y ∫_{zone_y} (1 − λ·c(d(x))) dμ_y`, where `d` is the
/// distance to the other decision region. Computed by quadrature from the
/// attackable sets, not from an attack map.
pub fn score_decomposition<C: Classifier + ?Sized>(model: &C, spec: &DistributionSpec, cfg: &GameConfig) -> Result<ScoreReport> {
    cfg.validate()?;
    if cfg.penalty == Penalty::None {
        return Err(Error::Unsupported("decomposition needs a penalized adversary".into()));
    }
    let (spec1, profile) = if spec.dimension == 1 {
        (spec.clone(), model.profile_1d(profile_window(spec, cfg))?)
    } else {
        let (w, b) = model.linear_form().ok_or_else(|| Error::Unsupported("decomposition needs a 1-D or linear classifier".into()))?;
        let dn = cfg.norm_kind.dual_norm(&w);
        if dn == 0.0 {
            return Err(Error::InvalidInput("zero weight vector".into()));
        }
        (spec.project_linear(&w, b, dn)?, Profile1d::from_labels(vec![0.0], &[-1, 1], &[0]))
    };
    if !profile.is_deterministic() {
        return Err(Error::Unsupported("decomposition needs a deterministic classifier".into()));
    }
    let grid = Grid::default().with_breaks(profile.breaks.clone());
    let mut terms = [ClassTerms::default(); 2];
    for (slot, label) in terms.iter_mut().zip([Label::Pos, Label::Neg]) {
        let e = profile.error_profile(label);
        slot.base = integrate(|x| e.at(x[0]), &spec1, label, &grid)?;
        // the zone of label y is the part of the region predicting y
        let mut zone = 0.0;
        let mut cost = 0.0;
        for (part, run) in profile.attackable_runs(label.sign(), cfg.epsilon) {
            let g = Grid::with_points(1 << 11).with_bounds(vec![(part.lo, part.hi)]);
            let d = |x: f64| (x - run.lo).min(run.hi - x).max(0.0);
            zone += integrate(|_| 1.0, &spec1, label, &g)?;
            cost += integrate(|x| cfg.cost(d(x[0])), &spec1, label, &g)?;
        }
        slot.attacked = slot.base + zone;
        slot.cost = cost;
    }
    Ok(ScoreReport::assemble(&spec1, cfg, terms[0], terms[1], "decomposition"))
}
