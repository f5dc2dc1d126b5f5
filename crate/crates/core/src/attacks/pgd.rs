use serde::{Deserialize, Serialize};

use super::{margin, AttackResult, Differentiable, EotMode, EotModel};
use crate::distributions::{sample_rng, Label};
use crate::error::{check_dim, Error, Result};
use crate::training::mlp::LossKind;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PgdConfig {
    pub epsilon_inf: f64,
    pub step: f64,
    pub iters: usize,
    pub restarts: usize,
    pub random_init: bool,
    pub seed: u64,
    /// Box `[lo, hi]^d` the output is clipped to, if the domain is bounded.
    #[serde(default)]
    pub clip: Option<(f64, f64)>,
    #[serde(default)]
    pub eot: EotMode,
}

impl PgdConfig {
    pub fn new(epsilon_inf: f64, step: f64, iters: usize) -> Self {
        PgdConfig { epsilon_inf, step, iters, restarts: 1, random_init: false, seed: 0, clip: None, eot: EotMode::Logits }
    }

    /// ε∞ = 0.031, step 0.008, 100 iterations, 3 random restarts on the unit box.
    pub fn paper() -> Self {
        PgdConfig {
            epsilon_inf: 0.031,
            step: 0.008,
            iters: 100,
            restarts: 3,
            random_init: true,
            seed: 0,
            clip: Some((0.0, 1.0)),
            eot: EotMode::Logits,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_inf >= 0.0 && self.epsilon_inf.is_finite()) {
            return Err(Error::Config(format!("epsilon_inf must be finite and >= 0, got {}", self.epsilon_inf)));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::Config(format!("pgd step must be > 0, got {}", self.step)));
        }
        if self.iters == 0 {
            return Err(Error::Config("pgd iters must be >= 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::Config("pgd restarts must be >= 1".into()));
        }
        if let Some((lo, hi)) = self.clip {
            if !(lo < hi) {
                return Err(Error::Config(format!("empty clip box [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

fn project(p: &mut [f64], x: &[f64], eps: f64, clip: Option<(f64, f64)>) {
    for (pi, xi) in p.iter_mut().zip(x) {
        *pi = pi.clamp(xi - eps, xi + eps);
        if let Some((lo, hi)) = clip {
            *pi = pi.clamp(lo, hi);
        }
    }
}

/// Single-sample PGD with randomness from stream 0 of `cfg.seed`.
pub fn pgd_linf<M: Differentiable + ?Sized>(model: &M, x: &[f64], y: Label, cfg: &PgdConfig) -> Result<AttackResult> {
    pgd_linf_at(model, x, y, cfg, 0)
}

/// ℓ∞ PGD on the cross-entropy: `x ← Π(x + β·sign ∇L)`. Returns the iterate
/// with the highest loss over all restarts and iterations; the trace holds
/// the running best after each restart. Randomness comes from stream
/// `index` of `cfg.seed`.
pub fn pgd_linf_at<M: Differentiable + ?Sized>(model: &M, x: &[f64], y: Label, cfg: &PgdConfig, index: u64) -> Result<AttackResult> {
    cfg.validate()?;
    check_dim(model.input_dim(), x.len())?;
    if let Some((lo, hi)) = cfg.clip {
        if x.iter().any(|v| *v < lo || *v > hi) {
            return Err(Error::InvalidInput(format!("point outside the clip box [{lo}, {hi}]")));
        }
    }
    let eps = cfg.epsilon_inf;
    let mut rng = sample_rng(cfg.seed, index);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut trace = Vec::with_capacity(cfg.restarts);
    for _ in 0..cfg.restarts {
        let mut p = x.to_vec();
        if cfg.random_init && eps > 0.0 {
            for v in p.iter_mut() {
                *v += rng.random_range(-eps..=eps);
            }
            project(&mut p, x, eps, cfg.clip);
        }
        let keep = |loss: f64, p: &[f64], best: &mut Option<(f64, Vec<f64>)>| {
            if best.as_ref().is_none_or(|(b, _)| loss > *b) {
                *best = Some((loss, p.to_vec()));
            }
        };
        for _ in 0..cfg.iters {
            let (loss, g) = model.loss_grad(&p, y, LossKind::CrossEntropy, cfg.eot);
            keep(loss, &p, &mut best);
            for (pi, gi) in p.iter_mut().zip(&g) {
                if *gi > 0.0 {
                    *pi += cfg.step;
                } else if *gi < 0.0 {
                    *pi -= cfg.step;
                }
            }
            project(&mut p, x, eps, cfg.clip);
            let dist = p.iter().zip(x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            // clamping to x ± ε can overshoot by one rounding step
            if dist > eps + 4.0 * f64::EPSILON * (1.0 + eps + x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))) {
                return Err(Error::BudgetViolation { distance: dist, budget: eps });
            }
        }
        keep(model.loss_grad(&p, y, LossKind::CrossEntropy, cfg.eot).0, &p, &mut best);
        trace.push(best.as_ref().unwrap().0);
    }
    let adv = best.unwrap().1;
    let success = margin(model.logits(&adv), y) <= 0.0;
    Ok(AttackResult::new(x, adv, success, trace))
}

pub fn adaptive_pgd(model: &EotModel, x: &[f64], y: Label, cfg: &PgdConfig) -> Result<AttackResult> {
    adaptive_pgd_at(model, x, y, cfg, 0)
}

/// PGD through the expected logits and through the expected loss; keeps the
/// candidate with the larger exact expected error (ties: smaller ℓ∞ move,
/// then the expected-logits run).
pub fn adaptive_pgd_at(model: &EotModel, x: &[f64], y: Label, cfg: &PgdConfig, index: u64) -> Result<AttackResult> {
    let a = pgd_linf_at(model, x, y, &PgdConfig { eot: EotMode::Logits, ..*cfg }, index)?;
    if model.weights.iter().filter(|q| **q > 0.0).count() < 2 {
        return Ok(a);
    }
    let b = pgd_linf_at(model, x, y, &PgdConfig { eot: EotMode::Loss, ..*cfg }, index)?;
    let (ea, eb) = (model.error_prob(&a.adversarial, y), model.error_prob(&b.adversarial, y));
    Ok(if eb > ea + 1e-12 || ((eb - ea).abs() <= 1e-12 && b.linf < a.linf) { b } else { a })
}
