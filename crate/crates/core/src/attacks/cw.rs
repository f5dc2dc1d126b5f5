use serde::{Deserialize, Serialize};

use super::{margin, AttackResult, Differentiable, EotMode, EotModel};
use crate::distributions::Label;
use crate::error::{check_dim, Error, Result};

/// Rejection thresholds ε₂ used when reporting C&W accuracies.
pub const CW_THRESHOLDS: [f64; 3] = [0.4, 0.6, 0.8];

const ADAM_B1: f64 = 0.9;
const ADAM_B2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const UPPER_INIT: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CwConfig {
    pub lr: f64,
    pub binary_search_steps: usize,
    pub initial_const: f64,
    pub iters: usize,
    pub abort_early: bool,
    /// Kept for config symmetry; the attack itself is deterministic.
    pub seed: u64,
    /// Box `[lo, hi]^d` of the tanh change of variable.
    #[serde(default = "unit_box")]
    pub domain: (f64, f64),
}

fn unit_box() -> (f64, f64) {
    (0.0, 1.0)
}

impl CwConfig {
    /// lr 0.01, 9 binary-search steps, initial constant 0.001, 100 iterations.
    pub fn paper() -> Self {
        CwConfig {
            lr: 0.01,
            binary_search_steps: 9,
            initial_const: 0.001,
            iters: 100,
            abort_early: true,
            seed: 0,
            domain: unit_box(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !(self.initial_const > 0.0) {
            return Err(Error::Config("cw lr and initial_const must be > 0".into()));
        }
        if self.binary_search_steps == 0 || self.iters == 0 {
            return Err(Error::Config("cw binary_search_steps and iters must be >= 1".into()));
        }
        if !(self.domain.0 < self.domain.1) {
            return Err(Error::Config(format!("empty cw domain {:?}", self.domain)));
        }
        Ok(())
    }
}

/// Hinge `max(m, 0)` on the margins and its input gradient. Through the
/// expected logits this is one margin; through the expected loss it is the
/// weighted sum over components. Zero means every margin is ≤ 0.
fn hinge(model: &dyn Differentiable, eot: Option<&EotModel>, x: &[f64], y: Label, mode: EotMode) -> (f64, Vec<f64>) {
    let dm = match y {
        Label::Pos => [-1.0, 1.0],
        Label::Neg => [1.0, -1.0],
    };
    match (eot, mode) {
        (Some(e), EotMode::Loss) => {
            let mut f = 0.0;
            let mut g = vec![0.0; x.len()];
            for (q, m) in e.weights.iter().zip(&e.models).filter(|(q, _)| **q > 0.0) {
                let (z, gi) = m.logits_vjp(x, dm);
                let mi = margin(z, y);
                if mi > 0.0 {
                    f += q * mi;
                    for (a, b) in g.iter_mut().zip(gi) {
                        *a += q * b;
                    }
                }
            }
            (f, g)
        }
        _ => {
            let (z, g) = model.logits_vjp(x, dm);
            let m = margin(z, y);
            if m > 0.0 {
                (m, g)
            } else {
                (0.0, vec![0.0; x.len()])
            }
        }
    }
}

fn run(model: &dyn Differentiable, eot: Option<&EotModel>, x: &[f64], y: Label, cfg: &CwConfig, mode: EotMode) -> Result<AttackResult> {
    cfg.validate()?;
    check_dim(model.input_dim(), x.len())?;
    let (lo, hi) = cfg.domain;
    if x.iter().any(|v| *v < lo || *v > hi) {
        return Err(Error::InvalidInput(format!("point outside the cw domain [{lo}, {hi}]")));
    }
    if hinge(model, eot, x, y, mode).0 == 0.0 {
        return Ok(AttackResult::new(x, x.to_vec(), true, vec![0.0]));
    }
    let half = 0.5 * (hi - lo);
    let w0: Vec<f64> = x.iter().map(|v| ((v - lo) / half - 1.0).clamp(-1.0 + 1e-12, 1.0 - 1e-12).atanh()).collect();
    let to_box = |w: &[f64]| -> Vec<f64> { w.iter().map(|v| lo + half * (v.tanh() + 1.0)).collect() };

    let (mut lower, mut upper, mut c) = (0.0, UPPER_INIT, cfg.initial_const);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut trace = Vec::with_capacity(cfg.binary_search_steps);
    let check_every = (cfg.iters / 10).max(1);
    for _ in 0..cfg.binary_search_steps {
        let mut w = w0.clone();
        let (mut m1, mut m2) = (vec![0.0; x.len()], vec![0.0; x.len()]);
        let mut prev = f64::INFINITY;
        let mut succeeded = false;
        let mut obj = f64::INFINITY;
        for it in 0..cfg.iters {
            let p = to_box(&w);
            let tau: Vec<f64> = p.iter().zip(x).map(|(a, b)| a - b).collect();
            let d2: f64 = tau.iter().map(|t| t * t).sum();
            let (f, gf) = hinge(model, eot, &p, y, mode);
            obj = d2 + c * f;
            if f == 0.0 {
                succeeded = true;
                if best.as_ref().is_none_or(|(b, _)| d2 < *b) {
                    best = Some((d2, p.clone()));
                }
            }
            if cfg.abort_early && it % check_every == 0 {
                if obj > prev * 0.9999 {
                    break;
                }
                prev = obj;
            }
            let t = (it + 1) as i32;
            for k in 0..w.len() {
                let th = w[k].tanh();
                let g = (2.0 * tau[k] + c * gf[k]) * half * (1.0 - th * th);
                m1[k] = ADAM_B1 * m1[k] + (1.0 - ADAM_B1) * g;
                m2[k] = ADAM_B2 * m2[k] + (1.0 - ADAM_B2) * g * g;
                let mh = m1[k] / (1.0 - ADAM_B1.powi(t));
                let vh = m2[k] / (1.0 - ADAM_B2.powi(t));
                w[k] -= cfg.lr * mh / (vh.sqrt() + ADAM_EPS);
            }
        }
        trace.push(obj);
        if succeeded {
            upper = upper.min(c);
            c = 0.5 * (lower + upper);
        } else {
            lower = lower.max(c);
            c = if upper < UPPER_INIT { 0.5 * (lower + upper) } else { c * 10.0 };
        }
    }
    Ok(match best {
        Some((_, p)) => AttackResult::new(x, p, true, trace),
        None => AttackResult::new(x, x.to_vec(), false, trace),
    })
}

/// Carlini–Wagner ℓ₂: minimizes `‖τ‖₂² + c·max(z_y − z_{−y}, 0)` in the tanh
/// variable, binary-searching `c`. Returns the smallest successful
/// perturbation, or the natural point with `success = false`.
pub fn cw_l2<M: Differentiable>(model: &M, x: &[f64], y: Label, cfg: &CwConfig) -> Result<AttackResult> {
    run(model, None, x, y, cfg, EotMode::Logits)
}

/// C&W against a mixture, through the expected logits or the expected loss.
/// Through the expected loss a step succeeds only when every component errs.
pub fn cw_l2_at(model: &EotModel, x: &[f64], y: Label, cfg: &CwConfig, mode: EotMode) -> Result<AttackResult> {
    run(model, Some(model), x, y, cfg, mode)
}

/// Both C&W variants against the mixture; keeps the one with the larger
/// exact expected error, ties going to the smaller perturbation. With
/// `epsilon2` the comparison is made after the rejection filter.
pub fn adaptive_cw(model: &EotModel, x: &[f64], y: Label, cfg: &CwConfig, epsilon2: Option<f64>) -> Result<AttackResult> {
    let a = cw_l2_at(model, x, y, cfg, EotMode::Logits)?;
    let b = cw_l2_at(model, x, y, cfg, EotMode::Loss)?;
    Ok(select_adaptive(model, x, y, [a, b], epsilon2))
}

pub(crate) fn select_adaptive(model: &EotModel, x: &[f64], y: Label, cands: [AttackResult; 2], epsilon2: Option<f64>) -> AttackResult {
    let [a, b] = cands.map(|r| match epsilon2 {
        Some(e) => r.with_threshold(x, e),
        None => r,
    });
    let (ea, eb) = (model.error_prob(&a.adversarial, y), model.error_prob(&b.adversarial, y));
    if eb > ea + 1e-12 || ((eb - ea).abs() <= 1e-12 && b.l2 < a.l2) {
        b
    } else {
        a
    }
}
