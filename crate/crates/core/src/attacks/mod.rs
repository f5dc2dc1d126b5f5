//! Gradient attacks: ℓ∞ PGD and ℓ₂ Carlini–Wagner, their adaptive variants
//! against mixtures, and the rejection-threshold filter.
//!
//! Scalar models are attacked through the logit pair `(-g, g)`, so every
//! loss is a two-class softmax cross-entropy. Mixtures are attacked through
//! the exact expectation over their weights, never by sampling.

mod cw;
mod pgd;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{EmpiricalMeasure, Label};
use crate::error::{check_dim, Error, Result};
use crate::hypotheses::{Hypothesis, MixedClassifier};
use crate::training::mlp::{loss_and_grad, LossKind, MlpModel};

pub use cw::{adaptive_cw, cw_l2, cw_l2_at, CwConfig, CW_THRESHOLDS};
pub(crate) use cw::select_adaptive;
pub use pgd::{adaptive_pgd, adaptive_pgd_at, pgd_linf, pgd_linf_at, PgdConfig};

/// How a mixture is differentiated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EotMode {
    /// Loss of the expected logits.
    #[default]
    Logits,
    /// Expected loss over the components.
    Loss,
}

/// A model whose logit pair can be differentiated in the input.
pub trait Differentiable: Send + Sync {
    fn input_dim(&self) -> usize;

    /// Logit pair `(z_neg, z_pos)`.
    fn logits(&self, x: &[f64]) -> [f64; 2];

    /// Logits and the input gradient of `c · logits`.
    fn logits_vjp(&self, x: &[f64], c: [f64; 2]) -> ([f64; 2], Vec<f64>);

    /// Probability that the model errs at `x`. A zero margin is an error.
    fn error_prob(&self, x: &[f64], y: Label) -> f64 {
        if margin(self.logits(x), y) <= 0.0 {
            1.0
        } else {
            0.0
        }
    }

    /// Loss and its input gradient. Single models ignore `mode`.
    fn loss_grad(&self, x: &[f64], y: Label, kind: LossKind, _mode: EotMode) -> (f64, Vec<f64>) {
        let z = self.logits(x);
        let (loss, dz) = loss_and_grad(z, y, kind);
        (loss, self.logits_vjp(x, dz).1)
    }
}

/// `z_y - z_{-y}`.
pub fn margin(z: [f64; 2], y: Label) -> f64 {
    match y {
        Label::Pos => z[1] - z[0],
        Label::Neg => z[0] - z[1],
    }
}

impl Differentiable for MlpModel {
    fn input_dim(&self) -> usize {
        MlpModel::input_dim(self)
    }

    fn logits(&self, x: &[f64]) -> [f64; 2] {
        MlpModel::logits_from_output(self.forward_unchecked(x).output())
    }

    fn logits_vjp(&self, x: &[f64], c: [f64; 2]) -> ([f64; 2], Vec<f64>) {
        let cache = self.forward_unchecked(x);
        let z = MlpModel::logits_from_output(cache.output());
        (z, self.backward(&cache, c).1)
    }
}

/// Finite mixture of differentiable models with known weights.
#[derive(Debug, Clone, PartialEq)]
pub struct EotModel {
    pub weights: Vec<f64>,
    pub models: Vec<MlpModel>,
}

fn as_network(h: &Hypothesis) -> Result<MlpModel> {
    match h {
        Hypothesis::Linear { w, b } => Ok(MlpModel::linear(w, *b)),
        Hypothesis::Mlp { model } => Ok(model.clone()),
        _ => Err(Error::Unsupported("gradient attacks need linear or mlp models".into())),
    }
}

impl EotModel {
    pub fn new(models: Vec<MlpModel>, weights: Vec<f64>) -> Result<Self> {
        let hyps = models.iter().map(|m| Hypothesis::Mlp { model: m.clone() }).collect();
        MixedClassifier::new(hyps, weights.clone())?;
        for m in &models {
            m.validate()?;
        }
        Ok(EotModel { weights, models })
    }

    pub fn single(model: MlpModel) -> Self {
        EotModel { weights: vec![1.0], models: vec![model] }
    }

    pub fn from_hypothesis(h: &Hypothesis) -> Result<Self> {
        Ok(Self::single(as_network(h)?))
    }

    pub fn from_mixture(m: &MixedClassifier) -> Result<Self> {
        m.validate()?;
        let models = m.hypotheses.iter().map(as_network).collect::<Result<Vec<_>>>()?;
        Ok(EotModel { weights: m.weights.clone(), models })
    }

    pub fn to_mixture(&self) -> Result<MixedClassifier> {
        let hyps = self.models.iter().map(|m| Hypothesis::Mlp { model: m.clone() }).collect();
        MixedClassifier::new(hyps, self.weights.clone())
    }

    fn active(&self) -> impl Iterator<Item = (f64, &MlpModel)> {
        self.weights.iter().copied().zip(&self.models).filter(|(q, _)| *q > 0.0)
    }
}

impl Differentiable for EotModel {
    fn input_dim(&self) -> usize {
        self.models[0].input_dim()
    }

    fn logits(&self, x: &[f64]) -> [f64; 2] {
        let mut z = [0.0; 2];
        for (q, m) in self.active() {
            let zi = Differentiable::logits(m, x);
            z[0] += q * zi[0];
            z[1] += q * zi[1];
        }
        z
    }

    fn logits_vjp(&self, x: &[f64], c: [f64; 2]) -> ([f64; 2], Vec<f64>) {
        let mut z = [0.0; 2];
        let mut g = vec![0.0; x.len()];
        for (q, m) in self.active() {
            let (zi, gi) = m.logits_vjp(x, c);
            z[0] += q * zi[0];
            z[1] += q * zi[1];
            for (a, b) in g.iter_mut().zip(gi) {
                *a += q * b;
            }
        }
        (z, g)
    }

    fn error_prob(&self, x: &[f64], y: Label) -> f64 {
        self.active().map(|(q, m)| q * m.error_prob(x, y)).sum()
    }

    fn loss_grad(&self, x: &[f64], y: Label, kind: LossKind, mode: EotMode) -> (f64, Vec<f64>) {
        match mode {
            EotMode::Logits => {
                let z = self.logits(x);
                let (loss, dz) = loss_and_grad(z, y, kind);
                (loss, self.logits_vjp(x, dz).1)
            }
            EotMode::Loss => {
                let mut loss = 0.0;
                let mut g = vec![0.0; x.len()];
                for (q, m) in self.active() {
                    let (li, gi) = m.loss_grad(x, y, kind, mode);
                    loss += q * li;
                    for (a, b) in g.iter_mut().zip(gi) {
                        *a += q * b;
                    }
                }
                (loss, g)
            }
        }
    }
}

/// Exact expected logits `Σ q_i z_i(x)` of a mixture.
pub fn eot_logits(m: &MixedClassifier, x: &[f64]) -> Result<[f64; 2]> {
    let e = EotModel::from_mixture(m)?;
    check_dim(e.input_dim(), x.len())?;
    Ok(e.logits(x))
}

/// Outcome of attacking one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    /// Effective output; the natural point when rejected or failed.
    pub adversarial: Vec<f64>,
    pub l2: f64,
    pub linf: f64,
    pub success: bool,
    pub rejected: bool,
    pub loss_trace: Vec<f64>,
}

impl AttackResult {
    pub(crate) fn new(x: &[f64], adversarial: Vec<f64>, success: bool, loss_trace: Vec<f64>) -> Self {
        let (l2, linf) = norms(x, &adversarial);
        AttackResult { adversarial, l2, linf, success, rejected: false, loss_trace }
    }

    /// Apply [`reject_threshold`] in place.
    pub fn with_threshold(mut self, x: &[f64], epsilon2: f64) -> Self {
        let (p, rejected) = reject_threshold(x, &self.adversarial, epsilon2);
        if rejected {
            self.adversarial = p;
            self.rejected = true;
            self.success = false;
            self.l2 = 0.0;
            self.linf = 0.0;
        }
        self
    }
}

pub(crate) fn norms(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut s = 0.0;
    let mut m: f64 = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = (x - y).abs();
        s += d * d;
        m = m.max(d);
    }
    (s.sqrt(), m)
}

/// Keep `adversarial` only if it lies within `epsilon2` of `natural` in ℓ₂
/// (boundary included). Returns the effective point and the rejected flag.
pub fn reject_threshold(natural: &[f64], adversarial: &[f64], epsilon2: f64) -> (Vec<f64>, bool) {
    if norms(natural, adversarial).0 > epsilon2 {
        (natural.to_vec(), true)
    } else {
        (adversarial.to_vec(), false)
    }
}

/// Exact expected accuracy of `model` on the given (possibly perturbed)
/// points, labels taken from `data`.
pub fn expected_accuracy<M: Differentiable + ?Sized>(model: &M, data: &EmpiricalMeasure, points: &[Vec<f64>]) -> f64 {
    if data.is_empty() {
        return f64::NAN;
    }
    let err: f64 = data.samples.iter().zip(points).map(|(s, p)| model.error_prob(p, s.label)).sum();
    1.0 - err / data.len() as f64
}

/// Attack every sample of `data` with `attack(x, y, index)`, in parallel,
/// collected in sample order.
pub fn attack_all<F>(data: &EmpiricalMeasure, attack: F) -> Result<Vec<AttackResult>>
where
    F: Fn(&[f64], Label, u64) -> Result<AttackResult> + Sync,
{
    data.samples.par_iter().enumerate().map(|(i, s)| attack(&s.point, s.label, i as u64)).collect()
}

/// Accuracy under an attack whose results are already computed.
pub fn accuracy_under<M: Differentiable + ?Sized>(model: &M, data: &EmpiricalMeasure, results: &[AttackResult]) -> f64 {
    let pts: Vec<Vec<f64>> = results.iter().map(|r| r.adversarial.clone()).collect();
    expected_accuracy(model, data, &pts)
}

/// Exact expected accuracy of the mixture under [`adaptive_pgd_at`], one
/// randomness stream per sample.
pub fn accuracy_under_adaptive_pgd(model: &EotModel, data: &EmpiricalMeasure, cfg: &PgdConfig) -> Result<f64> {
    let results = attack_all(data, |x, y, i| adaptive_pgd_at(model, x, y, cfg, i))?;
    Ok(accuracy_under(model, data, &results))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn eot_degenerate_weights() {
        let h1 = Hypothesis::linear(vec![1.0, -2.0], 0.5);
        let h2 = Hypothesis::linear(vec![-3.0, 1.0], 0.0);
        let m = MixedClassifier::new(vec![h1.clone(), h2], vec![1.0, 0.0]).unwrap();
        let x = [0.3, 0.7];
        let g = h1.decision_value(&x).unwrap();
        assert_eq!(eot_logits(&m, &x).unwrap(), [-g, g]);
    }

    #[test]
    fn eot_of_linear_models_is_averaged_linear() {
        let m = MixedClassifier::new(
            vec![Hypothesis::linear(vec![1.0, -2.0], 0.5), Hypothesis::linear(vec![-3.0, 1.0], -1.0)],
            vec![0.25, 0.75],
        )
        .unwrap();
        let avg = Hypothesis::linear(vec![0.25 - 2.25, -0.5 + 0.75], 0.125 - 0.75);
        for x in [[0.0, 0.0], [1.0, -2.0], [0.3, 4.0]] {
            let z = eot_logits(&m, &x).unwrap();
            assert!((z[1] - avg.decision_value(&x).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn eot_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let e = EotModel::new(
            vec![MlpModel::init(&[2, 8, 2], 1).unwrap(), MlpModel::init(&[2, 8, 8, 1], 2).unwrap()],
            vec![0.3, 0.7],
        )
        .unwrap();
        for _ in 0..20 {
            let x = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let c = [0.7, -1.3];
            let (_, g) = e.logits_vjp(&x, c);
            let mut comp = [0.0; 2];
            for (q, m) in e.weights.iter().zip(&e.models) {
                for (a, b) in comp.iter_mut().zip(m.logits_vjp(&x, c).1) {
                    *a += q * b;
                }
            }
            for k in 0..2 {
                let h = 1e-5;
                let (mut up, mut dn) = (x, x);
                up[k] += h;
                dn[k] -= h;
                let f = |p: &[f64]| {
                    let z = e.logits(p);
                    c[0] * z[0] + c[1] * z[1]
                };
                let fd = (f(&up) - f(&dn)) / (2.0 * h);
                let scale = g[k].abs().max(1e-6);
                assert!((g[k] - fd).abs() / scale < 1e-4, "{} vs {fd}", g[k]);
                assert!((g[k] - comp[k]).abs() <= 1e-12 * scale.max(1.0));
            }
        }
    }

    #[test]
    fn non_differentiable_kind_rejected() {
        let m = MixedClassifier::single(Hypothesis::threshold(0.0, crate::hypotheses::Orientation::Pos));
        assert!(matches!(EotModel::from_mixture(&m), Err(Error::Unsupported(_))));
    }

    #[test]
    fn rejection_threshold() {
        let x = [0.0, 0.0];
        let (p, r) = reject_threshold(&x, &[0.9, 0.0], 0.8);
        assert!(r);
        assert_eq!(p, x.to_vec());
        assert!(!reject_threshold(&x, &x, 0.8).1);
        let (p, r) = reject_threshold(&x, &[0.0, 0.8], 0.8);
        assert!(!r);
        assert_eq!(p, vec![0.0, 0.8]);
    }

    #[test]
    fn mixture_error_is_weighted() {
        let m = EotModel::new(vec![MlpModel::linear(&[1.0], 0.0), MlpModel::linear(&[-1.0], 0.0)], vec![0.8, 0.2]).unwrap();
        assert!((m.error_prob(&[1.0], Label::Pos) - 0.2).abs() < 1e-15);
        assert!((m.error_prob(&[-1.0], Label::Pos) - 0.8).abs() < 1e-15);
        // a zero decision is an error for both components
        assert_eq!(m.error_prob(&[0.0], Label::Neg), 1.0);
    }
}
