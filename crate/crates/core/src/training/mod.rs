//! Natural and adversarial training of small networks, boosted adversarial
//! training (BAT) and the grid search over the mixture weight.

pub mod mlp;

use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::{accuracy_under_adaptive_pgd, adaptive_pgd_at, attack_all, expected_accuracy, pgd_linf_at, EotModel, PgdConfig};
use crate::distributions::{sample_rng, EmpiricalMeasure, Label, LabeledSample};
use crate::error::{Error, Result};
use crate::hypotheses::{Hypothesis, MixedClassifier};
pub use mlp::{mlp_backward, mlp_forward, ForwardCache, LossKind, MlpGradients, MlpModel};

/// Learning rate `lr` from epoch `from_epoch` on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrStage {
    pub from_epoch: usize,
    pub lr: f64,
}

/// Which adversarially trained checkpoint is kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Checkpoint {
    Last,
    /// Best accuracy under attack on the evaluation set.
    #[default]
    BestAua,
    /// Best natural accuracy on the evaluation set.
    BestNatural,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: Vec<LrStage>,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
    #[serde(default)]
    pub checkpoint: Checkpoint,
}

impl TrainConfig {
    /// 200 epochs, batch 128, lr 0.1/0.02/0.004/0.0008 from epochs
    /// 0/60/120/160, momentum 0.9, weight decay 2e-4.
    pub fn paper() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 128,
            schedule: [(0, 0.1), (60, 0.02), (120, 0.004), (160, 0.0008)]
                .into_iter()
                .map(|(from_epoch, lr)| LrStage { from_epoch, lr })
                .collect(),
            momentum: 0.9,
            weight_decay: 2e-4,
            seed: 0,
            checkpoint: Checkpoint::BestAua,
        }
    }

    /// The full schedule compressed to 50 epochs.
    pub fn desk() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 64,
            schedule: [(0, 0.1), (15, 0.02), (30, 0.004), (40, 0.0008)]
                .into_iter()
                .map(|(from_epoch, lr)| LrStage { from_epoch, lr })
                .collect(),
            ..Self::paper()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.schedule.first().map(|s| s.from_epoch) != Some(0) {
            return Err(Error::Config("schedule must start at epoch 0".into()));
        }
        if self.schedule.windows(2).any(|w| w[1].from_epoch <= w[0].from_epoch) {
            return Err(Error::Config("schedule stages must be strictly ordered".into()));
        }
        if self.schedule.iter().any(|s| !(s.lr > 0.0 && s.lr.is_finite())) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("momentum must be in [0, 1) and weight_decay >= 0".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.schedule.iter().rev().find(|s| s.from_epoch <= epoch).map_or(self.schedule[0].lr, |s| s.lr)
    }
}

/// PGD used while training and, with more iterations, at evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarialPreset {
    pub train: PgdConfig,
    pub eval: PgdConfig,
}

impl AdversarialPreset {
    /// 20 iterations for training, 100 for evaluation, otherwise the full-scale evaluation PGD.
    pub fn at_paper() -> Self {
        AdversarialPreset { train: PgdConfig { iters: 20, ..PgdConfig::paper() }, eval: PgdConfig::paper() }
    }

    /// Same protocol on the unbounded toy plane with ε∞ = 0.3.
    pub fn at_desk() -> Self {
        let train = PgdConfig { random_init: true, ..PgdConfig::new(0.3, 0.075, 20) };
        AdversarialPreset { train, eval: PgdConfig { iters: 100, restarts: 3, ..train } }
    }
}

/// One row of the training trace. `eval_acc_under_attack` is NaN when no
/// evaluation set or attack is configured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub eval_acc_under_attack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub model: MlpModel,
    pub trace: Vec<EpochStats>,
    /// Epoch whose parameters were kept (`epochs` for the initialization
    /// when nothing ran).
    pub kept_epoch: usize,
}

impl TrainOutcome {
    pub fn write_trace_csv(&self, path: &Path) -> Result<()> {
        write_trace_csv(&self.trace, path)
    }
}

/// Columns `epoch,train_loss,train_acc,eval_acc_under_attack`.
pub fn write_trace_csv(trace: &[EpochStats], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "train_loss", "train_acc", "eval_acc_under_attack"])?;
    for s in trace {
        w.write_record([s.epoch.to_string(), s.train_loss.to_string(), s.train_acc.to_string(), s.eval_acc_under_attack.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Points fed to the gradient step for one batch.
type BatchTransform<'a> = dyn Fn(&MlpModel, &[&LabeledSample], u64) -> Result<Vec<Vec<f64>>> + Sync + 'a;

struct Evaluation<'a> {
    data: &'a EmpiricalMeasure,
    attack: &'a PgdConfig,
}

fn check_data(arch: &[usize], data: &EmpiricalMeasure) -> Result<()> {
    if data.is_empty() {
        return Err(Error::InvalidInput("training data is empty".into()));
    }
    if arch.first() != Some(&data.dimension) {
        return Err(Error::DimensionMismatch { expected: data.dimension, got: arch.first().copied().unwrap_or(0) });
    }
    Ok(())
}

fn sgd(arch: &[usize], data: &EmpiricalMeasure, cfg: &TrainConfig, transform: &BatchTransform, eval: Option<Evaluation>) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_data(arch, data)?;
    let mut model = MlpModel::init(arch, cfg.seed)?;
    let mut velocity = vec![0.0; model.num_params()];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffle_rng = sample_rng(cfg.seed, u64::MAX);
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut kept: Option<(f64, usize, MlpModel)> = None;
    let mut batch_counter = 0u64;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let lr = cfg.lr_at(epoch);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&LabeledSample> = chunk.iter().map(|&i| &data.samples[i]).collect();
            let points = transform(&model, &batch, batch_counter)?;
            batch_counter += 1;
            let grads: Vec<MlpGradients> = batch
                .par_iter()
                .zip(&points)
                .map(|(s, p)| mlp_backward(&model, p, s.label, LossKind::CrossEntropy))
                .collect::<Result<_>>()?;
            let mut g = vec![0.0; velocity.len()];
            for gi in &grads {
                loss_sum += gi.loss;
                // cross-entropy below ln 2 means the true logit wins
                if gi.loss < std::f64::consts::LN_2 {
                    correct += 1;
                }
                for (a, b) in g.iter_mut().zip(&gi.params) {
                    *a += b;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            let mut params = model.flat_params();
            for ((p, v), gk) in params.iter_mut().zip(velocity.iter_mut()).zip(&g) {
                *v = cfg.momentum * *v + gk * scale + cfg.weight_decay * *p;
                *p -= lr * *v;
            }
            model.set_flat_params(&params)?;
        }
        let eval_acc = match &eval {
            Some(e) => {
                let single = EotModel::single(model.clone());
                let res = attack_all(e.data, |x, y, i| pgd_linf_at(&single, x, y, e.attack, i))?;
                crate::attacks::accuracy_under(&single, e.data, &res)
            }
            None => f64::NAN,
        };
        let nat_acc = match (&eval, cfg.checkpoint) {
            (Some(e), Checkpoint::BestNatural) => {
                let pts: Vec<Vec<f64>> = e.data.samples.iter().map(|s| s.point.clone()).collect();
                expected_accuracy(&model, e.data, &pts)
            }
            _ => f64::NAN,
        };
        trace.push(EpochStats {
            epoch,
            train_loss: loss_sum / data.len() as f64,
            train_acc: correct as f64 / data.len() as f64,
            eval_acc_under_attack: eval_acc,
        });
        let score = match (eval.is_some(), cfg.checkpoint) {
            (true, Checkpoint::BestAua) => Some(eval_acc),
            (true, Checkpoint::BestNatural) => Some(nat_acc),
            _ => None,
        };
        if let Some(s) = score {
            // later epochs win ties
            if kept.as_ref().is_none_or(|(b, _, _)| s >= *b) {
                kept = Some((s, epoch, model.clone()));
            }
        }
    }
    Ok(match kept {
        Some((_, epoch, m)) => TrainOutcome { model: m, trace, kept_epoch: epoch },
        None => TrainOutcome { model, kept_epoch: cfg.epochs, trace },
    })
}

/// SGD with momentum and weight decay on the cross-entropy.
pub fn train_natural(arch: &[usize], data: &EmpiricalMeasure, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let identity = |_: &MlpModel, b: &[&LabeledSample], _: u64| Ok(b.iter().map(|s| s.point.clone()).collect());
    sgd(arch, data, cfg, &identity, None)
}

/// Every batch is replaced by PGD examples against the current model before
/// the gradient step. With `eval`, each epoch is scored under the same
/// attack and `cfg.checkpoint` picks the returned parameters.
pub fn train_adversarial(
    arch: &[usize],
    data: &EmpiricalMeasure,
    cfg: &TrainConfig,
    attack_cfg: &PgdConfig,
    eval: Option<&EmpiricalMeasure>,
) -> Result<TrainOutcome> {
    attack_cfg.validate()?;
    let bs = cfg.batch_size.max(1) as u64;
    let adv = |m: &MlpModel, b: &[&LabeledSample], batch: u64| -> Result<Vec<Vec<f64>>> {
        b.par_iter()
            .enumerate()
            .map(|(i, s)| Ok(pgd_linf_at(m, &s.point, s.label, attack_cfg, batch * bs + i as u64)?.adversarial))
            .collect()
    };
    sgd(arch, data, cfg, &adv, eval.map(|data| Evaluation { data, attack: attack_cfg }))
}

/// Produces the adversarial counterpart of sample `index` against the
/// current mixture.
pub trait AdversarialGenerator: Sync {
    fn generate(&self, mixture: &EotModel, x: &[f64], y: Label, index: u64) -> Result<Vec<f64>>;
}

/// Adaptive PGD with exact expectation over the mixture weights.
pub struct AdaptivePgd(pub PgdConfig);

impl AdversarialGenerator for AdaptivePgd {
    fn generate(&self, mixture: &EotModel, x: &[f64], y: Label, index: u64) -> Result<Vec<f64>> {
        Ok(adaptive_pgd_at(mixture, x, y, &self.0, index)?.adversarial)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatOutcome {
    pub mixture: MixedClassifier,
    pub traces: Vec<Vec<EpochStats>>,
    /// Weight vector after each round, starting with `[1]`.
    pub weight_history: Vec<Vec<f64>>,
}

impl BatOutcome {
    pub fn eot(&self) -> Result<EotModel> {
        EotModel::from_mixture(&self.mixture)
    }
}

/// Mixture weights after `n - 1` boosting rounds with weight `alpha`.
pub fn bat_weights(n: usize, alpha: f64) -> Vec<Vec<f64>> {
    let mut q = vec![1.0];
    let mut hist = vec![q.clone()];
    for _ in 1..n {
        for v in q.iter_mut() {
            *v *= 1.0 - alpha;
        }
        q.push(alpha);
        hist.push(q.clone());
    }
    hist
}

/// Boosted adversarial training with `n` classifiers: `h_1` adversarially
/// trained, each later `h_i` trained naturally on adversarial examples
/// against the running mixture (labels kept), then `q_k ← (1-α) q_k`,
/// `q_i ← α`.
pub fn bat(
    arch: &[usize],
    data: &EmpiricalMeasure,
    n: usize,
    alpha: f64,
    cfg: &TrainConfig,
    attack_cfg: &PgdConfig,
    eval: Option<&EmpiricalMeasure>,
) -> Result<BatOutcome> {
    bat_with(arch, data, n, alpha, cfg, attack_cfg, eval, &AdaptivePgd(*attack_cfg))
}

#[allow(clippy::too_many_arguments)]
pub fn bat_with<G: AdversarialGenerator + ?Sized>(
    arch: &[usize],
    data: &EmpiricalMeasure,
    n: usize,
    alpha: f64,
    cfg: &TrainConfig,
    attack_cfg: &PgdConfig,
    eval: Option<&EmpiricalMeasure>,
    generator: &G,
) -> Result<BatOutcome> {
    if n < 2 {
        return Err(Error::Config(format!("bat needs n >= 2 classifiers, got {n}")));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::OutOfRange { name: "alpha_bat", value: alpha, lo: 0.0, hi: 1.0 });
    }
    let first = train_adversarial(arch, data, cfg, attack_cfg, eval)?;
    let mut models = vec![first.model];
    let mut traces = vec![first.trace];
    let history = bat_weights(n, alpha);
    for i in 1..n {
        let current = EotModel { weights: history[i - 1].clone(), models: models.clone() };
        let shifted: Vec<LabeledSample> = data
            .samples
            .par_iter()
            .enumerate()
            .map(|(k, s)| Ok(LabeledSample { point: generator.generate(&current, &s.point, s.label, k as u64)?, label: s.label }))
            .collect::<Result<_>>()?;
        let tilde = EmpiricalMeasure::from_samples(shifted, data.seed)?;
        let cfg_i = TrainConfig { seed: cfg.seed.wrapping_add(i as u64), ..cfg.clone() };
        let h = train_natural(arch, &tilde, &cfg_i)?;
        models.push(h.model);
        traces.push(h.trace);
    }
    let hyps = models.into_iter().map(|model| Hypothesis::Mlp { model }).collect();
    let mixture = MixedClassifier::new(hyps, history[n - 1].clone())?;
    Ok(BatOutcome { mixture, traces, weight_history: history })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSearch {
    pub chosen: f64,
    /// `(alpha, accuracy under attack)` per candidate, in input order.
    pub table: Vec<(f64, f64)>,
}

/// Accuracy under adaptive PGD of the `(1-α, α)` mixture of `h1`, `h2` for
/// each candidate; returns the best, ties going to the smaller α.
pub fn grid_search_alpha(h1: &MlpModel, h2: &MlpModel, validation: &EmpiricalMeasure, candidates: &[f64], attack_cfg: &PgdConfig) -> Result<AlphaSearch> {
    if candidates.is_empty() {
        return Err(Error::Config("alpha grid is empty".into()));
    }
    if let Some(a) = candidates.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(Error::OutOfRange { name: "alpha", value: *a, lo: 0.0, hi: 1.0 });
    }
    let mut table = Vec::with_capacity(candidates.len());
    for &a in candidates {
        let m = EotModel::new(vec![h1.clone(), h2.clone()], vec![1.0 - a, a])?;
        table.push((a, accuracy_under_adaptive_pgd(&m, validation, attack_cfg)?));
    }
    let mut chosen = table[0];
    for &(a, acc) in &table[1..] {
        if acc > chosen.1 + 1e-12 || ((acc - chosen.1).abs() <= 1e-12 && a < chosen.0) {
            chosen = (a, acc);
        }
    }
    Ok(AlphaSearch { chosen: chosen.0, table })
}
