//! Subcommand runners. Each returns the JSON result embedded in the report;
//! file names in results are relative to the output directory.

use std::path::Path;

use rayon::prelude::*;
use serde_json::{json, Value};

use super::config::Resolved;
use super::Outcome;
use crate::attacks::{
    accuracy_under, accuracy_under_adaptive_pgd, attack_all, cw_l2_at, select_adaptive, expected_accuracy, pgd_linf_at, AttackResult, EotMode,
    EotModel,
};
use crate::distributions::{sample_labeled, EmpiricalMeasure, Label, Transport};
use crate::error::{Error, Result};
use crate::game::{
    adversarial_score, admissible_alpha_range, best_response_attack, best_response_defender, fig1_data, randomization_gap, risk as natural_risk,
    verify_no_pure_nash, write_fig1_csv, OracleCheck, Penalty,
};
use crate::hypotheses::{bayes_optimal, Hypothesis, MixedClassifier, Orientation};
use crate::training::{self, grid_search_alpha, train_adversarial, train_natural, write_trace_csv, MlpModel};

fn hypothesis(cfg: &Resolved) -> Hypothesis {
    cfg.params.hypothesis.clone().unwrap_or_else(|| bayes_optimal(&cfg.distribution))
}

fn done(result: Value) -> Result<Outcome> {
    Ok(Outcome { pass: None, result })
}

pub(crate) fn risk(cfg: &Resolved) -> Result<Outcome> {
    let h = hypothesis(cfg);
    let eval = cfg.game[0].eval;
    done(json!({ "hypothesis": h, "risk": natural_risk(&h, &cfg.distribution, eval)? }))
}

pub(crate) fn score(cfg: &Resolved) -> Result<Outcome> {
    let h = hypothesis(cfg);
    let mut rows = Vec::new();
    for g in &cfg.game {
        let attack = best_response_attack(&h, &cfg.distribution, g)?;
        let report = adversarial_score(&h, &attack, &cfg.distribution, g)?;
        rows.push(json!({ "game": g, "score": report }));
    }
    done(json!({ "hypothesis": h, "games": rows }))
}

pub(crate) fn best_response(cfg: &Resolved, out: &Path) -> Result<Outcome> {
    let h = hypothesis(cfg);
    let spec = &cfg.distribution;
    let mut rows = Vec::new();
    for g in &cfg.game {
        let attack = best_response_attack(&h, spec, g)?;
        let defender = best_response_defender(&attack, spec, g)?;
        let before = adversarial_score(&h, &attack, spec, g)?.score;
        let after = adversarial_score(&defender, &attack, spec, g)?.score;
        let mut row = json!({
            "game": g,
            "attack": attack,
            "defender": defender,
            "score_before": before,
            "score_after": after,
        });
        if spec.dimension == 1 {
            let name = format!("best_response_{}.csv", penalty_name(g.penalty));
            write_attack_csv(&attack, cfg.params.fig1_range, cfg.params.fig1_points, &out.join(&name))?;
            row["csv"] = json!(name);
        }
        rows.push(row);
    }
    done(json!({ "hypothesis": h, "games": rows }))
}

fn penalty_name(p: Penalty) -> &'static str {
    match p {
        Penalty::Mass => "mass",
        Penalty::Norm => "norm",
        Penalty::None => "none",
    }
}

/// `x, phi_pos(x), phi_neg(x)` on an even grid.
fn write_attack_csv<T: Transport>(attack: &T, range: (f64, f64), points: usize, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "phi_pos", "phi_neg"])?;
    let step = (range.1 - range.0) / (points - 1) as f64;
    for i in 0..points {
        let x = range.0 + step * i as f64;
        let p = attack.transport(&[x], Label::Pos)?[0];
        let n = attack.transport(&[x], Label::Neg)?[0];
        w.write_record([x.to_string(), p.to_string(), n.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn no_nash(cfg: &Resolved, out: &Path) -> Result<Outcome> {
    let mut reports = Vec::new();
    let mut w = csv::Writer::from_path(out.join("no_nash.csv"))?;
    w.write_record(["penalty", "lambda", "epsilon", "round", "score_before", "score_after", "improvement"])?;
    for g in &cfg.game {
        let r = verify_no_pure_nash(&cfg.distribution, g, cfg.params.rounds)?;
        for round in &r.rounds {
            w.write_record([
                penalty_name(g.penalty).to_string(),
                g.lambda.to_string(),
                g.epsilon.to_string(),
                round.round.to_string(),
                round.score_before.to_string(),
                round.score_after.to_string(),
                round.improvement.to_string(),
            ])?;
        }
        reports.push(r);
    }
    w.flush()?;
    let pass = reports.iter().all(|r| r.pass);
    Ok(Outcome { pass: Some(pass), result: json!({ "reports": reports, "csv": "no_nash.csv" }) })
}

pub(crate) fn rand_gap(cfg: &Resolved) -> Result<Outcome> {
    let h1 = cfg.params.hypothesis.clone().unwrap_or(Hypothesis::threshold(0.0, Orientation::Pos));
    let oracle = cfg.params.oracle_check.then(OracleCheck::default);
    let mut reports = Vec::new();
    for g in &cfg.game {
        let delta = match g.penalty {
            Penalty::Norm => Some(cfg.params.delta.unwrap_or(g.epsilon / 10.0)),
            _ => None,
        };
        let alpha = match cfg.params.alpha_thm {
            Some(a) => a,
            None => {
                let (lo, hi) = admissible_alpha_range(g, delta)?;
                0.5 * (lo + hi)
            }
        };
        reports.push(randomization_gap(&h1, &cfg.distribution, g, alpha, delta, oracle)?);
    }
    let pass = reports.iter().all(|r| r.pass);
    Ok(Outcome { pass: Some(pass), result: json!({ "reports": reports }) })
}

pub(crate) fn fig1(cfg: &Resolved, out: &Path) -> Result<Outcome> {
    let g = &cfg.game[0];
    let data = fig1_data(&cfg.distribution, g.lambda, g.epsilon, cfg.params.fig1_range, cfg.params.fig1_points)?;
    let paths = write_fig1_csv(&data, out)?;
    let files: Vec<String> = paths.iter().filter_map(|p| p.file_name()).map(|f| f.to_string_lossy().into_owned()).collect();
    let atoms: Vec<Value> = data.panels.iter().map(|p| json!({ "panel": p.name, "atoms": p.atoms })).collect();
    done(json!({ "lambda": g.lambda, "epsilon": g.epsilon, "files": files, "atoms": atoms }))
}

struct Splits {
    train: EmpiricalMeasure,
    validation: Option<EmpiricalMeasure>,
    test: EmpiricalMeasure,
}

/// A dataset file is split in the proportions of `params.samples`;
/// otherwise each split is sampled with its own seed.
fn splits(cfg: &Resolved) -> Result<Splits> {
    let s = cfg.params.samples;
    let (train, validation, test) = match &cfg.dataset {
        Some(path) => {
            let all = EmpiricalMeasure::load_csv(path, cfg.seed)?;
            let total = (s.train + s.validation + s.test) as f64;
            let n_train = ((all.len() as f64) * s.train as f64 / total).round() as usize;
            let n_val = ((all.len() as f64) * s.validation as f64 / total).round() as usize;
            let (train, rest) = all.split_at(n_train);
            let (validation, test) = rest.split_at(n_val);
            if train.is_empty() || test.is_empty() {
                return Err(Error::Config(format!("dataset {} too small to split", path.display())));
            }
            (train, validation, test)
        }
        None => {
            let seed = |k: u64| cfg.seed.wrapping_mul(3).wrapping_add(k);
            let validation = if s.validation == 0 {
                EmpiricalMeasure { samples: Vec::new(), seed: seed(1), dimension: cfg.distribution.dimension }
            } else {
                sample_labeled(&cfg.distribution, s.validation, seed(1))?
            };
            (sample_labeled(&cfg.distribution, s.train, seed(0))?, validation, sample_labeled(&cfg.distribution, s.test, seed(2))?)
        }
    };
    let arch = &cfg.params.arch;
    if arch.first() != Some(&train.dimension) {
        return Err(Error::Config(format!("params.arch starts with {:?} but the data has dimension {}", arch.first(), train.dimension)));
    }
    Ok(Splits { train, validation: (!validation.is_empty()).then_some(validation), test })
}

fn natural_accuracy(model: &EotModel, data: &EmpiricalMeasure) -> f64 {
    let pts: Vec<Vec<f64>> = data.samples.iter().map(|s| s.point.clone()).collect();
    expected_accuracy(model, data, &pts)
}

pub(crate) fn train(cfg: &Resolved, out: &Path) -> Result<Outcome> {
    let d = splits(cfg)?;
    let outcome = if cfg.params.adversarial {
        train_adversarial(&cfg.params.arch, &d.train, &cfg.train, &cfg.pgd, d.validation.as_ref())?
    } else {
        train_natural(&cfg.params.arch, &d.train, &cfg.train)?
    };
    std::fs::write(out.join("model.json"), serde_json::to_string_pretty(&outcome.model)? + "\n")?;
    outcome.write_trace_csv(&out.join("trace.csv"))?;
    let model = &outcome.model;
    let attacked = attack_all(&d.test, |x, y, i| pgd_linf_at(model, x, y, &cfg.eval_pgd, i))?;
    let single = EotModel::single(model.clone());
    done(json!({
        "adversarial": cfg.params.adversarial,
        "kept_epoch": outcome.kept_epoch,
        "final": outcome.trace.last(),
        "test_natural": natural_accuracy(&single, &d.test),
        "test_pgd": accuracy_under(model, &d.test, &attacked),
        "files": ["model.json", "trace.csv"],
    }))
}

fn write_traces(traces: &[Vec<training::EpochStats>], out: &Path) -> Result<Vec<String>> {
    let mut files = Vec::new();
    for (i, t) in traces.iter().enumerate() {
        let name = format!("trace_h{}.csv", i + 1);
        write_trace_csv(t, &out.join(&name))?;
        files.push(name);
    }
    Ok(files)
}

pub(crate) fn bat(cfg: &Resolved, out: &Path) -> Result<Outcome> {
    let d = splits(cfg)?;
    let p = &cfg.params;
    let b = training::bat(&p.arch, &d.train, p.n_classifiers, p.alpha_bat, &cfg.train, &cfg.pgd, d.validation.as_ref())?;
    std::fs::write(out.join("mixture.json"), serde_json::to_string_pretty(&b.mixture)? + "\n")?;
    let mut files = vec!["mixture.json".to_string()];
    files.extend(write_traces(&b.traces, out)?);
    let eot = b.eot()?;
    let at = EotModel::single(eot.models[0].clone());
    done(json!({
        "weights": b.mixture.weights,
        "weight_history": b.weight_history,
        "test": {
            "at": { "natural": natural_accuracy(&at, &d.test), "adaptive_pgd": accuracy_under_adaptive_pgd(&at, &d.test, &cfg.eval_pgd)? },
            "bat": { "natural": natural_accuracy(&eot, &d.test), "adaptive_pgd": accuracy_under_adaptive_pgd(&eot, &d.test, &cfg.eval_pgd)? },
        },
        "files": files,
    }))
}

/// A mixture, a bare network or any single linear / network hypothesis.
fn load_model(path: &Path) -> Result<EotModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    if let Ok(m) = serde_json::from_str::<MixedClassifier>(&text) {
        return EotModel::from_mixture(&m);
    }
    if let Ok(m) = serde_json::from_str::<MlpModel>(&text) {
        m.validate()?;
        return Ok(EotModel::single(m));
    }
    match serde_json::from_str::<Hypothesis>(&text) {
        Ok(h) => EotModel::from_hypothesis(&h),
        Err(e) => Err(Error::Config(format!("{}: not a mixture, network or hypothesis: {e}", path.display()))),
    }
}

struct Row {
    name: String,
    natural: f64,
    pgd: f64,
    cw: Vec<f64>,
}

fn evaluate_model(name: &str, model: &EotModel, cfg: &Resolved, test: &EmpiricalMeasure) -> Result<Row> {
    let pgd = accuracy_under_adaptive_pgd(model, test, &cfg.eval_pgd)?;
    // both C&W variants once per point; thresholds only change the selection
    let mixed = model.weights.iter().filter(|q| **q > 0.0).count() > 1;
    let pairs = test
        .samples
        .par_iter()
        .map(|s| {
            let a = cw_l2_at(model, &s.point, s.label, &cfg.cw, EotMode::Logits)?;
            let b = if mixed { cw_l2_at(model, &s.point, s.label, &cfg.cw, EotMode::Loss)? } else { a.clone() };
            Ok([a, b])
        })
        .collect::<Result<Vec<[AttackResult; 2]>>>()?;
    let cw = cfg
        .params
        .epsilon2
        .iter()
        .map(|&e| {
            let pts: Vec<Vec<f64>> =
                test.samples.iter().zip(&pairs).map(|(s, p)| select_adaptive(model, &s.point, s.label, p.clone(), Some(e)).adversarial).collect();
            expected_accuracy(model, test, &pts)
        })
        .collect();
    Ok(Row { name: name.into(), natural: natural_accuracy(model, test), pgd, cw })
}

pub(crate) fn evaluate(cfg: &Resolved, out: &Path) -> Result<Outcome> {
    let d = splits(cfg)?;
    let models: Vec<(String, EotModel)> = match &cfg.params.model {
        Some(path) => vec![("model".into(), load_model(path)?)],
        None => {
            let p = &cfg.params;
            let b = training::bat(&p.arch, &d.train, p.n_classifiers, p.alpha_bat, &cfg.train, &cfg.pgd, d.validation.as_ref())?;
            let eot = b.eot()?;
            vec![("at".into(), EotModel::single(eot.models[0].clone())), ("bat".into(), eot)]
        }
    };
    let cw_cols: Vec<String> = cfg.params.epsilon2.iter().map(|e| format!("cw_{e}")).collect();
    let mut w = csv::Writer::from_path(out.join("evaluation.csv"))?;
    let mut header = vec!["model".to_string(), "natural".into(), "adaptive_pgd".into()];
    header.extend(cw_cols.iter().cloned());
    w.write_record(&header)?;
    let mut rows = Vec::new();
    for (name, m) in &models {
        let r = evaluate_model(name, m, cfg, &d.test)?;
        let mut rec = vec![r.name.clone(), r.natural.to_string(), r.pgd.to_string()];
        rec.extend(r.cw.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
        let mut obj = json!({ "model": r.name, "natural": r.natural, "adaptive_pgd": r.pgd });
        for (c, v) in cw_cols.iter().zip(&r.cw) {
            obj[c] = json!(v);
        }
        rows.push(obj);
    }
    w.flush()?;
    done(json!({ "columns": header, "rows": rows, "csv": "evaluation.csv" }))
}

pub(crate) fn alpha_grid(cfg: &Resolved, out: &Path) -> Result<Outcome> {
    let d = splits(cfg)?;
    let (h1, h2) = match &cfg.params.model {
        Some(path) => {
            let m = load_model(path)?;
            if m.models.len() != 2 {
                return Err(Error::Config(format!("alpha grid needs a 2-model mixture, got {}", m.models.len())));
            }
            (m.models[0].clone(), m.models[1].clone())
        }
        None => {
            let p = &cfg.params;
            let b = training::bat(&p.arch, &d.train, 2, p.alpha_bat, &cfg.train, &cfg.pgd, d.validation.as_ref())?;
            let eot = b.eot()?;
            (eot.models[0].clone(), eot.models[1].clone())
        }
    };
    let val = d.validation.as_ref().unwrap_or(&d.test);
    let search = grid_search_alpha(&h1, &h2, val, &cfg.params.alpha_grid, &cfg.eval_pgd)?;
    let mut w = csv::Writer::from_path(out.join("alpha_grid.csv"))?;
    w.write_record(["alpha", "validation_adaptive_pgd"])?;
    for (a, acc) in &search.table {
        w.write_record([a.to_string(), acc.to_string()])?;
    }
    w.flush()?;
    let chosen = EotModel::new(vec![h1, h2], vec![1.0 - search.chosen, search.chosen])?;
    done(json!({
        "chosen": search.chosen,
        "table": search.table,
        "test": { "natural": natural_accuracy(&chosen, &d.test), "adaptive_pgd": accuracy_under_adaptive_pgd(&chosen, &d.test, &cfg.eval_pgd)? },
        "csv": "alpha_grid.csv",
    }))
}
