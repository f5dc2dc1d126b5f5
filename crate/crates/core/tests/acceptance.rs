//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary so the lines always reach the test log. Exits
//! nonzero when a criterion fails, except those listed in `REPORTED_ONLY`,
//! whose outcome is printed but not enforced (see the README).

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use advgame::attacks::{
    accuracy_under, accuracy_under_adaptive_pgd, attack_all, cw_l2, pgd_linf, pgd_linf_at, Differentiable, EotModel,
    CwConfig, PgdConfig,
};
use advgame::distributions::{sample_labeled, DistributionSpec, Label};
use advgame::game::{
    adversarial_score, admissible_alpha_range, best_response_attack, randomization_gap, score_decomposition, verify_no_pure_nash,
    weak_duality, AttackMap, GameConfig, OracleCheck, Penalty, STRICT,
};
use advgame::hypotheses::{Classifier, ErrorProfile, Hypothesis, Orientation};
use advgame::training::{bat, mlp_backward, LossKind, MlpModel, TrainConfig};

/// Criteria whose result is printed but does not fail the run.
const REPORTED_ONLY: &[usize] = &[8];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn game(penalty: Penalty, lambda: f64) -> GameConfig {
    GameConfig::new(penalty, lambda, 0.5).unwrap()
}

fn point_value(err: &ErrorProfile, cfg: &GameConfig, x: f64, z: f64) -> f64 {
    err.at(z) - cfg.lambda * cfg.cost((z - x).abs())
}

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let h = Hypothesis::threshold(0.0, Orientation::Pos);
    let spec = DistributionSpec::symmetric_1d();
    // grid step ε/K keeps the oracle's rounding loss λ·ε/K below 1e-6
    let k: i64 = 1 << 18;
    let mut worst_above = f64::NEG_INFINITY;
    let mut worst_below = f64::NEG_INFINITY;
    let mut n = 0;
    for penalty in [Penalty::Mass, Penalty::Norm] {
        let cfg = game(penalty, 0.3);
        let phi = best_response_attack(&h, &spec, &cfg).unwrap();
        let AttackMap::Piecewise1d { pos, neg, .. } = &phi else {
            return outcome(false, "closed-form attack is not piecewise");
        };
        let step = cfg.epsilon / k as f64;
        let profile = h.profile_1d((-10.0, 10.0)).unwrap();
        for i in 0..200 {
            let x = -1.5 + 3.0 * i as f64 / 199.0;
            for (y, pieces) in [(Label::Pos, pos), (Label::Neg, neg)] {
                let err = profile.error_profile(y);
                let z = AttackMap::apply_1d(pieces, x);
                if (z - x).abs() > cfg.epsilon + 1e-12 {
                    return outcome(false, format!("budget exceeded at x = {x}"));
                }
                let closed = point_value(&err, &cfg, x, z);
                let mut oracle = f64::NEG_INFINITY;
                for j in -k..=k {
                    oracle = oracle.max(point_value(&err, &cfg, x, x + j as f64 * step));
                }
                worst_above = worst_above.max(closed - oracle);
                worst_below = worst_below.max(oracle - closed);
                n += 1;
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        worst_below <= 1e-12 && worst_above <= 1e-6 && secs < 10.0,
        format!("{n} point values; closed − oracle ≤ {worst_above:.2e}, oracle − closed ≤ {worst_below:.2e}; {secs:.1}s"),
    )
}

fn criterion_2() -> Outcome {
    let h = Hypothesis::threshold(0.0, Orientation::Pos);
    let spec = DistributionSpec::symmetric_1d();
    let cfg = game(Penalty::Norm, 0.3);
    let phi = best_response_attack(&h, &spec, &cfg).unwrap();
    let direct = adversarial_score(&h, &phi, &spec, &cfg).unwrap().score;
    let parts = score_decomposition(&h, &spec, &cfg).unwrap().score;
    let diff = (direct - parts).abs();
    outcome(diff <= 1e-5, format!("score {direct:.10}, decomposition {parts:.10}, |diff| {diff:.2e}"))
}

fn criterion_3() -> Outcome {
    let t0 = Instant::now();
    let spec = DistributionSpec::symmetric_1d();
    let mut pass = true;
    let mut detail = Vec::new();
    for penalty in [Penalty::Mass, Penalty::Norm] {
        let r = verify_no_pure_nash(&spec, &game(penalty, 0.3), 5).unwrap();
        let min = r.rounds.iter().map(|x| x.improvement).fold(f64::INFINITY, f64::min);
        pass &= r.pass && r.rounds.len() == 5 && min > STRICT;
        detail.push(format!("{penalty:?}: min improvement {min:.3e}"));
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(pass && secs < 30.0, format!("{}; {secs:.1}s", detail.join(", ")))
}

fn criterion_4() -> Outcome {
    let spec = DistributionSpec::symmetric_1d();
    let h1 = Hypothesis::threshold(0.0, Orientation::Pos);
    let mut cases = 0;
    let mut min_gap = f64::INFINITY;
    let mut min_formula = f64::INFINITY;
    let mut min_oracle = f64::INFINITY;
    let mut pass = true;
    for lambda in [0.3, 0.4, 0.45] {
        for (penalty, delta) in [(Penalty::Mass, None), (Penalty::Norm, Some(0.05)), (Penalty::Norm, Some(0.25))] {
            let cfg = game(penalty, lambda);
            let (lo, hi) = admissible_alpha_range(&cfg, delta).unwrap();
            for j in 1..=5 {
                let alpha = lo + (hi - lo) * j as f64 / 6.0;
                let r = randomization_gap(&h1, &spec, &cfg, alpha, delta, Some(OracleCheck::default())).unwrap();
                let oracle = r.oracle_gap.unwrap_or(f64::NAN);
                pass &= r.pass && r.score_mixture < r.score_h1 && r.gap > STRICT && r.formula_gap > STRICT && oracle > STRICT;
                min_gap = min_gap.min(r.gap);
                min_formula = min_formula.min(r.formula_gap);
                min_oracle = min_oracle.min(oracle);
                cases += 1;
            }
        }
    }
    outcome(
        pass,
        format!("{cases} cases; min gap exact {min_gap:.3e}, region formulas {min_formula:.3e}, pointwise oracle {min_oracle:.3e}"),
    )
}

fn random_mlp(rng: &mut ChaCha8Rng, seed: u64) -> MlpModel {
    let d = rng.random_range(1..=3);
    let depth = rng.random_range(1..=2);
    let mut sizes = vec![d];
    for _ in 0..depth {
        sizes.push(rng.random_range(2..=8));
    }
    sizes.push(rng.random_range(1..=2));
    MlpModel::init(&sizes, seed).unwrap()
}

/// A point whose pre-activations all sit away from the rectifier's kink, so
/// central differences are valid.
fn smooth_point(m: &MlpModel, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..m.input_dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let c = m.forward(&x).unwrap();
        let hidden = &c.pre_activations[..c.pre_activations.len() - 1];
        if hidden.iter().flatten().all(|z| z.abs() > 1e-3) {
            return x;
        }
    }
}

/// Relative error, with the scale floored at 1e-4 so vanishing partials
/// are judged on absolute error.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

fn criterion_5() -> Outcome {
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for s in 0..100 {
        let m = random_mlp(&mut rng, s);
        let x = smooth_point(&m, &mut rng);
        let y = if rng.random::<bool>() { Label::Pos } else { Label::Neg };
        let g = mlp_backward(&m, &x, y, LossKind::CrossEntropy).unwrap();
        let loss = |m: &MlpModel, x: &[f64]| mlp_backward(m, x, y, LossKind::CrossEntropy).unwrap().loss;
        let base = m.flat_params();
        let mut mp = m.clone();
        for k in 0..base.len() {
            let mut p = base.clone();
            p[k] += h;
            mp.set_flat_params(&p).unwrap();
            let up = loss(&mp, &x);
            p[k] -= 2.0 * h;
            mp.set_flat_params(&p).unwrap();
            let dn = loss(&mp, &x);
            worst = worst.max(rel_err(g.params[k], (up - dn) / (2.0 * h)));
            checked += 1;
        }
        for k in 0..x.len() {
            let (mut up, mut dn) = (x.clone(), x.clone());
            up[k] += h;
            dn[k] -= h;
            worst = worst.max(rel_err(g.input[k], (loss(&m, &up) - loss(&m, &dn)) / (2.0 * h)));
            checked += 1;
        }
    }
    // expected logits of a mixture against the weighted component gradients
    let mut eot_worst: f64 = 0.0;
    for s in 0..20 {
        let models: Vec<MlpModel> = (0..3).map(|i| MlpModel::init(&[2, 8, 8, 2], 100 + 3 * s + i).unwrap()).collect();
        let mut q: Vec<f64> = (0..3).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = q.iter().sum();
        q.iter_mut().for_each(|v| *v /= total);
        q[2] = 1.0 - q[0] - q[1];
        let e = EotModel::new(models.clone(), q.clone()).unwrap();
        let x = loop {
            let x = vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let ok = models.iter().all(|m| {
                let c = m.forward(&x).unwrap();
                c.pre_activations[..2].iter().flatten().all(|z| z.abs() > 1e-3)
            });
            if ok {
                break x;
            }
        };
        let c = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let (_, g) = e.logits_vjp(&x, c);
        for k in 0..2 {
            let weighted: f64 = q.iter().zip(&models).map(|(qi, m)| qi * m.logits_vjp(&x, c).1[k]).sum();
            let (mut up, mut dn) = (x.clone(), x.clone());
            up[k] += h;
            dn[k] -= h;
            let f = |p: &[f64]| {
                let z = e.logits(p);
                c[0] * z[0] + c[1] * z[1]
            };
            eot_worst = eot_worst.max(rel_err(g[k], weighted)).max(rel_err(g[k], (f(&up) - f(&dn)) / (2.0 * h)));
        }
    }
    outcome(
        worst < 1e-4 && eot_worst < 1e-4,
        format!("100 networks, {checked} partials, worst rel. error {worst:.2e}; mixture gradient worst {eot_worst:.2e}"),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let d = rng.random_range(1..=4);
        let w: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let m = MlpModel::linear(&w, rng.random_range(-0.5..0.5));
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let eps = rng.random_range(0.05..0.5);
        let y = if rng.random::<bool>() { Label::Pos } else { Label::Neg };
        let r = pgd_linf(&m, &x, y, &PgdConfig::new(eps, eps / 10.0, 50)).unwrap();
        for i in 0..d {
            let want = x[i] - eps * w[i].signum() * y.value();
            worst = worst.max((r.adversarial[i] - want).abs());
        }
    }
    // accuracy of the Bayes linear rule as the budget grows
    let spec = DistributionSpec::gaussian_pair(0.5, vec![-1.0, -1.0], vec![1.0, 1.0], 1.0);
    let data = sample_labeled(&spec, 500, 61).unwrap();
    let m = EotModel::single(MlpModel::linear(&[1.0, 1.0], 0.0));
    let budgets: Vec<f64> = (0..=24).map(|i| 0.25 * i as f64).collect();
    let acc: Vec<f64> = budgets
        .iter()
        .map(|&eps| {
            let cfg = PgdConfig::new(eps, (eps / 10.0).max(1e-3), 50);
            let res = attack_all(&data, |x, y, i| pgd_linf_at(&m, x, y, &cfg, i)).unwrap();
            accuracy_under(&m, &data, &res)
        })
        .collect();
    let monotone = acc.windows(2).all(|w| w[1] <= w[0]);
    let last = *acc.last().unwrap();
    outcome(
        worst < 1e-9 && monotone && last == 0.0,
        format!(
            "linear worst case ℓ∞ error {worst:.1e}; accuracy at ε∞ = 0, 1, 2, 3, 6: {:.3}, {:.3}, {:.3}, {:.3}, {:.3}; nonincreasing: {monotone}",
            acc[0], acc[4], acc[8], acc[12], acc[24]
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cfg = CwConfig { domain: (-1.0, 2.0), iters: 1000, ..CwConfig::paper() };
    let mut within = 0;
    let n = 200;
    let mut failures = 0;
    for _ in 0..n {
        let w = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let b = -0.5 * (w[0] + w[1]);
        let m = MlpModel::linear(&w, b);
        let x = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        let g = w[0] * x[0] + w[1] * x[1] + b;
        let y = if g > 0.0 { Label::Pos } else { Label::Neg };
        let target = g.abs() / (w[0] * w[0] + w[1] * w[1]).sqrt();
        let r = cw_l2(&m, &x, y, &cfg).unwrap();
        if !r.success {
            failures += 1;
        } else if r.l2 >= target * (1.0 - 1e-9) && r.l2 <= 1.05 * target {
            within += 1;
        }
    }
    let frac = within as f64 / n as f64;
    outcome(frac >= 0.95, format!("{within}/{n} within 5% of |g(x)|/‖w‖₂, {failures} failures"))
}

struct TaskModels {
    test: advgame::distributions::EmpiricalMeasure,
    at: EotModel,
    mixture: EotModel,
    eval: PgdConfig,
}

const TASK_EPS: f64 = 0.3;

fn task_eval_cfg(seed: u64) -> PgdConfig {
    PgdConfig { iters: 100, restarts: 3, random_init: true, seed, ..PgdConfig::new(TASK_EPS, TASK_EPS / 4.0, 100) }
}

fn train_task(seed: u64) -> TaskModels {
    let spec = DistributionSpec::xor_2d(0.25);
    let train = sample_labeled(&spec, 2000, 100 + seed).unwrap();
    let val = sample_labeled(&spec, 500, 200 + seed).unwrap();
    let test = sample_labeled(&spec, 1000, 300 + seed).unwrap();
    let cfg = TrainConfig { seed, ..TrainConfig::desk() };
    let atk = PgdConfig { random_init: true, seed, ..PgdConfig::new(TASK_EPS, TASK_EPS / 4.0, 20) };
    let out = bat(&[2, 32, 32, 2], &train, 2, 0.2, &cfg, &atk, Some(&val)).unwrap();
    let mixture = out.eot().unwrap();
    let at = EotModel::single(mixture.models[0].clone());
    TaskModels { test, at, mixture, eval: task_eval_cfg(seed) }
}

fn criterion_8(tasks: &[TaskModels], started: Instant) -> Outcome {
    let mut diffs = Vec::new();
    let mut rows = Vec::new();
    for t in tasks {
        let a = accuracy_under_adaptive_pgd(&t.at, &t.test, &t.eval).unwrap();
        let b = accuracy_under_adaptive_pgd(&t.mixture, &t.test, &t.eval).unwrap();
        diffs.push(b - a);
        rows.push(format!("{a:.3}/{b:.3}"));
    }
    let mut sorted = diffs.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let secs = started.elapsed().as_secs_f64();
    let pass = diffs.iter().all(|d| *d >= 0.0) && median > 0.0 && secs < 600.0;
    outcome(pass, format!("AT/BAT accuracy under adaptive PGD per seed: {}; median change {median:+.4}; {secs:.0}s", rows.join(" ")))
}

fn criterion_9(t: &TaskModels) -> Outcome {
    // constant added to both logits of the adversarially trained network
    let mut shifted = t.at.models[0].clone();
    let last = shifted.biases.len() - 1;
    shifted.biases[last].iter_mut().for_each(|b| *b += 3.0);
    let shifted = EotModel::single(shifted);
    let mut same = true;
    for iters in [1, 10, 100] {
        let cfg = PgdConfig { iters, ..t.eval };
        for (i, s) in t.test.samples.iter().enumerate().take(300) {
            let a = pgd_linf_at(&t.at, &s.point, s.label, &cfg, i as u64).unwrap();
            let b = pgd_linf_at(&shifted, &s.point, s.label, &cfg, i as u64).unwrap();
            same &= a.adversarial.iter().zip(&b.adversarial).all(|(u, v)| (u - v).abs() <= 1e-12);
        }
    }
    let mut deltas = Vec::new();
    for m in [&t.at, &t.mixture] {
        let a100 = accuracy_under_adaptive_pgd(m, &t.test, &t.eval).unwrap();
        let a200 = accuracy_under_adaptive_pgd(m, &t.test, &PgdConfig { iters: 200, ..t.eval }).unwrap();
        deltas.push((a200 - a100).abs());
    }
    let worst = deltas.iter().copied().fold(0.0, f64::max);
    outcome(
        same && worst < 0.01,
        format!("shifted-logit trajectories identical: {same}; |acc(200) − acc(100)| AT {:.4}, BAT {:.4}", deltas[0], deltas[1]),
    )
}

fn criterion_10() -> Outcome {
    let spec = DistributionSpec::symmetric_1d();
    let grid: Vec<f64> = (0..11).map(|i| -1.0 + 0.2 * i as f64).collect();
    let mut pass = true;
    let mut detail = Vec::new();
    for penalty in [Penalty::Mass, Penalty::Norm] {
        let r = weak_duality(&spec, &game(penalty, 0.3), &grid, &grid).unwrap();
        pass &= r.holds && r.strict && r.max_min <= r.min_max;
        detail.push(format!("{penalty:?}: sup-inf {:.4} < inf-sup {:.4}", r.max_min, r.min_max));
    }
    outcome(pass, detail.join(", "))
}

fn main() -> ExitCode {
    let titles = [
        "best-response fidelity",
        "decomposition cross-check",
        "no pure Nash dynamics",
        "randomization gap",
        "gradient suite",
        "PGD closed form",
        "C&W closed form",
        "BAT direction",
        "attack sanity invariants",
        "weak duality",
    ];
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut report = |i: usize, o: Outcome| {
        println!("{} criterion {i:>2} ({}): {}", if o.pass { "PASS" } else { "FAIL" }, titles[i - 1], o.detail);
        results.push((i, o));
    };
    report(1, criterion_1());
    report(2, criterion_2());
    report(3, criterion_3());
    report(4, criterion_4());
    report(5, criterion_5());
    report(6, criterion_6());
    report(7, criterion_7());
    let t0 = Instant::now();
    let tasks: Vec<TaskModels> = (0..5).map(train_task).collect();
    report(8, criterion_8(&tasks, t0));
    report(9, criterion_9(&tasks[0]));
    report(10, criterion_10());

    let enforced_failures: Vec<usize> = results.iter().filter(|(i, o)| !o.pass && !REPORTED_ONLY.contains(i)).map(|(i, _)| *i).collect();
    let reported: Vec<usize> = results.iter().filter(|(i, o)| !o.pass && REPORTED_ONLY.contains(i)).map(|(i, _)| *i).collect();
    let passed = results.iter().filter(|(_, o)| o.pass).count();
    println!("acceptance: {passed}/{} criteria pass", results.len());
    if !reported.is_empty() {
        println!("acceptance: reported but not enforced: {reported:?}");
    }
    if enforced_failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failing criteria {enforced_failures:?}");
        ExitCode::FAILURE
    }
}
