//! Randomized invariants across modules.

use proptest::prelude::*;

use advgame::attacks::{accuracy_under, attack_all, pgd_linf, pgd_linf_at, Differentiable, EotModel, PgdConfig};
use advgame::distributions::{pushforward_empirical, sample_labeled, DistributionSpec, Label, Transport};
use advgame::game::{adversarial_score, best_response_attack, oracle_point_value, risk, AttackMap, EvalMethod, GameConfig, OracleGrid, Penalty};
use advgame::hypotheses::{Classifier, Hypothesis, Interval, MixedClassifier, Orientation, Region};
use advgame::training::{bat_weights, MlpModel};

fn penalty() -> impl Strategy<Value = Penalty> {
    prop_oneof![Just(Penalty::Mass), Just(Penalty::Norm)]
}

fn orientation() -> impl Strategy<Value = Orientation> {
    prop_oneof![Just(Orientation::Pos), Just(Orientation::Neg)]
}

fn labels() -> [Label; 2] {
    [Label::Pos, Label::Neg]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn score_bounds(p in penalty(), lambda in 0.05..0.95f64, eps in 0.05..1.0f64, t in -1.5..1.5f64, o in orientation()) {
        let h = Hypothesis::threshold(t, o);
        let spec = DistributionSpec::symmetric_1d();
        let cfg = GameConfig::new(p, lambda, eps).unwrap();
        let phi = best_response_attack(&h, &spec, &cfg).unwrap();
        let r = adversarial_score(&h, &phi, &spec, &cfg).unwrap();
        prop_assert!(r.unpenalized >= -1e-12 && r.unpenalized <= 1.0 + 1e-12);
        prop_assert!(r.score <= r.unpenalized + 1e-12);
        if r.penalty_value == 0.0 {
            prop_assert!((r.score - r.unpenalized).abs() <= 1e-12);
        } else {
            prop_assert!(r.score < r.unpenalized);
        }
    }

    #[test]
    fn identity_score_is_risk(t in -2.0..2.0f64, o in orientation()) {
        let h = Hypothesis::threshold(t, o);
        let spec = DistributionSpec::symmetric_1d();
        let cfg = GameConfig::new(Penalty::Mass, 0.3, 0.5).unwrap();
        let s = adversarial_score(&h, &AttackMap::identity(), &spec, &cfg).unwrap();
        prop_assert_eq!(s.score, risk(&h, &spec, EvalMethod::Exact).unwrap());
    }

    #[test]
    fn score_monotone_in_budget(p in penalty(), lambda in 0.05..0.95f64, e1 in 0.05..1.0f64, e2 in 0.05..1.0f64, t in -1.0..1.0f64) {
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let h = Hypothesis::threshold(t, Orientation::Pos);
        let spec = DistributionSpec::symmetric_1d();
        let score = |eps: f64| {
            let cfg = GameConfig::new(p, lambda, eps).unwrap();
            let phi = best_response_attack(&h, &spec, &cfg).unwrap();
            adversarial_score(&h, &phi, &spec, &cfg).unwrap().score
        };
        prop_assert!(score(lo) <= score(hi) + 1e-9);
    }

    /// Outside the ε-band around the boundary every point stays put, and no
    /// point moves more than ε.
    #[test]
    fn best_response_fixes_points_outside_zones(p in penalty(), lambda in 0.05..0.95f64, eps in 0.05..1.0f64, t in -1.0..1.0f64, o in orientation(), x in -4.0..4.0f64) {
        let h = Hypothesis::threshold(t, o);
        let cfg = GameConfig::new(p, lambda, eps).unwrap();
        let phi = best_response_attack(&h, &DistributionSpec::symmetric_1d(), &cfg).unwrap();
        for y in labels() {
            let z = phi.transport(&[x], y).unwrap()[0];
            prop_assert!((z - x).abs() <= eps + 1e-9);
            if (x - t).abs() > eps + 1e-3 {
                prop_assert_eq!(z, x);
            }
        }
    }

    #[test]
    fn closed_form_never_beaten_by_oracle(p in penalty(), lambda in 0.05..0.95f64, eps in 0.1..1.0f64, t in -1.0..1.0f64, o in orientation()) {
        let h = Hypothesis::threshold(t, o);
        let cfg = GameConfig::new(p, lambda, eps).unwrap();
        let phi = best_response_attack(&h, &DistributionSpec::symmetric_1d(), &cfg).unwrap();
        let grid = OracleGrid::default();
        for i in 0..128 {
            let x = t - 2.0 + 4.0 * i as f64 / 127.0;
            for y in labels() {
                let z = phi.transport(&[x], y).unwrap()[0];
                let closed = h.error_prob(&[z], y).unwrap() - lambda * cfg.cost((z - x).abs());
                let (_, oracle) = oracle_point_value(&h, &[x], y, &cfg, &grid).unwrap();
                prop_assert!(closed >= oracle - 1e-6, "x = {x}: closed {closed} < oracle {oracle}");
            }
        }
    }

    #[test]
    fn region_flip_is_an_involution(a in -2.0..2.0f64, w in 0.0..2.0f64, t in -1.0..1.0f64, x in -4.0..4.0f64) {
        let h = Hypothesis::threshold(t, Orientation::Pos);
        let region = Region::intervals(vec![Interval::open(a, a + w)]);
        let twice = Hypothesis::flip(Hypothesis::flip(h.clone(), region.clone()), region);
        prop_assert_eq!(twice.predict(&[x]).unwrap(), h.predict(&[x]).unwrap());
    }

    #[test]
    fn predict_is_sign_of_decision_value(w in prop::collection::vec(-2.0..2.0f64, 2), b in -1.0..1.0f64, x in prop::collection::vec(-3.0..3.0f64, 2)) {
        let h = Hypothesis::linear(w, b);
        let g = h.decision_value(&x).unwrap();
        let want = if g > 0.0 { 1 } else if g < 0.0 { -1 } else { 0 };
        prop_assert_eq!(h.predict(&x).unwrap(), want);
    }

    #[test]
    fn mixture_outputs_sum_to_one(raw in prop::collection::vec(0.01..1.0f64, 1..5), x in -3.0..3.0f64) {
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let hyps = (0..weights.len()).map(|i| Hypothesis::threshold(i as f64 * 0.5 - 1.0, Orientation::Pos)).collect();
        let m = MixedClassifier::new(hyps, weights).unwrap();
        prop_assert!((m.mixture_distribution(&[x]).unwrap().total() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn bat_weights_stay_on_simplex(n in 1usize..12, alpha in 0.0..=1.0f64) {
        for q in bat_weights(n, alpha) {
            prop_assert!(q.iter().all(|v| *v >= 0.0));
            prop_assert!((q.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn pgd_stays_in_ball(w in prop::collection::vec(-2.0..2.0f64, 2), b in -1.0..1.0f64, eps in 0.01..1.0f64, seed in 0u64..1000, x in prop::collection::vec(-2.0..2.0f64, 2)) {
        let m = MlpModel::linear(&w, b);
        let cfg = PgdConfig { restarts: 2, random_init: true, seed, ..PgdConfig::new(eps, eps / 3.0, 7) };
        let r = pgd_linf(&m, &x, Label::Pos, &cfg).unwrap();
        prop_assert!(r.linf <= eps + 1e-9);
    }

    #[test]
    fn pgd_accuracy_nonincreasing_in_budget(w in prop::collection::vec(-2.0..2.0f64, 2), b in -0.5..0.5f64, e1 in 0.0..1.5f64, e2 in 0.0..1.5f64) {
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let m = MlpModel::linear(&w, b);
        let data = sample_labeled(&DistributionSpec::gaussian_pair(0.5, vec![-1.0, -1.0], vec![1.0, 1.0], 0.5), 60, 4).unwrap();
        let acc = |eps: f64| {
            let cfg = PgdConfig::new(eps, eps / 4.0 + 1e-9, 8);
            let res = attack_all(&data, |x, y, i| pgd_linf_at(&m, x, y, &cfg, i)).unwrap();
            accuracy_under(&m, &data, &res)
        };
        prop_assert!(acc(hi) <= acc(lo));
    }

    #[test]
    fn identity_pushforward_is_identity(n in 1usize..50, seed in 0u64..1000) {
        let data = sample_labeled(&DistributionSpec::xor_2d(0.25), n, seed).unwrap();
        prop_assert_eq!(data.clone(), sample_labeled(&DistributionSpec::xor_2d(0.25), n, seed).unwrap());
        let moved = pushforward_empirical(&data, &AttackMap::identity()).unwrap();
        prop_assert_eq!(moved, data);
    }

    #[test]
    fn mixture_error_is_weighted_component_error(q in 0.0..=1.0f64, x in prop::collection::vec(-2.0..2.0f64, 2)) {
        let (a, b) = (MlpModel::linear(&[1.0, -0.5], 0.1), MlpModel::linear(&[-0.3, 1.0], -0.2));
        let e = EotModel::new(vec![a.clone(), b.clone()], vec![q, 1.0 - q]).unwrap();
        for y in labels() {
            let want = q * a.error_prob(&x, y) + (1.0 - q) * b.error_prob(&x, y);
            prop_assert!((e.error_prob(&x, y) - want).abs() <= 1e-12);
        }
    }
}
