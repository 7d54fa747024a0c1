mod common;

use common::obs;
use common::oracle;
use pamfbo::acquisition::{AcquisitionContext, Bias, BiasSpec};
use pamfbo::mfgp::{LevelHyperparameters, MfGpModel, ObservationSet};
use pamfbo::optimizer::*;
use pamfbo::problems::*;
use proptest::prelude::*;

fn plan(counts: &[usize], seed: u64) -> InitPlan {
    InitPlan {
        counts: counts.to_vec(),
        seed,
    }
}

fn audit(h: &RunHistory, lambdas: &[f64]) {
    let mut b = 0.0;
    let mut prev = f64::INFINITY;
    for r in &h.records {
        assert_eq!(r.lambda, lambdas[r.level - 1]);
        b += r.lambda;
        assert_eq!(r.budget, b);
        if let Some(best) = r.best_hf {
            assert!(best <= prev);
            prev = best;
        }
    }
    let before_last = h.records.len().checked_sub(2).map_or(0.0, |i| h.records[i].budget);
    assert!(before_last < h.b_max || h.records.iter().all(|r| r.iteration == 0));
}

#[test]
fn lhs_has_one_point_per_bin() {
    let n = 32;
    let bounds: Vec<(f64, f64)> = (0..7).map(|k| (-1.0 - k as f64, 2.0 + k as f64)).collect();
    let pts = latin_hypercube(n, &bounds, 42);
    assert_eq!(pts.len(), n);
    for (k, (lo, hi)) in bounds.iter().enumerate() {
        let mut seen = vec![false; n];
        for p in &pts {
            let bin = ((p[k] - lo) / (hi - lo) * n as f64).floor() as usize;
            assert!(!seen[bin.min(n - 1)], "coordinate {k} bin {bin} used twice");
            seen[bin.min(n - 1)] = true;
        }
    }
}

#[test]
fn initial_budgets() {
    let cr = cross_regime_problem();
    let (data, budget, records) = initialize(&cr, &plan(&[20, 10, 2], 1)).unwrap();
    // ten charges of 0.2 are not exactly 2.0 in binary
    assert!((budget.consumed - 6.5).abs() < 1e-12);
    assert_eq!(data.len(), 32);
    assert_eq!(records.len(), 32);
    let plate = plate_identification_problem([50.0, 200.0, 5.0, 10.0], Normalization::Reference).unwrap();
    assert!((initialize(&plate, &plan(&[15, 2], 1)).unwrap().1.consumed - 5.0).abs() < 1e-12);
    let single = cr.top_level_only();
    assert_eq!(initialize(&single, &plan(&[6], 1)).unwrap().1.consumed, 6.0);
}

#[test]
fn budget_at_initial_cost_runs_nothing() {
    let p = forrester_pair();
    let h = run(&p, Algorithm::Mfbo, &BiasSpec::Identity, &plan(&[10, 3], 4), 4.25, 4, &RunConfig::default()).unwrap();
    assert!(h.records.iter().all(|r| r.iteration == 0));
    assert_eq!(h.records.len(), 13);
    let best = h
        .records
        .iter()
        .filter(|r| r.level == 2)
        .map(|r| r.y)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(h.incumbent().unwrap().y, best);
    assert_eq!(h.termination, Termination::BudgetExhausted);
}

#[test]
fn rejects_bad_plans() {
    let p = forrester_pair();
    let cfg = RunConfig::default();
    let id = BiasSpec::Identity;
    assert!(matches!(
        run(&p, Algorithm::Mfbo, &id, &plan(&[10, 3], 0), 4.0, 0, &cfg),
        Err(RunError::Budget { .. })
    ));
    assert!(matches!(
        run(&p, Algorithm::Ego, &id, &plan(&[4, 3], 0), 10.0, 0, &cfg),
        Err(RunError::Plan(_))
    ));
    assert!(matches!(
        run(&p, Algorithm::Mfbo, &id, &plan(&[1, 3], 0), 10.0, 0, &cfg),
        Err(RunError::Plan(_))
    ));
    assert!(matches!(
        run(&p, Algorithm::Mfbo, &id, &plan(&[5], 0), 10.0, 0, &cfg),
        Err(RunError::Plan(_))
    ));
}

#[test]
fn replay_is_deterministic_and_audited() {
    let p = cross_regime_problem();
    let cfg = RunConfig::default();
    let mach: BiasSpec = serde_json::from_str(r#"{"name":"mach","index":1}"#).unwrap();
    let a = run(&p, Algorithm::PaMfbo, &mach, &plan(&[20, 10, 2], 3), 12.0, 3, &cfg).unwrap();
    let b = run(&p, Algorithm::PaMfbo, &mach, &plan(&[20, 10, 2], 3), 12.0, 3, &cfg).unwrap();
    assert_eq!(a, b);
    assert!(a.consumed() >= 12.0 && a.consumed() < 13.0);
    audit(&a, p.cost_ratios());
}

#[test]
fn single_level_pa_mfbo_is_ego() {
    let p = forrester_pair().top_level_only();
    let cfg = RunConfig::default();
    for seed in [0, 7] {
        let ego = run(&p, Algorithm::Ego, &BiasSpec::Identity, &plan(&[3], seed), 9.0, seed, &cfg).unwrap();
        let pa = run(&p, Algorithm::PaMfbo, &BiasSpec::Identity, &plan(&[3], seed), 9.0, seed, &cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&ego.records).unwrap(),
            serde_json::to_string(&pa.records).unwrap()
        );
        audit(&ego, &[1.0]);
    }
}

#[test]
fn forrester_mfbo_finds_the_optimum() {
    let p = forrester_pair();
    let cfg = RunConfig::default();
    let hits = (0..10)
        .filter(|&s| {
            let h = run(&p, Algorithm::Mfbo, &BiasSpec::Identity, &plan(&[10, 3], s), 15.0, s, &cfg).unwrap();
            audit(&h, p.cost_ratios());
            let brute = (0..=200_000)
                .map(|i| forrester_hf(i as f64 / 200_000.0))
                .fold(f64::INFINITY, f64::min);
            h.incumbent().unwrap().y <= brute + 1e-2
        })
        .count();
    assert!(hits >= 8, "{hits}/10");
}

/// Three high points on the left half, the right half unexplored.
fn basin_model() -> MfGpModel {
    let mut data = ObservationSet::new(vec![(0.0, 1.0)], 1).unwrap();
    for (x, y) in [(0.0, 1.0), (0.2, 0.4), (0.45, 0.9)] {
        data.push(obs(&[x], 1, y)).unwrap();
    }
    MfGpModel::with_hyperparameters(&data, vec![LevelHyperparameters::base(vec![8.0], 1.0)], 0.0).unwrap()
}

fn oracle_argmax(model: &MfGpModel, best: f64) -> f64 {
    let o = common::oracle_for(model);
    let n = 20_000;
    (0..=n)
        .map(|i| {
            let x = i as f64 / n as f64;
            let (m, v) = o.posterior(&[x], 1);
            (x, oracle::expected_improvement(m, v.max(0.0).sqrt(), best))
        })
        .fold((0.0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a })
        .0
}

#[test]
fn search_matches_dense_grid_oracle() {
    let model = basin_model();
    let rule = AcquisitionRule::ExpectedImprovement { best: 0.4 };
    let sel = maximize_acquisition(&model, &rule, &SearchConfig::default(), 5).unwrap();
    let x = sel.best().x[0];
    assert!(x > 0.5, "{x}");
    assert!((x - oracle_argmax(&model, 0.4)).abs() < 1e-3);

    let coarse = SearchConfig {
        pool_per_dim: 1000,
        refine_top: 0,
        refine_evals: 0,
    };
    let sel = maximize_acquisition(&model, &rule, &coarse, 5).unwrap();
    assert!((sel.best().x[0] - oracle_argmax(&model, 0.4)).abs() < 2e-3);
}

#[test]
fn identity_bias_rule_on_one_level_matches_ei() {
    let model = basin_model();
    let ctx = AcquisitionContext::new(0.4, vec![1.0], 0.0).unwrap();
    let pa = AcquisitionRule::PhysicsAware {
        context: &ctx,
        bias: &Bias::Identity,
    };
    let ei = AcquisitionRule::ExpectedImprovement { best: 0.4 };
    let a = maximize_acquisition(&model, &pa, &SearchConfig::default(), 9).unwrap();
    let b = maximize_acquisition(&model, &ei, &SearchConfig::default(), 9).unwrap();
    assert_eq!(a.ranked, b.ranked);
    assert_eq!(a.exploration, b.exploration);
}

#[test]
fn metric_examples() {
    let h = RunHistory {
        problem: "t".into(),
        algorithm: Algorithm::Ego,
        seed: 0,
        dim: 1,
        levels: 1,
        b_max: 1.0,
        records: vec![Record {
            iteration: 0,
            level: 1,
            x: vec![0.2],
            y: 0.5,
            lambda: 1.0,
            budget: 1.0,
            best_hf: Some(0.5),
            choice: Choice::Initial,
            acquisition: None,
        }],
        termination: Termination::BudgetExhausted,
    };
    assert_eq!(best_trace(&h), vec![(1.0, 0.5)]);
    assert_eq!(best_at_budget(&h, 10.0), Some(0.5));
    assert_eq!(budget_to_reach(&h, 0.45, 0.1), Some(1.0));
    assert_eq!(budget_to_reach(&h, 0.0, 0.1), None);
    let m = metrics(&h, Some(&[0.25]));
    assert_eq!(m.call_counts, vec![1]);
    assert!((m.identification_errors.unwrap()[0] - 20.0).abs() < 1e-12);
    let e = relative_errors(&[10.0, 10.0], &[9.0, 11.0]);
    assert!((e[0] - 10.0).abs() < 1e-12 && (e[1] - 10.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn lhs_stratifies(n in 1usize..40, d in 1usize..5, seed in any::<u64>()) {
        let bounds = vec![(0.0, 1.0); d];
        let pts = latin_hypercube(n, &bounds, seed);
        for k in 0..d {
            let mut bins: Vec<usize> = pts.iter().map(|p| ((p[k] * n as f64) as usize).min(n - 1)).collect();
            bins.sort_unstable();
            prop_assert_eq!(bins, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn percentiles_are_ordered(v in prop::collection::vec(-1e3f64..1e3, 1..30)) {
        let q25 = percentile(&v, 0.25).unwrap();
        let q50 = median(&v).unwrap();
        let q75 = percentile(&v, 0.75).unwrap();
        prop_assert!(q25 <= q50 && q50 <= q75);
    }
}
