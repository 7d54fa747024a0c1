use pamfbo::problems::*;
use proptest::prelude::*;
use serde_json::json;

fn grid(n: usize, (lo, hi): (f64, f64)) -> impl Iterator<Item = f64> + Clone {
    (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[test]
fn forrester_values_and_optimum() {
    let p = forrester_pair();
    assert!((p.evaluate(&[1.0], 2).unwrap() - 16.0 * 8f64.sin()).abs() < 1e-12);
    assert!((p.evaluate(&[1.0], 2).unwrap() - 15.830).abs() < 1e-3);
    let hf = p.evaluate(&[0.5], 2).unwrap();
    assert!((p.evaluate(&[0.5], 1).unwrap() - (0.5 * hf - 5.0)).abs() < 1e-12);

    // brute force: dense grid then golden-section polish
    let n = 100_000;
    let (i, _) = (0..=n)
        .map(|i| (i, forrester_hf(i as f64 / n as f64)))
        .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    let (mut a, mut b) = ((i as f64 - 1.0) / n as f64, (i as f64 + 1.0) / n as f64);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let (c, d) = (b - g * (b - a), a + g * (b - a));
        if forrester_hf(c) < forrester_hf(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let x = 0.5 * (a + b);
    assert!((FORRESTER_OPTIMUM.0 - x).abs() < 1e-4);
    assert!((FORRESTER_OPTIMUM.1 - forrester_hf(x)).abs() < 1e-4);
    let truth = p.ground_truth().unwrap();
    assert_eq!(truth.value, FORRESTER_OPTIMUM.1);
}

#[test]
fn cross_regime_low_fidelity_is_trustworthy_only_when_subsonic() {
    let p = cross_regime_problem();
    let ws = grid(50, (-1.0, 1.0));
    let ms = grid(50, (0.6, 0.99));
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for w in ws.clone() {
        for m in ms.clone() {
            let v = p.evaluate(&[w, m], 3).unwrap();
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let gap = |m: f64| {
        ws.clone()
            .map(|w| (p.evaluate(&[w, m], 1).unwrap() - p.evaluate(&[w, m], 3).unwrap()).abs())
            .fold(0.0, f64::max)
    };
    assert!(gap(0.6) <= 0.05 * (hi - lo), "{} vs range {}", gap(0.6), hi - lo);
    assert!(gap(0.99) >= 10.0 * gap(0.6));
    assert_eq!(p.psi(&[0.3, 0.85]), vec![0.85]);
}

#[test]
fn cross_regime_fidelity_quality_ordering() {
    let p = cross_regime_problem();
    let mut mean = [0.0; 3];
    let mut n = 0.0;
    for w in grid(40, (-1.0, 1.0)) {
        for m in grid(40, (0.6, 0.99)) {
            let top = p.evaluate(&[w, m], 3).unwrap();
            for (l, acc) in mean.iter_mut().enumerate() {
                *acc += (p.evaluate(&[w, m], l + 1).unwrap() - top).abs();
            }
            n += 1.0;
        }
    }
    let mean = mean.map(|v| v / n);
    assert!(mean[0] >= mean[1] && mean[1] >= mean[2] && mean[2] == 0.0, "{mean:?}");
}

#[test]
fn cross_regime_optimum_by_grid() {
    let p = cross_regime_problem();
    let truth = p.ground_truth().unwrap();
    let mut best = f64::INFINITY;
    for w in grid(401, (-1.0, 1.0)) {
        for m in grid(391, (0.6, 0.99)) {
            best = best.min(p.evaluate(&[w, m], 3).unwrap());
        }
    }
    assert!(truth.value <= best && best - truth.value < 1e-4);
    assert_eq!(p.evaluate(&truth.x, 3).unwrap(), truth.value);
}

#[test]
fn plate_self_discrepancy_is_zero() {
    for q in sample_plate_truths(10, 2) {
        let p = plate_identification_problem(q, Normalization::Reference).unwrap();
        assert_eq!(p.evaluate(&q, 2).unwrap(), 0.0);
        assert!(p.evaluate(&q, 1).unwrap() > 0.0);
    }
}

#[test]
fn plate_low_fidelity_confounds_short_cuts() {
    // a short cut under a high load ...
    let m = PlateModel::default();
    let a = [51.0, 228.0, 1.0, 18.0];
    let (lf_a, hf_a) = (m.lf_field(&a), m.hf_field(&a));
    // ... against longer cuts at the same place under every load
    let mut found = None;
    for q3 in grid(30, (8.0, 30.0)) {
        for q4 in grid(200, (0.0, 19.9)) {
            let b = [a[0], a[1], q3, q4];
            let lf = l2(&lf_a, &m.lf_field(&b));
            let hf = l2(&hf_a, &m.hf_field(&b));
            if lf < 0.1 * hf {
                found = Some((q3, q4, lf / hf));
                break;
            }
        }
        if found.is_some() {
            break;
        }
    }
    let (q3, q4, ratio) = found.expect("no confounding pair on the grid");
    assert!(q3 >= 8.0 && q4 < a[3] && ratio < 0.1);
}

#[test]
fn registry_and_manifests() {
    for name in PROBLEM_NAMES {
        let params = if name == "plate" {
            json!({"q_true": [50.0, 200.0, 5.0, 10.0]})
        } else {
            json!({})
        };
        let p = by_name(name, &params, 0).unwrap();
        let ratios = p.cost_ratios();
        assert!(ratios.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*ratios.last().unwrap(), 1.0);
        let manifest = serde_json::to_value(p.manifest()).unwrap();
        assert_eq!(manifest["L"], json!(p.levels()));
        assert_eq!(manifest["d"], json!(p.dim()));
    }
    assert!(by_name("rosenbrock", &json!({}), 0).is_err());
    assert!(by_name("forrester", &json!({"typo": 1}), 0).is_err());
    let a = by_name("plate", &json!({"truths": {"count": 4, "seed": 9}}), 3).unwrap();
    let q = sample_plate_truths(4, 9)[3];
    assert_eq!(a.ground_truth().unwrap().x, q.to_vec());
}

#[test]
fn evaluate_rejects_bad_input() {
    let p = cross_regime_problem();
    assert!(matches!(p.evaluate(&[0.0], 1), Err(ProblemError::DimensionMismatch { .. })));
    assert!(matches!(p.evaluate(&[0.0, 0.7], 4), Err(ProblemError::LevelOutOfRange { .. })));
    assert!(matches!(p.evaluate(&[0.0, 1.2], 1), Err(ProblemError::OutOfBounds { .. })));
    assert!(p.evaluate(&[f64::NAN, 0.7], 1).is_err());
    assert!(plate_identification_problem([0.0, 0.0, 0.0, 5.0], Normalization::Reference).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn plate_objective_is_nonnegative_and_deterministic(
        q1 in 0.0..102.0f64, q2 in 0.0..456.0f64, q3 in 0.3..30.0f64, q4 in 0.0..19.9f64,
        level in 1usize..=2,
    ) {
        let p = plate_identification_problem([40.0, 300.0, 3.0, 15.0], Normalization::Reference).unwrap();
        let x = [q1, q2, q3, q4];
        let e = p.evaluate(&x, level).unwrap();
        prop_assert!(e >= 0.0);
        prop_assert_eq!(e, p.evaluate(&x, level).unwrap());
    }

    #[test]
    fn cross_regime_low_fidelity_error_grows_with_mach(w in -1.0..1.0f64, m in 0.6..0.98f64) {
        let p = cross_regime_problem();
        let gap = |l: usize, m: f64| (p.evaluate(&[w, m], l).unwrap() - p.evaluate(&[w, m], 3).unwrap()).abs();
        prop_assert!(gap(1, m + 0.01) >= gap(1, m) - 1e-12);
        prop_assert!(gap(2, m + 0.01) >= gap(2, m) - 1e-12);
    }
}
