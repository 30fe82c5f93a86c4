//! Learners against finite differences, their own loss traces and each other.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sepsis_core::cohort::CohortMatrix;
use sepsis_core::learners::linear::{logistic_gradient, logistic_objective};
use sepsis_core::learners::{fit, BoostParams, HistBoostParams, HyperParams, ModelKind, Tree, TrainedModel};

/// Values on a 0.1 grid so features carry ties; labels follow a noisy
/// logistic model of the first two columns.
fn dataset(seed: u64, n: usize, d: usize) -> CohortMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = Array2::from_shape_fn((n, d), |_| (rng.random_range(-2.0f64..2.0) * 10.0).round() / 10.0);
    let mut labels: Vec<u8> = rows
        .outer_iter()
        .map(|r| {
            let z = 1.5 * r[0] - if d > 1 { r[1] } else { 0.0 };
            u8::from(rng.random::<f64>() < 1.0 / (1.0 + (-z).exp()))
        })
        .collect();
    labels[0] = 0;
    labels[1] = 1;
    let names = (0..d).map(|j| format!("x{j}")).collect();
    let ids = (0..n).map(|i| format!("r{i}")).collect();
    CohortMatrix::new(names, rows, labels, ids).unwrap()
}

#[test]
fn logistic_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for ds in 0..5 {
        let m = dataset(100 + ds, 60, 4);
        for _ in 0..20 {
            let w = Array1::from_shape_fn(4, |_| rng.random_range(-2.0..2.0));
            let b = rng.random_range(-1.0..1.0);
            let l2 = rng.random_range(0.0..2.0);
            let (gw, gb) = logistic_gradient(m.rows.view(), &m.labels, w.view(), b, l2);
            let f = |w: &Array1<f64>, b: f64| logistic_objective(m.rows.view(), &m.labels, w.view(), b, l2);
            let h = 1e-5;
            let check = |analytic: f64, numeric: f64| {
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
                assert!(rel <= 1e-5, "analytic {analytic} numeric {numeric}");
            };
            for j in 0..4 {
                let (mut up, mut down) = (w.clone(), w.clone());
                up[j] += h;
                down[j] -= h;
                check(gw[j], (f(&up, b) - f(&down, b)) / (2.0 * h));
            }
            check(gb, (f(&w, b + h) - f(&w, b - h)) / (2.0 * h));
        }
    }
}

#[test]
fn boosting_loss_never_increases() {
    for seed in 0..10 {
        let m = dataset(seed, 150, 5);
        for kind in [ModelKind::GradientBoosting, ModelKind::HistGradientBoosting] {
            let hp = match kind {
                ModelKind::GradientBoosting => HyperParams::GradientBoosting(BoostParams {
                    n_trees: 40,
                    ..BoostParams::default()
                }),
                _ => HyperParams::HistGradientBoosting(HistBoostParams {
                    n_trees: 40,
                    min_leaf: 5,
                    ..HistBoostParams::default()
                }),
            };
            let model = fit(kind, &m, &hp, seed).unwrap();
            let trace = &model.diagnostics.objective_trace;
            assert_eq!(trace.len(), 41);
            assert!(
                trace.windows(2).all(|w| w[1] <= w[0]),
                "{kind} seed {seed}: {trace:?}"
            );
        }
    }
}

/// Same shape, split features, covers and leaf values, and every training
/// row routed the same way. Thresholds may differ: the exact grower cuts at
/// node-local midpoints, the histogram one at column-wide bin edges.
fn assert_same_tree(a: &Tree, b: &Tree, na: usize, nb: usize, rows: &[Vec<f64>]) {
    let (x, y) = (&a.nodes()[na], &b.nodes()[nb]);
    assert!((x.cover - y.cover).abs() <= 1e-9, "cover {} vs {}", x.cover, y.cover);
    match (x.split, y.split) {
        (None, None) => assert!((x.value - y.value).abs() <= 1e-9, "leaf {} vs {}", x.value, y.value),
        (Some(s), Some(t)) => {
            assert_eq!(s.feature, t.feature);
            let (left, right): (Vec<Vec<f64>>, Vec<Vec<f64>>) =
                rows.iter().cloned().partition(|r| r[s.feature] <= s.threshold);
            assert!(left.iter().all(|r| r[t.feature] <= t.threshold));
            assert!(right.iter().all(|r| r[t.feature] > t.threshold));
            assert_same_tree(a, b, s.left, t.left, &left);
            assert_same_tree(a, b, s.right, t.right, &right);
        }
        _ => panic!("node shapes differ"),
    }
}

fn trees(model: &TrainedModel) -> &[Tree] {
    model.trees().unwrap()
}

#[test]
fn fine_histograms_reproduce_exact_boosting() {
    for seed in 0..10 {
        let n = 40 + 16 * seed as usize;
        let m = dataset(500 + seed, n, 3);
        let exact = fit(
            ModelKind::GradientBoosting,
            &m,
            &HyperParams::GradientBoosting(BoostParams {
                n_trees: 15,
                ..BoostParams::default()
            }),
            0,
        )
        .unwrap();
        let hist = fit(
            ModelKind::HistGradientBoosting,
            &m,
            &HyperParams::HistGradientBoosting(HistBoostParams {
                n_trees: 15,
                max_depth: Some(3),
                max_leaves: None,
                min_leaf: 1,
                ..HistBoostParams::default()
            }),
            0,
        )
        .unwrap();
        assert_eq!(trees(&exact).len(), trees(&hist).len());
        let rows: Vec<Vec<f64>> = m.rows.outer_iter().map(|r| r.to_vec()).collect();
        for (a, b) in trees(&exact).iter().zip(trees(&hist)) {
            assert_same_tree(a, b, 0, 0, &rows);
        }
        let (pa, pb) = (
            exact.predict_raw(m.rows.view()).unwrap(),
            hist.predict_raw(m.rows.view()).unwrap(),
        );
        assert!(pa.iter().zip(&pb).all(|(p, q)| (p - q).abs() <= 1e-9));
    }
}
