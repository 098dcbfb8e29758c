mod common;

use common::*;
use mpec::learners::{fit, gradient_check, ridge_solve, LearnerKind, LearnerParams, GRADIENT_CHECK_TOL};
use proptest::prelude::*;
use rand::Rng;

/// Gaussian blobs around shifted class means.
fn blobs(seed: u64, classes: usize, per_class: usize, dim: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut r = rng(seed);
    let means: Vec<Vec<f64>> = (0..classes).map(|_| (0..dim).map(|_| 3.0 * gaussian(&mut r)).collect()).collect();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (c, m) in means.iter().enumerate() {
        for _ in 0..per_class {
            x.push(m.iter().map(|v| v + gaussian(&mut r)).collect());
            y.push(c);
        }
    }
    (x, y)
}

fn small_params() -> LearnerParams {
    let mut p = LearnerParams::default();
    p.mlp.epochs = 20;
    p.mlp.hidden = 16;
    p.forest.trees = 15;
    p
}

#[test]
fn refitting_with_the_same_seed_reproduces_scores() {
    let (x, y) = blobs(1, 3, 15, 4);
    let (probe, _) = blobs(2, 3, 5, 4);
    let params = small_params();
    for kind in [LearnerKind::Svm, LearnerKind::LogReg, LearnerKind::Mlp, LearnerKind::Forest, LearnerKind::Ridge] {
        let a = fit(kind, &x, &y, 3, &params, 7).unwrap().predict_scores(&probe).unwrap();
        let b = fit(kind, &x, &y, 3, &params, 7).unwrap().predict_scores(&probe).unwrap();
        for (ra, rb) in a.iter().zip(&b) {
            for (u, v) in ra.iter().zip(rb) {
                match kind {
                    LearnerKind::Forest | LearnerKind::Ridge => assert_eq!(u, v, "{kind:?}"),
                    _ => assert!((u - v).abs() <= 1e-10, "{kind:?}"),
                }
            }
        }
    }
}

#[test]
fn learners_separate_clear_blobs() {
    let (x, y) = blobs(3, 3, 20, 3);
    let params = LearnerParams::default();
    for kind in LearnerKind::WEAK.into_iter().chain([LearnerKind::Ridge]) {
        let model = fit(kind, &x, &y, 3, &params, 0).unwrap();
        let hits = model.predict(&x).unwrap().iter().zip(&y).filter(|(p, t)| p == t).count();
        assert!(hits >= 54, "{kind:?}: {hits}/60");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn probability_rows_are_normalized(seed in any::<u64>(), classes in 2usize..5) {
        let (x, y) = blobs(seed, classes, 8, 3);
        let (probe, _) = blobs(seed ^ 1, classes, 3, 3);
        for kind in [LearnerKind::LogReg, LearnerKind::Mlp, LearnerKind::Forest] {
            let scores = fit(kind, &x, &y, classes, &small_params(), seed).unwrap().predict_scores(&probe).unwrap();
            for row in scores {
                prop_assert_eq!(row.len(), classes);
                prop_assert!(row.iter().all(|&p| p >= 0.0));
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn ridge_solution_satisfies_the_normal_equations(seed in any::<u64>(), n in 3usize..30, d in 1usize..8, k in 1usize..4, alpha in 0.01f64..20.0) {
        let mut r = rng(seed);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| gaussian(&mut r)).collect()).collect();
        let y: Vec<Vec<f64>> = (0..n).map(|_| (0..k).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
        let w = ridge_solve(&x, &y, alpha, 1e-10).unwrap();
        let mut worst = 0f64;
        for i in 0..d {
            for c in 0..k {
                let lhs: f64 = (0..d)
                    .map(|j| {
                        let g: f64 = x.iter().map(|row| row[i] * row[j]).sum::<f64>() + if i == j { alpha } else { 0.0 };
                        g * w[j * k + c]
                    })
                    .sum();
                let rhs: f64 = x.iter().zip(&y).map(|(row, t)| row[i] * t[c]).sum();
                worst = worst.max((lhs - rhs).abs());
            }
        }
        prop_assert!(worst <= 1e-6, "{worst}");
    }
}

#[test]
fn mlp_gradients_match_finite_differences() {
    for seed in 0..5 {
        let (x, y) = blobs(seed, 3, 4, 5);
        let report = gradient_check(&x, &y, 3, &small_params().mlp, seed).unwrap();
        assert!(report.passed(), "{report:?}");
        assert!(report.relative_error <= GRADIENT_CHECK_TOL);
    }
}
