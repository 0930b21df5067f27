mod common;

use std::time::Instant;

use common::*;
use fmrec_core::factorize::{
    binarize, objective, objective_gradient, rmse, train, train_with_history, FactorPair, InteractionMatrix,
    TrainConfig, DEFAULT_THRESHOLD,
};
use ndarray::{s, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn reference_factors() -> FactorPair {
    FactorPair::new(labels(&MF_USERS), labels(&MF_FEATURES), user_aspects(), aspect_features()).unwrap()
}

#[test]
fn product_of_the_given_factors() {
    let p = reference_factors().predict();
    let expect = [
        ("ua", "adlic", 0.82),
        ("ub", "adlic", 0.28),
        ("ua", "baslic", 0.28),
        ("ub", "baslic", 0.82),
        ("ua", "basQA", 1.0),
        ("ub", "basQA", 1.0),
        ("ua", "share", 0.76),
        ("ub", "share", 0.94),
        ("ua", "stat", 0.90),
        ("ua", "AB", 0.86),
        ("ub", "AB", 0.44),
        ("ub", "stat", 0.60),
    ];
    for (u, f, v) in expect {
        assert!((p.get(u, f).unwrap() - v).abs() < 1e-12, "{u}/{f}");
    }
}

#[test]
fn thresholded_pattern_on_consistent_columns() {
    let p = reference_factors().predict();
    let b = binarize(&p.values, DEFAULT_THRESHOLD);
    let col = |name: &str| MF_FEATURES.iter().position(|f| *f == name).unwrap();
    let expect = [("adlic", [1, 0]), ("baslic", [0, 1]), ("basQA", [1, 1]), ("share", [0, 1])];
    for (f, pattern) in expect {
        assert_eq!([b[[0, col(f)]], b[[1, col(f)]]], pattern, "{f}");
    }
}

#[test]
fn share_ranking() {
    let p = reference_factors().predict();
    let ub = p.relevance_ranking("ub", &["share"]).unwrap();
    let ua = p.relevance_ranking("ua", &["share"]).unwrap();
    assert!((ub[0].1 - 0.94).abs() < 1e-12);
    assert!((ua[0].1 - 0.76).abs() < 1e-12);
    assert!(ua[0].1 < ub[0].1);
}

#[test]
fn training_recovers_exact_product() {
    let exact = reference_factors().predict().values;
    let t = InteractionMatrix::dense(labels(&MF_USERS), labels(&MF_FEATURES), &exact).unwrap();
    let cfg = TrainConfig { k: 2, learning_rate: 0.05, regularization: 0.0, epochs: 2000, seed: 42 };
    let start = Instant::now();
    let f = train(&t, &cfg).unwrap();
    assert!(start.elapsed().as_secs_f64() < 10.0);
    assert!(rmse(&t, &f.predict().values).unwrap() < 0.05);
    assert_eq!(train(&t, &cfg).unwrap(), f);
}

#[test]
fn training_on_table_with_missing_cells() {
    let csv = "user,lic,adlic,baslic,AB,stat,QA,basQA,mmQA,share\n\
               u1,1,0,1,0,1,1,1,0,0\n\
               u2,1,1,0,1,1,1,1,1,1\n\
               u3,1,0,1,0,1,1,1,0,?\n\
               u4,1,0,1,1,1,1,1,0,?\n";
    let t = InteractionMatrix::from_csv(csv).unwrap();
    assert_eq!(t.observed().len(), 34);
    let (f, history) = train_with_history(&t, &TrainConfig { k: 2, epochs: 500, ..TrainConfig::default() }).unwrap();
    assert_eq!(history.len(), 500);
    assert!(history.last().unwrap() < history.first().unwrap());
    assert!(f.predict().get("u3", "share").unwrap().is_finite());
}

#[test]
fn rank_one_matrix_is_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let u: Vec<f64> = (0..4).map(|_| rng.random_range(0.3..1.0)).collect();
    let v: Vec<f64> = (0..5).map(|_| rng.random_range(0.3..1.0)).collect();
    let m = Array2::from_shape_fn((4, 5), |(i, j)| u[i] * v[j]);
    let users = (0..4).map(|i| format!("u{i}")).collect();
    let features = (0..5).map(|i| format!("f{i}")).collect();
    let t = InteractionMatrix::dense(users, features, &m).unwrap();
    let f = train(&t, &TrainConfig { k: 1, learning_rate: 0.05, regularization: 0.0, epochs: 3000, seed: 1 }).unwrap();
    assert!(rmse(&t, &f.predict().values).unwrap() < 0.01);
}

fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let h = 1e-5;
    for _ in 0..20 {
        let (n, m, k) = (rng.random_range(1..4), rng.random_range(1..5), rng.random_range(1..4));
        let cells = Array2::from_shape_simple_fn((n, m), || rng.random_bool(0.8).then(|| rng.random::<f64>()));
        let users = (0..n).map(|i| format!("u{i}")).collect();
        let features = (0..m).map(|i| format!("f{i}")).collect();
        let t = InteractionMatrix::new(users, features, cells).unwrap();
        let ua = Array2::from_shape_simple_fn((n, k), || rng.random_range(-1.0..1.0));
        let af = Array2::from_shape_simple_fn((k, m), || rng.random_range(-1.0..1.0));
        let lambda = rng.random_range(0.0..0.5);
        let (g_ua, g_af) = objective_gradient(&t, &ua, &af, lambda);

        for idx in ndarray::indices(ua.dim()) {
            let (mut plus, mut minus) = (ua.clone(), ua.clone());
            plus[idx] += h;
            minus[idx] -= h;
            let numeric = (objective(&t, &plus, &af, lambda) - objective(&t, &minus, &af, lambda)) / (2.0 * h);
            assert!(relative_gap(g_ua[idx], numeric) < 1e-4, "UA{idx:?}: {} vs {numeric}", g_ua[idx]);
        }
        for idx in ndarray::indices(af.dim()) {
            let (mut plus, mut minus) = (af.clone(), af.clone());
            plus[idx] += h;
            minus[idx] -= h;
            let numeric = (objective(&t, &ua, &plus, lambda) - objective(&t, &ua, &minus, lambda)) / (2.0 * h);
            assert!(relative_gap(g_af[idx], numeric) < 1e-4, "AF{idx:?}: {} vs {numeric}", g_af[idx]);
        }
    }
}

proptest! {
    #[test]
    fn prediction_is_bilinear(alpha in -3.0f64..3.0, row in 0usize..2) {
        let base = reference_factors();
        let mut scaled = base.clone();
        scaled.user_aspects.row_mut(row).mapv_inplace(|x| x * alpha);
        let a = base.predict().values;
        let b = scaled.predict().values;
        for j in 0..MF_FEATURES.len() {
            prop_assert!((b[[row, j]] - alpha * a[[row, j]]).abs() < 1e-12);
            prop_assert_eq!(b[[1 - row, j]], a[[1 - row, j]]);
        }
    }

    #[test]
    fn binarize_is_monotone(t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let v = reference_factors().predict().values;
        let (a, b) = (binarize(&v, lo), binarize(&v, hi));
        prop_assert!(a.iter().zip(b.iter()).all(|(x, y)| y <= x));
    }
}

#[test]
fn loss_mostly_decreases_at_a_small_rate() {
    let exact = reference_factors().predict().values.slice(s![.., ..3]).to_owned();
    let t = InteractionMatrix::dense(labels(&MF_USERS), labels(&MF_FEATURES[..3]), &exact).unwrap();
    let cfg = TrainConfig { learning_rate: 0.01, epochs: 200, ..TrainConfig::default() };
    let (_, history) = train_with_history(&t, &cfg).unwrap();
    assert!(history.windows(2).filter(|w| w[1] > w[0]).count() < history.len() / 10);
}
