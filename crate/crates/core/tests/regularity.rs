mod common;

use common::*;
use layerprobe_core::logistic::*;
use layerprobe_core::regularity::*;
use layerprobe_core::{rng, Matrix};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

#[test]
fn logistic_gradient_matches_finite_differences() {
    let mut worst: f64 = 0.0;
    for cfg in 0..60u64 {
        let mut r = rng::rng(cfg);
        let n = r.random_range(5..40);
        let d = r.random_range(1..8);
        let k = r.random_range(2..5);
        let x = gaussian(n, d, cfg + 1000);
        let y = random_labels(n, k, cfg + 2000);
        let obj = LogisticObjective::new(&x, &y, k, 0.0);
        let p: Vec<f64> = (0..obj.n_params()).map(|_| StandardNormal.sample(&mut r)).collect();
        let (_, g) = obj.loss_and_grad(&p);
        let fd = central_diff(|q| obj.loss(q), &p, 1e-5);
        for (a, b) in g.iter().zip(&fd) {
            worst = worst.max(rel_err(*a, *b, 1e-8));
        }
    }
    assert!(worst <= 1e-4, "max relative error {worst}");
}

#[test]
fn gradient_vanishes_at_returned_optimum() {
    let x = gaussian(200, 3, 7);
    let y = random_labels(200, 2, 8);
    let m = fit_logistic(&x, &y, 2).unwrap();
    let z = m.standardizer.transform(&x);
    let obj = LogisticObjective::new(&z, &y, 2, LogisticConfig::default().ridge);
    let mut p = m.weights.as_slice().to_vec();
    p.extend_from_slice(&m.bias);
    let (loss, g) = obj.loss_and_grad(&p);
    assert!((loss - m.final_loss).abs() < 1e-12);
    let fd = central_diff(|q| obj.loss(q), &p, 1e-5);
    for (a, b) in g.iter().zip(&fd) {
        assert!((a - b).abs() <= 1e-4 * a.abs().max(b.abs()).max(1e-6), "{a} vs {b}");
    }
    assert!(g.iter().all(|v| v.abs() <= 1e-6));
}

#[test]
fn separable_and_xor_examples() {
    let x = Matrix::from_column(&[-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]);
    let y = [0, 0, 0, 1, 1, 1];
    let m = fit_logistic(&x, &y, 2).unwrap();
    assert_eq!(accuracy(&m.predict(&x), &y), 1.0);

    let x = Matrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap();
    let y = [0, 1, 1, 0];
    let m = fit_logistic(&x, &y, 2).unwrap();
    assert!(accuracy(&m.predict(&x), &y) <= 0.75);
}

#[test]
fn probabilities_sum_to_one() {
    for k in 2..6 {
        let x = gaussian(80, 4, k as u64);
        let y = balanced_labels(80, k, k as u64);
        let p = fit_logistic(&x, &y, k).unwrap().predict_proba(&gaussian(30, 4, 99));
        for i in 0..p.rows() {
            assert!((p.row(i).iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }
}

#[test]
fn label_coordinate_is_perfectly_regular() {
    let y = balanced_labels(1000, 2, 1);
    let x = with_label_column(&y, 8, 2);
    let s = regularity(&x, &y, 2, 0).unwrap();
    assert!(s.r_accuracy >= 0.99, "R = {}", s.r_accuracy);
    assert!(s.description_length_bits <= 0.1 * 1000.0);
}

#[test]
fn independent_slab_is_at_chance() {
    for seed in 0..20 {
        let y = balanced_labels(1000, 2, seed);
        let x = gaussian(1000, 8, 500 + seed);
        let r = regularity(&x, &y, 2, seed).unwrap().r_accuracy;
        assert!((0.40..=0.60).contains(&r), "seed {seed}: R = {r}");
    }
}

#[test]
fn constant_slab_costs_one_bit_per_sample() {
    let y = balanced_labels(1000, 2, 5);
    let x = Matrix::from_rows(&vec![vec![3.0, -1.0]; 1000]).unwrap();
    let s = regularity(&x, &y, 2, 0).unwrap();
    assert!((0.40..=0.60).contains(&s.r_accuracy));
    assert!((s.description_length_bits - 1000.0).abs() <= 1.0, "{}", s.description_length_bits);
}

#[test]
fn affine_rescaling_leaves_regularity_unchanged() {
    for seed in 0..5 {
        let y = balanced_labels(300, 2, seed);
        let mut x = gaussian(300, 4, seed + 40);
        for i in 0..300 {
            let v = x.get(i, 1) + 0.8 * y[i] as f64;
            x.set(i, 1, v);
        }
        let base = regularity(&x, &y, 2, seed).unwrap().r_accuracy;
        for i in 0..300 {
            let v = 7.5 * x.get(i, 1) - 3.0;
            x.set(i, 1, v);
        }
        assert_eq!(regularity(&x, &y, 2, seed).unwrap().r_accuracy, base);
    }
}

#[test]
fn duplicated_column_keeps_optimal_loss() {
    for seed in 0..5 {
        let y = random_labels(200, 2, seed);
        let x = gaussian(200, 3, seed + 70);
        let mut dup = Matrix::zeros(200, 4);
        for i in 0..200 {
            dup.row_mut(i)[..3].copy_from_slice(x.row(i));
            dup.set(i, 3, x.get(i, 0));
        }
        let a = fit_logistic(&x, &y, 2).unwrap().final_loss;
        let b = fit_logistic(&dup, &y, 2).unwrap().final_loss;
        assert!((a - b).abs() <= 1e-6, "seed {seed}: {a} vs {b}");
    }
}

#[test]
fn regularity_errors() {
    let x = gaussian(40, 2, 0);
    assert!(regularity(&x, &[0; 40], 2, 0).is_err());
    let mut y = vec![0; 40];
    y[..4].fill(1);
    assert!(regularity(&x, &y, 2, 0).is_err());
    assert!(regularity(&x, &[0; 39], 2, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn regularity_is_a_bounded_deterministic_mean(
        seed in any::<u64>(),
        n in 30usize..80,
        d in 1usize..5,
        k in 2usize..4,
    ) {
        let y = balanced_labels(n, k, seed);
        let x = gaussian(n, d, seed.wrapping_add(1));
        let s = regularity(&x, &y, k, seed).unwrap();
        prop_assert_eq!(s.fold_accuracies.len(), FOLDS);
        prop_assert!(s.fold_accuracies.iter().all(|a| (0.0..=1.0).contains(a)));
        let mean = s.fold_accuracies.iter().sum::<f64>() / FOLDS as f64;
        prop_assert!((s.r_accuracy - mean).abs() < 1e-15);
        prop_assert!((0.0..=1.0).contains(&s.r_accuracy));
        prop_assert!(s.description_length_bits >= 0.0);
        prop_assert_eq!(&s, &regularity(&x, &y, k, seed).unwrap());
    }

    #[test]
    fn folds_are_stratified(seed in any::<u64>(), n in 25usize..200, k in 2usize..5) {
        let y = random_labels(n, k, seed);
        let folds = stratified_folds(&y, k, seed);
        for c in 0..k {
            let mut counts = [0usize; FOLDS];
            for (i, &f) in folds.iter().enumerate() {
                if y[i] == c {
                    counts[f] += 1;
                }
            }
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            prop_assert!(hi - lo <= 1);
        }
    }
}
