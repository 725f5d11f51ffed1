mod common;

use common::*;
use layerprobe_core::mi::*;
use layerprobe_core::{rng, Matrix};
use proptest::prelude::*;
use rand::Rng;

/// Discrete joint distribution: labels drawn first, each feature column a
/// noisy function of the label.
fn discrete_sample(n: usize, cols: usize, values: usize, k: usize, seed: u64) -> (Matrix, Vec<usize>) {
    let mut r = rng::rng(seed);
    let table: Vec<Vec<usize>> = (0..cols).map(|_| (0..k).map(|_| r.random_range(0..values)).collect()).collect();
    let flip: Vec<f64> = (0..cols).map(|_| r.random_range(0.0..0.8)).collect();
    let y: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
    let mut x = Matrix::zeros(n, cols);
    for i in 0..n {
        for j in 0..cols {
            let v = if r.random::<f64>() < flip[j] { r.random_range(0..values) } else { table[j][y[i]] };
            x.set(i, j, v as f64);
        }
    }
    (x, y)
}

/// Cells narrower than the value spacing, so distinct tuples never share a cell.
pub fn fine_grid() -> MiEstimatorConfig {
    MiEstimatorConfig { bandwidths: geometric_bandwidths(15, 0.05, 0.5), ..MiEstimatorConfig::default() }
}

#[test]
fn estimate_matches_plugin_on_discrete_data() {
    for seed in 0..12u64 {
        let cols = 1 + (seed as usize % 3);
        let values = 2 + (seed as usize % 3);
        let (x, y) = discrete_sample(10_000, cols, values, 2 + seed as usize % 2, seed);
        let k = 2 + seed as usize % 2;
        let exact = plugin_mi(&x, &y, k).unwrap();
        let est = estimate_mi(&x, &y, k, &fine_grid().with_seed(seed)).unwrap();
        let err = (est.mutual_information_bits - exact).abs();
        assert!(err <= 0.1, "seed {seed}: estimate {} vs plugin {exact}", est.mutual_information_bits);
    }
}

#[test]
fn entropy_examples() {
    let balanced: Vec<usize> = (0..1000).map(|i| i % 2).collect();
    assert!((entropy(&balanced, 2).unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(entropy(&[1; 10], 2).unwrap(), 0.0);
    let skew: Vec<usize> = (0..400).map(|i| usize::from(i % 4 != 0)).collect();
    assert!((entropy(&skew, 2).unwrap() - 0.811278).abs() < 1e-6);
    assert!(entropy(&[], 2).is_err());
}

#[test]
fn plugin_closed_form() {
    // p(0,0) = p(1,1) = 0.4, p(0,1) = p(1,0) = 0.1
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (xv, yv, count) in [(0, 0, 40), (1, 1, 40), (0, 1, 10), (1, 0, 10)] {
        for _ in 0..count {
            x.push(f64::from(xv));
            y.push(yv);
        }
    }
    let mi = plugin_mi(&Matrix::from_column(&x), &y, 2).unwrap();
    assert!((mi - 0.278072).abs() < 1e-6);
}

#[test]
fn label_column_gives_high_u() {
    // One noise column beside the label; wider slabs shatter the finer cells.
    for seed in 0..5 {
        let y = balanced_labels(1000, 2, seed);
        let x = with_label_column(&y, 2, 10 + seed);
        let est = estimate_mi(&x, &y, 2, &MiEstimatorConfig::default().with_seed(seed)).unwrap();
        assert!(est.uncertainty_coefficient >= 0.9, "seed {seed}: U = {}", est.uncertainty_coefficient);
    }
    let y = balanced_labels(1000, 2, 3);

    let col = Matrix::from_column(&y.iter().map(|&c| c as f64).collect::<Vec<_>>());
    let exact = plugin_mi(&col, &y, 2).unwrap() / entropy(&y, 2).unwrap();
    assert!((exact - 1.0).abs() < 1e-12);
}

#[test]
fn independent_noise_gives_low_u() {
    for seed in 0..20 {
        let y = balanced_labels(1000, 2, seed);
        let x = gaussian(1000, 16, 100 + seed);
        let est = estimate_mi(&x, &y, 2, &MiEstimatorConfig::default().with_seed(seed)).unwrap();
        assert!(est.uncertainty_coefficient <= 0.15, "seed {seed}: U = {}", est.uncertainty_coefficient);
    }
}

#[test]
fn constant_labels_have_no_information() {
    let est = estimate_mi(&gaussian(200, 4, 1), &[0; 200], 2, &MiEstimatorConfig::default()).unwrap();
    assert_eq!((est.mutual_information_bits, est.uncertainty_coefficient), (0.0, 0.0));
}

#[test]
fn appending_the_label_does_not_lower_the_estimate() {
    let mut diff = 0.0;
    for seed in 0..10 {
        let y = balanced_labels(600, 2, seed);
        let x = gaussian(600, 6, 50 + seed);
        let mut widened = Matrix::zeros(600, 7);
        for i in 0..600 {
            widened.row_mut(i)[..6].copy_from_slice(x.row(i));
            widened.set(i, 6, y[i] as f64);
        }
        let cfg = MiEstimatorConfig::default().with_seed(seed);
        diff += estimate_mi(&widened, &y, 2, &cfg).unwrap().mutual_information_bits
            - estimate_mi(&x, &y, 2, &cfg).unwrap().mutual_information_bits;
    }
    assert!(diff / 10.0 >= 0.0);
}

#[test]
fn rejects_bad_config() {
    let y = balanced_labels(100, 2, 0);
    let x = gaussian(100, 2, 0);
    let bad = [
        MiEstimatorConfig { bandwidths: vec![], ..MiEstimatorConfig::default() },
        MiEstimatorConfig { bandwidths: vec![0.5, 0.5], ..MiEstimatorConfig::default() },
        MiEstimatorConfig { bandwidths: vec![-1.0], ..MiEstimatorConfig::default() },
        MiEstimatorConfig { projection_dim: 0, ..MiEstimatorConfig::default() },
    ];
    for cfg in bad {
        assert!(estimate_mi(&x, &y, 2, &cfg).is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn estimate_stays_within_bounds(
        seed in any::<u64>(),
        n in 50usize..120,
        d in 1usize..30,
        k in 2usize..5,
        scale in 0.0f64..3.0,
    ) {
        let y = random_labels(n, k, seed);
        let mut x = gaussian(n, d, seed ^ 0xABCD);
        for i in 0..n {
            let v = x.get(i, 0) + scale * y[i] as f64;
            x.set(i, 0, v);
        }
        let cfg = MiEstimatorConfig::default().with_ensemble_size(3).with_seed(seed);
        let est = estimate_mi(&x, &y, k, &cfg).unwrap();
        let h = entropy(&y, k).unwrap();
        prop_assert!(est.mutual_information_bits >= 0.0);
        prop_assert!(est.mutual_information_bits <= est.entropy_bits + 1e-12);
        prop_assert!((est.entropy_bits - h).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&est.uncertainty_coefficient));
        prop_assert_eq!(est, estimate_mi(&x, &y, k, &cfg).unwrap());
    }
}

