#![allow(dead_code)]

use layerprobe_core::probes::Dataset;
use layerprobe_core::rng;
use layerprobe_core::synth::sample_ids;
use layerprobe_core::{ActivationPack, ConceptTable, LayerSlab, Matrix};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut r = rng::rng(seed);
    let data = (0..rows * cols).map(|_| StandardNormal.sample(&mut r)).collect();
    Matrix::new(rows, cols, data).unwrap()
}

/// Exactly balanced labels in shuffled order.
pub fn balanced_labels(n: usize, k: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut y: Vec<usize> = (0..n).map(|i| i % k).collect();
    y.shuffle(&mut rng::rng(seed));
    y
}

pub fn random_labels(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut r = rng::rng(seed);
    (0..n).map(|_| r.random_range(0..k)).collect()
}

pub fn slab(index: usize, m: &Matrix) -> LayerSlab {
    let data = m.as_slice().iter().map(|&v| v as f32).collect();
    LayerSlab::new(index, format!("layer_{index}"), m.rows(), m.cols(), data).unwrap()
}

pub fn pack(layers: &[Matrix]) -> ActivationPack {
    let n = layers[0].rows();
    let slabs = layers.iter().enumerate().map(|(i, m)| slab(i, m)).collect();
    ActivationPack::new("test", slabs, sample_ids(n)).unwrap()
}

pub fn table(columns: &[(&str, &[usize])]) -> ConceptTable {
    let n = columns[0].1.len();
    let names = columns.iter().map(|c| c.0.to_string()).collect();
    let cols: Vec<Vec<u32>> = columns.iter().map(|c| c.1.iter().map(|&v| v as u32).collect()).collect();
    ConceptTable::from_columns(names, sample_ids(n), &cols).unwrap()
}

/// Gaussian noise with the label written into column 0.
pub fn with_label_column(labels: &[usize], dim: usize, seed: u64) -> Matrix {
    let mut m = gaussian(labels.len(), dim, seed);
    for (i, &c) in labels.iter().enumerate() {
        m.set(i, 0, c as f64);
    }
    m
}

/// Pack of `layers` noise layers; layer `planted` (if any) carries the label as a coordinate.
pub fn planted_pack(labels: &[usize], layers: usize, dim: usize, planted: Option<usize>, seed: u64) -> ActivationPack {
    let mats: Vec<Matrix> = (0..layers)
        .map(|l| {
            let s = rng::derive(seed, l as u64);
            if Some(l) == planted { with_label_column(labels, dim, s) } else { gaussian(labels.len(), dim, s) }
        })
        .collect();
    pack(&mats)
}

pub fn dataset(x: Matrix, y: Vec<usize>, k: usize) -> Dataset {
    Dataset::new(x, y, k).unwrap()
}

/// Rows `a..b` of `x` with their labels.
pub fn rows(x: &Matrix, y: &[usize], k: usize, a: usize, b: usize) -> Dataset {
    let idx: Vec<usize> = (a..b).collect();
    dataset(x.select_rows(&idx), y[a..b].to_vec(), k)
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn rel_err(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

pub fn central_diff(f: impl Fn(&[f64]) -> f64, p: &[f64], h: f64) -> Vec<f64> {
    let mut q = p.to_vec();
    (0..p.len())
        .map(|j| {
            q[j] = p[j] + h;
            let up = f(&q);
            q[j] = p[j] - h;
            let down = f(&q);
            q[j] = p[j];
            (up - down) / (2.0 * h)
        })
        .collect()
}
