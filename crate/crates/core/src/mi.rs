//! Entropy, mutual information and the uncertainty coefficient between a
//! layer's activations and a concept's labels.
//!
//! The high-dimensional estimator is an ensemble of hashed partitions: rows
//! are standardized, randomly projected, quantized on a per-member grid and
//! hashed into about `N` buckets; each member contributes the plug-in mutual
//! information between bucket and label, minus the same quantity under a
//! seeded label permutation. Members differ in grid width, projection, grid
//! offset and hash function; their (non-negative) estimates are averaged.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matrix::{Matrix, Standardizer};
use crate::rng::{self, stream};

/// Minimum sample count accepted by [`estimate_mi`].
pub const MIN_SAMPLES: usize = 50;

const MERSENNE_61: u64 = (1 << 61) - 1;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MiEstimatorConfig {
    /// Grid widths in units of the per-dimension standard deviation; one
    /// ensemble member per entry.
    pub bandwidths: Vec<f64>,
    pub projection_dim: usize,
    pub hash_bucket_factor: f64,
    /// Smoothness multiplier applied to every bandwidth.
    pub gamma: f64,
    pub seed: u64,
}

impl Default for MiEstimatorConfig {
    fn default() -> Self {
        Self {
            bandwidths: geometric_bandwidths(15, 0.25, 4.0),
            projection_dim: 20,
            hash_bucket_factor: 1.0,
            gamma: 1.0,
            seed: 0,
        }
    }
}

impl MiEstimatorConfig {
    /// Default grid range with `t` members.
    pub fn with_ensemble_size(mut self, t: usize) -> Self {
        self.bandwidths = geometric_bandwidths(t, 0.25, 4.0);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn ensemble_size(&self) -> usize {
        self.bandwidths.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.bandwidths.is_empty() {
            return Err(Error::config("ensemble size must be at least 1"));
        }
        if self.bandwidths.iter().any(|&b| !(b > 0.0 && b.is_finite())) {
            return Err(Error::config("bandwidths must be positive and finite"));
        }
        let mut sorted = self.bandwidths.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("bandwidths must be distinct"));
        }
        if self.projection_dim == 0 {
            return Err(Error::config("projection_dim must be at least 1"));
        }
        if !(self.hash_bucket_factor > 0.0) || !(self.gamma > 0.0) {
            return Err(Error::config("hash_bucket_factor and gamma must be positive"));
        }
        Ok(())
    }
}

/// `t` geometrically spaced values from `lo` to `hi` inclusive (`t == 1` gives
/// their geometric mean).
pub fn geometric_bandwidths(t: usize, lo: f64, hi: f64) -> Vec<f64> {
    match t {
        0 => Vec::new(),
        1 => vec![libm::sqrt(lo * hi)],
        _ => {
            let ratio = libm::log(hi / lo) / (t - 1) as f64;
            (0..t).map(|i| lo * libm::exp(ratio * i as f64)).collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MiEstimate {
    pub mutual_information_bits: f64,
    pub entropy_bits: f64,
    pub uncertainty_coefficient: f64,
}

impl MiEstimate {
    /// Clamps `mi` into `[0, entropy]` and derives the uncertainty coefficient.
    pub fn from_parts(mi: f64, entropy: f64) -> Self {
        let entropy = entropy.max(0.0);
        let mi = mi.max(0.0).min(entropy);
        let u = if entropy > 0.0 { (mi / entropy).clamp(0.0, 1.0) } else { 0.0 };
        Self { mutual_information_bits: mi, entropy_bits: entropy, uncertainty_coefficient: u }
    }
}

fn check_labels(labels: &[usize], k: usize) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::data("label vector is empty"));
    }
    if let Some(&bad) = labels.iter().find(|&&c| c >= k) {
        return Err(Error::data(alloc::format!("label {bad} outside 0..{k}")));
    }
    Ok(())
}

fn entropy_of_counts(counts: &[usize], n: usize) -> f64 {
    let nf = n as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / nf;
            -p * libm::log2(p)
        })
        .sum()
}

/// Plug-in Shannon entropy of the label distribution, in bits.
pub fn entropy(labels: &[usize], k: usize) -> Result<f64> {
    check_labels(labels, k)?;
    let mut counts = vec![0usize; k];
    for &c in labels {
        counts[c] += 1;
    }
    Ok(entropy_of_counts(&counts, labels.len()))
}

/// Plug-in mutual information (bits) between bucket ids and labels.
fn plugin_from_buckets(buckets: &[usize], n_buckets: usize, labels: &[usize], k: usize) -> f64 {
    let n = labels.len();
    let mut joint = vec![0u32; n_buckets * k];
    let mut bucket_count = vec![0u32; n_buckets];
    let mut class_count = vec![0u32; k];
    for (&b, &c) in buckets.iter().zip(labels) {
        joint[b * k + c] += 1;
        bucket_count[b] += 1;
        class_count[c] += 1;
    }
    let nf = n as f64;
    let mut mi = 0.0;
    for b in 0..n_buckets {
        let nb = bucket_count[b];
        if nb == 0 {
            continue;
        }
        for c in 0..k {
            let nbc = joint[b * k + c];
            if nbc == 0 {
                continue;
            }
            let nbc = f64::from(nbc);
            mi += nbc / nf * libm::log2(nbc * nf / (f64::from(nb) * f64::from(class_count[c])));
        }
    }
    mi.max(0.0)
}

/// Exact plug-in mutual information (bits) between discrete feature tuples
/// (rows of `x`) and labels.
pub fn plugin_mi(x: &Matrix, labels: &[usize], k: usize) -> Result<f64> {
    check_labels(labels, k)?;
    if x.rows() != labels.len() {
        return Err(Error::data("feature rows and labels differ in length"));
    }
    let mut ids: BTreeMap<Vec<i64>, usize> = BTreeMap::new();
    let mut buckets = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let mut key = Vec::with_capacity(x.cols());
        for &v in x.row(i) {
            if !v.is_finite() || libm::trunc(v) != v {
                return Err(Error::data("plugin_mi needs integer-valued (discrete) features"));
            }
            key.push(v as i64);
        }
        let next = ids.len();
        buckets.push(*ids.entry(key).or_insert(next));
        if ids.len() > 10_000 {
            return Err(Error::data("more than 10^4 distinct feature tuples"));
        }
    }
    Ok(plugin_from_buckets(&buckets, ids.len(), labels, k))
}

#[inline]
fn mul_mod(a: u64, b: u64) -> u64 {
    ((u128::from(a) * u128::from(b)) % u128::from(MERSENNE_61)) as u64
}

/// One ensemble member: permutation-corrected hashed-partition estimate.
fn member_estimate(z: &Matrix, labels: &[usize], k: usize, bandwidth: f64, cfg: &MiEstimatorConfig, seed: u64) -> f64 {
    let n = z.rows();
    let d = z.cols();
    let mut rng = rng::rng(seed);

    let projected = if d <= cfg.projection_dim {
        z.clone()
    } else {
        let p = cfg.projection_dim;
        let scale = 1.0 / libm::sqrt(p as f64);
        let proj: Vec<f64> = (0..d * p)
            .map(|_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                g * scale
            })
            .collect();
        let mut out = Matrix::zeros(n, p);
        for i in 0..n {
            let src = z.row(i);
            let dst = out.row_mut(i);
            for (a, &v) in src.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                for (o, &w) in dst.iter_mut().zip(&proj[a * p..(a + 1) * p]) {
                    *o += v * w;
                }
            }
        }
        out
    };

    let dims = projected.cols();
    let sd = Standardizer::fit(&projected);
    let widths: Vec<f64> = sd.scale.iter().map(|s| bandwidth * cfg.gamma * s).collect();
    let coeffs: Vec<u64> = (0..dims).map(|_| rng.random_range(1..MERSENNE_61)).collect();
    let shift = rng.random_range(0..MERSENNE_61);
    let n_buckets = (libm::ceil(cfg.hash_bucket_factor * n as f64) as usize).max(1);

    let buckets: Vec<usize> = (0..n)
        .map(|i| {
            let mut h = shift;
            for (j, &v) in projected.row(i).iter().enumerate() {
                let cell = libm::floor(v / widths[j]) as i64;
                let cell = cell.rem_euclid(MERSENNE_61 as i64) as u64;
                h = (h + mul_mod(coeffs[j], cell)) % MERSENNE_61;
            }
            (h % n_buckets as u64) as usize
        })
        .collect();

    let observed = plugin_from_buckets(&buckets, n_buckets, labels, k);
    let mut permuted = labels.to_vec();
    permuted.shuffle(&mut rng);
    let null = plugin_from_buckets(&buckets, n_buckets, &permuted, k);
    (observed - null).max(0.0)
}

/// Ensemble estimate of `I(x; c)` in bits with entropy and uncertainty
/// coefficient. Deterministic for a fixed `cfg.seed`.
pub fn estimate_mi(x: &Matrix, labels: &[usize], k: usize, cfg: &MiEstimatorConfig) -> Result<MiEstimate> {
    cfg.validate()?;
    check_labels(labels, k)?;
    if x.rows() != labels.len() {
        return Err(Error::data("activation rows and labels differ in length"));
    }
    if x.cols() == 0 {
        return Err(Error::data("activations have dimension 0"));
    }
    if x.rows() < MIN_SAMPLES {
        return Err(Error::data(alloc::format!(
            "{} samples is below the estimator minimum of {MIN_SAMPLES}",
            x.rows()
        )));
    }
    if !x.is_finite() {
        return Err(Error::data("activations contain non-finite values"));
    }
    let h = entropy(labels, k)?;
    if h == 0.0 {
        return Ok(MiEstimate::from_parts(0.0, 0.0));
    }

    let sd = Standardizer::fit(x);
    // Zero-variance columns carry nothing; `Standardizer` marks them with scale 1
    // after centering them to exactly zero.
    let keep: Vec<usize> = (0..x.cols())
        .filter(|&j| {
            let m = sd.mean[j];
            (0..x.rows()).any(|i| x.get(i, j) != m)
        })
        .collect();
    if keep.is_empty() {
        return Ok(MiEstimate::from_parts(0.0, h));
    }
    let z = sd.select(&keep).transform(&x.select_cols(&keep));

    let base = rng::derive(cfg.seed, stream::MI);
    let total: f64 = cfg
        .bandwidths
        .iter()
        .enumerate()
        .map(|(t, &eps)| member_estimate(&z, labels, k, eps, cfg, rng::derive(base, t as u64)))
        .sum();
    Ok(MiEstimate::from_parts(total / cfg.ensemble_size() as f64, h))
}
