//! Activation packs, concept labels and balanced train/validation/test splits.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{self, stream};

/// Activations of one layer: `rows` samples by `dim` units, sample-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSlab {
    pub layer_index: usize,
    pub layer_name: String,
    rows: usize,
    dim: usize,
    data: Vec<f32>,
}

impl LayerSlab {
    pub fn new(
        layer_index: usize,
        layer_name: impl Into<String>,
        rows: usize,
        dim: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        let layer_name = layer_name.into();
        if dim == 0 {
            return Err(Error::data(format!("layer `{layer_name}` has dimension 0")));
        }
        if data.len() != rows * dim {
            return Err(Error::data(format!(
                "layer `{layer_name}` holds {} values, expected {rows}x{dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!(
                "layer `{layer_name}` has a non-finite value at byte offset {}",
                pos * 4
            )));
        }
        Ok(Self { layer_index, layer_name, rows, dim, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f32] {
        &self.data
    }

    pub fn to_matrix(&self) -> Matrix {
        let data = self.data.iter().map(|&v| f64::from(v)).collect();
        Matrix::new(self.rows, self.dim, data).expect("slab shape checked at construction")
    }

    /// Copies the given sample rows into an `f64` matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            data.extend(self.data[i * self.dim..(i + 1) * self.dim].iter().map(|&v| f64::from(v)));
        }
        Matrix::new(idx.len(), self.dim, data).expect("row selection keeps shape")
    }
}

/// Per-layer activations of one model over a shared, ordered sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationPack {
    pub model_name: String,
    layers: Vec<LayerSlab>,
    sample_ids: Vec<String>,
}

impl ActivationPack {
    pub fn new(model_name: impl Into<String>, layers: Vec<LayerSlab>, sample_ids: Vec<String>) -> Result<Self> {
        let n = sample_ids.len();
        for (i, l) in layers.iter().enumerate() {
            if l.layer_index != i {
                return Err(Error::data(format!(
                    "layer `{}` has index {}, expected {i}",
                    l.layer_name, l.layer_index
                )));
            }
            if l.rows != n {
                return Err(Error::data(format!(
                    "layer `{}` has {} rows, pack has {n} samples",
                    l.layer_name, l.rows
                )));
            }
        }
        Ok(Self { model_name: model_name.into(), layers, sample_ids })
    }

    pub fn layers(&self) -> &[LayerSlab] {
        &self.layers
    }

    pub fn layer(&self, i: usize) -> &LayerSlab {
        &self.layers[i]
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn num_samples(&self) -> usize {
        self.sample_ids.len()
    }

    /// Keeps only the listed layers, re-indexing them from zero.
    pub fn sub_pack(&self, layers: &[usize]) -> Result<Self> {
        let slabs = layers
            .iter()
            .enumerate()
            .map(|(new, &old)| {
                let mut s = self.layers[old].clone();
                s.layer_index = new;
                s
            })
            .collect();
        Self::new(self.model_name.clone(), slabs, self.sample_ids.clone())
    }
}

/// Integer concept labels for every sample, one column per concept.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptTable {
    concept_names: Vec<String>,
    sample_ids: Vec<String>,
    /// Row-major `n_samples × n_concepts`.
    labels: Vec<u32>,
    cardinalities: Vec<usize>,
}

impl ConceptTable {
    pub fn new(
        concept_names: Vec<String>,
        sample_ids: Vec<String>,
        labels: Vec<u32>,
        cardinalities: Vec<usize>,
    ) -> Result<Self> {
        let c = concept_names.len();
        if cardinalities.len() != c {
            return Err(Error::data("one cardinality per concept is required"));
        }
        if labels.len() != sample_ids.len() * c {
            return Err(Error::data("label matrix does not match samples x concepts"));
        }
        if let Some(j) = cardinalities.iter().position(|&k| k < 2) {
            return Err(Error::data(format!(
                "concept `{}` has cardinality {} (< 2)",
                concept_names[j], cardinalities[j]
            )));
        }
        for (pos, &v) in labels.iter().enumerate() {
            let j = pos % c.max(1);
            if v as usize >= cardinalities[j] {
                return Err(Error::data(format!(
                    "label {v} of sample `{}` exceeds cardinality {} of `{}`",
                    sample_ids[pos / c],
                    cardinalities[j],
                    concept_names[j]
                )));
            }
        }
        Ok(Self { concept_names, sample_ids, labels, cardinalities })
    }

    /// Builds a table with cardinalities inferred as `max(label) + 1` (at least 2).
    pub fn from_columns(names: Vec<String>, sample_ids: Vec<String>, columns: &[Vec<u32>]) -> Result<Self> {
        let n = sample_ids.len();
        if columns.len() != names.len() || columns.iter().any(|c| c.len() != n) {
            return Err(Error::data("concept columns do not match sample count"));
        }
        let cards = columns
            .iter()
            .map(|c| c.iter().copied().max().map_or(2, |m| (m as usize + 1).max(2)))
            .collect();
        let mut labels = Vec::with_capacity(n * names.len());
        for i in 0..n {
            labels.extend(columns.iter().map(|c| c[i]));
        }
        Self::new(names, sample_ids, labels, cards)
    }

    pub fn concept_names(&self) -> &[String] {
        &self.concept_names
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn num_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn concept_index(&self, name: &str) -> Result<usize> {
        self.concept_names.iter().position(|c| c == name).ok_or_else(|| Error::UnknownConcept {
            name: name.to_string(),
            available: self.concept_names.join(","),
        })
    }

    pub fn cardinality(&self, concept: usize) -> usize {
        self.cardinalities[concept]
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    pub fn column(&self, concept: usize) -> Vec<usize> {
        let c = self.concept_names.len();
        (0..self.num_samples()).map(|i| self.labels[i * c + concept] as usize).collect()
    }

    pub fn raw_labels(&self) -> &[u32] {
        &self.labels
    }

    /// Fails unless the table lists exactly the pack's samples in the same order.
    pub fn check_pairing(&self, pack: &ActivationPack) -> Result<()> {
        if self.sample_ids.len() != pack.num_samples() {
            return Err(Error::data(format!(
                "concept table has {} samples, pack has {}",
                self.sample_ids.len(),
                pack.num_samples()
            )));
        }
        if let Some(i) = self.sample_ids.iter().zip(pack.sample_ids()).position(|(a, b)| a != b) {
            return Err(Error::data(format!(
                "sample id mismatch at row {i}: `{}` vs `{}`",
                self.sample_ids[i],
                pack.sample_ids()[i]
            )));
        }
        Ok(())
    }
}

pub const DEFAULT_MAX_SAMPLES: usize = 1000;
pub const VALIDATION_FRACTION: f64 = 0.20;
/// Fewest samples per class that still allows 5-fold cross-validation.
pub const MIN_CLASS_SAMPLES: usize = 5;

/// Disjoint sample index sets for one concept.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SplitPlan {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
    pub max_samples: usize,
}

impl SplitPlan {
    /// The balanced characterization pool: training followed by validation indices.
    pub fn pool(&self) -> Vec<usize> {
        let mut v = self.train.clone();
        v.extend_from_slice(&self.val);
        v
    }
}

/// Draws a balanced train∪val set of at most `max_samples`, holds out 20 % of
/// it (stratified) for validation and fills a balanced test set from what is
/// left, no larger than train∪val.
pub fn make_split(labels: &ConceptTable, concept: &str, max_samples: usize, seed: u64) -> Result<SplitPlan> {
    let j = labels.concept_index(concept)?;
    let k = labels.cardinality(j);
    let y = labels.column(j);
    let mut by_class: Vec<Vec<usize>> = alloc::vec![Vec::new(); k];
    for (i, &c) in y.iter().enumerate() {
        by_class[c].push(i);
    }
    for (c, idx) in by_class.iter().enumerate() {
        if idx.len() < MIN_CLASS_SAMPLES {
            return Err(Error::data(format!(
                "concept `{concept}` class {c} has {} samples; at least {MIN_CLASS_SAMPLES} are needed",
                idx.len()
            )));
        }
    }
    let mut rng = rng::rng(rng::derive(seed, stream::SPLIT));
    for idx in &mut by_class {
        idx.shuffle(&mut rng);
    }
    let min_count = by_class.iter().map(Vec::len).min().unwrap_or(0);
    let per_class = min_count.min(max_samples / k);
    if per_class < MIN_CLASS_SAMPLES {
        return Err(Error::config(format!(
            "max_samples {max_samples} leaves fewer than {MIN_CLASS_SAMPLES} samples per class"
        )));
    }
    let pool = per_class * k;
    let n_val = libm::round(VALIDATION_FRACTION * pool as f64) as usize;
    let (val_base, val_extra) = (n_val / k, n_val % k);
    let test_per_class = by_class.iter().map(|v| v.len() - per_class).min().unwrap_or(0).min(per_class);

    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (c, idx) in by_class.iter().enumerate() {
        let v = val_base + usize::from(c < val_extra);
        val.extend_from_slice(&idx[..v]);
        train.extend_from_slice(&idx[v..per_class]);
        test.extend_from_slice(&idx[per_class..per_class + test_per_class]);
    }
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(SplitPlan { train, val, test, seed, max_samples })
}
