//! Regularity of a representation: mean stratified 5-fold cross-validated
//! accuracy of a logistic-regression probe, plus the held-out code length.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::logistic::{accuracy, fit_logistic_with, LogisticConfig};
use crate::matrix::{argmax, Matrix};
use crate::rng::{self, stream};

pub const FOLDS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RegularityScore {
    pub r_accuracy: f64,
    pub fold_accuracies: Vec<f64>,
    /// `−Σ log2 p̂(cᵢ | xᵢ)` over held-out predictions of all folds.
    pub description_length_bits: f64,
}

/// Assigns every sample to one of `FOLDS` folds, stratified by class.
pub fn stratified_folds(labels: &[usize], k: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng::rng(rng::derive(seed, stream::FOLDS));
    let mut fold = vec![0; labels.len()];
    let mut next = 0;
    for c in 0..k {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            fold[i] = next % FOLDS;
            next += 1;
        }
    }
    fold
}

pub fn regularity(x: &Matrix, labels: &[usize], k: usize, seed: u64) -> Result<RegularityScore> {
    regularity_with(x, labels, k, seed, &LogisticConfig::default())
}

pub fn regularity_with(
    x: &Matrix,
    labels: &[usize],
    k: usize,
    seed: u64,
    cfg: &LogisticConfig,
) -> Result<RegularityScore> {
    if x.rows() != labels.len() {
        return Err(Error::data("activation rows and labels differ in length"));
    }
    if k < 2 {
        return Err(Error::data("regularity needs at least 2 classes"));
    }
    let mut counts = vec![0usize; k];
    for &c in labels {
        if c >= k {
            return Err(Error::data(alloc::format!("label {c} outside 0..{k}")));
        }
        counts[c] += 1;
    }
    if let Some(c) = counts.iter().position(|&n| n < FOLDS) {
        return Err(Error::data(alloc::format!(
            "class {c} has {} samples; {FOLDS}-fold cross-validation needs {FOLDS}",
            counts[c]
        )));
    }

    let fold = stratified_folds(labels, k, seed);
    let mut fold_accuracies = Vec::with_capacity(FOLDS);
    let mut code_length = 0.0;
    for f in 0..FOLDS {
        let (train, test): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| fold[i] != f);
        let y_train: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
        let y_test: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
        let model = fit_logistic_with(&x.select_rows(&train), &y_train, k, cfg)?;
        let proba = model.predict_proba(&x.select_rows(&test));
        let pred: Vec<usize> = (0..proba.rows()).map(|i| argmax(proba.row(i))).collect();
        fold_accuracies.push(accuracy(&pred, &y_test));
        for (i, &c) in y_test.iter().enumerate() {
            code_length -= libm::log2(proba.get(i, c).max(f64::MIN_POSITIVE));
        }
    }
    let r_accuracy = fold_accuracies.iter().sum::<f64>() / FOLDS as f64;
    Ok(RegularityScore { r_accuracy, fold_accuracies, description_length_bits: code_length })
}
