//! Ridge classifier: closed-form least squares on ±1 targets (one column per
//! class beyond the binary case), α picked on the validation set.

use alloc::vec;
use alloc::vec::Vec;

use super::{check_splits, Dataset, Family, Hyperparameters, ProbeModel, ProbeSpec, TrainedProbe};
use crate::error::{Error, Result};
use crate::logistic::accuracy;
use crate::matrix::{argmax, cholesky_solve, dot, Matrix, Standardizer};

pub const RIDGE_ALPHAS: [f64; 9] = [0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 10.0, 50.0, 100.0];

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RidgeModel {
    pub standardizer: Standardizer,
    /// One row for binary problems, `k` rows otherwise.
    pub weights: Matrix,
    pub intercept: Vec<f64>,
    pub classes: usize,
    pub alpha: f64,
}

impl RidgeModel {
    pub fn decision(&self, x: &Matrix) -> Matrix {
        let z = self.standardizer.transform(x);
        let m = self.weights.rows();
        let mut out = Matrix::zeros(z.rows(), m);
        for i in 0..z.rows() {
            for c in 0..m {
                out.set(i, c, dot(self.weights.row(c), z.row(i)) + self.intercept[c]);
            }
        }
        out
    }

    pub fn predict(&self, x: &Matrix) -> Vec<usize> {
        let s = self.decision(x);
        (0..s.rows())
            .map(|i| if self.classes == 2 { usize::from(s.get(i, 0) > 0.0) } else { argmax(s.row(i)) })
            .collect()
    }
}

/// Solves `(XᵀX + αI) w = Xᵀy`.
pub fn ridge_solve(x: &Matrix, y: &[f64], alpha: f64) -> Result<Vec<f64>> {
    solve_with_gram(&x.gram(), &x.t_mul_vec(y), alpha)
}

fn solve_with_gram(gram: &Matrix, xty: &[f64], alpha: f64) -> Result<Vec<f64>> {
    let mut a = gram.clone();
    for j in 0..a.rows() {
        let v = a.get(j, j) + alpha;
        a.set(j, j, v);
    }
    cholesky_solve(&a, xty)
}

/// Picks the α with the highest validation accuracy; ties go to the smaller α.
pub fn select_alpha(results: &[(f64, f64)]) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for &(alpha, acc) in results {
        best = match best {
            Some((ba, bacc)) if acc < bacc || (acc == bacc && alpha >= ba) => Some((ba, bacc)),
            _ => Some((alpha, acc)),
        };
    }
    best.map(|b| b.0)
}

fn fit_alpha(
    sd: &Standardizer,
    gram: &Matrix,
    xty: &[Vec<f64>],
    means: &[f64],
    k: usize,
    d: usize,
    alpha: f64,
) -> Result<RidgeModel> {
    let mut w = Vec::with_capacity(xty.len() * d);
    for col in xty {
        w.extend(solve_with_gram(gram, col, alpha)?);
    }
    Ok(RidgeModel {
        standardizer: sd.clone(),
        weights: Matrix::new(xty.len(), d, w)?,
        intercept: means.to_vec(),
        classes: k,
        alpha,
    })
}

pub fn train_ridge_probe(train: &Dataset, val: &Dataset, alphas: &[f64], seed: u64) -> Result<TrainedProbe> {
    check_splits(train, val)?;
    if alphas.is_empty() || alphas.iter().any(|&a| !(a > 0.0)) {
        return Err(Error::config("ridge alphas must be positive"));
    }
    crate::logistic::check_xy(&train.x, &train.y, train.k)?;
    let k = train.k;
    let sd = Standardizer::fit(&train.x);
    let z = sd.transform(&train.x);
    let d = z.cols();
    let outputs = if k == 2 { 1 } else { k };
    let gram = z.gram();
    let mut means = vec![0.0; outputs];
    let mut xty = Vec::with_capacity(outputs);
    for (c, mean) in means.iter_mut().enumerate() {
        let target_class = if k == 2 { 1 } else { c };
        let t: Vec<f64> = train.y.iter().map(|&y| if y == target_class { 1.0 } else { -1.0 }).collect();
        *mean = t.iter().sum::<f64>() / t.len() as f64;
        let centered: Vec<f64> = t.iter().map(|v| v - *mean).collect();
        xty.push(z.t_mul_vec(&centered));
    }

    let mut sorted = alphas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut results = Vec::with_capacity(sorted.len());
    for &alpha in &sorted {
        let model = fit_alpha(&sd, &gram, &xty, &means, k, d, alpha)?;
        results.push((alpha, accuracy(&model.predict(&val.x), &val.y)));
    }
    let alpha = select_alpha(&results).expect("nonempty grid");
    let model = fit_alpha(&sd, &gram, &xty, &means, k, d, alpha)?;
    let spec = ProbeSpec { family: Family::Ridge, hyperparameters: Hyperparameters::Ridge { alpha, grid: sorted }, seed };
    Ok(TrainedProbe::new(spec, ProbeModel::Ridge(model), None, val))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tie_prefers_smaller_alpha() {
        let r = [(0.1, 0.8), (0.5, 0.9), (1.0, 0.9), (5.0, 0.7)];
        assert_eq!(select_alpha(&r), Some(0.5));
        assert_eq!(select_alpha(&[]), None);
    }

    #[test]
    fn linear_targets_are_classified_perfectly() {
        let xs: Vec<Vec<f64>> = (0..60).map(|i| vec![i as f64 - 29.5, ((i * 7) % 11) as f64]).collect();
        let y: Vec<usize> = (0..60).map(|i| usize::from(i >= 30)).collect();
        let x = Matrix::from_rows(&xs).unwrap();
        let train = Dataset::new(x.clone(), y.clone(), 2).unwrap();
        let p = train_ridge_probe(&train, &train, &[0.01], 0).unwrap();
        assert_eq!(p.val_accuracy, 1.0);
    }
}
