//! Unregularized multinomial logistic regression fitted by full-batch
//! gradient descent with Armijo backtracking.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix, Standardizer};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LogisticConfig {
    pub max_iter: usize,
    /// Stop once the gradient's ∞-norm falls to this value.
    pub grad_tol: f64,
    /// Conditioning jitter on the weights (not the bias), far below anything
    /// that moves accuracy.
    pub ridge: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self { max_iter: 500, grad_tol: 1e-6, ridge: 1e-8 }
    }
}

/// Mean cross-entropy objective over standardized features.
///
/// Binary problems use a single logit row (sigmoid); `k > 2` uses one row per
/// class (softmax). Parameters are laid out as the weight rows followed by the
/// biases.
#[derive(Debug, Clone, Copy)]
pub struct LogisticObjective<'a> {
    x: &'a Matrix,
    y: &'a [usize],
    k: usize,
    ridge: f64,
}

impl<'a> LogisticObjective<'a> {
    pub fn new(x: &'a Matrix, y: &'a [usize], k: usize, ridge: f64) -> Self {
        Self { x, y, k, ridge }
    }

    pub fn outputs(&self) -> usize {
        if self.k == 2 { 1 } else { self.k }
    }

    pub fn n_params(&self) -> usize {
        self.outputs() * (self.x.cols() + 1)
    }

    /// Logits `X W^T + b` (N × outputs).
    fn logits(&self, params: &[f64]) -> Vec<f64> {
        let (n, d, m) = (self.x.rows(), self.x.cols(), self.outputs());
        let (w, b) = params.split_at(m * d);
        let mut z = vec![0.0; n * m];
        for i in 0..n {
            let xi = self.x.row(i);
            for c in 0..m {
                z[i * m + c] = dot(&w[c * d..(c + 1) * d], xi) + b[c];
            }
        }
        z
    }

    fn penalty(&self, params: &[f64]) -> f64 {
        let md = self.outputs() * self.x.cols();
        0.5 * self.ridge * params[..md].iter().map(|v| v * v).sum::<f64>()
    }

    /// Mean cross-entropy of the logits, without the penalty.
    fn data_loss(&self, z: &[f64]) -> f64 {
        let m = self.outputs();
        let mut loss = 0.0;
        for (i, zi) in z.chunks_exact(m).enumerate() {
            if m == 1 {
                let t = if self.y[i] == 1 { 1.0 } else { 0.0 };
                loss += softplus(zi[0]) - t * zi[0];
            } else {
                let mx = zi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let s: f64 = zi.iter().map(|&v| libm::exp(v - mx)).sum();
                loss += mx + libm::log(s) - zi[self.y[i]];
            }
        }
        loss / self.y.len() as f64
    }

    /// Per-sample residuals `(p − onehot(y)) / N`.
    fn residuals(&self, z: &[f64]) -> Vec<f64> {
        let m = self.outputs();
        let nf = self.y.len() as f64;
        let mut resid = vec![0.0; z.len()];
        for (i, (zi, r)) in z.chunks_exact(m).zip(resid.chunks_exact_mut(m)).enumerate() {
            if m == 1 {
                let t = if self.y[i] == 1 { 1.0 } else { 0.0 };
                r[0] = (sigmoid(zi[0]) - t) / nf;
            } else {
                let mx = zi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut s = 0.0;
                for (rc, &zc) in r.iter_mut().zip(zi) {
                    *rc = libm::exp(zc - mx);
                    s += *rc;
                }
                r.iter_mut().for_each(|v| *v /= s);
                r[self.y[i]] -= 1.0;
                r.iter_mut().for_each(|v| *v /= nf);
            }
        }
        resid
    }

    fn forward(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let z = self.logits(params);
        (self.data_loss(&z) + self.penalty(params), self.residuals(&z))
    }

    fn gradient(&self, params: &[f64], resid: &[f64]) -> Vec<f64> {
        let (n, d, m) = (self.x.rows(), self.x.cols(), self.outputs());
        let mut g = vec![0.0; m * (d + 1)];
        let (gw, gb) = g.split_at_mut(m * d);
        for i in 0..n {
            let xi = self.x.row(i);
            for c in 0..m {
                let r = resid[i * m + c];
                if r == 0.0 {
                    continue;
                }
                gb[c] += r;
                for (gj, &xj) in gw[c * d..(c + 1) * d].iter_mut().zip(xi) {
                    *gj += r * xj;
                }
            }
        }
        for (gj, &wj) in gw.iter_mut().zip(&params[..m * d]) {
            *gj += self.ridge * wj;
        }
        g
    }

    pub fn loss(&self, params: &[f64]) -> f64 {
        self.forward(params).0
    }

    pub fn loss_and_grad(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let (loss, resid) = self.forward(params);
        (loss, self.gradient(params, &resid))
    }
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn softplus(z: f64) -> f64 {
    z.max(0.0) + libm::log1p(libm::exp(-z.abs()))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LogisticModel {
    pub standardizer: Standardizer,
    /// `outputs × D`; a single row for binary problems.
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub classes: usize,
    pub iterations: usize,
    pub final_loss: f64,
}

impl LogisticModel {
    /// Class probabilities (N × k) for raw, unstandardized features.
    pub fn predict_proba(&self, x: &Matrix) -> Matrix {
        let z = self.standardizer.transform(x);
        let k = self.classes;
        let m = self.weights.rows();
        let mut out = Matrix::zeros(z.rows(), k);
        for i in 0..z.rows() {
            let zi = z.row(i);
            let row = out.row_mut(i);
            if m == 1 {
                let p = sigmoid(dot(self.weights.row(0), zi) + self.bias[0]);
                row[0] = 1.0 - p;
                row[1] = p;
            } else {
                for c in 0..k {
                    row[c] = dot(self.weights.row(c), zi) + self.bias[c];
                }
                let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut s = 0.0;
                for v in row.iter_mut() {
                    *v = libm::exp(*v - mx);
                    s += *v;
                }
                row.iter_mut().for_each(|v| *v /= s);
            }
        }
        out
    }

    pub fn predict(&self, x: &Matrix) -> Vec<usize> {
        let p = self.predict_proba(x);
        (0..p.rows()).map(|i| crate::matrix::argmax(p.row(i))).collect()
    }
}

pub(crate) fn check_xy(x: &Matrix, y: &[usize], k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::data("a classifier needs at least 2 classes"));
    }
    if x.rows() != y.len() {
        return Err(Error::data("feature rows and labels differ in length"));
    }
    if x.rows() < k {
        return Err(Error::data("fewer samples than classes"));
    }
    if let Some(&c) = y.iter().find(|&&c| c >= k) {
        return Err(Error::data(alloc::format!("label {c} outside 0..{k}")));
    }
    if y.iter().all(|&c| c == y[0]) {
        return Err(Error::data("training labels contain a single class"));
    }
    if !x.is_finite() {
        return Err(Error::data("features contain non-finite values"));
    }
    Ok(())
}

pub fn fit_logistic(x: &Matrix, y: &[usize], k: usize) -> Result<LogisticModel> {
    fit_logistic_with(x, y, k, &LogisticConfig::default())
}

pub fn fit_logistic_with(x: &Matrix, y: &[usize], k: usize, cfg: &LogisticConfig) -> Result<LogisticModel> {
    check_xy(x, y, k)?;
    let standardizer = Standardizer::fit(x);
    let z = standardizer.transform(x);
    let obj = LogisticObjective::new(&z, y, k, cfg.ridge);

    let mut params = vec![0.0; obj.n_params()];
    // Logits move linearly along the search direction, so each line-search
    // trial costs O(N) once X·g is known.
    let mut logits = obj.logits(&params);
    let mut loss = obj.data_loss(&logits) + obj.penalty(&params);
    let mut step: f64 = 1.0;
    let mut iterations = 0;
    let mut trial = params.clone();
    let mut trial_logits = logits.clone();
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    while iterations < cfg.max_iter {
        let g = obj.gradient(&params, &obj.residuals(&logits));
        let g_inf = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if g_inf <= cfg.grad_tol {
            break;
        }
        let g2: f64 = g.iter().map(|v| v * v).sum();
        // First trial step from the secant of the last move (Barzilai-Borwein),
        // falling back to doubling the last accepted step.
        let mut t = (step * 2.0).min(1e6);
        if let Some((pp, pg)) = &prev {
            let (mut ss, mut sy) = (0.0, 0.0);
            for i in 0..g.len() {
                let s = params[i] - pp[i];
                ss += s * s;
                sy += s * (g[i] - pg[i]);
            }
            if sy > 0.0 && ss > 0.0 {
                t = (ss / sy).min(1e6);
            }
        }
        let xg = obj.logits(&g);
        let accepted = loop {
            for ((p, q), gj) in trial.iter_mut().zip(&params).zip(&g) {
                *p = q - t * gj;
            }
            for ((zt, z), dz) in trial_logits.iter_mut().zip(&logits).zip(&xg) {
                *zt = z - t * dz;
            }
            let f = obj.data_loss(&trial_logits) + obj.penalty(&trial);
            if f <= loss - 1e-4 * t * g2 {
                break Some(f);
            }
            t *= 0.5;
            if t < 1e-14 {
                break None;
            }
        };
        iterations += 1;
        match accepted {
            Some(f) => {
                prev = Some((params.clone(), g));
                core::mem::swap(&mut params, &mut trial);
                core::mem::swap(&mut logits, &mut trial_logits);
                loss = f;
                step = t;
            }
            None => break,
        }
    }

    let m = obj.outputs();
    let d = z.cols();
    let weights = Matrix::new(m, d, params[..m * d].to_vec())?;
    let bias = params[m * d..].to_vec();
    if !loss.is_finite() || !weights.is_finite() {
        return Err(Error::NonFinite { what: "logistic regression".into(), epoch: iterations });
    }
    Ok(LogisticModel { standardizer, weights, bias, classes: k, iterations, final_loss: loss })
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_line_is_fit_exactly() {
        let xs: Vec<f64> = (0..20).map(|i| if i < 10 { -1.0 - i as f64 * 0.1 } else { 1.0 + i as f64 * 0.1 }).collect();
        let y: Vec<usize> = (0..20).map(|i| usize::from(i >= 10)).collect();
        let x = Matrix::from_column(&xs);
        let m = fit_logistic(&x, &y, 2).unwrap();
        assert_eq!(accuracy(&m.predict(&x), &y), 1.0);
    }

    #[test]
    fn xor_is_not_linearly_separable() {
        let x = Matrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let y = [0, 1, 1, 0];
        let m = fit_logistic(&x, &y, 2).unwrap();
        assert!(accuracy(&m.predict(&x), &y) <= 0.75);
    }

    #[test]
    fn single_class_rejected() {
        let x = Matrix::from_column(&[0.0, 1.0, 2.0]);
        assert!(fit_logistic(&x, &[1, 1, 1], 2).is_err());
    }

    #[test]
    fn multiclass_probabilities_sum_to_one() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0], vec![4.0], vec![5.0]]).unwrap();
        let y = [0, 0, 1, 1, 2, 2];
        let m = fit_logistic(&x, &y, 3).unwrap();
        let p = m.predict_proba(&x);
        for i in 0..p.rows() {
            assert!((p.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert!(accuracy(&m.predict(&x), &y) >= 5.0 / 6.0);
    }
}
