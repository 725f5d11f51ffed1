//! One-hidden-layer ReLU network trained with Adam on cross-entropy, with
//! epoch-level early stopping on validation accuracy.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use super::{check_splits, Dataset, Family, Hyperparameters, ProbeModel, ProbeSpec, TrainedProbe};
use crate::error::{Error, Result};
use crate::logistic::{accuracy, check_xy, sigmoid, softplus};
use crate::matrix::{argmax, dot, Matrix, Standardizer};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MlpConfig {
    /// Hidden width; `None` connects inputs straight to the output layer.
    pub hidden: Option<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    /// L1 strength on every weight (biases excluded).
    pub l1: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: Some(10),
            learning_rate: 1e-3,
            batch_size: 32,
            patience: 15,
            max_epochs: 200,
            l1: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Network shape with parameters stored flat as `[W1, b1, W2, b2]`
/// (`[W, b]` without a hidden layer). Weight matrices are row-major
/// `fan_out × fan_in`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MlpShape {
    pub inputs: usize,
    pub hidden: Option<usize>,
    pub outputs: usize,
}

impl MlpShape {
    pub fn new(inputs: usize, hidden: Option<usize>, classes: usize) -> Self {
        Self { inputs, hidden, outputs: if classes == 2 { 1 } else { classes } }
    }

    fn first_width(&self) -> usize {
        self.hidden.unwrap_or(self.outputs)
    }

    pub fn n_params(&self) -> usize {
        match self.hidden {
            Some(h) => h * self.inputs + h + self.outputs * h + self.outputs,
            None => self.outputs * self.inputs + self.outputs,
        }
    }

    /// Ranges of the weight (not bias) blocks inside the flat vector.
    pub fn weight_ranges(&self) -> Vec<core::ops::Range<usize>> {
        let w1 = self.first_width() * self.inputs;
        match self.hidden {
            Some(h) => {
                let w2_start = w1 + h;
                vec![0..w1, w2_start..w2_start + self.outputs * h]
            }
            None => vec![0..w1],
        }
    }

    fn init(&self, rng: &mut rng::Rng) -> Vec<f64> {
        let mut p = vec![0.0; self.n_params()];
        let first = self.first_width();
        let he = Normal::new(0.0, libm::sqrt(2.0 / self.inputs.max(1) as f64)).expect("finite std");
        for v in &mut p[..first * self.inputs] {
            *v = he.sample(rng);
        }
        if let Some(h) = self.hidden {
            let start = first * self.inputs + h;
            let glorot = Normal::new(0.0, libm::sqrt(1.0 / h as f64)).expect("finite std");
            for v in &mut p[start..start + self.outputs * h] {
                *v = glorot.sample(rng);
            }
        }
        p
    }

    /// Output logits for one standardized row; fills `hidden_pre` when present.
    fn logits(&self, params: &[f64], row: &[f64], hidden_pre: &mut [f64], out: &mut [f64]) {
        let d = self.inputs;
        match self.hidden {
            Some(h) => {
                let (w1, rest) = params.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(self.outputs * h);
                for j in 0..h {
                    hidden_pre[j] = dot(&w1[j * d..(j + 1) * d], row) + b1[j];
                }
                for c in 0..self.outputs {
                    let mut s = b2[c];
                    for j in 0..h {
                        s += w2[c * h + j] * hidden_pre[j].max(0.0);
                    }
                    out[c] = s;
                }
            }
            None => {
                let (w, b) = params.split_at(self.outputs * d);
                for c in 0..self.outputs {
                    out[c] = dot(&w[c * d..(c + 1) * d], row) + b[c];
                }
            }
        }
    }

    /// Mean cross-entropy over `rows` plus `l1·Σ|w|`, and its gradient.
    pub fn loss_and_grad(&self, params: &[f64], x: &Matrix, y: &[usize], rows: &[usize], l1: f64) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; params.len()];
        let loss = self.accumulate(params, x, y, rows, Some(&mut grad));
        let scale = 1.0 / rows.len().max(1) as f64;
        grad.iter_mut().for_each(|g| *g *= scale);
        let mut penalty = 0.0;
        if l1 > 0.0 {
            for r in self.weight_ranges() {
                for i in r {
                    penalty += params[i].abs();
                    if params[i] != 0.0 {
                        grad[i] += l1 * params[i].signum();
                    }
                }
            }
        }
        (loss * scale + l1 * penalty, grad)
    }

    /// Mean cross-entropy over `rows` plus the L1 term, without gradient.
    pub fn loss(&self, params: &[f64], x: &Matrix, y: &[usize], rows: &[usize], l1: f64) -> f64 {
        let ce = self.accumulate(params, x, y, rows, None) / rows.len().max(1) as f64;
        let penalty: f64 = self.weight_ranges().into_iter().flat_map(|r| params[r].iter()).map(|v| v.abs()).sum();
        ce + l1 * penalty
    }

    fn accumulate(&self, params: &[f64], x: &Matrix, y: &[usize], rows: &[usize], mut grad: Option<&mut Vec<f64>>) -> f64 {
        let d = self.inputs;
        let m = self.outputs;
        let width = self.first_width();
        let mut pre = vec![0.0; width];
        let mut z = vec![0.0; m];
        let mut r = vec![0.0; m];
        let mut total = 0.0;
        for &i in rows {
            let row = x.row(i);
            self.logits(params, row, &mut pre, &mut z);
            if m == 1 {
                let t = if y[i] == 1 { 1.0 } else { 0.0 };
                total += softplus(z[0]) - t * z[0];
                r[0] = sigmoid(z[0]) - t;
            } else {
                let mx = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut s = 0.0;
                for (rc, &zc) in r.iter_mut().zip(&z) {
                    *rc = libm::exp(zc - mx);
                    s += *rc;
                }
                total += mx + libm::log(s) - z[y[i]];
                r.iter_mut().for_each(|v| *v /= s);
                r[y[i]] -= 1.0;
            }
            let Some(g) = grad.as_deref_mut() else { continue };
            match self.hidden {
                Some(h) => {
                    let (gw1, rest) = g.split_at_mut(h * d);
                    let (gb1, rest) = rest.split_at_mut(h);
                    let (gw2, gb2) = rest.split_at_mut(m * h);
                    let w2 = &params[h * d + h..h * d + h + m * h];
                    for c in 0..m {
                        gb2[c] += r[c];
                        for j in 0..h {
                            gw2[c * h + j] += r[c] * pre[j].max(0.0);
                        }
                    }
                    for j in 0..h {
                        if pre[j] <= 0.0 {
                            continue;
                        }
                        let dh: f64 = (0..m).map(|c| w2[c * h + j] * r[c]).sum();
                        gb1[j] += dh;
                        for (gw, &xv) in gw1[j * d..(j + 1) * d].iter_mut().zip(row) {
                            *gw += dh * xv;
                        }
                    }
                }
                None => {
                    let (gw, gb) = g.split_at_mut(m * d);
                    for c in 0..m {
                        gb[c] += r[c];
                        for (gv, &xv) in gw[c * d..(c + 1) * d].iter_mut().zip(row) {
                            *gv += r[c] * xv;
                        }
                    }
                }
            }
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MlpModel {
    pub standardizer: Standardizer,
    pub shape: MlpShape,
    pub params: Vec<f64>,
    pub classes: usize,
    /// Epoch whose weights were restored.
    pub best_epoch: usize,
    pub epochs_run: usize,
    /// Mean training loss per epoch (over its minibatches, before each update).
    pub epoch_losses: Vec<f64>,
}

impl MlpModel {
    pub fn predict(&self, x: &Matrix) -> Vec<usize> {
        let z = self.standardizer.transform(x);
        predict_standardized(&self.shape, &self.params, &z)
    }

    /// Largest absolute first-layer weight attached to each input.
    pub fn input_importance(&self) -> Vec<f64> {
        let d = self.shape.inputs;
        let width = self.shape.first_width();
        (0..d)
            .map(|j| (0..width).map(|u| self.params[u * d + j].abs()).fold(0.0, f64::max))
            .collect()
    }
}

fn predict_standardized(shape: &MlpShape, params: &[f64], z: &Matrix) -> Vec<usize> {
    let mut pre = vec![0.0; shape.first_width()];
    let mut out = vec![0.0; shape.outputs];
    (0..z.rows())
        .map(|i| {
            shape.logits(params, z.row(i), &mut pre, &mut out);
            if shape.outputs == 1 { usize::from(out[0] > 0.0) } else { argmax(&out) }
        })
        .collect()
}

pub(crate) struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub(crate) fn new(n: usize, lr: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self { lr, beta1, beta2, epsilon, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub(crate) fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - libm::pow(self.beta1, f64::from(self.t));
        let c2 = 1.0 - libm::pow(self.beta2, f64::from(self.t));
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / (libm::sqrt(*v / c2) + self.epsilon);
        }
    }
}

/// Trains the network; the returned model carries the weights of the epoch
/// with the best validation accuracy (earliest on ties).
pub fn fit_mlp(train: &Dataset, val: &Dataset, cfg: &MlpConfig, seed: u64) -> Result<MlpModel> {
    check_splits(train, val)?;
    check_xy(&train.x, &train.y, train.k)?;
    if cfg.batch_size == 0 || cfg.max_epochs == 0 || cfg.hidden == Some(0) {
        return Err(Error::config("batch size, epochs and hidden width must be positive"));
    }
    let sd = Standardizer::fit(&train.x);
    let z = sd.transform(&train.x);
    let zv = sd.transform(&val.x);
    let shape = MlpShape::new(z.cols(), cfg.hidden, train.k);
    let mut rng = rng::rng(seed);
    let mut params = shape.init(&mut rng);
    let mut adam = Adam::new(params.len(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mut best = (accuracy(&predict_standardized(&shape, &params, &zv), &val.y), params.clone(), 0usize);
    let mut since_best = 0;
    let mut epoch_losses = Vec::new();
    let mut epochs_run = 0;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grad) = shape.loss_and_grad(&params, &z, &train.y, batch, cfg.l1);
            if !loss.is_finite() {
                return Err(Error::NonFinite { what: "network training".into(), epoch });
            }
            epoch_loss += loss * batch.len() as f64;
            adam.step(&mut params, &grad);
        }
        epoch_losses.push(epoch_loss / train.len() as f64);
        epochs_run = epoch;
        let acc = accuracy(&predict_standardized(&shape, &params, &zv), &val.y);
        if acc > best.0 {
            best = (acc, params.clone(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    Ok(MlpModel {
        standardizer: sd,
        shape,
        params: best.1,
        classes: train.k,
        best_epoch: best.2,
        epochs_run,
        epoch_losses,
    })
}

pub fn train_mlp_probe(train: &Dataset, val: &Dataset, cfg: &MlpConfig, seed: u64) -> Result<TrainedProbe> {
    let model = fit_mlp(train, val, cfg, seed)?;
    let spec = ProbeSpec { family: Family::Mlp, hyperparameters: Hyperparameters::Mlp(*cfg), seed };
    Ok(TrainedProbe::new(spec, ProbeModel::Mlp(model), None, val))
}
