//! Histogram gradient-boosted trees on logistic / softmax loss with
//! leaf-wise growth and validation early stopping.

use alloc::vec;
use alloc::vec::Vec;

use super::{check_splits, Dataset, Family, Hyperparameters, ProbeModel, ProbeSpec, TrainedProbe};
use crate::error::{Error, Result};
use crate::logistic::{check_xy, sigmoid};
use crate::matrix::{argmax, Matrix, Standardizer};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GbdtConfig {
    pub learning_rate: f64,
    pub max_rounds: usize,
    pub max_leaves: usize,
    pub max_bins: usize,
    /// Rounds without validation-loss improvement before stopping.
    pub patience: usize,
    /// Overrides [`min_samples_leaf`] when set.
    pub min_samples_leaf: Option<usize>,
    pub min_sum_hessian: f64,
    pub lambda_l2: f64,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            max_rounds: 100,
            max_leaves: 31,
            max_bins: 64,
            patience: 10,
            min_samples_leaf: None,
            min_sum_hessian: 1e-3,
            lambda_l2: 0.0,
        }
    }
}

/// `min(20, ⌊n/10⌋)`, at least 1.
pub fn min_samples_leaf(n_train: usize) -> usize {
    (n_train / 10).min(20).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Node {
    /// Samples with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Split { feature, threshold, left, right } => {
                    i = if row[feature] <= threshold { left } else { right };
                }
                Node::Leaf { value } => return value,
            }
        }
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GbdtModel {
    pub standardizer: Standardizer,
    /// Initial raw score per output.
    pub init: Vec<f64>,
    /// `rounds × outputs` trees, row-major.
    pub trees: Vec<Tree>,
    pub outputs: usize,
    pub classes: usize,
}

impl GbdtModel {
    pub fn rounds(&self) -> usize {
        self.trees.len() / self.outputs
    }

    pub fn raw_scores(&self, x: &Matrix) -> Matrix {
        let z = self.standardizer.transform(x);
        let mut out = Matrix::zeros(z.rows(), self.outputs);
        for i in 0..z.rows() {
            let row = z.row(i);
            for c in 0..self.outputs {
                let mut s = self.init[c];
                for r in 0..self.rounds() {
                    s += self.trees[r * self.outputs + c].predict_row(row);
                }
                out.set(i, c, s);
            }
        }
        out
    }

    pub fn predict(&self, x: &Matrix) -> Vec<usize> {
        let s = self.raw_scores(x);
        (0..s.rows())
            .map(|i| if self.outputs == 1 { usize::from(s.get(i, 0) > 0.0) } else { argmax(s.row(i)) })
            .collect()
    }
}

/// Per-feature bin upper edges; bin `b` holds `(edge[b-1], edge[b]]`, the last
/// bin everything above the final edge.
fn bin_edges(col: &mut [f64], max_bins: usize) -> Vec<f64> {
    col.sort_by(f64::total_cmp);
    let mut uniq: Vec<f64> = col.to_vec();
    uniq.dedup();
    if uniq.len() <= max_bins {
        return uniq.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    }
    let n = col.len();
    let mut edges: Vec<f64> = (1..max_bins).map(|b| col[(b * n / max_bins).min(n - 1)]).collect();
    edges.dedup();
    if edges.last() == col.last() {
        edges.pop();
    }
    edges
}

#[derive(Debug, Clone, Copy)]
struct SplitCandidate {
    feature: usize,
    bin: usize,
    gain: f64,
}

struct Grower<'a> {
    bins: &'a [Vec<u8>],
    edges: &'a [Vec<f64>],
    grad: &'a [f64],
    hess: &'a [f64],
    min_leaf: usize,
    cfg: &'a GbdtConfig,
}

impl Grower<'_> {
    fn leaf_objective(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.cfg.lambda_l2)
    }

    fn best_split(&self, samples: &[usize]) -> Option<SplitCandidate> {
        let (g_tot, h_tot) = samples.iter().fold((0.0, 0.0), |(g, h), &i| (g + self.grad[i], h + self.hess[i]));
        let parent = self.leaf_objective(g_tot, h_tot);
        let n = samples.len();
        let mut best: Option<SplitCandidate> = None;
        for (f, fbins) in self.bins.iter().enumerate() {
            let nb = self.edges[f].len() + 1;
            if nb < 2 {
                continue;
            }
            let mut hg = vec![0.0; nb];
            let mut hh = vec![0.0; nb];
            let mut hc = vec![0usize; nb];
            for &i in samples {
                let b = fbins[i] as usize;
                hg[b] += self.grad[i];
                hh[b] += self.hess[i];
                hc[b] += 1;
            }
            let (mut gl, mut hl, mut nl) = (0.0, 0.0, 0usize);
            for b in 0..nb - 1 {
                gl += hg[b];
                hl += hh[b];
                nl += hc[b];
                let nr = n - nl;
                if nl < self.min_leaf {
                    continue;
                }
                if nr < self.min_leaf {
                    break;
                }
                let hr = h_tot - hl;
                if hl < self.cfg.min_sum_hessian || hr < self.cfg.min_sum_hessian {
                    continue;
                }
                let gain = self.leaf_objective(gl, hl) + self.leaf_objective(g_tot - gl, hr) - parent;
                if gain > 1e-12 && best.is_none_or(|bst| gain > bst.gain) {
                    best = Some(SplitCandidate { feature: f, bin: b, gain });
                }
            }
        }
        best
    }

    fn grow(&self, n: usize) -> Tree {
        struct Open {
            node: usize,
            samples: Vec<usize>,
            split: Option<SplitCandidate>,
        }
        let all: Vec<usize> = (0..n).collect();
        let mut nodes = vec![Node::Leaf { value: 0.0 }];
        let mut open = vec![Open { node: 0, split: self.best_split(&all), samples: all }];
        let mut leaves = 1;
        while leaves < self.cfg.max_leaves {
            let pick = open
                .iter()
                .enumerate()
                .filter_map(|(i, o)| o.split.map(|s| (i, s.gain)))
                .fold(None, |acc: Option<(usize, f64)>, (i, g)| match acc {
                    Some((_, bg)) if bg >= g => acc,
                    _ => Some((i, g)),
                });
            let Some((idx, _)) = pick else { break };
            let leaf = open.swap_remove(idx);
            let split = leaf.split.expect("picked leaf has a split");
            let fbins = &self.bins[split.feature];
            let (l, r): (Vec<usize>, Vec<usize>) =
                leaf.samples.iter().partition(|&&i| fbins[i] as usize <= split.bin);
            let (li, ri) = (nodes.len(), nodes.len() + 1);
            nodes.push(Node::Leaf { value: 0.0 });
            nodes.push(Node::Leaf { value: 0.0 });
            nodes[leaf.node] = Node::Split {
                feature: split.feature,
                threshold: self.edges[split.feature][split.bin],
                left: li,
                right: ri,
            };
            open.push(Open { node: li, split: self.best_split(&l), samples: l });
            open.push(Open { node: ri, split: self.best_split(&r), samples: r });
            leaves += 1;
        }
        for o in open {
            let (g, h) = o.samples.iter().fold((0.0, 0.0), |(g, h), &i| (g + self.grad[i], h + self.hess[i]));
            let value = -g / (h + self.cfg.lambda_l2).max(self.cfg.min_sum_hessian) * self.cfg.learning_rate;
            nodes[o.node] = Node::Leaf { value };
        }
        Tree { nodes }
    }
}

fn log_loss(scores: &[f64], y: &[usize], outputs: usize) -> f64 {
    let n = y.len();
    let mut loss = 0.0;
    for i in 0..n {
        let s = &scores[i * outputs..(i + 1) * outputs];
        if outputs == 1 {
            let z = s[0];
            loss += crate::logistic::softplus(z) - if y[i] == 1 { z } else { 0.0 };
        } else {
            let mx = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + libm::log(s.iter().map(|v| libm::exp(v - mx)).sum::<f64>());
            loss += lse - s[y[i]];
        }
    }
    loss / n.max(1) as f64
}

/// Fits a boosted ensemble truncated to its best validation round.
pub fn fit_gbdt(train: &Dataset, val: &Dataset, cfg: &GbdtConfig) -> Result<GbdtModel> {
    check_splits(train, val)?;
    check_xy(&train.x, &train.y, train.k)?;
    let n = train.len();
    if n < 20 {
        return Err(Error::data("gradient boosting needs at least 20 training samples"));
    }
    if cfg.max_bins < 2 || cfg.max_bins > 256 || cfg.max_leaves < 2 {
        return Err(Error::config("gbdt needs 2..=256 bins and at least 2 leaves"));
    }
    let k = train.k;
    let outputs = if k == 2 { 1 } else { k };
    let sd = Standardizer::fit(&train.x);
    let z = sd.transform(&train.x);
    let zv = sd.transform(&val.x);
    let d = z.cols();

    let edges: Vec<Vec<f64>> = (0..d).map(|j| bin_edges(&mut z.column(j), cfg.max_bins)).collect();
    let bins: Vec<Vec<u8>> = (0..d)
        .map(|j| (0..n).map(|i| edges[j].partition_point(|&e| e < z.get(i, j)) as u8).collect())
        .collect();

    let mut counts = vec![0usize; k];
    train.y.iter().for_each(|&c| counts[c] += 1);
    let init: Vec<f64> = if outputs == 1 {
        let p = counts[1] as f64 / n as f64;
        vec![libm::log(p / (1.0 - p))]
    } else {
        counts.iter().map(|&c| libm::log((c.max(1)) as f64 / n as f64)).collect()
    };

    let min_leaf = cfg.min_samples_leaf.unwrap_or_else(|| min_samples_leaf(n));
    let mut scores: Vec<f64> = (0..n).flat_map(|_| init.iter().copied()).collect();
    let mut val_scores: Vec<f64> = (0..val.len()).flat_map(|_| init.iter().copied()).collect();
    let mut trees: Vec<Tree> = Vec::new();
    let mut best = (log_loss(&val_scores, &val.y, outputs), 0usize);
    let hess_factor = if outputs == 1 { 1.0 } else { k as f64 / (k as f64 - 1.0) };
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut probs = vec![0.0; n * outputs];

    for round in 1..=cfg.max_rounds {
        for i in 0..n {
            let s = &scores[i * outputs..(i + 1) * outputs];
            let p = &mut probs[i * outputs..(i + 1) * outputs];
            if outputs == 1 {
                p[0] = sigmoid(s[0]);
            } else {
                let mx = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut tot = 0.0;
                for (pc, &sc) in p.iter_mut().zip(s) {
                    *pc = libm::exp(sc - mx);
                    tot += *pc;
                }
                p.iter_mut().for_each(|v| *v /= tot);
            }
        }
        for c in 0..outputs {
            let target = if outputs == 1 { 1 } else { c };
            for i in 0..n {
                let p = probs[i * outputs + c];
                grad[i] = p - if train.y[i] == target { 1.0 } else { 0.0 };
                hess[i] = (hess_factor * p * (1.0 - p)).max(1e-16);
            }
            let grower = Grower { bins: &bins, edges: &edges, grad: &grad, hess: &hess, min_leaf, cfg };
            let tree = grower.grow(n);
            for i in 0..n {
                scores[i * outputs + c] += tree.predict_row(z.row(i));
            }
            for i in 0..val.len() {
                val_scores[i * outputs + c] += tree.predict_row(zv.row(i));
            }
            trees.push(tree);
        }
        let loss = log_loss(&val_scores, &val.y, outputs);
        if !loss.is_finite() {
            return Err(Error::NonFinite { what: "gradient boosting".into(), epoch: round });
        }
        if loss < best.0 {
            best = (loss, round);
        } else if round - best.1 >= cfg.patience {
            break;
        }
    }
    trees.truncate(best.1 * outputs);
    Ok(GbdtModel { standardizer: sd, init, trees, outputs, classes: k })
}

pub fn train_gbdt_probe(train: &Dataset, val: &Dataset, cfg: &GbdtConfig, seed: u64) -> Result<TrainedProbe> {
    let model = fit_gbdt(train, val, cfg)?;
    let spec = ProbeSpec {
        family: Family::Gbdt,
        hyperparameters: Hyperparameters::Gbdt {
            config: *cfg,
            rounds: model.rounds(),
            min_samples_leaf: cfg.min_samples_leaf.unwrap_or_else(|| min_samples_leaf(train.len())),
        },
        seed,
    };
    Ok(TrainedProbe::new(spec, ProbeModel::Gbdt(model), None, val))
}
