//! Synthetic fixture: a latent-variable task with known concept structure,
//! a small ReLU network trained on it and the activation pack it produces.
//!
//! Inputs are a fixed linear mix of Gaussian latents plus noise. Low-level
//! concepts threshold linear functions of the latents, high-level concepts
//! are boolean formulas over low-level ones, and one high-level concept is
//! the task the network learns. A distractor concept is drawn from an extra
//! latent that never reaches the inputs.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::data::{make_split, ActivationPack, ConceptTable, LayerSlab};
use crate::error::{Error, Result};
use crate::logistic::{sigmoid, softplus};
use crate::matrix::Matrix;
use crate::probes::mlp::Adam;
use crate::regularity::regularity;
use crate::rng::{self, stream};

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Formula {
    /// Index of a low-level concept.
    Var(usize),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
}

impl Formula {
    pub fn eval(&self, low: &[bool]) -> bool {
        match self {
            Self::Var(i) => low[*i],
            Self::Not(f) => !f.eval(low),
            Self::And(fs) => fs.iter().all(|f| f.eval(low)),
            Self::Or(fs) => fs.iter().any(|f| f.eval(low)),
        }
    }

    pub fn render(&self, names: &[String]) -> String {
        let join = |fs: &[Formula], op: &str| {
            let parts: Vec<String> = fs.iter().map(|f| f.render(names)).collect();
            format!("({})", parts.join(op))
        };
        match self {
            Self::Var(i) => names[*i].clone(),
            Self::Not(f) => format!("!{}", f.render(names)),
            Self::And(fs) => join(fs, " & "),
            Self::Or(fs) => join(fs, " | "),
        }
    }

    fn max_var(&self) -> Option<usize> {
        match self {
            Self::Var(i) => Some(*i),
            Self::Not(f) => f.max_var(),
            Self::And(fs) | Self::Or(fs) => fs.iter().filter_map(Formula::max_var).max(),
        }
    }
}

/// `[w · z > threshold]` over the latent vector.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LowLevelConcept {
    pub name: String,
    pub weights: Vec<f64>,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HighLevelConcept {
    pub name: String,
    pub formula: Formula,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SyntheticTask {
    pub latent_dim: usize,
    pub input_dim: usize,
    /// `input_dim × latent_dim`.
    pub mixing: Matrix,
    pub noise_std: f64,
    pub low_level: Vec<LowLevelConcept>,
    pub high_level: Vec<HighLevelConcept>,
    /// Index into `high_level` of the label the network is trained on.
    pub task: usize,
    pub distractor: String,
    pub seed: u64,
}

impl SyntheticTask {
    /// Eight latents mixed into sixteen inputs; four low-level concepts,
    /// two conjunctions, their disjunction as the task, and a distractor.
    pub fn standard(seed: u64) -> Self {
        let (latent_dim, input_dim) = (8, 16);
        let mut r = rng::rng(rng::derive(seed, stream::SYNTH));
        let scale = 1.0 / libm::sqrt(latent_dim as f64);
        let mix: Vec<f64> = (0..input_dim * latent_dim)
            .map(|_| {
                let v: f64 = StandardNormal.sample(&mut r);
                v * scale
            })
            .collect();
        let mixing = Matrix::new(input_dim, latent_dim, mix).expect("shape");
        let low_level = (0..4)
            .map(|i| {
                let mut weights = vec![0.0; latent_dim];
                weights[2 * i] = 1.0;
                weights[2 * i + 1] = 0.5;
                LowLevelConcept { name: format!("g{}", i + 1), weights, threshold: 0.0 }
            })
            .collect();
        let and = |a, b| Formula::And(vec![Formula::Var(a), Formula::Var(b)]);
        let high_level = vec![
            HighLevelConcept { name: "h1".into(), formula: and(0, 1) },
            HighLevelConcept { name: "h2".into(), formula: and(2, 3) },
            HighLevelConcept { name: "task".into(), formula: Formula::Or(vec![and(0, 1), and(2, 3)]) },
        ];
        Self {
            latent_dim,
            input_dim,
            mixing,
            noise_std: 0.01,
            low_level,
            high_level,
            task: 2,
            distractor: "distractor".into(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mixing.rows() != self.input_dim || self.mixing.cols() != self.latent_dim {
            return Err(Error::config("mixing matrix must be input_dim × latent_dim"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::config("noise_std must be finite and non-negative"));
        }
        if self.low_level.iter().any(|c| c.weights.len() != self.latent_dim) {
            return Err(Error::config("low-level concept weights must match latent_dim"));
        }
        if self.task >= self.high_level.len() {
            return Err(Error::config("task index out of range"));
        }
        if self.high_level.iter().any(|h| h.formula.max_var().is_some_and(|v| v >= self.low_level.len())) {
            return Err(Error::config("formula refers to an unknown low-level concept"));
        }
        let mut names = self.concept_names();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.low_level.len() + self.high_level.len() + 1 {
            return Err(Error::config("concept names must be unique"));
        }
        Ok(())
    }

    /// Low-level, then high-level, then the distractor.
    pub fn concept_names(&self) -> Vec<String> {
        let mut v: Vec<String> = self.low_level.iter().map(|c| c.name.clone()).collect();
        v.extend(self.high_level.iter().map(|c| c.name.clone()));
        v.push(self.distractor.clone());
        v
    }

    pub fn task_name(&self) -> &str {
        &self.high_level[self.task].name
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub inputs: Matrix,
    pub concepts: ConceptTable,
    pub task_labels: Vec<usize>,
}

pub fn sample_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("s{i:06}")).collect()
}

/// Draws `n` samples; the same `(task, n, seed)` always gives the same data.
pub fn generate_dataset(task: &SyntheticTask, n: usize, seed: u64) -> Result<SyntheticData> {
    task.validate()?;
    if n == 0 {
        return Err(Error::config("cannot generate an empty dataset"));
    }
    let mut r = rng::rng(rng::derive(seed, stream::SYNTH));
    let noise = Normal::new(0.0, task.noise_std).map_err(|_| Error::config("invalid noise_std"))?;
    let n_concepts = task.low_level.len() + task.high_level.len() + 1;
    let mut columns = vec![Vec::with_capacity(n); n_concepts];
    let mut inputs = Matrix::zeros(n, task.input_dim);
    let mut z = vec![0.0; task.latent_dim];
    for i in 0..n {
        for v in &mut z {
            *v = StandardNormal.sample(&mut r);
        }
        let hidden: f64 = StandardNormal.sample(&mut r);
        let row = inputs.row_mut(i);
        for (d, x) in row.iter_mut().enumerate() {
            *x = crate::matrix::dot(task.mixing.row(d), &z) + noise.sample(&mut r);
        }
        let low: Vec<bool> = task.low_level.iter().map(|c| crate::matrix::dot(&c.weights, &z) > c.threshold).collect();
        for (j, &b) in low.iter().enumerate() {
            columns[j].push(u32::from(b));
        }
        for (j, h) in task.high_level.iter().enumerate() {
            columns[task.low_level.len() + j].push(u32::from(h.formula.eval(&low)));
        }
        columns[n_concepts - 1].push(u32::from(hidden > 0.0));
    }
    let task_labels = columns[task.low_level.len() + task.task].iter().map(|&v| v as usize).collect();
    let concepts = ConceptTable::from_columns(task.concept_names(), sample_ids(n), &columns)?;
    Ok(SyntheticData { inputs, concepts, task_labels })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReferenceNetConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Training stops once validation accuracy reaches this value.
    pub stop_accuracy: f64,
    pub max_epochs: usize,
    pub val_fraction: f64,
}

impl Default for ReferenceNetConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 48, 32, 16, 8],
            learning_rate: 3e-3,
            batch_size: 32,
            stop_accuracy: 0.96,
            max_epochs: 500,
            val_fraction: 0.2,
        }
    }
}

/// Fully connected ReLU network with a single logit output.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReferenceNet {
    /// Input width, hidden widths, then 1.
    pub widths: Vec<usize>,
    pub params: Vec<f64>,
    pub epochs_run: usize,
    pub val_accuracy: f64,
    /// Validation accuracy after each epoch.
    pub history: Vec<f64>,
}

impl ReferenceNet {
    fn offsets(widths: &[usize]) -> Vec<usize> {
        let mut off = vec![0];
        for w in widths.windows(2) {
            let last = *off.last().expect("nonempty");
            off.push(last + w[0] * w[1] + w[1]);
        }
        off
    }

    fn init(widths: &[usize], seed: u64) -> Self {
        let off = Self::offsets(widths);
        let mut params = vec![0.0; *off.last().expect("nonempty")];
        let mut r = rng::rng(seed);
        for (l, w) in widths.windows(2).enumerate() {
            let he = Normal::new(0.0, libm::sqrt(2.0 / w[0] as f64)).expect("finite std");
            for v in &mut params[off[l]..off[l] + w[0] * w[1]] {
                *v = he.sample(&mut r);
            }
        }
        Self { widths: widths.to_vec(), params, epochs_run: 0, val_accuracy: 0.0, history: Vec::new() }
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    /// Activations of every layer after the input: post-ReLU hidden units,
    /// then the raw output logit.
    pub fn forward(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let off = Self::offsets(&self.widths);
        let last = self.num_layers() - 1;
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.num_layers());
        for (l, w) in self.widths.windows(2).enumerate() {
            let input = if l == 0 { x } else { &acts[l - 1] };
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[off[l]..off[l] + n_in * n_out];
            let bias = &self.params[off[l] + n_in * n_out..off[l + 1]];
            let out: Vec<f64> = (0..n_out)
                .map(|o| {
                    let v = crate::matrix::dot(&weights[o * n_in..(o + 1) * n_in], input) + bias[o];
                    if l == last {
                        v
                    } else {
                        v.max(0.0)
                    }
                })
                .collect();
            acts.push(out);
        }
        acts
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        self.forward(x).last().expect("at least one layer")[0]
    }

    pub fn predict(&self, x: &Matrix) -> Vec<usize> {
        (0..x.rows()).map(|i| usize::from(self.logit(x.row(i)) > 0.0)).collect()
    }

    /// Mean binary cross-entropy over `rows` and its gradient.
    pub fn loss_and_grad(&self, x: &Matrix, y: &[usize], rows: &[usize]) -> (f64, Vec<f64>) {
        let off = Self::offsets(&self.widths);
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let n_layers = self.num_layers();
        for &i in rows {
            let input = x.row(i);
            let acts = self.forward(input);
            let o = acts[n_layers - 1][0];
            let t = y[i] as f64;
            loss += softplus(o) - t * o;
            let mut delta = vec![sigmoid(o) - t];
            for l in (0..n_layers).rev() {
                let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
                let prev: &[f64] = if l == 0 { input } else { &acts[l - 1] };
                let w_start = off[l];
                for o in 0..n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    let g = &mut grad[w_start + o * n_in..w_start + (o + 1) * n_in];
                    for (gv, p) in g.iter_mut().zip(prev) {
                        *gv += d * p;
                    }
                    grad[w_start + n_in * n_out + o] += d;
                }
                if l > 0 {
                    let weights = &self.params[w_start..w_start + n_in * n_out];
                    let mut back = vec![0.0; n_in];
                    for (o, &d) in delta.iter().enumerate() {
                        if d != 0.0 {
                            for (b, w) in back.iter_mut().zip(&weights[o * n_in..(o + 1) * n_in]) {
                                *b += d * w;
                            }
                        }
                    }
                    for (b, a) in back.iter_mut().zip(prev) {
                        if *a <= 0.0 {
                            *b = 0.0;
                        }
                    }
                    delta = back;
                }
            }
        }
        let scale = 1.0 / rows.len().max(1) as f64;
        for g in &mut grad {
            *g *= scale;
        }
        (loss * scale, grad)
    }

    pub fn accuracy(&self, x: &Matrix, y: &[usize]) -> f64 {
        crate::logistic::accuracy(&self.predict(x), y)
    }
}

/// Trains on a random split of `(x, y)` until the held-out part reaches
/// `stop_accuracy` or `max_epochs` pass.
pub fn train_reference(x: &Matrix, y: &[usize], cfg: &ReferenceNetConfig, seed: u64) -> Result<ReferenceNet> {
    if cfg.hidden.len() < 2 || cfg.hidden.contains(&0) {
        return Err(Error::config("the reference network needs at least two nonempty hidden layers"));
    }
    if cfg.batch_size == 0 || cfg.max_epochs == 0 || !(cfg.val_fraction > 0.0 && cfg.val_fraction < 1.0) {
        return Err(Error::config("invalid reference network training settings"));
    }
    if x.rows() != y.len() || x.rows() < 10 || y.iter().any(|&v| v > 1) {
        return Err(Error::data("reference network needs at least 10 binary-labelled rows"));
    }
    let mut widths = vec![x.cols()];
    widths.extend_from_slice(&cfg.hidden);
    widths.push(1);
    let mut net = ReferenceNet::init(&widths, rng::derive(seed, stream::NET));
    let mut r = rng::rng(rng::derive(seed, stream::SPLIT));
    let mut order: Vec<usize> = (0..x.rows()).collect();
    order.shuffle(&mut r);
    let n_val = (libm::round(cfg.val_fraction * x.rows() as f64) as usize).max(1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let x_val = x.select_rows(val_idx);
    let y_val: Vec<usize> = val_idx.iter().map(|&i| y[i]).collect();
    let mut train_idx = train_idx.to_vec();

    let mut adam = Adam::new(net.params.len(), cfg.learning_rate, 0.9, 0.999, 1e-8);
    for epoch in 1..=cfg.max_epochs {
        train_idx.shuffle(&mut r);
        for batch in train_idx.chunks(cfg.batch_size) {
            let (loss, grad) = net.loss_and_grad(x, y, batch);
            if !loss.is_finite() {
                return Err(Error::NonFinite { what: "reference network loss".into(), epoch });
            }
            adam.step(&mut net.params, &grad);
        }
        net.epochs_run = epoch;
        net.val_accuracy = net.accuracy(&x_val, &y_val);
        net.history.push(net.val_accuracy);
        if net.val_accuracy >= cfg.stop_accuracy {
            break;
        }
    }
    Ok(net)
}

/// Runs `inputs` through the network and stores every layer's activations.
pub fn export_pack(net: &ReferenceNet, inputs: &Matrix, sample_ids: Vec<String>, model_name: &str) -> Result<ActivationPack> {
    if inputs.cols() != net.widths[0] {
        return Err(Error::data("input width does not match the network"));
    }
    let n = inputs.rows();
    let mut slabs: Vec<Vec<f32>> = net.widths[1..].iter().map(|&w| Vec::with_capacity(n * w)).collect();
    for i in 0..n {
        for (slab, act) in slabs.iter_mut().zip(net.forward(inputs.row(i))) {
            slab.extend(act.iter().map(|&v| v as f32));
        }
    }
    let last = net.num_layers() - 1;
    let layers = slabs
        .into_iter()
        .enumerate()
        .map(|(l, data)| {
            let name = if l == last { String::from("logit") } else { format!("dense_{}", l + 1) };
            LayerSlab::new(l, name, n, net.widths[l + 1], data)
        })
        .collect::<Result<Vec<_>>>()?;
    ActivationPack::new(model_name, layers, sample_ids)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FixtureConfig {
    /// Samples used to train the network.
    pub n_train: usize,
    /// Fresh samples used to measure the network's task accuracy.
    pub n_test: usize,
    /// Samples forming the activation pack.
    pub n_probe: usize,
    pub net: ReferenceNetConfig,
    pub min_test_accuracy: f64,
    /// Required regularity of the task label at the last hidden layer.
    pub min_task_regularity: f64,
    /// Allowed distractor regularity above chance at any layer.
    pub distractor_margin: f64,
    pub max_attempts: usize,
    pub max_samples: usize,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            n_train: 4000,
            n_test: 1000,
            n_probe: 4000,
            net: ReferenceNetConfig::default(),
            min_test_accuracy: 0.95,
            min_task_regularity: 0.9,
            distractor_margin: 0.1,
            max_attempts: 5,
            max_samples: crate::data::DEFAULT_MAX_SAMPLES,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GateReport {
    pub attempt: usize,
    pub test_accuracy: f64,
    pub task_regularity: f64,
    pub distractor_regularity: Vec<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub task: SyntheticTask,
    pub net: ReferenceNet,
    pub pack: ActivationPack,
    pub concepts: ConceptTable,
    /// One entry per attempt, the accepted one last.
    pub gates: Vec<GateReport>,
}

fn gate(
    task: &SyntheticTask,
    net: &ReferenceNet,
    pack: &ActivationPack,
    concepts: &ConceptTable,
    test: &SyntheticData,
    cfg: &FixtureConfig,
    attempt: usize,
    seed: u64,
) -> Result<GateReport> {
    let test_accuracy = net.accuracy(&test.inputs, &test.task_labels);
    let r_at = |concept: &str, layer: usize| -> Result<f64> {
        let j = concepts.concept_index(concept)?;
        let split = make_split(concepts, concept, cfg.max_samples, seed)?;
        let pool = split.pool();
        let all = concepts.column(j);
        let y: Vec<usize> = pool.iter().map(|&i| all[i]).collect();
        Ok(regularity(&pack.layer(layer).select_rows(&pool), &y, concepts.cardinality(j), seed)?.r_accuracy)
    };
    let last_hidden = pack.num_layers() - 2;
    let task_regularity = r_at(task.task_name(), last_hidden)?;
    let distractor_regularity = (0..pack.num_layers()).map(|l| r_at(&task.distractor, l)).collect::<Result<Vec<_>>>()?;
    let chance = 1.0 / concepts.cardinality(concepts.concept_index(&task.distractor)?) as f64;
    let passed = test_accuracy >= cfg.min_test_accuracy
        && task_regularity >= cfg.min_task_regularity
        && distractor_regularity.iter().all(|&r| r <= chance + cfg.distractor_margin);
    Ok(GateReport { attempt, test_accuracy, task_regularity, distractor_regularity, passed })
}

/// Generates data, trains the network and exports the pack, retrying with
/// fresh seeds until the quality gate passes.
pub fn build_fixture(task: &SyntheticTask, cfg: &FixtureConfig, seed: u64, model_name: &str) -> Result<Fixture> {
    task.validate()?;
    if cfg.max_attempts == 0 {
        return Err(Error::config("max_attempts must be positive"));
    }
    let mut gates = Vec::new();
    for attempt in 0..cfg.max_attempts {
        let s = rng::derive(rng::derive(seed, stream::SYNTH), attempt as u64);
        let train = generate_dataset(task, cfg.n_train, rng::derive(s, 0))?;
        let test = generate_dataset(task, cfg.n_test, rng::derive(s, 1))?;
        let probe = generate_dataset(task, cfg.n_probe, rng::derive(s, 2))?;
        let net = train_reference(&train.inputs, &train.task_labels, &cfg.net, rng::derive(s, 3))?;
        let pack = export_pack(&net, &probe.inputs, sample_ids(cfg.n_probe), model_name)?;
        let report = gate(task, &net, &pack, &probe.concepts, &test, cfg, attempt, seed)?;
        let passed = report.passed;
        gates.push(report);
        if passed {
            return Ok(Fixture { task: task.clone(), net, pack, concepts: probe.concepts, gates });
        }
    }
    let last = gates.last().expect("at least one attempt");
    Err(Error::FixtureRejected(format!(
        "{} attempts failed the quality gate (last: test accuracy {:.3}, task regularity {:.3}, max distractor regularity {:.3})",
        gates.len(),
        last.test_accuracy,
        last.task_regularity,
        last.distractor_regularity.iter().copied().fold(0.0, f64::max)
    )))
}
