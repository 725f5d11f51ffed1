//! Comparison of layer selection against exhaustive per-layer probing and
//! the backward input-reduce baseline.
//!
//! All three methods share one split per concept and one zoo seed per layer,
//! so the probe trained on the selected layer is the same probe the
//! exhaustive run trains there.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::{make_split, ActivationPack, ConceptTable, SplitPlan};
use crate::error::{Error, Result};
use crate::exec::{Clock, Executor};
use crate::matrix::Matrix;
use crate::probes::mapping::{input_reduce, probe_from_reduction, Reduction};
use crate::probes::zoo::{family_seed, run_zoo, ZooConfig, ZooResult};
use crate::probes::{Dataset, Family, TrainedProbe};
use crate::rng::{self, stream};
use crate::selection::{
    characterize_layers, select_layer, sweep_from_stats, CharacterizationCurve, CharacterizeConfig, DEFAULT_LAMBDA,
};

/// Half-width of the band around chance accuracy inside which a layer is
/// treated as contributing nothing during input reduction.
pub const CHANCE_BAND: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalConfig {
    pub characterize: CharacterizeConfig,
    pub zoo: ZooConfig,
    pub lambda: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { characterize: CharacterizeConfig::default(), zoo: ZooConfig::default(), lambda: DEFAULT_LAMBDA }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::config("lambda must lie in [0, 1]"));
        }
        if self.zoo.families.is_empty() {
            return Err(Error::config("the probe zoo needs at least one family"));
        }
        self.characterize.mi.validate()
    }
}

/// Seed for the probe zoo trained on one layer.
pub fn layer_seed(seed: u64, layer: usize) -> u64 {
    rng::derive(rng::derive(seed, stream::LAYER), layer as u64)
}

/// Train, validation and test data for one concept on one layer.
#[derive(Debug, Clone)]
pub struct LayerData {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Split plus labels for one concept; the split is shared by every method.
#[derive(Debug, Clone)]
pub struct ConceptSplit {
    pub concept: String,
    pub k: usize,
    pub plan: SplitPlan,
    labels: Vec<usize>,
}

impl ConceptSplit {
    pub fn new(table: &ConceptTable, concept: &str, max_samples: usize, seed: u64) -> Result<Self> {
        let j = table.concept_index(concept)?;
        let plan = make_split(table, concept, max_samples, seed)?;
        if plan.test.is_empty() {
            return Err(Error::data(format!(
                "concept `{concept}` leaves no samples for a balanced test set"
            )));
        }
        Ok(Self { concept: concept.into(), k: table.cardinality(j), plan, labels: table.column(j) })
    }

    fn dataset(&self, x: Matrix, idx: &[usize]) -> Result<Dataset> {
        Dataset::new(x, idx.iter().map(|&i| self.labels[i]).collect(), self.k)
    }

    pub fn layer_data(&self, pack: &ActivationPack, layer: usize) -> Result<LayerData> {
        let slab = pack.layer(layer);
        Ok(LayerData {
            train: self.dataset(slab.select_rows(&self.plan.train), &self.plan.train)?,
            val: self.dataset(slab.select_rows(&self.plan.val), &self.plan.val)?,
            test: self.dataset(slab.select_rows(&self.plan.test), &self.plan.test)?,
        })
    }

    /// Columns `features` of each `(layer, features)` pair, concatenated.
    pub fn pooled_data(&self, pack: &ActivationPack, parts: &[(usize, Vec<usize>)]) -> Result<LayerData> {
        let gather = |idx: &[usize]| -> Result<Matrix> {
            let parts: Vec<Matrix> =
                parts.iter().map(|(l, f)| pack.layer(*l).select_rows(idx).select_cols(f)).collect();
            Matrix::hstack(&parts.iter().collect::<Vec<_>>())
        };
        Ok(LayerData {
            train: self.dataset(gather(&self.plan.train)?, &self.plan.train)?,
            val: self.dataset(gather(&self.plan.val)?, &self.plan.val)?,
            test: self.dataset(gather(&self.plan.test)?, &self.plan.test)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub curve: CharacterizationCurve,
    pub selected_layer: usize,
    pub zoo: ZooResult,
    pub test_accuracy: f64,
    pub runtime_seconds: f64,
}

/// Characterize, select one layer, run the zoo there.
pub fn eval_our_method<E: Executor, C: Clock>(
    pack: &ActivationPack,
    table: &ConceptTable,
    concept: &str,
    cfg: &EvalConfig,
    seed: u64,
    exec: &E,
    clock: &C,
) -> Result<MethodOutcome> {
    cfg.validate()?;
    let start = clock.seconds();
    let split = ConceptSplit::new(table, concept, cfg.characterize.max_samples, seed)?;
    let (_, stats) = characterize_layers(pack, table, concept, &cfg.characterize, seed, exec)?;
    let curve = CharacterizationCurve::from_stats(concept, &stats, cfg.lambda)?;
    let selected_layer = select_layer(&curve)?;
    let data = split.layer_data(pack, selected_layer)?;
    let zoo = run_zoo(&data.train, &data.val, &data.test, layer_seed(seed, selected_layer), &cfg.zoo, clock)?;
    let test_accuracy = zoo.best_test_accuracy();
    Ok(MethodOutcome { curve, selected_layer, zoo, test_accuracy, runtime_seconds: clock.seconds() - start })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LayerProbeResult {
    pub layer_index: usize,
    pub family: Family,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllLayersOutcome {
    pub layers: Vec<LayerProbeResult>,
    /// Mean test accuracy over layers.
    pub layers_avg_accuracy: f64,
    /// Layer with the best validation accuracy (earliest on ties) and its test accuracy.
    pub best_validation_layer: usize,
    pub best_validation_accuracy: f64,
    /// Layer with the best test accuracy (earliest on ties).
    pub oracle_layer: usize,
    pub oracle_accuracy: f64,
    pub runtime_seconds: f64,
}

/// Runs the zoo on every layer.
pub fn eval_all_layers<E: Executor, C: Clock>(
    pack: &ActivationPack,
    table: &ConceptTable,
    concept: &str,
    cfg: &EvalConfig,
    seed: u64,
    exec: &E,
    clock: &C,
) -> Result<AllLayersOutcome> {
    cfg.validate()?;
    table.check_pairing(pack)?;
    let start = clock.seconds();
    let split = ConceptSplit::new(table, concept, cfg.characterize.max_samples, seed)?;
    let layers = exec
        .map(pack.num_layers(), |l| {
            let data = split.layer_data(pack, l)?;
            let zoo = run_zoo(&data.train, &data.val, &data.test, layer_seed(seed, l), &cfg.zoo, clock)?;
            Ok(LayerProbeResult {
                layer_index: l,
                family: zoo.best_probe().family(),
                val_accuracy: zoo.best_val_accuracy(),
                test_accuracy: zoo.best_test_accuracy(),
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let val: Vec<f64> = layers.iter().map(|r| r.val_accuracy).collect();
    let test: Vec<f64> = layers.iter().map(|r| r.test_accuracy).collect();
    let bv = crate::matrix::argmax(&val);
    let or = crate::matrix::argmax(&test);
    Ok(AllLayersOutcome {
        layers_avg_accuracy: test.iter().sum::<f64>() / test.len() as f64,
        best_validation_layer: bv,
        best_validation_accuracy: test[bv],
        oracle_layer: or,
        oracle_accuracy: test[or],
        layers,
        runtime_seconds: clock.seconds() - start,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputReduceOutcome {
    /// Layers reduced, last layer first.
    pub visited: Vec<usize>,
    /// Surviving units of each contributing layer.
    pub pooled: Vec<(usize, Vec<usize>)>,
    pub probe: TrainedProbe,
    pub test_accuracy: f64,
    pub runtime_seconds: f64,
}

impl InputReduceOutcome {
    pub fn pooled_units(&self) -> usize {
        self.pooled.iter().map(|(_, f)| f.len()).sum()
    }
}

/// Walks backward from the last layer, reducing each layer's inputs with the
/// mapping network, and stops at the first layer whose reduced network is
/// within the chance band. Surviving units of the contributing layers are
/// pooled and a final mapping network is trained on them. If no layer
/// contributes, the last layer's reduced network is kept.
pub fn eval_input_reduce<C: Clock>(
    pack: &ActivationPack,
    table: &ConceptTable,
    concept: &str,
    cfg: &EvalConfig,
    seed: u64,
    clock: &C,
) -> Result<InputReduceOutcome> {
    cfg.validate()?;
    table.check_pairing(pack)?;
    let start = clock.seconds();
    let split = ConceptSplit::new(table, concept, cfg.characterize.max_samples, seed)?;
    let chance = 1.0 / split.k as f64;
    let mapping = &cfg.zoo.mapping;

    let mut visited = Vec::new();
    let mut contributing: Vec<(usize, Reduction, u64)> = Vec::new();
    let mut fallback: Option<(usize, Reduction, u64)> = None;
    for l in (0..pack.num_layers()).rev() {
        let data = split.layer_data(pack, l)?;
        let s = family_seed(layer_seed(seed, l), Family::Mapping);
        let r = input_reduce(&data.train, &data.val, mapping, s)?;
        visited.push(l);
        if r.val_accuracy <= chance + CHANCE_BAND {
            if fallback.is_none() && contributing.is_empty() {
                fallback = Some((l, r, s));
            }
            break;
        }
        contributing.push((l, r, s));
    }

    let (pooled, mut probe, test) = if contributing.len() > 1 {
        contributing.sort_by_key(|c| c.0);
        let pooled: Vec<(usize, Vec<usize>)> = contributing.iter().map(|(l, r, _)| (*l, r.features.clone())).collect();
        let data = split.pooled_data(pack, &pooled)?;
        let s = family_seed(layer_seed(seed, pack.num_layers()), Family::Mapping);
        let r = input_reduce(&data.train, &data.val, mapping, s)?;
        let probe = probe_from_reduction(r, mapping, s, &data.val);
        (pooled, probe, data.test)
    } else {
        let (l, r, s) = contributing.pop().or(fallback).ok_or_else(|| Error::data("pack has no layers"))?;
        let data = split.layer_data(pack, l)?;
        let pooled = alloc::vec![(l, r.features.clone())];
        (pooled, probe_from_reduction(r, mapping, s, &data.val), data.test)
    };
    let test_accuracy = probe.score_test(&test);
    Ok(InputReduceOutcome { visited, pooled, probe, test_accuracy, runtime_seconds: clock.seconds() - start })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Runtimes {
    pub method_seconds: f64,
    pub best_validation_seconds: f64,
    pub input_reduce_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AblationPoint {
    pub lambda: f64,
    pub selected_layer: usize,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConceptAblation {
    pub concept: String,
    pub points: Vec<AblationPoint>,
    /// Number of different layers selected across the grid.
    pub distinct_layers: usize,
}

/// Probe accuracy of the selected layer at every λ of `grid`. The zoo runs
/// once per distinct selected layer.
pub fn ablate_lambda<E: Executor, C: Clock>(
    pack: &ActivationPack,
    table: &ConceptTable,
    concept: &str,
    cfg: &EvalConfig,
    grid: &[f64],
    seed: u64,
    exec: &E,
    clock: &C,
) -> Result<ConceptAblation> {
    cfg.validate()?;
    if grid.is_empty() || grid.iter().any(|l| !(0.0..=1.0).contains(l)) {
        return Err(Error::config("lambda grid must be nonempty with values in [0, 1]"));
    }
    let split = ConceptSplit::new(table, concept, cfg.characterize.max_samples, seed)?;
    let (_, stats) = characterize_layers(pack, table, concept, &cfg.characterize, seed, exec)?;
    let sweep = sweep_from_stats(concept, &stats, grid)?;
    let mut layers: Vec<usize> = sweep.points.iter().map(|p| p.1).collect();
    layers.sort_unstable();
    layers.dedup();
    let accs = exec
        .map(layers.len(), |i| {
            let l = layers[i];
            let data = split.layer_data(pack, l)?;
            Ok(run_zoo(&data.train, &data.val, &data.test, layer_seed(seed, l), &cfg.zoo, clock)?.best_test_accuracy())
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    let points = sweep
        .points
        .iter()
        .map(|&(lambda, l)| {
            let i = layers.binary_search(&l).expect("layer was probed");
            AblationPoint { lambda, selected_layer: l, test_accuracy: accs[i] }
        })
        .collect();
    Ok(ConceptAblation { concept: concept.into(), points, distinct_layers: sweep.distinct_layers })
}

/// One concept's results across all methods.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvaluationRow {
    pub concept: String,
    pub k: usize,
    pub selected_layer: usize,
    pub method_family: Family,
    pub method_accuracy: f64,
    pub layers_avg_accuracy: f64,
    pub best_validation_layer: usize,
    pub best_validation_accuracy: f64,
    pub oracle_layer: usize,
    pub oracle_accuracy: f64,
    pub pct_oracle: f64,
    pub input_reduce_accuracy: f64,
    pub input_reduce_units: usize,
    pub per_layer: Vec<LayerProbeResult>,
    pub runtimes: Runtimes,
}

pub fn pct_of(method: f64, oracle: f64) -> f64 {
    if oracle > 0.0 {
        100.0 * method / oracle
    } else {
        100.0
    }
}

pub fn evaluate_concept<E: Executor, C: Clock>(
    pack: &ActivationPack,
    table: &ConceptTable,
    concept: &str,
    cfg: &EvalConfig,
    seed: u64,
    exec: &E,
    clock: &C,
) -> Result<EvaluationRow> {
    let method = eval_our_method(pack, table, concept, cfg, seed, exec, clock)?;
    let all = eval_all_layers(pack, table, concept, cfg, seed, exec, clock)?;
    let reduce = eval_input_reduce(pack, table, concept, cfg, seed, clock)?;
    Ok(EvaluationRow {
        concept: concept.into(),
        k: method.curve.layers.first().map_or(2, |l| l.k),
        selected_layer: method.selected_layer,
        method_family: method.zoo.best_probe().family(),
        method_accuracy: method.test_accuracy,
        layers_avg_accuracy: all.layers_avg_accuracy,
        best_validation_layer: all.best_validation_layer,
        best_validation_accuracy: all.best_validation_accuracy,
        oracle_layer: all.oracle_layer,
        oracle_accuracy: all.oracle_accuracy,
        pct_oracle: pct_of(method.test_accuracy, all.oracle_accuracy),
        input_reduce_accuracy: reduce.test_accuracy,
        input_reduce_units: reduce.pooled_units(),
        per_layer: all.layers,
        runtimes: Runtimes {
            method_seconds: method.runtime_seconds,
            best_validation_seconds: all.runtime_seconds,
            input_reduce_seconds: reduce.runtime_seconds,
        },
    })
}

/// Means over concepts.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReportAverages {
    pub method_accuracy: f64,
    pub layers_avg_accuracy: f64,
    pub best_validation_accuracy: f64,
    pub oracle_accuracy: f64,
    /// Mean of the per-concept percentages.
    pub pct_oracle: f64,
    pub input_reduce_accuracy: f64,
    pub runtimes: Runtimes,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvaluationReport {
    pub model_name: String,
    pub lambda: f64,
    pub seed: u64,
    pub rows: Vec<EvaluationRow>,
    pub average: ReportAverages,
}

pub fn build_report(model_name: &str, lambda: f64, seed: u64, rows: Vec<EvaluationRow>) -> Result<EvaluationReport> {
    if rows.is_empty() {
        return Err(Error::data("no concept could be evaluated"));
    }
    let n = rows.len() as f64;
    let mean = |f: &dyn Fn(&EvaluationRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let average = ReportAverages {
        method_accuracy: mean(&|r| r.method_accuracy),
        layers_avg_accuracy: mean(&|r| r.layers_avg_accuracy),
        best_validation_accuracy: mean(&|r| r.best_validation_accuracy),
        oracle_accuracy: mean(&|r| r.oracle_accuracy),
        pct_oracle: mean(&|r| r.pct_oracle),
        input_reduce_accuracy: mean(&|r| r.input_reduce_accuracy),
        runtimes: Runtimes {
            method_seconds: mean(&|r| r.runtimes.method_seconds),
            best_validation_seconds: mean(&|r| r.runtimes.best_validation_seconds),
            input_reduce_seconds: mean(&|r| r.runtimes.input_reduce_seconds),
        },
    };
    Ok(EvaluationReport { model_name: model_name.into(), lambda, seed, rows, average })
}

/// Evaluates each concept, collecting a warning instead of failing for
/// concepts that cannot be split or probed.
pub fn evaluate<E: Executor, C: Clock>(
    pack: &ActivationPack,
    table: &ConceptTable,
    concepts: &[String],
    cfg: &EvalConfig,
    seed: u64,
    exec: &E,
    clock: &C,
) -> Result<(EvaluationReport, Vec<String>)> {
    cfg.validate()?;
    table.check_pairing(pack)?;
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for c in concepts {
        table.concept_index(c)?;
        match evaluate_concept(pack, table, c, cfg, seed, exec, clock) {
            Ok(r) => rows.push(r),
            Err(e @ (Error::InvalidData(_) | Error::NonFinite { .. })) => warnings.push(format!("concept `{c}` skipped: {e}")),
            Err(e) => return Err(e),
        }
    }
    Ok((build_report(&pack.model_name, cfg.lambda, seed, rows)?, warnings))
}
