//! Mapping network: an L1-regularized MLP probe followed by input reduction.
//!
//! Inputs are ranked by their largest absolute first-layer weight and the
//! network is retrained on the top half of the surviving inputs. A step fails
//! when validation accuracy drops below the best seen so far; three
//! consecutive failures end the search. The best-validation network (the
//! smallest input set on ties) is returned with its surviving input columns.

use alloc::vec::Vec;

use super::mlp::{fit_mlp, MlpConfig, MlpModel};
use super::{check_splits, Dataset, Family, Hyperparameters, ProbeModel, ProbeSpec, TrainedProbe};
use crate::error::Result;
use crate::logistic::accuracy;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MappingConfig {
    pub mlp: MlpConfig,
    /// Consecutive failing reduction steps tolerated.
    pub reduce_patience: usize,
}

impl Default for MappingConfig {
    fn default() -> Self {
        Self { mlp: MlpConfig { l1: 1e-3, ..MlpConfig::default() }, reduce_patience: 3 }
    }
}

/// Outcome of one input-reduction run.
#[derive(Debug, Clone, PartialEq)]
pub struct Reduction {
    pub model: MlpModel,
    pub features: Vec<usize>,
    pub val_accuracy: f64,
    /// `(number of inputs, validation accuracy)` for every network trained.
    pub trace: Vec<(usize, f64)>,
}

/// Input columns ordered by importance, most important first (stable on ties).
pub fn rank_inputs(model: &MlpModel) -> Vec<usize> {
    let imp = model.input_importance();
    let mut order: Vec<usize> = (0..imp.len()).collect();
    order.sort_by(|&a, &b| imp[b].total_cmp(&imp[a]).then(a.cmp(&b)));
    order
}

pub fn input_reduce(train: &Dataset, val: &Dataset, cfg: &MappingConfig, seed: u64) -> Result<Reduction> {
    check_splits(train, val)?;
    let fit = |features: &[usize]| -> Result<(MlpModel, f64)> {
        let model = fit_mlp(&train.select_features(features), &val.select_features(features), &cfg.mlp, seed)?;
        let acc = accuracy(&model.predict(&val.x.select_cols(features)), &val.y);
        Ok((model, acc))
    };

    let mut features: Vec<usize> = (0..train.x.cols()).collect();
    let (mut current, acc) = fit(&features)?;
    let mut trace = alloc::vec![(features.len(), acc)];
    let mut best = Reduction { model: current.clone(), features: features.clone(), val_accuracy: acc, trace: Vec::new() };
    let mut failures = 0;
    while features.len() > 1 && failures < cfg.reduce_patience {
        let ranked = rank_inputs(&current);
        let keep = features.len().div_ceil(2);
        let mut next: Vec<usize> = ranked[..keep].iter().map(|&i| features[i]).collect();
        next.sort_unstable();
        let (model, acc) = fit(&next)?;
        trace.push((next.len(), acc));
        if acc >= best.val_accuracy {
            best = Reduction { model: model.clone(), features: next.clone(), val_accuracy: acc, trace: Vec::new() };
            failures = 0;
        } else {
            failures += 1;
        }
        features = next;
        current = model;
    }
    best.trace = trace;
    Ok(best)
}

pub fn train_mapping_probe(train: &Dataset, val: &Dataset, cfg: &MappingConfig, seed: u64) -> Result<TrainedProbe> {
    let reduction = input_reduce(train, val, cfg, seed)?;
    Ok(probe_from_reduction(reduction, cfg, seed, val))
}

pub(crate) fn probe_from_reduction(r: Reduction, cfg: &MappingConfig, seed: u64, val: &Dataset) -> TrainedProbe {
    let spec = ProbeSpec { family: Family::Mapping, hyperparameters: Hyperparameters::Mapping(*cfg), seed };
    TrainedProbe::new(spec, ProbeModel::Mlp(r.model), Some(r.features), val)
}
