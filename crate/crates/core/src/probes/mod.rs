//! The probe zoo: five classifier families trained from one layer's
//! activations to a concept, selected among by validation accuracy.
//!
//! Training functions only ever see the training and validation sets; test
//! data enters through [`TrainedProbe::score_test`] after parameters are
//! frozen.

pub mod gbdt;
pub mod mapping;
pub mod mlp;
pub mod ridge;
pub mod zoo;

use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::logistic::{accuracy, fit_logistic_with, LogisticConfig, LogisticModel};
use crate::matrix::Matrix;

pub use gbdt::{GbdtConfig, GbdtModel};
pub use mapping::MappingConfig;
pub use mlp::{MlpConfig, MlpModel};
pub use ridge::{RidgeModel, RIDGE_ALPHAS};
pub use zoo::{run_zoo, ZooConfig, ZooResult};

/// Labelled samples for one split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<usize>,
    pub k: usize,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<usize>, k: usize) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::data("dataset rows and labels differ in length"));
        }
        if let Some(&c) = y.iter().find(|&&c| c >= k) {
            return Err(Error::data(alloc::format!("label {c} outside 0..{k}")));
        }
        Ok(Self { x, y, k })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn select_features(&self, idx: &[usize]) -> Self {
        Self { x: self.x.select_cols(idx), y: self.y.clone(), k: self.k }
    }
}

/// Probe families in tie-break order, simplest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Family {
    Logistic,
    Ridge,
    Gbdt,
    Mlp,
    Mapping,
}

impl Family {
    pub const ALL: [Family; 5] = [Family::Logistic, Family::Ridge, Family::Gbdt, Family::Mlp, Family::Mapping];

    pub fn name(self) -> &'static str {
        match self {
            Family::Logistic => "logistic",
            Family::Ridge => "ridge",
            Family::Gbdt => "gbdt",
            Family::Mlp => "mlp",
            Family::Mapping => "mapping",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == s)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Family-specific hyperparameters as used for the final model.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Hyperparameters {
    Logistic(LogisticConfig),
    Ridge { alpha: f64, grid: Vec<f64> },
    Gbdt { config: GbdtConfig, rounds: usize, min_samples_leaf: usize },
    Mlp(MlpConfig),
    Mapping(MappingConfig),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProbeSpec {
    pub family: Family,
    pub hyperparameters: Hyperparameters,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ProbeModel {
    Logistic(LogisticModel),
    Ridge(RidgeModel),
    Gbdt(GbdtModel),
    Mlp(MlpModel),
}

impl ProbeModel {
    pub fn predict(&self, x: &Matrix) -> Vec<usize> {
        match self {
            ProbeModel::Logistic(m) => m.predict(x),
            ProbeModel::Ridge(m) => m.predict(x),
            ProbeModel::Gbdt(m) => m.predict(x),
            ProbeModel::Mlp(m) => m.predict(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainedProbe {
    pub spec: ProbeSpec,
    pub model: ProbeModel,
    /// Input columns the model reads (mapping probes after input reduction).
    pub selected_features: Option<Vec<usize>>,
    pub val_accuracy: f64,
    pub test_accuracy: Option<f64>,
    pub train_time_seconds: f64,
}

impl TrainedProbe {
    pub(crate) fn new(spec: ProbeSpec, model: ProbeModel, selected_features: Option<Vec<usize>>, val: &Dataset) -> Self {
        let mut probe = Self { spec, model, selected_features, val_accuracy: 0.0, test_accuracy: None, train_time_seconds: 0.0 };
        probe.val_accuracy = probe.accuracy(val);
        probe
    }

    pub fn family(&self) -> Family {
        self.spec.family
    }

    /// Predicts from the full layer representation.
    pub fn predict(&self, x: &Matrix) -> Vec<usize> {
        match &self.selected_features {
            Some(idx) => self.model.predict(&x.select_cols(idx)),
            None => self.model.predict(x),
        }
    }

    pub fn accuracy(&self, data: &Dataset) -> f64 {
        accuracy(&self.predict(&data.x), &data.y)
    }

    /// Records test accuracy; the probe is not modified otherwise.
    pub fn score_test(&mut self, test: &Dataset) -> f64 {
        let acc = self.accuracy(test);
        self.test_accuracy = Some(acc);
        acc
    }
}

pub(crate) fn check_splits(train: &Dataset, val: &Dataset) -> Result<()> {
    if train.k != val.k || train.x.cols() != val.x.cols() {
        return Err(Error::data("training and validation sets disagree on shape"));
    }
    if val.is_empty() {
        return Err(Error::data("validation set is empty"));
    }
    Ok(())
}

pub fn train_logistic_probe(train: &Dataset, val: &Dataset, cfg: &LogisticConfig, seed: u64) -> Result<TrainedProbe> {
    check_splits(train, val)?;
    let model = fit_logistic_with(&train.x, &train.y, train.k, cfg)?;
    let spec = ProbeSpec { family: Family::Logistic, hyperparameters: Hyperparameters::Logistic(*cfg), seed };
    Ok(TrainedProbe::new(spec, ProbeModel::Logistic(model), None, val))
}

pub use mapping::train_mapping_probe;
pub use mlp::train_mlp_probe;
pub use ridge::train_ridge_probe;
pub use gbdt::train_gbdt_probe;

/// Trains one family with the zoo's configuration.
pub fn train_probe(family: Family, train: &Dataset, val: &Dataset, cfg: &ZooConfig, seed: u64) -> Result<TrainedProbe> {
    match family {
        Family::Logistic => train_logistic_probe(train, val, &cfg.logistic, seed),
        Family::Ridge => train_ridge_probe(train, val, &cfg.ridge_alphas, seed),
        Family::Gbdt => train_gbdt_probe(train, val, &cfg.gbdt, seed),
        Family::Mlp => train_mlp_probe(train, val, &cfg.mlp, seed),
        Family::Mapping => train_mapping_probe(train, val, &cfg.mapping, seed),
    }
}

