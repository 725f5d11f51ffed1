//! Trains every probe family and keeps the one with the best validation
//! accuracy.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{train_probe, Dataset, Family, GbdtConfig, MappingConfig, MlpConfig, TrainedProbe, RIDGE_ALPHAS};
use crate::error::{Error, Result};
use crate::exec::Clock;
use crate::logistic::LogisticConfig;
use crate::rng::{self, stream};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ZooConfig {
    pub families: Vec<Family>,
    pub logistic: LogisticConfig,
    pub ridge_alphas: Vec<f64>,
    pub gbdt: GbdtConfig,
    pub mlp: MlpConfig,
    pub mapping: MappingConfig,
}

impl Default for ZooConfig {
    fn default() -> Self {
        Self {
            families: Family::ALL.to_vec(),
            logistic: LogisticConfig::default(),
            ridge_alphas: RIDGE_ALPHAS.to_vec(),
            gbdt: GbdtConfig::default(),
            mlp: MlpConfig::default(),
            mapping: MappingConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZooResult {
    /// Index of the selected probe in `probes`.
    pub best: usize,
    pub probes: Vec<TrainedProbe>,
    /// One message per family that failed to train.
    pub warnings: Vec<String>,
}

impl ZooResult {
    pub fn best_probe(&self) -> &TrainedProbe {
        &self.probes[self.best]
    }

    pub fn best_val_accuracy(&self) -> f64 {
        self.best_probe().val_accuracy
    }

    pub fn best_test_accuracy(&self) -> f64 {
        self.best_probe().test_accuracy.unwrap_or(0.0)
    }
}

/// Seed used for one family inside a zoo run.
pub fn family_seed(seed: u64, family: Family) -> u64 {
    rng::derive(rng::derive(seed, stream::ZOO), family as u64)
}

/// Trains the configured families, picks the highest validation accuracy
/// (earlier family on ties) and only then scores every probe on `test`.
pub fn run_zoo<C: Clock>(
    train: &Dataset,
    val: &Dataset,
    test: &Dataset,
    seed: u64,
    cfg: &ZooConfig,
    clock: &C,
) -> Result<ZooResult> {
    let mut families = cfg.families.clone();
    families.sort_unstable();
    families.dedup();
    let mut probes = Vec::new();
    let mut warnings = Vec::new();
    for family in families {
        let start = clock.seconds();
        match train_probe(family, train, val, cfg, family_seed(seed, family)) {
            Ok(mut p) => {
                p.train_time_seconds = clock.seconds() - start;
                probes.push(p);
            }
            Err(e) => warnings.push(format!("{family} probe skipped: {e}")),
        }
    }
    if probes.is_empty() {
        return Err(Error::data(format!("every probe family failed: {}", warnings.join("; "))));
    }
    let mut best = 0;
    for (i, p) in probes.iter().enumerate() {
        if p.val_accuracy > probes[best].val_accuracy {
            best = i;
        }
    }
    for p in &mut probes {
        p.score_test(test);
    }
    Ok(ZooResult { best, probes, warnings })
}
