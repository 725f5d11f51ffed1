//! Per-layer scores combining information and regularity, layer selection,
//! and λ sweeps.

use alloc::string::String;
use alloc::vec::Vec;

use crate::data::{make_split, ActivationPack, ConceptTable, SplitPlan, DEFAULT_MAX_SAMPLES};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::logistic::LogisticConfig;
use crate::mi::{estimate_mi, MiEstimate, MiEstimatorConfig};
use crate::regularity::{regularity_with, RegularityScore};
use crate::rng;

pub const DEFAULT_LAMBDA: f64 = 0.26;

/// `λ·u + (1−λ)·(k·r − 1)/(k − 1)`.
pub fn score_layer(u: f64, r: f64, k: usize, lambda: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&r) {
        return Err(Error::config("u and r must lie in [0, 1]"));
    }
    if k < 2 {
        return Err(Error::config("concept cardinality must be at least 2"));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::config("lambda must lie in [0, 1]"));
    }
    Ok(lambda * u + (1.0 - lambda) * normalized_regularity(r, k))
}

/// Maps chance accuracy `1/k` to 0 and perfect accuracy to 1.
pub fn normalized_regularity(r: f64, k: usize) -> f64 {
    let k = k as f64;
    (k * r - 1.0) / (k - 1.0)
}

/// Raw measurements for one layer, independent of λ.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LayerStats {
    pub layer_index: usize,
    pub layer_name: String,
    pub k: usize,
    pub mi: MiEstimate,
    pub regularity: RegularityScore,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LayerCharacterization {
    pub layer_index: usize,
    pub layer_name: String,
    pub u: f64,
    pub r: f64,
    pub k: usize,
    pub score: f64,
}

impl LayerCharacterization {
    pub fn r_normalized(&self) -> f64 {
        normalized_regularity(self.r, self.k)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CharacterizationCurve {
    pub concept_name: String,
    pub lambda: f64,
    pub layers: Vec<LayerCharacterization>,
}

impl CharacterizationCurve {
    pub fn from_stats(concept: &str, stats: &[LayerStats], lambda: f64) -> Result<Self> {
        let layers = stats
            .iter()
            .map(|s| {
                let (u, r) = (s.mi.uncertainty_coefficient, s.regularity.r_accuracy);
                Ok(LayerCharacterization {
                    layer_index: s.layer_index,
                    layer_name: s.layer_name.clone(),
                    u,
                    r,
                    k: s.k,
                    score: score_layer(u, r, s.k, lambda)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { concept_name: concept.into(), lambda, layers })
    }

    pub fn scores(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.score).collect()
    }
}

/// Returns the layer with the highest score; ties go to the earliest layer.
pub fn select_layer(curve: &CharacterizationCurve) -> Result<usize> {
    if curve.layers.is_empty() {
        return Err(Error::data("cannot select from an empty curve"));
    }
    let best = crate::matrix::argmax(&curve.scores());
    Ok(curve.layers[best].layer_index)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CharacterizeConfig {
    pub mi: MiEstimatorConfig,
    pub logistic: LogisticConfig,
    pub max_samples: usize,
}

impl Default for CharacterizeConfig {
    fn default() -> Self {
        Self { mi: MiEstimatorConfig::default(), logistic: LogisticConfig::default(), max_samples: DEFAULT_MAX_SAMPLES }
    }
}

/// Measures `U` and `R` for every layer on the balanced characterization pool
/// (train ∪ validation of the concept's split).
pub fn characterize_layers<E: Executor>(
    pack: &ActivationPack,
    table: &ConceptTable,
    concept: &str,
    cfg: &CharacterizeConfig,
    seed: u64,
    exec: &E,
) -> Result<(SplitPlan, Vec<LayerStats>)> {
    table.check_pairing(pack)?;
    let split = make_split(table, concept, cfg.max_samples, seed)?;
    let j = table.concept_index(concept)?;
    let k = table.cardinality(j);
    let all = table.column(j);
    let pool = split.pool();
    let y: Vec<usize> = pool.iter().map(|&i| all[i]).collect();
    let mi_cfg = MiEstimatorConfig { seed: rng::derive(cfg.mi.seed, seed), ..cfg.mi.clone() };

    let stats = exec
        .map(pack.num_layers(), |l| {
            let slab = pack.layer(l);
            let x = slab.select_rows(&pool);
            let mi = estimate_mi(&x, &y, k, &mi_cfg)?;
            let regularity = regularity_with(&x, &y, k, seed, &cfg.logistic)?;
            Ok(LayerStats { layer_index: l, layer_name: slab.layer_name.clone(), k, mi, regularity })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok((split, stats))
}

pub fn characterize<E: Executor>(
    pack: &ActivationPack,
    table: &ConceptTable,
    concept: &str,
    cfg: &CharacterizeConfig,
    lambda: f64,
    seed: u64,
    exec: &E,
) -> Result<CharacterizationCurve> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::config("lambda must lie in [0, 1]"));
    }
    let (_, stats) = characterize_layers(pack, table, concept, cfg, seed, exec)?;
    CharacterizationCurve::from_stats(concept, &stats, lambda)
}

/// 0.00, 0.02, …, 1.00.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..=50).map(|i| f64::from(i) / 50.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LambdaSweep {
    pub concept_name: String,
    /// `(λ, selected layer)` in grid order.
    pub points: Vec<(f64, usize)>,
    pub distinct_layers: usize,
    pub stats: Vec<LayerStats>,
}

/// Selection over a λ grid from a single characterization pass.
pub fn sweep_from_stats(concept: &str, stats: &[LayerStats], grid: &[f64]) -> Result<LambdaSweep> {
    if grid.is_empty() {
        return Err(Error::config("lambda grid is empty"));
    }
    let points = grid
        .iter()
        .map(|&lambda| {
            let curve = CharacterizationCurve::from_stats(concept, stats, lambda)?;
            Ok((lambda, select_layer(&curve)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut layers: Vec<usize> = points.iter().map(|p| p.1).collect();
    layers.sort_unstable();
    layers.dedup();
    Ok(LambdaSweep { concept_name: concept.into(), points, distinct_layers: layers.len(), stats: stats.to_vec() })
}

pub fn lambda_sweep<E: Executor>(
    pack: &ActivationPack,
    table: &ConceptTable,
    concept: &str,
    cfg: &CharacterizeConfig,
    grid: &[f64],
    seed: u64,
    exec: &E,
) -> Result<LambdaSweep> {
    if grid.is_empty() || grid.iter().any(|l| !(0.0..=1.0).contains(l)) {
        return Err(Error::config("lambda grid must be nonempty with values in [0, 1]"));
    }
    let (_, stats) = characterize_layers(pack, table, concept, cfg, seed, exec)?;
    sweep_from_stats(concept, &stats, grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn curve(scores: &[f64]) -> CharacterizationCurve {
        CharacterizationCurve {
            concept_name: "c".into(),
            lambda: 0.5,
            layers: scores
                .iter()
                .enumerate()
                .map(|(i, &s)| LayerCharacterization {
                    layer_index: i,
                    layer_name: alloc::format!("l{i}"),
                    u: 0.0,
                    r: 0.5,
                    k: 2,
                    score: s,
                })
                .collect(),
        }
    }

    #[test]
    fn score_examples() {
        assert!((score_layer(0.5, 0.5, 2, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(score_layer(0.7, 1.0 / 3.0, 3, 0.0).unwrap().abs() < 1e-15);
        assert!((score_layer(0.8, 0.9, 2, 0.26).unwrap() - 0.8).abs() < 1e-12);
        assert!(score_layer(1.2, 0.5, 2, 0.5).is_err());
        assert!(score_layer(0.5, 0.5, 1, 0.5).is_err());
        assert!(score_layer(0.5, 0.5, 2, -0.1).is_err());
    }

    #[test]
    fn selection_tie_breaks_and_edges() {
        assert_eq!(select_layer(&curve(&[0.2, 0.9, 0.9, 0.4])).unwrap(), 1);
        assert_eq!(select_layer(&curve(&[0.1, 0.2, 0.3])).unwrap(), 2);
        assert_eq!(select_layer(&curve(&[0.3])).unwrap(), 0);
        assert!(select_layer(&curve(&[])).is_err());
    }

    #[test]
    fn grid_has_51_points() {
        let g = default_lambda_grid();
        assert_eq!(g.len(), 51);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[50], 1.0);
        assert!((g[13] - 0.26).abs() < 1e-15);
    }

    #[test]
    fn sweep_endpoints_follow_single_terms() {
        let mk = |i: usize, u: f64, r: f64| LayerStats {
            layer_index: i,
            layer_name: "x".into(),
            k: 2,
            mi: MiEstimate::from_parts(u, 1.0),
            regularity: RegularityScore { r_accuracy: r, fold_accuracies: vec![r; 5], description_length_bits: 0.0 },
        };
        let stats = [mk(0, 0.9, 0.6), mk(1, 0.2, 0.95)];
        let sweep = sweep_from_stats("c", &stats, &[0.0, 1.0]).unwrap();
        assert_eq!(sweep.points, vec![(0.0, 1), (1.0, 0)]);
        assert_eq!(sweep.distinct_layers, 2);
    }
}
