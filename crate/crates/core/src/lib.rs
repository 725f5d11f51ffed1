//! Layer characterization and concept-probe selection.
//!
//! Every layer of a network is scored by how much information its
//! activations carry about a labelled concept (uncertainty coefficient `U`)
//! and how regular that encoding is (cross-validated logistic accuracy `R`).
//! The two are combined into a single per-layer score whose argmax picks the
//! layer to probe. The crate also carries the probe zoo used to evaluate that
//! choice, a synthetic fixture generator and the comparison baselines.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, wall-clock
//! timing and thread pools live in the `layerprobe` companion crate and plug
//! in through [`exec::Executor`] and [`exec::Clock`].

#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod data;
pub mod error;
pub mod evaluation;
pub mod exec;
pub mod logistic;
pub mod matrix;
pub mod mi;
pub mod probes;
pub mod regularity;
pub mod rng;
pub mod selection;
pub mod synth;

pub use data::{ActivationPack, ConceptTable, LayerSlab, SplitPlan};
pub use error::{Error, Result};
pub use matrix::Matrix;

/// Version tag written into every JSON artifact.
pub const SPEC_VERSION: &str = "1.0";
