//! Writes a synthetic fixture as a pack directory plus `fixture.json`.

use std::path::Path;

use layerprobe_core::synth::{Fixture, Formula, GateReport};
use layerprobe_core::SPEC_VERSION;
use serde::Serialize;

use crate::error::CliResult;
use crate::pack::{write_concepts, write_json, write_pack, CONCEPTS};

pub const FIXTURE_JSON: &str = "fixture.json";

#[derive(Serialize)]
struct LowLevel<'a> {
    name: &'a str,
    weights: &'a [f64],
    threshold: f64,
}

#[derive(Serialize)]
struct HighLevel<'a> {
    name: &'a str,
    formula: String,
    tree: &'a Formula,
}

#[derive(Serialize)]
struct Network<'a> {
    widths: &'a [usize],
    epochs_run: usize,
    val_accuracy: f64,
    history: &'a [f64],
}

#[derive(Serialize)]
struct FixtureJson<'a> {
    spec_version: &'a str,
    model_name: &'a str,
    seed: u64,
    latent_dim: usize,
    input_dim: usize,
    noise_std: f64,
    /// `input_dim × latent_dim`, row-major.
    mixing: &'a [f64],
    low_level: Vec<LowLevel<'a>>,
    high_level: Vec<HighLevel<'a>>,
    task_label: &'a str,
    distractor: &'a str,
    concepts: Vec<String>,
    network: Network<'a>,
    gates: &'a [GateReport],
}

pub fn write_fixture(fx: &Fixture, seed: u64, dir: &Path) -> CliResult<()> {
    write_pack(&fx.pack, dir)?;
    write_concepts(&fx.concepts, &dir.join(CONCEPTS))?;
    let t = &fx.task;
    let names: Vec<String> = t.low_level.iter().map(|c| c.name.clone()).collect();
    let doc = FixtureJson {
        spec_version: SPEC_VERSION,
        model_name: &fx.pack.model_name,
        seed,
        latent_dim: t.latent_dim,
        input_dim: t.input_dim,
        noise_std: t.noise_std,
        mixing: t.mixing.as_slice(),
        low_level: t
            .low_level
            .iter()
            .map(|c| LowLevel { name: &c.name, weights: &c.weights, threshold: c.threshold })
            .collect(),
        high_level: t
            .high_level
            .iter()
            .map(|h| HighLevel { name: &h.name, formula: h.formula.render(&names), tree: &h.formula })
            .collect(),
        task_label: t.task_name(),
        distractor: &t.distractor,
        concepts: t.concept_names(),
        network: Network {
            widths: &fx.net.widths,
            epochs_run: fx.net.epochs_run,
            val_accuracy: fx.net.val_accuracy,
            history: &fx.net.history,
        },
        gates: &fx.gates,
    };
    write_json(&dir.join(FIXTURE_JSON), &doc)
}
