//! Evaluation report files.
//!
//! `report.csv` holds one row per model (method, layers average, oracle,
//! percent of oracle, best validation, input reduce), `report_per_concept.csv`
//! one row per concept, and
//! `report.json` the full report. Accuracies are written in shortest
//! round-trip form, so parsing the CSVs gives back the exact values.
//! Wall-clock runtimes live in `runtimes.csv`, written only when timing
//! is requested, which keeps the other files reproducible byte for byte.

use std::path::Path;

use layerprobe_core::evaluation::{EvaluationReport, EvaluationRow, ReportAverages};
use layerprobe_core::SPEC_VERSION;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::pack::write_json;

pub const REPORT_CSV: &str = "report.csv";
pub const PER_CONCEPT_CSV: &str = "report_per_concept.csv";
pub const REPORT_JSON: &str = "report.json";
pub const RUNTIMES_CSV: &str = "runtimes.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub model: String,
    pub concepts: usize,
    pub method_acc: f64,
    pub layers_avg_acc: f64,
    pub oracle_acc: f64,
    pub pct_oracle: f64,
    pub best_validation_acc: f64,
    pub input_reduce_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptRecord {
    pub model: String,
    pub concept: String,
    pub k: usize,
    pub selected_layer: usize,
    pub method_family: String,
    pub method_acc: f64,
    pub best_validation_layer: usize,
    pub best_validation_acc: f64,
    pub input_reduce_acc: f64,
    pub input_reduce_units: usize,
    pub layers_avg_acc: f64,
    pub oracle_layer: usize,
    pub oracle_acc: f64,
    pub pct_oracle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeRecord {
    pub model: String,
    pub concept: String,
    pub method_s: f64,
    pub best_validation_s: f64,
    pub input_reduce_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowJson {
    #[serde(flatten)]
    pub record: ConceptRecord,
    pub per_layer: Vec<layerprobe_core::evaluation::LayerProbeResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportJson {
    pub spec_version: String,
    pub model_name: String,
    pub lambda: f64,
    pub seed: u64,
    pub average: ModelRecord,
    pub rows: Vec<RowJson>,
    /// Present only for timed runs.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub runtimes: Option<Vec<RuntimeRecord>>,
}

pub fn model_record(report: &EvaluationReport) -> ModelRecord {
    let a: &ReportAverages = &report.average;
    ModelRecord {
        model: report.model_name.clone(),
        concepts: report.rows.len(),
        method_acc: a.method_accuracy,
        layers_avg_acc: a.layers_avg_accuracy,
        oracle_acc: a.oracle_accuracy,
        pct_oracle: a.pct_oracle,
        best_validation_acc: a.best_validation_accuracy,
        input_reduce_acc: a.input_reduce_accuracy,
    }
}

pub fn concept_record(model: &str, r: &EvaluationRow) -> ConceptRecord {
    ConceptRecord {
        model: model.into(),
        concept: r.concept.clone(),
        k: r.k,
        selected_layer: r.selected_layer,
        method_family: r.method_family.name().into(),
        method_acc: r.method_accuracy,
        best_validation_layer: r.best_validation_layer,
        best_validation_acc: r.best_validation_accuracy,
        input_reduce_acc: r.input_reduce_accuracy,
        input_reduce_units: r.input_reduce_units,
        layers_avg_acc: r.layers_avg_accuracy,
        oracle_layer: r.oracle_layer,
        oracle_acc: r.oracle_accuracy,
        pct_oracle: r.pct_oracle,
    }
}

pub fn runtime_records(report: &EvaluationReport) -> Vec<RuntimeRecord> {
    let mut v: Vec<RuntimeRecord> = report
        .rows
        .iter()
        .map(|r| RuntimeRecord {
            model: report.model_name.clone(),
            concept: r.concept.clone(),
            method_s: r.runtimes.method_seconds,
            best_validation_s: r.runtimes.best_validation_seconds,
            input_reduce_s: r.runtimes.input_reduce_seconds,
        })
        .collect();
    let a = &report.average.runtimes;
    v.push(RuntimeRecord {
        model: report.model_name.clone(),
        concept: "average".into(),
        method_s: a.method_seconds,
        best_validation_s: a.best_validation_seconds,
        input_reduce_s: a.input_reduce_seconds,
    });
    v
}

pub fn write_csv<T: Serialize>(path: &Path, records: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::in_file(path, e))?;
    for r in records {
        w.serialize(r).map_err(|e| CliError::in_file(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::in_file(path, e))?;
    r.deserialize().map(|rec| rec.map_err(|e| CliError::in_file(path, e))).collect()
}

pub fn report_json(report: &EvaluationReport, timed: bool) -> ReportJson {
    ReportJson {
        spec_version: SPEC_VERSION.into(),
        model_name: report.model_name.clone(),
        lambda: report.lambda,
        seed: report.seed,
        average: model_record(report),
        rows: report
            .rows
            .iter()
            .map(|r| RowJson { record: concept_record(&report.model_name, r), per_layer: r.per_layer.clone() })
            .collect(),
        runtimes: timed.then(|| runtime_records(report)),
    }
}

/// Writes the CSV and/or JSON report files into `dir`, plus `runtimes.csv`
/// when `timed`.
pub fn write_report(report: &EvaluationReport, dir: &Path, csv: bool, json: bool, timed: bool) -> CliResult<()> {
    if csv {
        write_csv(&dir.join(REPORT_CSV), &[model_record(report)])?;
        let rows: Vec<ConceptRecord> = report.rows.iter().map(|r| concept_record(&report.model_name, r)).collect();
        write_csv(&dir.join(PER_CONCEPT_CSV), &rows)?;
    }
    if json {
        write_json(&dir.join(REPORT_JSON), &report_json(report, timed))?;
    }
    if timed {
        write_csv(&dir.join(RUNTIMES_CSV), &runtime_records(report))?;
    }
    Ok(())
}
