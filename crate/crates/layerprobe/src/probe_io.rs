//! Trained probes as a JSON document plus a raw little-endian `f64` blob.
//!
//! Every floating-point value of the probe is moved into the blob and
//! replaced in the JSON by `{"$f64": index}`, so reloading restores each
//! parameter bit for bit.

use std::fs;
use std::path::{Path, PathBuf};

use layerprobe_core::probes::TrainedProbe;
use layerprobe_core::SPEC_VERSION;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value};

use crate::error::{CliError, CliResult};

const SLOT: &str = "$f64";

#[derive(Debug, Serialize, Deserialize)]
struct ProbeDocument {
    spec_version: String,
    family: String,
    blob: String,
    n_values: usize,
    probe: Value,
}

fn extract(v: &mut Value, blob: &mut Vec<f64>) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let mut slot = Map::new();
            slot.insert(SLOT.into(), Value::from(blob.len()));
            blob.push(n.as_f64().unwrap_or(f64::NAN));
            *v = Value::Object(slot);
        }
        Value::Array(items) => items.iter_mut().for_each(|i| extract(i, blob)),
        Value::Object(map) => map.values_mut().for_each(|i| extract(i, blob)),
        _ => {}
    }
}

fn restore(v: &mut Value, blob: &[f64]) -> Result<(), String> {
    match v {
        Value::Object(map) if map.len() == 1 && map.contains_key(SLOT) => {
            let i = map[SLOT].as_u64().ok_or("bad blob index")? as usize;
            let x = *blob.get(i).ok_or_else(|| format!("blob index {i} out of range"))?;
            *v = Value::Number(Number::from_f64(x).ok_or("non-finite value in blob")?);
        }
        Value::Array(items) => items.iter_mut().try_for_each(|i| restore(i, blob))?,
        Value::Object(map) => map.values_mut().try_for_each(|i| restore(i, blob))?,
        _ => {}
    }
    Ok(())
}

/// Writes `<stem>.json` and `<stem>.bin` into `dir`; returns the JSON path.
pub fn save_probe(probe: &TrainedProbe, dir: &Path, stem: &str) -> CliResult<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut value = serde_json::to_value(probe).map_err(|e| CliError::Internal(format!("probe encoding: {e}")))?;
    let mut blob = Vec::new();
    extract(&mut value, &mut blob);
    let bin_name = format!("{stem}.bin");
    let mut bytes = Vec::with_capacity(blob.len() * 8);
    for x in &blob {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    let bin_path = dir.join(&bin_name);
    fs::write(&bin_path, bytes).map_err(|e| CliError::io(&bin_path, e))?;
    let doc = ProbeDocument {
        spec_version: SPEC_VERSION.into(),
        family: probe.family().name().into(),
        blob: bin_name,
        n_values: blob.len(),
        probe: value,
    };
    let json_path = dir.join(format!("{stem}.json"));
    crate::pack::write_json(&json_path, &doc)?;
    Ok(json_path)
}

pub fn load_probe(json_path: &Path) -> CliResult<TrainedProbe> {
    let text = fs::read_to_string(json_path).map_err(|e| CliError::io(json_path, e))?;
    let doc: ProbeDocument = serde_json::from_str(&text).map_err(|e| CliError::in_file(json_path, e))?;
    let dir = json_path.parent().unwrap_or(Path::new("."));
    let bin_path = dir.join(&doc.blob);
    let bytes = fs::read(&bin_path).map_err(|e| CliError::io(&bin_path, e))?;
    if bytes.len() != doc.n_values * 8 {
        return Err(CliError::in_file(
            &bin_path,
            format!("holds {} bytes, expected {} f64 values", bytes.len(), doc.n_values),
        ));
    }
    let blob: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let mut value = doc.probe;
    restore(&mut value, &blob).map_err(|e| CliError::in_file(json_path, e))?;
    serde_json::from_value(value).map_err(|e| CliError::in_file(json_path, e))
}
