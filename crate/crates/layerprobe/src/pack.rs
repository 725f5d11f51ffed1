//! Activation-pack directories: `manifest.json`, one raw little-endian `f32`
//! slab per layer and `concepts.csv`.

use std::fs;
use std::path::{Path, PathBuf};

use layerprobe_core::{ActivationPack, ConceptTable, LayerSlab};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";
pub const CONCEPTS: &str = "concepts.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestLayer {
    pub index: usize,
    pub name: String,
    pub dim: usize,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub model_name: String,
    pub n_samples: usize,
    pub layers: Vec<ManifestLayer>,
    pub sample_ids: Vec<String>,
}

pub fn slab_file_name(index: usize) -> String {
    format!("layer_{index:03}.f32")
}

fn read_manifest(dir: &Path) -> CliResult<Manifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| CliError::in_file(&path, e))?;
    if m.sample_ids.len() != m.n_samples {
        return Err(CliError::in_file(
            &path,
            format!("n_samples is {} but {} sample ids are listed", m.n_samples, m.sample_ids.len()),
        ));
    }
    Ok(m)
}

fn read_slab(dir: &Path, n: usize, layer: &ManifestLayer) -> CliResult<LayerSlab> {
    let path = dir.join(&layer.file);
    let bytes = fs::read(&path).map_err(|e| CliError::Data(format!("layer `{}`: {}: {e}", layer.name, path.display())))?;
    let expected = n * layer.dim * 4;
    if bytes.len() != expected {
        return Err(CliError::Data(format!(
            "layer `{}`: {} has {} bytes, expected {expected} ({n} x {} f32)",
            layer.name,
            path.display(),
            bytes.len(),
            layer.dim
        )));
    }
    let values: Vec<f32> = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    LayerSlab::new(layer.index, layer.name.clone(), n, layer.dim, values)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Reads and validates a pack; layer order follows the manifest.
pub fn load_pack(dir: &Path) -> CliResult<ActivationPack> {
    let m = read_manifest(dir)?;
    let layers = m.layers.iter().map(|l| read_slab(dir, m.n_samples, l)).collect::<CliResult<Vec<_>>>()?;
    ActivationPack::new(m.model_name, layers, m.sample_ids)
        .map_err(|e| CliError::Data(format!("{}: {e}", dir.join(MANIFEST).display())))
}

pub fn write_pack(pack: &ActivationPack, dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut layers = Vec::with_capacity(pack.num_layers());
    for slab in pack.layers() {
        let file = slab_file_name(slab.layer_index);
        let mut bytes = Vec::with_capacity(slab.values().len() * 4);
        for v in slab.values() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let path = dir.join(&file);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        layers.push(ManifestLayer { index: slab.layer_index, name: slab.layer_name.clone(), dim: slab.dim(), file });
    }
    let manifest = Manifest {
        model_name: pack.model_name.clone(),
        n_samples: pack.num_samples(),
        layers,
        sample_ids: pack.sample_ids().to_vec(),
    };
    write_json(&dir.join(MANIFEST), &manifest)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Parses `sample_id,<concept>,...` with integer labels.
pub fn load_concepts(path: &Path) -> CliResult<ConceptTable> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(|e| CliError::in_file(path, e))?;
    let header = reader.headers().map_err(|e| CliError::in_file(path, e))?.clone();
    if header.get(0) != Some("sample_id") || header.len() < 2 {
        return Err(CliError::in_file(path, "header must be `sample_id,<concept>,...`"));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let mut ids = Vec::new();
    let mut columns = vec![Vec::new(); names.len()];
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::in_file(path, e))?;
        let row = line + 2;
        ids.push(record[0].to_owned());
        for (j, col) in columns.iter_mut().enumerate() {
            let v: u32 = record[j + 1]
                .trim()
                .parse()
                .map_err(|_| CliError::in_file(path, format!("line {row}: `{}` is not a label", &record[j + 1])))?;
            col.push(v);
        }
    }
    ConceptTable::from_columns(names, ids, &columns).map_err(|e| CliError::in_file(path, e))
}

pub fn write_concepts(table: &ConceptTable, path: &Path) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::in_file(path, e))?;
    let names = table.concept_names();
    let mut header = vec!["sample_id".to_owned()];
    header.extend(names.iter().cloned());
    w.write_record(&header).map_err(|e| CliError::in_file(path, e))?;
    let labels = table.raw_labels();
    for (i, id) in table.sample_ids().iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(labels[i * names.len()..(i + 1) * names.len()].iter().map(u32::to_string));
        w.write_record(&rec).map_err(|e| CliError::in_file(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Loads a pack and its concept table (by default `concepts.csv` inside the
/// pack) and checks that their sample ids agree.
pub fn load_pack_and_concepts(dir: &Path, concepts: Option<&Path>) -> CliResult<(ActivationPack, ConceptTable)> {
    let pack = load_pack(dir)?;
    let path: PathBuf = concepts.map_or_else(|| dir.join(CONCEPTS), Path::to_path_buf);
    let table = load_concepts(&path)?;
    table.check_pairing(&pack).map_err(|e| CliError::in_file(&path, e))?;
    Ok((pack, table))
}
