//! Checkpoint directories: `manifest.json` plus one little-endian `f64`
//! file per parameter tensor.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{ObjectClassSet, Vocabulary};
use crate::decoder::{GvdModel, ModelConfig};
use crate::error::{Error, Result};
use crate::params::ParamGroup;
use crate::tensor::Mat;

use super::data::sha256_hex;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub group: String,
    pub rows: usize,
    pub cols: usize,
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub dtype: String,
    pub model: ModelConfig,
    pub preset: String,
    pub epoch: Option<usize>,
    pub vocab: Vocabulary,
    pub classes: ObjectClassSet,
    pub vocab_sha256: String,
    pub classes_sha256: String,
    pub tensors: Vec<TensorEntry>,
}

fn f64_bytes(m: &Mat) -> Vec<u8> {
    m.data().iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn vocab_hash(v: &Vocabulary) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(v)?))
}

fn classes_hash(c: &ObjectClassSet) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(c)?))
}

pub fn save_checkpoint(model: &GvdModel, preset: &str, epoch: Option<usize>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tensors = Vec::new();
    for (i, p) in model.params().iter().enumerate() {
        let file = format!("t{i:03}.f64");
        let bytes = f64_bytes(&p.value);
        let path = dir.join(&file);
        fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        tensors.push(TensorEntry {
            name: p.name.clone(),
            group: p.group.name().to_string(),
            rows: p.value.rows(),
            cols: p.value.cols(),
            file,
            sha256: sha256_hex(&bytes),
        });
    }
    let manifest = CheckpointManifest {
        format_version: FORMAT_VERSION,
        dtype: "f64".into(),
        model: model.config().clone(),
        preset: preset.to_string(),
        epoch,
        vocab: model.vocab().clone(),
        classes: model.classes().clone(),
        vocab_sha256: vocab_hash(model.vocab())?,
        classes_sha256: classes_hash(model.classes())?,
        tensors,
    };
    let path = dir.join(MANIFEST);
    let json = serde_json::to_vec_pretty(&manifest)?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

/// Rebuilds the model from its manifest and overwrites every parameter.
pub fn load_checkpoint(dir: &Path) -> Result<(GvdModel, CheckpointManifest)> {
    let path = dir.join(MANIFEST);
    let text = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let m: CheckpointManifest = serde_json::from_slice(&text)?;
    if m.format_version != FORMAT_VERSION || m.dtype != "f64" {
        return Err(Error::Data(format!(
            "{}: unsupported checkpoint format {} ({})",
            path.display(),
            m.format_version,
            m.dtype
        )));
    }
    if vocab_hash(&m.vocab)? != m.vocab_sha256 || classes_hash(&m.classes)? != m.classes_sha256 {
        return Err(Error::Data(format!("{}: vocabulary or class hash mismatch", path.display())));
    }
    let mut model = GvdModel::new(m.model.clone(), m.vocab.clone(), m.classes.clone(), 0)?;
    if model.params().len() != m.tensors.len() {
        return Err(Error::Data(format!(
            "checkpoint has {} tensors, the model {}",
            m.tensors.len(),
            model.params().len()
        )));
    }
    for t in &m.tensors {
        let id = model
            .params()
            .find(&t.name)
            .ok_or_else(|| Error::Data(format!("unknown tensor '{}'", t.name)))?;
        let tpath = dir.join(&t.file);
        let bytes = fs::read(&tpath).map_err(|e| Error::io(&tpath, e))?;
        if sha256_hex(&bytes) != t.sha256 {
            return Err(Error::Data(format!("{}: sha256 mismatch", tpath.display())));
        }
        let target = model.params_mut().get_mut(id);
        if target.shape() != (t.rows, t.cols) || bytes.len() != t.rows * t.cols * 8 {
            return Err(Error::shape("checkpoint tensor", target.shape(), (t.rows, t.cols)));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        *target = Mat::from_vec(t.rows, t.cols, data)?;
    }
    debug_assert!(model
        .params()
        .iter()
        .zip(&m.tensors)
        .all(|(p, t)| ParamGroup::ALL.iter().any(|g| g.name() == t.group && *g == p.group)));
    Ok((model, m))
}
