//! Checkpoint directory layout:
//!
//! * `manifest.json`: format tag, model config, seed, speaker count, epochs
//!   completed, and the ordered parameter list (`name`, `shape`).
//! * `params.bin`: every parameter as little-endian `f64`, concatenated in
//!   manifest order.
//! * `optimizer.bin` (optional): momentum buffers in the same layout.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Model, ModelConfig};
use super::train::OptimizerState;
use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::fsutil::{write_atomic, write_json_atomic};

pub const CHECKPOINT_FORMAT: &str = "adhoc-sv-checkpoint";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub config: ModelConfig,
    pub n_speakers: usize,
    pub epochs_completed: usize,
    pub params: Vec<ParamEntry>,
    pub has_optimizer: bool,
}

fn blob<'a>(tensors: impl Iterator<Item = &'a Tensor>) -> Vec<u8> {
    let mut out = Vec::new();
    for t in tensors {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn unblob(bytes: &[u8], shapes: &[Vec<usize>]) -> Result<Vec<Tensor>> {
    let total: usize = shapes.iter().map(|s| s.iter().product::<usize>()).sum();
    if bytes.len() != total * 8 {
        return Err(Error::Data(format!("parameter blob has {} bytes, expected {}", bytes.len(), total * 8)));
    }
    let mut values = bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap()));
    shapes
        .iter()
        .map(|shape| {
            let n = shape.iter().product();
            Tensor::new(shape.clone(), values.by_ref().take(n).collect())
        })
        .collect()
}

pub fn save_checkpoint(dir: &Path, model: &Model, optimizer: Option<&OptimizerState>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let params = model.parameters();
    let manifest = CheckpointManifest {
        format: CHECKPOINT_FORMAT.into(),
        version: 1,
        seed: model.config.seed,
        config: model.config.clone(),
        n_speakers: model.n_speakers,
        epochs_completed: optimizer.map_or(0, |o| o.epochs_completed),
        params: params.iter().map(|p| ParamEntry { name: p.name.clone(), shape: p.value.shape().to_vec() }).collect(),
        has_optimizer: optimizer.is_some(),
    };
    write_atomic(&dir.join("params.bin"), &blob(params.iter().map(|p| &p.value)))?;
    match optimizer {
        Some(o) => write_atomic(&dir.join("optimizer.bin"), &blob(o.velocity.iter()))?,
        None => {
            let stale = dir.join("optimizer.bin");
            if stale.exists() {
                fs::remove_file(stale)?;
            }
        }
    }
    write_json_atomic(&dir.join("manifest.json"), &manifest)
}

/// Rebuilds the model from its config and overwrites every parameter value.
pub fn load_checkpoint(dir: &Path) -> Result<(Model, Option<OptimizerState>)> {
    let manifest: CheckpointManifest = serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?;
    if manifest.format != CHECKPOINT_FORMAT || manifest.version != 1 {
        return Err(Error::Data(format!("unsupported checkpoint {} v{}", manifest.format, manifest.version)));
    }
    let mut model = Model::new(manifest.config.clone(), manifest.n_speakers)?;
    {
        let params = model.parameters();
        if params.len() != manifest.params.len()
            || params.iter().zip(&manifest.params).any(|(p, e)| p.name != e.name || p.value.shape() != e.shape.as_slice())
        {
            return Err(Error::Data("checkpoint parameters do not match its model config".into()));
        }
    }
    let shapes: Vec<Vec<usize>> = manifest.params.iter().map(|e| e.shape.clone()).collect();
    let values = unblob(&fs::read(dir.join("params.bin"))?, &shapes)?;
    for (p, v) in model.parameters_mut().into_iter().zip(values) {
        p.value = v;
    }
    let optimizer = if manifest.has_optimizer {
        let velocity = unblob(&fs::read(dir.join("optimizer.bin"))?, &shapes)?;
        Some(OptimizerState { epochs_completed: manifest.epochs_completed, velocity })
    } else {
        None
    };
    Ok((model, optimizer))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::model::Selection;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ModelConfig { d: 8, heads: 2, selection: Selection::Gpool { k: Some(2) }, seed: 4, ..ModelConfig::default() };
        let model = Model::new(cfg, 3).unwrap();
        let mut opt = OptimizerState::new(&model);
        opt.epochs_completed = 7;
        opt.velocity[0].data_mut()[0] = 0.25;
        save_checkpoint(dir.path(), &model, Some(&opt)).unwrap();
        let (back, back_opt) = load_checkpoint(dir.path()).unwrap();
        assert_eq!(back, model);
        assert_eq!(back_opt.unwrap(), opt);

        save_checkpoint(dir.path(), &model, None).unwrap();
        assert!(load_checkpoint(dir.path()).unwrap().1.is_none());
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let model = Model::new(ModelConfig { d: 4, heads: 2, ..ModelConfig::default() }, 2).unwrap();
        save_checkpoint(dir.path(), &model, None).unwrap();
        let p = dir.path().join("params.bin");
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(Error::Data(_))));
    }
}
