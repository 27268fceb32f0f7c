//! Model checkpoints: a directory with `manifest.json` and `tensors.bin`.
//!
//! `tensors.bin` holds every parameter tensor, little-endian, in declared
//! order with no header; the manifest lists names and shapes so a loader can
//! check it reads what was written.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{ModelConfig, ModelParams};
use crate::trainer::{Compression, TaskSpec, TrainMode};
use crate::{Error, Real, Result};

pub const FORMAT: &str = "elastic-ast-checkpoint/1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TENSORS_FILE: &str = "tensors.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub precision: String,
    pub seed: u64,
    pub model: ModelConfig,
    pub mode: TrainMode,
    pub compression: Compression,
    pub task: Option<TaskSpec>,
    pub steps: usize,
    pub tensors: Vec<TensorEntry>,
}

/// Training context stored next to the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub mode: TrainMode,
    pub compression: Compression,
    pub task: Option<TaskSpec>,
    pub steps: usize,
}

pub fn save<T: Real>(dir: &Path, params: &ModelParams<T>, meta: &CheckpointMeta) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tensors = params.tensors();
    let manifest = Manifest {
        format: FORMAT.into(),
        precision: T::NAME.into(),
        seed: meta.seed,
        model: params.config.clone(),
        mode: meta.mode,
        compression: meta.compression.clone(),
        task: meta.task.clone(),
        steps: meta.steps,
        tensors: tensors
            .iter()
            .map(|t| TensorEntry {
                name: t.name.clone(),
                shape: t.shape.clone(),
            })
            .collect(),
    };
    let mut bytes = Vec::with_capacity(params.n_params() * T::BYTES);
    for t in &tensors {
        for &v in t.data {
            v.write_le(&mut bytes);
        }
    }
    let path = dir.join(TENSORS_FILE);
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_slice(&text)?;
    if manifest.format != FORMAT {
        return Err(Error::Format(format!("unknown checkpoint format {:?}", manifest.format)));
    }
    Ok(manifest)
}

/// Loads a checkpoint in its stored precision, then casts to `T`.
pub fn load<T: Real>(dir: &Path) -> Result<(ModelParams<T>, Manifest)> {
    let manifest = read_manifest(dir)?;
    let params = match manifest.precision.as_str() {
        "f32" => read_tensors::<f32>(dir, &manifest)?.cast::<T>(),
        "f64" => read_tensors::<f64>(dir, &manifest)?.cast::<T>(),
        other => return Err(Error::Format(format!("unknown precision {other:?}"))),
    };
    Ok((params, manifest))
}

fn read_tensors<S: Real>(dir: &Path, manifest: &Manifest) -> Result<ModelParams<S>> {
    manifest.model.validate()?;
    let mut params = ModelParams::<S>::zeros(&manifest.model);
    let path = dir.join(TENSORS_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let expected: usize = params.n_params() * S::BYTES;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "{} holds {} bytes, expected {expected}",
            path.display(),
            bytes.len()
        )));
    }
    let mut offset = 0;
    let slots = params.tensors_mut();
    if slots.len() != manifest.tensors.len() {
        return Err(Error::Format("tensor list does not match the model configuration".into()));
    }
    for (slot, entry) in slots.into_iter().zip(&manifest.tensors) {
        if slot.name != entry.name || slot.shape != entry.shape {
            return Err(Error::Format(format!(
                "tensor {} {:?} found where {} {:?} was expected",
                entry.name, entry.shape, slot.name, slot.shape
            )));
        }
        for v in slot.data.iter_mut() {
            *v = S::read_le(&bytes[offset..offset + S::BYTES]);
            offset += S::BYTES;
        }
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> CheckpointMeta {
        CheckpointMeta {
            seed: 9,
            mode: TrainMode::Fixed { frames: 256 },
            compression: Compression::Avgpool(vec![1, 2]),
            task: None,
            steps: 17,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let params = ModelParams::<f32>::init(&ModelConfig::with_dims(8, 2, 1, 3), 5).unwrap();
        save(dir.path(), &params, &meta()).unwrap();
        let (loaded, manifest) = load::<f32>(dir.path()).unwrap();
        assert_eq!(loaded, params);
        assert_eq!(manifest.steps, 17);
        assert_eq!(manifest.mode, TrainMode::Fixed { frames: 256 });
        let (wide, _) = load::<f64>(dir.path()).unwrap();
        assert_eq!(wide.cast::<f32>(), params);
    }

    #[test]
    fn truncated_tensors_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let params = ModelParams::<f64>::init(&ModelConfig::with_dims(8, 2, 1, 3), 5).unwrap();
        save(dir.path(), &params, &meta()).unwrap();
        let path = dir.path().join(TENSORS_FILE);
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(load::<f64>(dir.path()), Err(Error::Format(_))));
    }
}
