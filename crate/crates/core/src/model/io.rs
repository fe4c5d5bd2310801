//! Saving, loading and averaging model checkpoints.
//!
//! The model configuration travels in the checkpoint header under `config`,
//! so a checkpoint rebuilds its own architecture.

use std::path::Path;

use melclean_nn::{checkpoint, NnError, ParamSet};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::model::{EnhancementModel, ModelConfig};

fn mismatch(e: NnError) -> Error {
    match e {
        NnError::Checkpoint(msg) | NnError::Shape(msg) => Error::CheckpointMismatch(msg),
        NnError::Json(e) => Error::CheckpointMismatch(e.to_string()),
        NnError::Io(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
            Error::CheckpointMismatch("checkpoint is truncated".into())
        }
        NnError::Io(e) => Error::Io(e),
        other => Error::Nn(other),
    }
}

fn read(path: &Path) -> Result<(ParamSet, Value)> {
    if !path.exists() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    checkpoint::load(path).map_err(mismatch)
}

fn config_of(meta: &Value) -> Result<ModelConfig> {
    let cfg = meta.get("config").ok_or_else(|| Error::CheckpointMismatch("header has no model config".into()))?;
    serde_json::from_value(cfg.clone()).map_err(|e| Error::CheckpointMismatch(format!("bad model config: {e}")))
}

impl EnhancementModel {
    /// Writes the parameters with `extra` merged into the header next to the
    /// configuration.
    pub fn save(&self, path: impl AsRef<Path>, extra: Value) -> Result<()> {
        let mut meta = json!({ "config": self.config });
        if let (Some(m), Value::Object(e)) = (meta.as_object_mut(), extra) {
            m.extend(e);
        }
        checkpoint::save(path, &self.params, &meta)?;
        Ok(())
    }

    /// Rebuilds a model from a checkpoint; returns it with the header.
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, Value)> {
        let (params, meta) = read(path.as_ref())?;
        let config = config_of(&meta)?;
        let mut model = EnhancementModel::build(config, 0)?;
        model.params.copy_from(&params).map_err(mismatch)?;
        Ok((model, meta))
    }

    /// Loads a checkpoint that must match `expected`.
    pub fn load_expecting(path: impl AsRef<Path>, expected: &ModelConfig) -> Result<Self> {
        let (model, _) = Self::load(path)?;
        if &model.config != expected {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint holds {:?}/{:?} depth {} width {}, expected {:?}/{:?} depth {} width {}",
                model.config.mode,
                model.config.target,
                model.config.depth,
                model.config.hidden,
                expected.mode,
                expected.target,
                expected.depth,
                expected.hidden
            )));
        }
        Ok(model)
    }

    /// Replaces the parameters with the elementwise mean of `sets`.
    pub fn set_average(&mut self, sets: &[ParamSet]) -> Result<()> {
        let avg = ParamSet::average(sets).map_err(mismatch)?;
        self.params.copy_from(&avg).map_err(mismatch)
    }
}

/// Elementwise mean of the checkpoints at `paths`, which must share one
/// configuration.
pub fn average_checkpoints<P: AsRef<Path>>(paths: &[P]) -> Result<EnhancementModel> {
    let first = paths.first().ok_or(Error::EmptyInput("checkpoint list"))?;
    let (mut model, _) = EnhancementModel::load(first)?;
    let mut sets = Vec::with_capacity(paths.len());
    for p in paths {
        let (params, meta) = read(p.as_ref())?;
        if config_of(&meta)? != model.config {
            return Err(Error::CheckpointMismatch(format!("{} has a different configuration", p.as_ref().display())));
        }
        sets.push(params);
    }
    model.set_average(&sets)?;
    Ok(model)
}
