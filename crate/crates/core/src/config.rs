//! Run configuration read from a TOML file.
//!
//! ```toml
//! seed = 7
//!
//! [norm]
//! mode = "online"
//! K = 200
//! target_dbfs_range = [-6.0, -1.0]
//!
//! [model]
//! preset = "toy-online"
//! target = "mask"
//!
//! [train]
//! lr0 = 0.001
//! batch_size = 4
//!
//! [synth]
//! clip_ms = 500
//! ```
//!
//! Every section and key is optional.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Mode, ModelConfig, Target};
use crate::normalize::{NormMode, DEFAULT_DBFS_RANGE, DEFAULT_K};
use crate::synth::{RecipeRanges, SNR_RANGE};
use crate::train::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormConfig {
    /// Must agree with the model's mode when given.
    pub mode: Option<NormMode>,
    #[serde(rename = "K")]
    pub k: usize,
    pub target_dbfs_range: (f64, f64),
}

impl Default for NormConfig {
    fn default() -> Self {
        NormConfig { mode: None, k: DEFAULT_K, target_dbfs_range: DEFAULT_DBFS_RANGE }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub preset: String,
    pub target: Target,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { preset: "toy-online".into(), target: Target::Mask }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    /// Crop every utterance to this length.
    pub clip_ms: Option<u64>,
    pub snr_db_range: (f64, f64),
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection { clip_ms: None, snr_db_range: SNR_RANGE }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub norm: NormConfig,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub synth: SynthSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::NotFound(path.to_path_buf()));
        }
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.norm.target_dbfs_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi && hi < 0.0) {
            return Err(Error::Config(format!("norm.target_dbfs_range [{lo}, {hi}] must be ordered and below 0 dBFS")));
        }
        if self.norm.k < 2 {
            return Err(Error::Config(format!("norm.K must be at least 2, got {}", self.norm.k)));
        }
        let (slo, shi) = self.synth.snr_db_range;
        if !(SNR_RANGE.0 <= slo && slo <= shi && shi <= SNR_RANGE.1) {
            return Err(Error::Config(format!("synth.snr_db_range [{slo}, {shi}] must lie within [-5, 20] dB")));
        }
        if self.synth.clip_ms == Some(0) {
            return Err(Error::Config("synth.clip_ms must be positive".into()));
        }
        self.train.validate()?;
        self.model_config(None).map(|_| ())
    }

    /// The model configuration, with `target` overriding the file.
    pub fn model_config(&self, target: Option<Target>) -> Result<ModelConfig> {
        let cfg = ModelConfig::preset(&self.model.preset, target.unwrap_or(self.model.target))?;
        self.check_mode(cfg.mode)?;
        Ok(cfg)
    }

    /// Fails when `norm.mode` disagrees with a model's mode.
    pub fn check_mode(&self, mode: Mode) -> Result<()> {
        let expected = match mode {
            Mode::Online => NormMode::Online,
            Mode::Offline => NormMode::Offline,
        };
        match self.norm.mode {
            Some(m) if m != expected => {
                Err(Error::Config(format!("norm.mode {m:?} does not match a {mode:?} model")))
            }
            _ => Ok(()),
        }
    }

    pub fn recipe_ranges(&self) -> RecipeRanges {
        RecipeRanges {
            snr_db: self.synth.snr_db_range,
            target_dbfs: self.norm.target_dbfs_range,
            clip_samples: self.synth.clip_ms.map(|ms| (ms * 16) as usize),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn full_file_parses() {
        let cfg = RunConfig::parse(
            "seed = 7\n[norm]\nmode = \"offline\"\nK = 50\ntarget_dbfs_range = [-5.0, -2.0]\n\
             [model]\npreset = \"toy-offline\"\ntarget = \"mapping\"\n[train]\nlr0 = 0.002\n[synth]\nclip_ms = 250\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.norm.k, 50);
        assert_eq!(cfg.train.lr0, 0.002);
        assert_eq!(cfg.recipe_ranges().clip_samples, Some(4000));
        assert_eq!(cfg.model_config(None).unwrap().mode, Mode::Offline);
        assert_eq!(cfg.model_config(Some(Target::Mask)).unwrap().target, Target::Mask);
    }

    #[test]
    fn malformed_files_are_config_errors() {
        for text in [
            "seed = \"x\"",
            "[norm]\nK = 1",
            "[norm]\ntarget_dbfs_range = [-1.0, 2.0]",
            "[norm]\nmode = \"online\"\n[model]\npreset = \"toy-offline\"",
            "[model]\npreset = \"huge\"",
            "[bogus]\nx = 1",
            "[train]\nlr0 = -1.0",
        ] {
            assert!(matches!(RunConfig::parse(text), Err(Error::Config(_))), "{text}");
        }
    }
}
