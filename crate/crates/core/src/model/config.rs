use serde::{Deserialize, Serialize};

use crate::dsp::{HOP_OFFLINE, HOP_ONLINE, N_FREQS, N_MELS};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Causal: causal convolutions, forward-only Mamba, hop 256.
    Online,
    /// Non-causal: centered convolutions, averaged forward/backward Mamba, hop 128.
    Offline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    /// The head predicts the logMel spectrogram directly.
    Mapping,
    /// The head predicts a ratio mask through a sigmoid.
    Mask,
}

/// Frequency axis of the later blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FreqScale {
    /// 80 Mel bands after the hidden filterbank.
    Mel,
    /// Keep all 257 linear bins (an identity in place of the filterbank).
    Linear,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "online" => Ok(Mode::Online),
            "offline" => Ok(Mode::Offline),
            _ => Err(Error::Config(format!("mode must be online or offline, got '{s}'"))),
        }
    }
}

impl std::str::FromStr for Target {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mapping" => Ok(Target::Mapping),
            "mask" => Ok(Target::Mask),
            _ => Err(Error::Config(format!("target must be mapping or mask, got '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub mode: Mode,
    /// Number of cross-band/narrow-band pairs: one linear-frequency pair plus
    /// `depth - 1` pairs after the filterbank.
    pub depth: usize,
    pub hidden: usize,
    pub target: Target,
    pub hop: usize,
    /// Divisor applied to `hidden` around the linear-frequency F-Linear.
    pub compression: usize,
    pub freq_scale: FreqScale,
    pub d_state: usize,
    pub expand: usize,
    pub conv_groups: usize,
    pub kernel: usize,
}

impl ModelConfig {
    pub fn new(mode: Mode, depth: usize, hidden: usize, target: Target) -> Self {
        ModelConfig {
            mode,
            depth,
            hidden,
            target,
            hop: match mode {
                Mode::Online => HOP_ONLINE,
                Mode::Offline => HOP_OFFLINE,
            },
            compression: 12,
            freq_scale: FreqScale::Mel,
            d_state: 16,
            expand: 2,
            conv_groups: 8,
            kernel: 5,
        }
    }

    pub fn offline_s(target: Target) -> Self {
        Self::new(Mode::Offline, 8, 96, target)
    }

    pub fn offline_l(target: Target) -> Self {
        Self::new(Mode::Offline, 16, 144, target)
    }

    pub fn online_s(target: Target) -> Self {
        Self::new(Mode::Online, 16, 96, target)
    }

    /// Desk-scale model: depth 2, 24 hidden units.
    pub fn toy(mode: Mode, target: Target) -> Self {
        Self::new(mode, 2, 24, target)
    }

    /// Looks up a named preset (`offline-s`, `offline-l`, `online-s`,
    /// `toy-online`, `toy-offline`).
    pub fn preset(name: &str, target: Target) -> Result<Self> {
        match name {
            "offline-s" => Ok(Self::offline_s(target)),
            "offline-l" => Ok(Self::offline_l(target)),
            "online-s" => Ok(Self::online_s(target)),
            "toy-online" => Ok(Self::toy(Mode::Online, target)),
            "toy-offline" => Ok(Self::toy(Mode::Offline, target)),
            _ => Err(Error::Config(format!("unknown model preset '{name}'"))),
        }
    }

    pub fn n_bands(&self) -> usize {
        match self.freq_scale {
            FreqScale::Mel => N_MELS,
            FreqScale::Linear => N_FREQS,
        }
    }

    pub fn compressed(&self) -> usize {
        self.hidden / self.compression
    }

    pub fn eps(&self) -> f64 {
        match self.mode {
            Mode::Online => crate::dsp::EPS_ONLINE,
            Mode::Offline => crate::dsp::EPS_OFFLINE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.depth < 2 {
            return bad(format!("depth must be at least 2, got {}", self.depth));
        }
        if self.hidden == 0 || self.compression == 0 || self.hidden % self.compression != 0 {
            return bad(format!(
                "hidden size {} must be a positive multiple of the compression divisor {}",
                self.hidden, self.compression
            ));
        }
        if self.conv_groups == 0 || self.hidden % self.conv_groups != 0 {
            return bad(format!("hidden size {} is not divisible into {} groups", self.hidden, self.conv_groups));
        }
        if self.kernel % 2 == 0 {
            return bad(format!("kernel size {} must be odd", self.kernel));
        }
        if self.d_state == 0 || self.expand == 0 {
            return bad("state size and expansion must be positive".into());
        }
        crate::dsp::stft::check_hop(self.hop).map_err(|e| Error::Config(e.to_string()))
    }
}
