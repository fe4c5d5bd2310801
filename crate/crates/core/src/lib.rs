//! Speech enhancement on the logMel spectrogram.
//!
//! The crate covers the whole pipeline: STFT and Mel features, level
//! normalization, training-pair synthesis, the enhancement network, training,
//! streaming inference, waveform reconstruction and evaluation metrics.

pub mod audio;
pub mod config;
pub mod dsp;
pub mod enhance;
pub mod error;
pub mod features;
pub mod metrics;
pub mod model;
pub mod normalize;
pub mod reconstruct;
pub mod stream;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
