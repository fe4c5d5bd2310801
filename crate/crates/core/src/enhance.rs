//! Turning network outputs into enhanced logMel spectrograms.

use crate::dsp::{apply_mask, LogMelSpectrogram, MelRatioMask, MelSpectrogram, StftEngine};
use crate::error::Result;
use crate::features::{analyze, filterbank};
use crate::model::{pack_spectrograms, unpack_bands, EnhancementModel, Mode, ModelConfig, Target};
use crate::normalize::offline_gain;
use crate::reconstruct::{PhaseMode, Reconstructor, PEAK_LIMIT};

/// Interprets a frame-major network output: the logMel itself (mapping) or
/// a mask applied to the noisy band powers (mask).
pub fn enhanced_logmel(config: &ModelConfig, output: Vec<f64>, noisy_mel: &MelSpectrogram) -> Result<LogMelSpectrogram> {
    let bands = noisy_mel.n_bands();
    match config.target {
        Target::Mapping => LogMelSpectrogram::from_frames(output, bands, config.eps()),
        Target::Mask => {
            let mask = MelRatioMask::from_frames(output.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(), bands)?;
            apply_mask(&mask, noisy_mel, config.eps())
        }
    }
}

/// Peak level the offline path brings an input to before analysis.
pub const OFFLINE_INPUT_DBFS: f64 = -3.0;

#[derive(Clone, Debug)]
pub struct Enhanced {
    /// Enhanced logMel in the model's domain (gain-scaled offline,
    /// μ-normalized online).
    pub logmel: LogMelSpectrogram,
    /// Waveform at the level of the input.
    pub waveform: Vec<f64>,
}

/// Enhances a whole utterance with either kind of model. Offline inputs are
/// brought to [`OFFLINE_INPUT_DBFS`] and the output is scaled back by the
/// inverse gain; online inputs carry their level through μ.
pub fn enhance_waveform(model: &EnhancementModel, noisy: &[f64], norm_k: usize, phase: PhaseMode) -> Result<Enhanced> {
    let fb = filterbank(&model.config);
    let engine = StftEngine::new();
    let (scaled, gain) = match model.config.mode {
        Mode::Offline => {
            let (g, s) = offline_gain(noisy, OFFLINE_INPUT_DBFS)?;
            (s, g)
        }
        Mode::Online => (noisy.to_vec(), 1.0),
    };
    let a = analyze(&engine, &scaled, &model.config, norm_k, &fb)?;
    let (y, _) = model.forward(&pack_spectrograms(&[&a.input])?)?;
    let logmel = enhanced_logmel(&model.config, unpack_bands(&y).remove(0), &a.noisy_mel)?;
    let mut waveform = Reconstructor::new(&fb)?.waveform(&logmel, &a.input, a.mus.as_deref(), phase)?;
    if gain != 1.0 {
        for v in &mut waveform {
            *v = (*v / gain).clamp(-PEAK_LIMIT, PEAK_LIMIT);
        }
    }
    Ok(Enhanced { logmel, waveform })
}
