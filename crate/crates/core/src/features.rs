//! Per-mode analysis: the network input, the noisy and clean band powers in
//! the normalized domain, and the training target.
//!
//! Offline: centered framing at hop 128 on waveforms that already carry the
//! dBFS gain. Online: left-only framing at hop 256 followed by recursive μ
//! normalization; the clean spectrogram is divided by the *noisy* μ trace so
//! both live in the same domain.

use crate::dsp::{
    log_mel, mel_ratio_mask, power_mel, ComplexSpectrogram, Framing, LogMelSpectrogram, MelFilterbank,
    MelSpectrogram, StftEngine,
};
use crate::error::{Error, Result};
use crate::model::{FreqScale, Mode, ModelConfig, Target};
use crate::normalize::OnlineNormState;
use crate::synth::Pair;

pub fn framing(mode: Mode) -> Framing {
    match mode {
        Mode::Online => Framing::Causal,
        Mode::Offline => Framing::Centered,
    }
}

/// The filterbank matching a configuration's band axis.
pub fn filterbank(config: &ModelConfig) -> MelFilterbank {
    match config.freq_scale {
        FreqScale::Mel => MelFilterbank::new(),
        FreqScale::Linear => MelFilterbank::identity(),
    }
}

/// Noisy-side analysis of one utterance.
#[derive(Clone, Debug)]
pub struct Analysis {
    /// The network input (μ-normalized in online mode).
    pub input: ComplexSpectrogram,
    /// Per-frame μ in online mode.
    pub mus: Option<Vec<f64>>,
    /// Band powers of `input`.
    pub noisy_mel: MelSpectrogram,
}

pub fn analyze(engine: &StftEngine, noisy: &[f64], config: &ModelConfig, norm_k: usize, fb: &MelFilterbank) -> Result<Analysis> {
    let spec = engine.stft(noisy, config.hop, framing(config.mode))?;
    let (input, mus) = match config.mode {
        Mode::Offline => (spec, None),
        Mode::Online => {
            let mut state = OnlineNormState::new(norm_k)?;
            let mut out = spec.clone();
            let mus = (0..spec.n_frames()).map(|t| state.step(spec.frame(t), out.frame_mut(t))).collect();
            (out, Some(mus))
        }
    };
    let noisy_mel = power_mel(&input, fb)?;
    Ok(Analysis { input, mus, noisy_mel })
}

/// Clean band powers in the same domain as `analysis`.
pub fn clean_mel(
    engine: &StftEngine,
    clean: &[f64],
    analysis: &Analysis,
    config: &ModelConfig,
    fb: &MelFilterbank,
) -> Result<MelSpectrogram> {
    let mut spec = engine.stft(clean, config.hop, framing(config.mode))?;
    if spec.n_frames() != analysis.input.n_frames() {
        return Err(Error::Shape("clean and noisy signals differ in length".into()));
    }
    if let Some(mus) = &analysis.mus {
        for (t, &mu) in mus.iter().enumerate() {
            for c in spec.frame_mut(t) {
                *c /= mu;
            }
        }
    }
    power_mel(&spec, fb)
}

/// One supervised example.
#[derive(Clone, Debug)]
pub struct Example {
    pub analysis: Analysis,
    pub clean_mel: MelSpectrogram,
    /// Frame-major `[frames, bands]` target: the clean logMel (mapping) or
    /// the ratio mask (mask).
    pub target: Vec<f64>,
}

impl Example {
    pub fn n_frames(&self) -> usize {
        self.analysis.input.n_frames()
    }

    pub fn noisy_logmel(&self, eps: f64) -> Result<LogMelSpectrogram> {
        log_mel(&self.analysis.noisy_mel, eps)
    }

    pub fn clean_logmel(&self, eps: f64) -> Result<LogMelSpectrogram> {
        log_mel(&self.clean_mel, eps)
    }
}

pub fn make_example(engine: &StftEngine, pair: &Pair, config: &ModelConfig, norm_k: usize, fb: &MelFilterbank) -> Result<Example> {
    let analysis = analyze(engine, &pair.noisy, config, norm_k, fb)?;
    let clean_mel = clean_mel(engine, &pair.clean, &analysis, config, fb)?;
    let target = match config.target {
        Target::Mapping => log_mel(&clean_mel, config.eps())?.data().to_vec(),
        Target::Mask => mel_ratio_mask(&clean_mel, &analysis.noisy_mel)?.data().to_vec(),
    };
    Ok(Example { analysis, clean_mel, target })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::N_MELS;
    use crate::synth::{make_pair, Corpus, DemoCorpusSpec, RecipeRanges, SynthesisRecipe};

    fn pair() -> Pair {
        let corpus = Corpus::synthetic(3, DemoCorpusSpec { n_speech: 2, n_rir: 2, n_noise: 2, ..Default::default() });
        let ranges = RecipeRanges { clip_samples: Some(8000), ..Default::default() };
        let recipe = SynthesisRecipe::draw_many(4, 1, &corpus, &ranges).unwrap().remove(0);
        make_pair(&recipe, &corpus).unwrap()
    }

    #[test]
    fn online_example_is_scale_free() {
        let p = pair();
        let cfg = ModelConfig::toy(Mode::Online, Target::Mapping);
        let fb = filterbank(&cfg);
        let e = StftEngine::new();
        let a = make_example(&e, &p, &cfg, 200, &fb).unwrap();
        let scaled = Pair {
            noisy: p.noisy.iter().map(|v| v * 0.125).collect(),
            clean: p.clean.iter().map(|v| v * 0.125).collect(),
            ..p
        };
        let b = make_example(&e, &scaled, &cfg, 200, &fb).unwrap();
        assert_eq!(a.n_frames(), 8000 / 256);
        for (x, y) in a.target.iter().zip(&b.target) {
            assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
        }
    }

    #[test]
    fn mask_target_lies_in_unit_interval() {
        let cfg = ModelConfig::toy(Mode::Offline, Target::Mask);
        let ex = make_example(&StftEngine::new(), &pair(), &cfg, 200, &filterbank(&cfg)).unwrap();
        assert_eq!(ex.target.len(), ex.n_frames() * N_MELS);
        assert!(ex.target.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(ex.n_frames(), 1 + 8000 / 128);
    }
}
