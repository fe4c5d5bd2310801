//! Chunked inference for online models.
//!
//! A [`StreamSession`] accepts samples in arbitrary chunks, frames them with
//! causal framing, normalizes each frame with the running μ and feeds the new
//! frames through the model's streaming state. The frames it emits are
//! bitwise identical to [`enhance_causal`] on the whole signal, whatever the
//! chunking.

use crate::dsp::{power_mel, ComplexSpectrogram, Framing, LogMelSpectrogram, MelFilterbank, StftEngine, N_FREQS, WIN_LEN};
use crate::enhance::enhanced_logmel;
use crate::error::{Error, Result};
use crate::features::{analyze, filterbank};
use crate::model::{pack_spectrograms, unpack_bands, EnhancementModel, ModelState, Mode};
use crate::normalize::OnlineNormState;
use crate::reconstruct::{PhaseMode, Reconstructor};

/// Enhanced output of one or more frames, in the normalized domain.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StreamOutput {
    /// Frame-major `[frames, bands]` enhanced logMel.
    pub logmel: Vec<f64>,
    /// μ of each frame.
    pub mus: Vec<f64>,
}

impl StreamOutput {
    pub fn n_frames(&self) -> usize {
        self.mus.len()
    }

    fn extend(&mut self, other: StreamOutput) {
        self.logmel.extend(other.logmel);
        self.mus.extend(other.mus);
    }
}

pub struct StreamSession<'m> {
    model: &'m EnhancementModel,
    engine: StftEngine,
    fb: MelFilterbank,
    norm: OnlineNormState,
    state: ModelState,
    /// Unconsumed samples, led by the `WIN_LEN - hop` samples of history.
    buffer: Vec<f64>,
    samples_in: usize,
    /// Normalized noisy spectrum of every emitted frame (kept for phase).
    input: ComplexSpectrogram,
    output: StreamOutput,
    finalized: bool,
}

impl<'m> StreamSession<'m> {
    pub fn new(model: &'m EnhancementModel, norm_k: usize) -> Result<Self> {
        if model.config.mode != Mode::Online {
            return Err(Error::Config("streaming needs an online model".into()));
        }
        let hop = model.config.hop;
        Ok(StreamSession {
            model,
            engine: StftEngine::new(),
            fb: filterbank(&model.config),
            norm: OnlineNormState::new(norm_k)?,
            state: model.init_state(1)?,
            buffer: vec![0.0; WIN_LEN - hop],
            samples_in: 0,
            input: ComplexSpectrogram::zeros(0, hop, Framing::Causal),
            output: StreamOutput::default(),
            finalized: false,
        })
    }

    /// Frames emitted so far.
    pub fn frames(&self) -> usize {
        self.output.n_frames()
    }

    /// Appends samples and returns the frames they completed (possibly none).
    pub fn push(&mut self, samples: &[f64]) -> Result<StreamOutput> {
        if self.finalized {
            return Err(Error::Finalized);
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("stream samples"));
        }
        let hop = self.model.config.hop;
        self.buffer.extend_from_slice(samples);
        self.samples_in += samples.len();
        let n_new = (self.buffer.len() + hop - WIN_LEN) / hop;
        if n_new == 0 {
            return Ok(StreamOutput::default());
        }
        let mut chunk = ComplexSpectrogram::zeros(n_new, hop, Framing::Causal);
        let mut raw = vec![Default::default(); N_FREQS];
        let mut mus = Vec::with_capacity(n_new);
        for t in 0..n_new {
            self.engine.analyze_frame(&self.buffer[t * hop..t * hop + WIN_LEN], &mut raw);
            mus.push(self.norm.step(&raw, chunk.frame_mut(t)));
        }
        self.buffer.drain(..n_new * hop);
        for t in 0..n_new {
            self.input.push_frame(chunk.frame(t));
        }

        let x = pack_spectrograms(&[&chunk])?;
        let y = self.model.forward_stream(&x, &mut self.state)?;
        let noisy_mel = power_mel(&chunk, &self.fb)?;
        let out = enhanced_logmel(&self.model.config, unpack_bands(&y).remove(0), &noisy_mel)?;
        let out = StreamOutput { logmel: out.data().to_vec(), mus };
        self.output.extend(out.clone());
        Ok(out)
    }

    /// Ends the stream. A trailing partial hop produces no frame, matching
    /// causal framing of the whole signal. Further pushes fail.
    pub fn finalize(&mut self) -> Result<StreamOutput> {
        if self.finalized {
            return Err(Error::Finalized);
        }
        self.finalized = true;
        self.input.signal_len = self.samples_in;
        Ok(StreamOutput::default())
    }

    /// Everything emitted so far.
    pub fn output(&self) -> &StreamOutput {
        &self.output
    }

    /// Synthesizes the enhanced waveform of a finalized session, scaled back
    /// to the input level.
    pub fn waveform(&self, phase: PhaseMode) -> Result<Vec<f64>> {
        if !self.finalized {
            return Err(Error::InvalidArgument("finalize the session before synthesis".into()));
        }
        if self.output.n_frames() == 0 {
            return Err(Error::EmptyInput("stream shorter than one hop"));
        }
        let logmel = LogMelSpectrogram::from_frames(self.output.logmel.clone(), self.model.n_bands(), self.model.config.eps())?;
        Reconstructor::new(&self.fb)?.waveform(&logmel, &self.input, Some(&self.output.mus), phase)
    }
}

/// Whole-signal causal enhancement of an online model; the reference the
/// streaming path must reproduce.
pub fn enhance_causal(model: &EnhancementModel, samples: &[f64], norm_k: usize) -> Result<StreamOutput> {
    if model.config.mode != Mode::Online {
        return Err(Error::Config("causal enhancement needs an online model".into()));
    }
    let fb = filterbank(&model.config);
    let a = analyze(&StftEngine::new(), samples, &model.config, norm_k, &fb)?;
    let (y, _) = model.forward(&pack_spectrograms(&[&a.input])?)?;
    let out = enhanced_logmel(&model.config, unpack_bands(&y).remove(0), &a.noisy_mel)?;
    Ok(StreamOutput { logmel: out.data().to_vec(), mus: a.mus.unwrap_or_default() })
}
