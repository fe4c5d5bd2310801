//! Waveform reconstruction from an enhanced logMel spectrogram.
//!
//! Band powers are mapped back to linear bins with the least-squares
//! pseudo-inverse of the filterbank, clamped at zero and square-rooted. The
//! phase comes from the noisy STFT or from Griffin-Lim iterations. Online
//! output is multiplied back by the per-frame μ before the inverse STFT.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::dsp::{ComplexSpectrogram, LogMelSpectrogram, MelFilterbank, StftEngine, N_FREQS};
use crate::error::{Error, Result};

/// Samples are clamped to this magnitude after synthesis.
pub const PEAK_LIMIT: f64 = 0.999;
pub const DEFAULT_GL_ITERS: usize = 32;
/// Singular values below this fraction of the largest are treated as zero.
pub const PINV_RCOND: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhaseMode {
    /// Reuse the phase of the reference (noisy) STFT.
    Noisy,
    /// Griffin-Lim, starting from the reference phase.
    GriffinLim { iters: usize },
}

pub struct Reconstructor {
    engine: StftEngine,
    bands: usize,
    /// `[257, bands]`, row-major.
    pinv: Vec<f64>,
}

impl Reconstructor {
    pub fn new(fb: &MelFilterbank) -> Result<Self> {
        let bands = fb.n_bands();
        let m = DMatrix::from_row_slice(bands, fb.n_freqs(), fb.weights());
        // The lowest Mel triangles are narrower than one FFT bin, so some
        // share their support and the matrix is (nearly) rank deficient.
        // Directions below the relative cutoff are dropped, not amplified.
        let cutoff = PINV_RCOND * m.singular_values().max();
        let p = m
            .pseudo_inverse(cutoff)
            .map_err(|e| Error::InvalidArgument(format!("filterbank pseudo-inverse failed: {e}")))?;
        let mut pinv = vec![0.0; fb.n_freqs() * bands];
        for k in 0..fb.n_freqs() {
            for b in 0..bands {
                pinv[k * bands + b] = p[(k, b)];
            }
        }
        Ok(Reconstructor { engine: StftEngine::new(), bands, pinv })
    }

    /// Frame-major `[frames, 257]` magnitudes: `sqrt(max(pinv · exp(logmel), 0))`.
    pub fn linear_magnitude(&self, logmel: &LogMelSpectrogram) -> Result<Vec<f64>> {
        if logmel.n_bands() != self.bands {
            return Err(Error::Shape(format!("logMel has {} bands, filterbank {}", logmel.n_bands(), self.bands)));
        }
        let mut out = vec![0.0; logmel.n_frames() * N_FREQS];
        let mut power = vec![0.0; self.bands];
        for t in 0..logmel.n_frames() {
            for (p, &v) in power.iter_mut().zip(logmel.frame(t)) {
                *p = v.exp();
            }
            for (k, o) in out[t * N_FREQS..(t + 1) * N_FREQS].iter_mut().enumerate() {
                let row = &self.pinv[k * self.bands..(k + 1) * self.bands];
                let s: f64 = row.iter().zip(&power).map(|(a, b)| a * b).sum();
                *o = s.max(0.0).sqrt();
            }
        }
        Ok(out)
    }

    /// Synthesizes a waveform. `reference` supplies the framing, length and
    /// phase; `mus` (required for causal framing) rescales frame `t` by `μ(t)`.
    pub fn waveform(
        &self,
        logmel: &LogMelSpectrogram,
        reference: &ComplexSpectrogram,
        mus: Option<&[f64]>,
        phase: PhaseMode,
    ) -> Result<Vec<f64>> {
        let t = logmel.n_frames();
        if reference.n_frames() != t {
            return Err(Error::Shape(format!("{t} logMel frames but {} reference frames", reference.n_frames())));
        }
        let mut mag = self.linear_magnitude(logmel)?;
        match (reference.framing, mus) {
            (crate::dsp::Framing::Causal, None) => {
                return Err(Error::InvalidArgument("online reconstruction needs the μ trace".into()))
            }
            (_, Some(mus)) => {
                if mus.len() != t {
                    return Err(Error::Shape(format!("{} μ values for {t} frames", mus.len())));
                }
                for (frame, &mu) in mag.chunks_exact_mut(N_FREQS).zip(mus) {
                    frame.iter_mut().for_each(|m| *m *= mu);
                }
            }
            _ => {}
        }
        let mut spec = reference.clone();
        apply_magnitude(&mut spec, &mag, None);
        if let PhaseMode::GriffinLim { iters } = phase {
            for _ in 0..iters {
                let x = self.engine.istft(&spec)?;
                let again = self.engine.stft(&x, spec.hop, spec.framing)?;
                apply_magnitude(&mut spec, &mag, Some(&again));
            }
        }
        let mut x = self.engine.istft(&spec)?;
        for v in &mut x {
            *v = v.clamp(-PEAK_LIMIT, PEAK_LIMIT);
        }
        Ok(x)
    }
}

/// Sets `|spec| = mag`, keeping the phase of `phase_from` (or of `spec`).
/// Bins with no phase information get phase zero.
fn apply_magnitude(spec: &mut ComplexSpectrogram, mag: &[f64], phase_from: Option<&ComplexSpectrogram>) {
    for t in 0..spec.n_frames() {
        let src: Vec<Complex64> = match phase_from {
            Some(p) => p.frame(t).to_vec(),
            None => spec.frame(t).to_vec(),
        };
        for ((c, s), &m) in spec.frame_mut(t).iter_mut().zip(src).zip(&mag[t * N_FREQS..(t + 1) * N_FREQS]) {
            let n = s.norm();
            *c = if n > 0.0 { s * (m / n) } else { Complex64::new(m, 0.0) };
        }
    }
}
