//! Short-time Fourier analysis and overlap-add synthesis (512-point periodic
//! Hann window at 16 kHz).

use std::sync::Arc;

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use serde::{Deserialize, Serialize};

use crate::error::{shape, Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;
pub const WIN_LEN: usize = 512;
pub const N_FREQS: usize = WIN_LEN / 2 + 1;
pub const HOP_OFFLINE: usize = 128;
pub const HOP_ONLINE: usize = 256;
/// Lower bound on the overlap-added squared window in synthesis.
pub const WSS_FLOOR: f64 = 0.1;

/// Where frame `t` sits relative to the waveform.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Framing {
    /// Frame `t` is centered on sample `t * hop`; `win_len / 2` zeros pad
    /// both ends and `T = 1 + floor(N / hop)`.
    Centered,
    /// Frame `t` ends at sample `(t + 1) * hop`; only the left side is padded
    /// (`win_len - hop` zeros) and `T = floor(N / hop)`. No frame needs
    /// samples from the future.
    Causal,
}

impl Framing {
    /// Offset of frame 0's first sample, in waveform samples (non-positive).
    pub fn left_pad(self, hop: usize) -> usize {
        match self {
            Framing::Centered => WIN_LEN / 2,
            Framing::Causal => WIN_LEN - hop,
        }
    }

    pub fn frame_count(self, n_samples: usize, hop: usize) -> usize {
        match self {
            Framing::Centered => 1 + n_samples / hop,
            Framing::Causal => n_samples / hop,
        }
    }
}

pub fn check_hop(hop: usize) -> Result<()> {
    if hop == HOP_OFFLINE || hop == HOP_ONLINE {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("hop must be 128 or 256, got {hop}")))
    }
}

/// Periodic Hann window of length [`WIN_LEN`].
pub fn hann_window() -> Vec<f64> {
    (0..WIN_LEN)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / WIN_LEN as f64).cos())
        .collect()
}

/// Complex STFT, stored frame-major (`frames[t][f]`).
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSpectrogram {
    data: Vec<Complex64>,
    n_frames: usize,
    pub hop: usize,
    pub framing: Framing,
    /// Length of the analysed waveform; synthesis returns this many samples.
    pub signal_len: usize,
}

impl ComplexSpectrogram {
    pub fn zeros(n_frames: usize, hop: usize, framing: Framing) -> Self {
        let signal_len = match framing {
            Framing::Centered => hop * n_frames.saturating_sub(1),
            Framing::Causal => hop * n_frames,
        };
        ComplexSpectrogram {
            data: vec![Complex64::new(0.0, 0.0); n_frames * N_FREQS],
            n_frames,
            hop,
            framing,
            signal_len,
        }
    }

    /// Builds a spectrogram from frame-major data (`n_frames * n_freqs` values).
    pub fn from_frames(
        data: Vec<Complex64>,
        n_freqs: usize,
        hop: usize,
        framing: Framing,
    ) -> Result<Self> {
        if n_freqs != N_FREQS {
            return shape(format!("spectrogram has {n_freqs} bins, window {WIN_LEN} needs {N_FREQS}"));
        }
        if data.len() % N_FREQS != 0 {
            return shape(format!("{} values is not a whole number of frames", data.len()));
        }
        check_hop(hop)?;
        let mut s = Self::zeros(data.len() / N_FREQS, hop, framing);
        s.data = data;
        Ok(s)
    }

    pub fn n_freqs(&self) -> usize {
        N_FREQS
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn win_len(&self) -> usize {
        WIN_LEN
    }

    pub fn at(&self, f: usize, t: usize) -> Complex64 {
        self.data[t * N_FREQS + f]
    }

    pub fn set(&mut self, f: usize, t: usize, v: Complex64) {
        self.data[t * N_FREQS + f] = v;
    }

    pub fn frame(&self, t: usize) -> &[Complex64] {
        &self.data[t * N_FREQS..(t + 1) * N_FREQS]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [Complex64] {
        &mut self.data[t * N_FREQS..(t + 1) * N_FREQS]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[Complex64]> {
        self.data.chunks_exact(N_FREQS)
    }

    pub fn push_frame(&mut self, frame: &[Complex64]) {
        assert_eq!(frame.len(), N_FREQS);
        self.data.extend_from_slice(frame);
        self.n_frames += 1;
        self.signal_len += self.hop;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Multiplies every coefficient by `g`.
    pub fn scaled(&self, g: f64) -> Self {
        let mut out = self.clone();
        for c in &mut out.data {
            *c *= g;
        }
        out
    }
}

/// Reusable forward/inverse FFT plans plus the analysis window.
#[derive(Clone)]
pub struct StftEngine {
    fwd: Arc<dyn RealToComplex<f64>>,
    inv: Arc<dyn ComplexToReal<f64>>,
    window: Vec<f64>,
}

impl Default for StftEngine {
    fn default() -> Self {
        Self::new()
    }
}

impl StftEngine {
    pub fn new() -> Self {
        let mut planner = RealFftPlanner::<f64>::new();
        StftEngine {
            fwd: planner.plan_fft_forward(WIN_LEN),
            inv: planner.plan_fft_inverse(WIN_LEN),
            window: hann_window(),
        }
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// Windows and transforms one `WIN_LEN`-sample frame.
    pub fn analyze_frame(&self, frame: &[f64], out: &mut [Complex64]) {
        let mut buf: Vec<f64> = frame.iter().zip(&self.window).map(|(x, w)| x * w).collect();
        self.fwd.process(&mut buf, out).expect("fft sizes are fixed");
    }

    /// Inverse transform of one frame (normalized by `1 / WIN_LEN`).
    pub fn synthesize_frame(&self, spectrum: &[Complex64], out: &mut [f64]) {
        let mut spec = spectrum.to_vec();
        // The imaginary parts of DC and Nyquist must be zero for a real signal.
        spec[0].im = 0.0;
        spec[N_FREQS - 1].im = 0.0;
        self.inv.process(&mut spec, out).expect("fft sizes are fixed");
        let norm = 1.0 / WIN_LEN as f64;
        for v in out.iter_mut() {
            *v *= norm;
        }
    }

    pub fn stft(&self, samples: &[f64], hop: usize, framing: Framing) -> Result<ComplexSpectrogram> {
        check_hop(hop)?;
        if samples.is_empty() {
            return Err(Error::EmptyInput("stft samples"));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("stft samples"));
        }
        let n = samples.len();
        let n_frames = framing.frame_count(n, hop);
        if n_frames == 0 {
            return Err(Error::InvalidArgument(format!(
                "{n} samples is shorter than one hop of {hop}"
            )));
        }
        let pad = framing.left_pad(hop);
        let mut padded = vec![0.0; pad + n + WIN_LEN];
        padded[pad..pad + n].copy_from_slice(samples);
        let mut spec = ComplexSpectrogram::zeros(n_frames, hop, framing);
        spec.signal_len = n;
        for t in 0..n_frames {
            let start = t * hop;
            self.analyze_frame(&padded[start..start + WIN_LEN], spec.frame_mut(t));
        }
        Ok(spec)
    }

    pub fn istft(&self, spec: &ComplexSpectrogram) -> Result<Vec<f64>> {
        if spec.data.len() != spec.n_frames * N_FREQS {
            return shape("spectrogram data does not match its frame count");
        }
        check_hop(spec.hop)?;
        let hop = spec.hop;
        let pad = spec.framing.left_pad(hop);
        let total = pad + spec.signal_len.max(hop * spec.n_frames) + WIN_LEN;
        let mut acc = vec![0.0; total];
        let mut wss = vec![0.0; total];
        let mut frame = vec![0.0; WIN_LEN];
        for t in 0..spec.n_frames {
            self.synthesize_frame(spec.frame(t), &mut frame);
            let start = t * hop;
            for (i, (&v, &w)) in frame.iter().zip(&self.window).enumerate() {
                acc[start + i] += v * w;
                wss[start + i] += w * w;
            }
        }
        // The normalizer only falls below the floor at the signal edges (the
        // interior minimum is 0.5 for hop 256). Flooring it keeps modified
        // spectra from being amplified there by the vanishing window tail.
        Ok((0..spec.signal_len).map(|n| acc[pad + n] / wss[pad + n].max(WSS_FLOOR)).collect())
    }
}

/// Centered STFT of `samples` with the given hop.
pub fn stft(samples: &[f64], hop: usize) -> Result<ComplexSpectrogram> {
    StftEngine::new().stft(samples, hop, Framing::Centered)
}

pub fn istft(spec: &ComplexSpectrogram) -> Result<Vec<f64>> {
    StftEngine::new().istft(spec)
}
