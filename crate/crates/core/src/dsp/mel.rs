//! Mel filterbank, band powers, log compression and ratio-mask targets.

use crate::dsp::stft::{ComplexSpectrogram, N_FREQS, SAMPLE_RATE, WIN_LEN};
use crate::error::{shape, Error, Result};

pub const N_MELS: usize = 80;
pub const F_MIN: f64 = 0.0;
pub const F_MAX: f64 = 8000.0;
/// Log floor for offline processing.
pub const EPS_OFFLINE: f64 = 1e-5;
/// Log floor for online processing.
pub const EPS_ONLINE: f64 = 1e-4;

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Centre frequency of FFT bin `k`.
pub fn bin_hz(k: usize) -> f64 {
    k as f64 * SAMPLE_RATE as f64 / WIN_LEN as f64
}

/// Band weights `[n_bands, 257]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MelFilterbank {
    weights: Vec<f64>,
    n_bands: usize,
    pub fmin: f64,
    pub fmax: f64,
}

impl MelFilterbank {
    /// 80 peak-normalized triangles on the HTK mel scale over 0–8 kHz.
    pub fn new() -> Self {
        let (lo, hi) = (hz_to_mel(F_MIN), hz_to_mel(F_MAX));
        let edges: Vec<f64> = (0..N_MELS + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (N_MELS + 1) as f64))
            .collect();
        let mut weights = vec![0.0; N_MELS * N_FREQS];
        for m in 0..N_MELS {
            let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
            for k in 0..N_FREQS {
                let f = bin_hz(k);
                let w = if f > l && f <= c {
                    (f - l) / (c - l)
                } else if f > c && f < r {
                    (r - f) / (r - c)
                } else {
                    0.0
                };
                weights[m * N_FREQS + k] = w;
            }
        }
        MelFilterbank { weights, n_bands: N_MELS, fmin: F_MIN, fmax: F_MAX }
    }

    /// One band per FFT bin. Used for the linear-frequency model variant.
    pub fn identity() -> Self {
        let mut weights = vec![0.0; N_FREQS * N_FREQS];
        for k in 0..N_FREQS {
            weights[k * N_FREQS + k] = 1.0;
        }
        MelFilterbank { weights, n_bands: N_FREQS, fmin: 0.0, fmax: F_MAX }
    }

    pub fn n_bands(&self) -> usize {
        self.n_bands
    }

    pub fn n_freqs(&self) -> usize {
        N_FREQS
    }

    pub fn weight(&self, m: usize, k: usize) -> f64 {
        self.weights[m * N_FREQS + k]
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * N_FREQS..(m + 1) * N_FREQS]
    }

    /// Row-major weights `[n_bands, 257]`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Applies the filterbank to one frame of per-bin values.
    pub fn project(&self, bins: &[f64], out: &mut [f64]) {
        for (m, o) in out.iter_mut().enumerate().take(self.n_bands) {
            *o = self.row(m).iter().zip(bins).map(|(w, v)| w * v).sum();
        }
    }
}

impl Default for MelFilterbank {
    fn default() -> Self {
        Self::new()
    }
}

macro_rules! band_matrix {
    ($name:ident) => {
        impl $name {
            pub fn n_bands(&self) -> usize {
                self.n_bands
            }

            pub fn n_frames(&self) -> usize {
                self.n_frames
            }

            pub fn at(&self, m: usize, t: usize) -> f64 {
                self.data[t * self.n_bands + m]
            }

            pub fn set(&mut self, m: usize, t: usize, v: f64) {
                self.data[t * self.n_bands + m] = v;
            }

            pub fn frame(&self, t: usize) -> &[f64] {
                &self.data[t * self.n_bands..(t + 1) * self.n_bands]
            }

            /// Frame-major values (`[T, n_bands]`).
            pub fn data(&self) -> &[f64] {
                &self.data
            }

            pub(crate) fn check_same(&self, other_bands: usize, other_frames: usize) -> Result<()> {
                if self.n_bands != other_bands || self.n_frames != other_frames {
                    return shape(format!(
                        "[{}, {}] vs [{}, {}]",
                        self.n_bands, self.n_frames, other_bands, other_frames
                    ));
                }
                Ok(())
            }
        }
    };
}

/// Band powers `[n_bands, T]` stored frame-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MelSpectrogram {
    data: Vec<f64>,
    n_bands: usize,
    n_frames: usize,
}

/// Natural-log band powers, floored at `ln(eps)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogMelSpectrogram {
    data: Vec<f64>,
    n_bands: usize,
    n_frames: usize,
    pub eps: f64,
}

/// Ratio mask in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MelRatioMask {
    data: Vec<f64>,
    n_bands: usize,
    n_frames: usize,
}

band_matrix!(MelSpectrogram);
band_matrix!(LogMelSpectrogram);
band_matrix!(MelRatioMask);

fn check_layout(len: usize, n_bands: usize) -> Result<usize> {
    if n_bands == 0 || len % n_bands != 0 {
        return shape(format!("{len} values is not a whole number of {n_bands}-band frames"));
    }
    Ok(len / n_bands)
}

impl MelSpectrogram {
    pub fn from_frames(data: Vec<f64>, n_bands: usize) -> Result<Self> {
        let n_frames = check_layout(data.len(), n_bands)?;
        if data.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument("band powers must be finite and non-negative".into()));
        }
        Ok(MelSpectrogram { data, n_bands, n_frames })
    }
}

impl LogMelSpectrogram {
    /// Wraps values that are already logarithmic, applying the floor.
    pub fn from_frames(mut data: Vec<f64>, n_bands: usize, eps: f64) -> Result<Self> {
        check_eps(eps)?;
        let n_frames = check_layout(data.len(), n_bands)?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("log-mel values"));
        }
        let floor = eps.ln();
        for v in &mut data {
            *v = v.max(floor);
        }
        Ok(LogMelSpectrogram { data, n_bands, n_frames, eps })
    }

    /// Fraction of bins sitting exactly at the floor.
    pub fn clipped_fraction(&self) -> f64 {
        let floor = self.eps.ln();
        self.data.iter().filter(|&&v| v <= floor).count() as f64 / self.data.len().max(1) as f64
    }

    /// `exp` of every value.
    pub fn to_power(&self) -> MelSpectrogram {
        MelSpectrogram {
            data: self.data.iter().map(|v| v.exp()).collect(),
            n_bands: self.n_bands,
            n_frames: self.n_frames,
        }
    }
}

impl MelRatioMask {
    /// Wraps mask values, which must already lie in `[0, 1]`.
    pub fn from_frames(data: Vec<f64>, n_bands: usize) -> Result<Self> {
        let n_frames = check_layout(data.len(), n_bands)?;
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument("mask values must lie in [0, 1]".into()));
        }
        Ok(MelRatioMask { data, n_bands, n_frames })
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")))
    }
}

/// `M[m, t] = Σ_f fb[m, f] |Y[f, t]|²`.
pub fn power_mel(spec: &ComplexSpectrogram, fb: &MelFilterbank) -> Result<MelSpectrogram> {
    if spec.n_freqs() != fb.n_freqs() {
        return shape(format!("spectrogram has {} bins, filterbank {}", spec.n_freqs(), fb.n_freqs()));
    }
    let nb = fb.n_bands();
    let mut data = vec![0.0; nb * spec.n_frames()];
    let mut pow = vec![0.0; N_FREQS];
    for (t, frame) in spec.frames().enumerate() {
        for (p, c) in pow.iter_mut().zip(frame) {
            *p = c.norm_sqr();
        }
        fb.project(&pow, &mut data[t * nb..(t + 1) * nb]);
    }
    Ok(MelSpectrogram { data, n_bands: nb, n_frames: spec.n_frames() })
}

pub fn log_mel(mel: &MelSpectrogram, eps: f64) -> Result<LogMelSpectrogram> {
    check_eps(eps)?;
    Ok(LogMelSpectrogram {
        data: mel.data.iter().map(|v| v.max(eps).ln()).collect(),
        n_bands: mel.n_bands,
        n_frames: mel.n_frames,
        eps,
    })
}

/// `min(sqrt(clean / noisy), 1)`. Where `noisy` is zero the mask is 1 if
/// `clean` is positive and 0 otherwise.
pub fn mel_ratio_mask(clean: &MelSpectrogram, noisy: &MelSpectrogram) -> Result<MelRatioMask> {
    clean.check_same(noisy.n_bands, noisy.n_frames)?;
    let data = clean
        .data
        .iter()
        .zip(&noisy.data)
        .map(|(&c, &n)| {
            if n > 0.0 {
                (c / n).sqrt().min(1.0)
            } else if c > 0.0 {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Ok(MelRatioMask { data, n_bands: clean.n_bands, n_frames: clean.n_frames })
}

/// `ln(max(mask² · noisy, eps))`.
pub fn apply_mask(mask: &MelRatioMask, noisy: &MelSpectrogram, eps: f64) -> Result<LogMelSpectrogram> {
    check_eps(eps)?;
    mask.check_same(noisy.n_bands, noisy.n_frames)?;
    Ok(LogMelSpectrogram {
        data: mask.data.iter().zip(&noisy.data).map(|(&m, &n)| (m * m * n).max(eps).ln()).collect(),
        n_bands: mask.n_bands,
        n_frames: mask.n_frames,
        eps,
    })
}
