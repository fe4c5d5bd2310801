//! Level alignment: a peak-based dBFS gain for offline processing and a
//! recursive magnitude normalizer for streaming.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::ComplexSpectrogram;
use crate::error::{Error, Result};

/// Lower bound on the running mean so silent streams stay finite.
pub const MU_FLOOR: f64 = 1e-10;
pub const DEFAULT_K: usize = 200;
pub const DEFAULT_DBFS_RANGE: (f64, f64) = (-6.0, -1.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormMode {
    Offline,
    Online,
}

pub fn peak(samples: &[f64]) -> f64 {
    samples.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Draws a target peak level uniformly from `range` (dBFS).
pub fn draw_target_dbfs<R: Rng + ?Sized>(rng: &mut R, range: (f64, f64)) -> f64 {
    if range.0 == range.1 {
        range.0
    } else {
        rng.random_range(range.0.min(range.1)..=range.0.max(range.1))
    }
}

/// Gain that brings the peak of `samples` to `target_dbfs`, and the scaled
/// signal. The same gain is meant to be reused on a paired clean signal.
pub fn offline_gain(samples: &[f64], target_dbfs: f64) -> Result<(f64, Vec<f64>)> {
    if !target_dbfs.is_finite() || target_dbfs > 0.0 {
        return Err(Error::InvalidArgument(format!("target level {target_dbfs} dBFS must be ≤ 0")));
    }
    let p = peak(samples);
    if !p.is_finite() {
        return Err(Error::NonFinite("samples"));
    }
    if p == 0.0 {
        return Err(Error::EmptyInput("all-zero signal has no peak to normalize"));
    }
    let gain = 10f64.powf(target_dbfs / 20.0) / p;
    Ok((gain, samples.iter().map(|v| v * gain).collect()))
}

/// Running mean of per-frame average STFT magnitude:
/// `μ(t) = α μ(t-1) + (1-α) mean_f |Y(f,t)|`, with `μ(0)` equal to the first
/// frame's mean magnitude.
#[derive(Clone, Debug, PartialEq)]
pub struct OnlineNormState {
    mu: f64,
    alpha: f64,
    frames_seen: u64,
}

impl OnlineNormState {
    /// `α = (K - 1) / (K + 1)`, matching a K-frame rectangular average.
    pub fn new(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidArgument(format!("K must be at least 2, got {k}")));
        }
        Ok(Self::with_alpha((k as f64 - 1.0) / (k as f64 + 1.0)))
    }

    pub fn with_alpha(alpha: f64) -> Self {
        assert!(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
        OnlineNormState { mu: 0.0, alpha, frames_seen: 0 }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn frames_seen(&self) -> u64 {
        self.frames_seen
    }

    /// Updates μ with `frame` and writes `frame / μ` into `out`. Returns μ.
    pub fn step(&mut self, frame: &[Complex64], out: &mut [Complex64]) -> f64 {
        let m = frame.iter().map(|c| c.norm()).sum::<f64>() / frame.len() as f64;
        let mu = if self.frames_seen == 0 { m } else { self.alpha * self.mu + (1.0 - self.alpha) * m };
        self.mu = mu.max(MU_FLOOR);
        self.frames_seen += 1;
        for (o, c) in out.iter_mut().zip(frame) {
            *o = c / self.mu;
        }
        self.mu
    }
}

/// Normalizes a whole spectrogram frame by frame; returns it with the μ trace.
pub fn online_normalize(spec: &ComplexSpectrogram, k: usize) -> Result<(ComplexSpectrogram, Vec<f64>)> {
    let mut state = OnlineNormState::new(k)?;
    let mut out = spec.clone();
    let mut mus = Vec::with_capacity(spec.n_frames());
    for t in 0..spec.n_frames() {
        let mu = state.step(spec.frame(t), out.frame_mut(t));
        mus.push(mu);
    }
    Ok((out, mus))
}

/// Multiplies frame `t` by `mus[t]`.
pub fn denormalize(spec: &ComplexSpectrogram, mus: &[f64]) -> Result<ComplexSpectrogram> {
    if mus.len() != spec.n_frames() {
        return Err(Error::Shape(format!("{} μ values for {} frames", mus.len(), spec.n_frames())));
    }
    let mut out = spec.clone();
    for (t, &mu) in mus.iter().enumerate() {
        for c in out.frame_mut(t) {
            *c *= mu;
        }
    }
    Ok(out)
}
