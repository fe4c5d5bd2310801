//! Procedural stand-ins for a speech / RIR / noise corpus.
//!
//! Speech is a chain of syllables: an optional fricative burst followed by a
//! voiced nucleus whose harmonics are shaped by three formant resonances
//! gliding between vowel targets. Impulse responses are a direct tap, a
//! handful of early reflections and an exponentially decaying noise tail.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dsp::SAMPLE_RATE;

const FS: f64 = SAMPLE_RATE as f64;

/// First three formant frequencies (Hz) of a few vowels.
const VOWELS: [[f64; 3]; 6] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [300.0, 870.0, 2240.0],
    [530.0, 1840.0, 2480.0],
    [570.0, 840.0, 2410.0],
    [660.0, 1720.0, 2410.0],
];
const BANDWIDTHS: [f64; 3] = [90.0, 110.0, 170.0];

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Raised-cosine attack/release envelope of `len` samples.
fn envelope(len: usize, ramp: usize) -> impl Fn(usize) -> f64 {
    let ramp = ramp.min(len / 2).max(1);
    move |i| {
        if i < ramp {
            0.5 - 0.5 * (PI * i as f64 / ramp as f64).cos()
        } else if i >= len - ramp {
            0.5 - 0.5 * (PI * (len - i) as f64 / ramp as f64).cos()
        } else {
            1.0
        }
    }
}

fn formant_gain(f: f64, formants: &[f64; 3]) -> f64 {
    let mut g = 0.0;
    for (k, (&fc, &bw)) in formants.iter().zip(&BANDWIDTHS).enumerate() {
        let x = (f - fc) / bw;
        g += [1.0, 0.6, 0.35][k] / (1.0 + x * x);
    }
    // Glottal roll-off.
    g * (1.0 + f / 500.0).powf(-1.0) + 0.002
}

fn voiced(rng: &mut ChaCha8Rng, len: usize, f0_base: f64, out: &mut [f64]) {
    let v0 = VOWELS[rng.random_range(0..VOWELS.len())];
    let v1 = VOWELS[rng.random_range(0..VOWELS.len())];
    let f0_start = f0_base * rng.random_range(0.85..1.2);
    let f0_end = f0_base * rng.random_range(0.75..1.1);
    let amp = rng.random_range(0.3..1.0);
    let env = envelope(len, len / 5);
    let n_harm = (7800.0 / (f0_base * 0.75)) as usize;
    let mut phases: Vec<f64> = (0..n_harm).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    let mut gains = vec![0.0; n_harm];
    const BLOCK: usize = 32;
    for start in (0..len).step_by(BLOCK) {
        let u = start as f64 / len as f64;
        let f0 = f0_start + (f0_end - f0_start) * u;
        let mut fm = [0.0; 3];
        for k in 0..3 {
            fm[k] = v0[k] + (v1[k] - v0[k]) * u;
        }
        for (h, g) in gains.iter_mut().enumerate() {
            let f = f0 * (h + 1) as f64;
            *g = if f < 7900.0 { formant_gain(f, &fm) } else { 0.0 };
        }
        for i in start..(start + BLOCK).min(len) {
            let mut s = 0.0;
            for (h, (ph, &g)) in phases.iter_mut().zip(&gains).enumerate() {
                *ph += 2.0 * PI * f0 * (h + 1) as f64 / FS;
                if g > 0.0 {
                    s += g * ph.sin();
                }
            }
            out[i] += amp * env(i) * s * 0.25;
        }
        for ph in &mut phases {
            *ph %= 2.0 * PI;
        }
    }
}

fn fricative(rng: &mut ChaCha8Rng, len: usize, out: &mut [f64]) {
    let amp = rng.random_range(0.02..0.12);
    let env = envelope(len, len / 3);
    let mut prev = 0.0;
    for (i, o) in out.iter_mut().enumerate().take(len) {
        let w = gauss(rng);
        // First difference tilts the spectrum towards high frequencies.
        *o += amp * env(i) * (w - prev);
        prev = w;
    }
}

/// Speech-like signal of `n_samples` samples with peak around 0.5.
pub fn speech(rng: &mut ChaCha8Rng, n_samples: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_samples];
    let f0_base = rng.random_range(95.0..240.0);
    let mut pos = rng.random_range(0..1600);
    while pos < n_samples {
        if rng.random_bool(0.4) {
            let len = rng.random_range(600..1800).min(n_samples - pos);
            fricative(rng, len, &mut out[pos..]);
            pos += len;
        }
        if pos >= n_samples {
            break;
        }
        let len = rng.random_range(1800..4800).min(n_samples - pos);
        voiced(rng, len, f0_base, &mut out[pos..]);
        pos += len;
        pos += if rng.random_bool(0.2) {
            rng.random_range(3200..8000)
        } else {
            rng.random_range(400..2400)
        };
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        for v in &mut out {
            *v *= 0.5 / peak;
        }
    }
    // Recording noise floor around -90 dBFS.
    for v in &mut out {
        *v += 3e-5 * gauss(rng);
    }
    out
}

/// Room impulse response with reverberation time `t60` seconds.
pub fn rir(rng: &mut ChaCha8Rng, t60: f64) -> Vec<f64> {
    let len = ((t60 * FS) as usize).max(800);
    let mut h = vec![0.0; len];
    let d = rng.random_range(16..80);
    h[d] = 1.0;
    let decay = 6.9078 / (t60 * FS);
    for _ in 0..rng.random_range(6..12) {
        let at = d + rng.random_range(48..800);
        if at < len {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            h[at] += sign * rng.random_range(0.15..0.6) * (-decay * (at - d) as f64).exp();
        }
    }
    let tail_gain = rng.random_range(0.05..0.15);
    for (i, v) in h.iter_mut().enumerate().skip(d + 24) {
        *v += tail_gain * gauss(rng) * (-decay * (i - d) as f64).exp();
    }
    h
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseKind {
    White,
    Pink,
    Brown,
    Babble,
    Hum,
    Modulated,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 6] = [
        NoiseKind::White,
        NoiseKind::Pink,
        NoiseKind::Brown,
        NoiseKind::Babble,
        NoiseKind::Hum,
        NoiseKind::Modulated,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::White => "white",
            NoiseKind::Pink => "pink",
            NoiseKind::Brown => "brown",
            NoiseKind::Babble => "babble",
            NoiseKind::Hum => "hum",
            NoiseKind::Modulated => "modulated",
        }
    }
}

/// Noise of the given kind, peak-normalized to 0.5.
pub fn noise(rng: &mut ChaCha8Rng, kind: NoiseKind, n_samples: usize) -> Vec<f64> {
    let mut out: Vec<f64> = match kind {
        NoiseKind::White => (0..n_samples).map(|_| gauss(rng)).collect(),
        NoiseKind::Pink => {
            // Paul Kellet's economy filter.
            let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
            (0..n_samples)
                .map(|_| {
                    let w = gauss(rng);
                    b0 = 0.99765 * b0 + w * 0.0990460;
                    b1 = 0.96300 * b1 + w * 0.2965164;
                    b2 = 0.57000 * b2 + w * 1.0526913;
                    b0 + b1 + b2 + w * 0.1848
                })
                .collect()
        }
        NoiseKind::Brown => {
            let mut acc = 0.0;
            (0..n_samples)
                .map(|_| {
                    acc = 0.995 * acc + 0.1 * gauss(rng);
                    acc
                })
                .collect()
        }
        NoiseKind::Babble => {
            let mut out = vec![0.0; n_samples];
            for _ in 0..rng.random_range(4..7) {
                for (o, v) in out.iter_mut().zip(speech(rng, n_samples)) {
                    *o += v;
                }
            }
            out
        }
        NoiseKind::Hum => {
            let f = if rng.random_bool(0.5) { 50.0 } else { 60.0 };
            (0..n_samples)
                .map(|n| {
                    let t = n as f64 / FS;
                    (1..8).map(|k| (2.0 * PI * f * k as f64 * t).sin() / k as f64).sum::<f64>()
                        + 0.05 * gauss(rng)
                })
                .collect()
        }
        NoiseKind::Modulated => {
            let rate = rng.random_range(0.5..4.0);
            (0..n_samples)
                .map(|n| {
                    let m = 0.6 + 0.4 * (2.0 * PI * rate * n as f64 / FS).sin();
                    m * gauss(rng)
                })
                .collect()
        }
    };
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        for v in &mut out {
            *v *= 0.5 / peak;
        }
    }
    out
}

/// Deterministic 3 s utterance used in tests and examples.
pub fn reference_utterance() -> Vec<f64> {
    use rand::SeedableRng;
    speech(&mut ChaCha8Rng::seed_from_u64(20_240_917), 3 * SAMPLE_RATE as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn speech_is_deterministic_and_bounded() {
        let a = speech(&mut ChaCha8Rng::seed_from_u64(3), 16000);
        let b = speech(&mut ChaCha8Rng::seed_from_u64(3), 16000);
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.abs() < 0.6));
    }

    #[test]
    fn rir_peak_is_the_direct_tap() {
        let h = rir(&mut ChaCha8Rng::seed_from_u64(5), 0.6);
        let p = h.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).unwrap();
        assert_eq!(*p.1, 1.0);
        assert_eq!(h.len(), 9600);
    }

    #[test]
    fn every_noise_kind_is_finite_and_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for kind in NoiseKind::ALL {
            let n = noise(&mut rng, kind, 4000);
            let peak = n.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!((peak - 0.5).abs() < 1e-12, "{}", kind.name());
        }
    }
}
