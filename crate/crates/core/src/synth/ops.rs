//! Room acoustics and noise mixing primitives.

use num_complex::Complex64;
use rand::Rng;
use realfft::RealFftPlanner;

use crate::error::{Error, Result};

/// Samples kept before the direct-path peak (0.5 ms at 16 kHz).
pub const DIRECT_PRE: usize = 8;
/// Samples kept after the direct-path peak (2.5 ms at 16 kHz).
pub const DIRECT_POST: usize = 40;

/// Keeps `[p - pre, p + post]` around the largest-magnitude tap `p` and zeroes
/// the rest.
pub fn extract_direct_path_with(rir: &[f64], pre: usize, post: usize) -> Result<Vec<f64>> {
    if rir.is_empty() {
        return Err(Error::EmptyInput("room impulse response"));
    }
    let p = rir
        .iter()
        .enumerate()
        .fold((0, 0.0), |(bi, bv), (i, v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) });
    if p.1 == 0.0 || !p.1.is_finite() {
        return Err(Error::InvalidArgument("impulse response has no finite non-zero peak".into()));
    }
    let lo = p.0.saturating_sub(pre);
    let hi = (p.0 + post).min(rir.len() - 1);
    let mut out = vec![0.0; rir.len()];
    out[lo..=hi].copy_from_slice(&rir[lo..=hi]);
    Ok(out)
}

pub fn extract_direct_path(rir: &[f64]) -> Result<Vec<f64>> {
    extract_direct_path_with(rir, DIRECT_PRE, DIRECT_POST)
}

/// Linear convolution of `speech` with `rir`, truncated to `speech.len()`.
pub fn reverberate(speech: &[f64], rir: &[f64]) -> Result<Vec<f64>> {
    if speech.is_empty() || rir.is_empty() {
        return Err(Error::EmptyInput("reverberate input"));
    }
    let n = speech.len();
    let l = rir.len().min(n);
    let size = (n + l - 1).next_power_of_two();
    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let spectrum = |x: &[f64]| -> Vec<Complex64> {
        let mut buf = vec![0.0; size];
        buf[..x.len()].copy_from_slice(x);
        let mut out = fwd.make_output_vec();
        fwd.process(&mut buf, &mut out).expect("sizes match");
        out
    };
    let a = spectrum(speech);
    let b = spectrum(&rir[..l]);
    let mut prod: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
    prod[0].im = 0.0;
    prod[size / 2].im = 0.0;
    let mut out = vec![0.0; size];
    inv.process(&mut prod, &mut out).expect("sizes match");
    let scale = 1.0 / size as f64;
    Ok(out[..n].iter().map(|v| v * scale).collect())
}

pub fn mean_power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64
}

/// Crops (random offset) or circularly loops (random phase) `noise` to `len`.
pub fn fit_noise<R: Rng + ?Sized>(noise: &[f64], len: usize, rng: &mut R) -> Result<Vec<f64>> {
    if noise.is_empty() {
        return Err(Error::EmptyInput("noise"));
    }
    if noise.len() >= len {
        let start = rng.random_range(0..=noise.len() - len);
        Ok(noise[start..start + len].to_vec())
    } else {
        let start = rng.random_range(0..noise.len());
        Ok((0..len).map(|i| noise[(start + i) % noise.len()]).collect())
    }
}

/// Noise gain for a requested SNR: `sqrt(P_s / (P_n · 10^(snr/10)))`.
/// An infinite SNR gives gain 0.
pub fn snr_gain(speech: &[f64], noise: &[f64], snr_db: f64) -> Result<f64> {
    let ps = mean_power(speech);
    let pn = mean_power(noise);
    if !(ps > 0.0) {
        return Err(Error::InvalidArgument("speech has zero power".into()));
    }
    if !(pn > 0.0) {
        return Err(Error::InvalidArgument("noise has zero power".into()));
    }
    if snr_db.is_nan() {
        return Err(Error::NonFinite("snr"));
    }
    Ok((ps / (pn * 10f64.powf(snr_db / 10.0))).sqrt())
}

/// `speech + g · noise` at the requested SNR. `noise` must already have the
/// speech's length.
pub fn mix_at_snr(speech: &[f64], noise: &[f64], snr_db: f64) -> Result<Vec<f64>> {
    if speech.len() != noise.len() {
        return Err(Error::Shape(format!(
            "speech has {} samples, noise {}",
            speech.len(),
            noise.len()
        )));
    }
    let g = snr_gain(speech, noise, snr_db)?;
    Ok(speech.iter().zip(noise).map(|(s, n)| s + g * n).collect())
}
