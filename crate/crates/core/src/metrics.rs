//! Objective metrics: logMel MAE, log-spectral distance and SI-SDR.

use crate::dsp::LogMelSpectrogram;
use crate::error::{Error, Result};

pub const SI_SDR_CAP_DB: f64 = 60.0;
pub const LSD_FLOOR: f64 = 1e-8;

/// Mean absolute difference over all bins.
pub fn logmel_mae(a: &LogMelSpectrogram, b: &LogMelSpectrogram) -> Result<f64> {
    a.check_same(b.n_bands(), b.n_frames())?;
    let n = a.data().len();
    Ok(a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / n.max(1) as f64)
}

/// Log-spectral distance in dB between two frame-major magnitude matrices
/// with `n_bins` values per frame.
pub fn lsd(mag_a: &[f64], mag_b: &[f64], n_bins: usize) -> Result<f64> {
    if mag_a.len() != mag_b.len() || n_bins == 0 || mag_a.len() % n_bins != 0 || mag_a.is_empty() {
        return Err(Error::Shape(format!(
            "lsd needs equal whole frames of {n_bins} bins, got {} and {}",
            mag_a.len(),
            mag_b.len()
        )));
    }
    let frames = mag_a.len() / n_bins;
    let total: f64 = mag_a
        .chunks_exact(n_bins)
        .zip(mag_b.chunks_exact(n_bins))
        .map(|(fa, fb)| {
            let ms = fa
                .iter()
                .zip(fb)
                .map(|(&x, &y)| (20.0 * (x.max(LSD_FLOOR) / y.max(LSD_FLOOR)).log10()).powi(2))
                .sum::<f64>()
                / n_bins as f64;
            ms.sqrt()
        })
        .sum();
    Ok(total / frames as f64)
}

/// Scale-invariant signal-to-distortion ratio in dB, capped at 60 dB.
pub fn si_sdr(est: &[f64], reference: &[f64]) -> Result<f64> {
    if est.len() != reference.len() {
        return Err(Error::Shape(format!("{} vs {} samples", est.len(), reference.len())));
    }
    let rr: f64 = reference.iter().map(|r| r * r).sum();
    if rr == 0.0 {
        return Err(Error::InvalidArgument("reference signal is all zeros".into()));
    }
    let alpha = est.iter().zip(reference).map(|(e, r)| e * r).sum::<f64>() / rr;
    let (mut target, mut noise) = (0.0, 0.0);
    for (&e, &r) in est.iter().zip(reference) {
        let t = alpha * r;
        target += t * t;
        noise += (e - t) * (e - t);
    }
    if noise == 0.0 {
        return Ok(SI_SDR_CAP_DB);
    }
    Ok((10.0 * (target / noise).log10()).min(SI_SDR_CAP_DB))
}
