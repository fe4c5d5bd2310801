//! WAV reading and writing (16 kHz mono).

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::dsp::SAMPLE_RATE;
use crate::error::{Error, Result};

/// Reads a 16 kHz mono file stored as 16-bit PCM or 32-bit float.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    let reader = WavReader::open(path)?;
    let spec = reader.spec();
    if spec.sample_rate != SAMPLE_RATE || spec.channels != 1 {
        return Err(Error::AudioFormat(format!(
            "{}: need 16000 Hz mono, got {} Hz with {} channels",
            path.display(),
            spec.sample_rate,
            spec.channels
        )));
    }
    match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| Ok(s? as f64 / 32768.0))
            .collect(),
        (SampleFormat::Float, 32) => reader.into_samples::<f32>().map(|s| Ok(s? as f64)).collect(),
        (fmt, bits) => Err(Error::AudioFormat(format!(
            "{}: unsupported sample format {fmt:?} with {bits} bits",
            path.display()
        ))),
    }
}

/// Writes 16-bit PCM, clamping to the representable range.
pub fn write_wav(path: impl AsRef<Path>, samples: &[f64]) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut w = WavWriter::create(path, spec)?;
    for &s in samples {
        w.write_sample((s * 32768.0).round().clamp(-32768.0, 32767.0) as i16)?;
    }
    w.finalize()?;
    Ok(())
}

/// Writes 32-bit float samples without quantization.
pub fn write_wav_f32(path: impl AsRef<Path>, samples: &[f64]) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut w = WavWriter::create(path, spec)?;
    for &s in samples {
        w.write_sample(s as f32)?;
    }
    w.finalize()?;
    Ok(())
}
