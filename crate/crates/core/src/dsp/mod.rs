//! STFT, Mel features and training targets. All signal processing is done in
//! `f64`.

pub mod mel;
pub mod stft;

pub use mel::{
    apply_mask, log_mel, mel_ratio_mask, power_mel, LogMelSpectrogram, MelFilterbank,
    MelRatioMask, MelSpectrogram, EPS_OFFLINE, EPS_ONLINE, N_MELS,
};
pub use stft::{
    istft, stft, ComplexSpectrogram, Framing, StftEngine, HOP_OFFLINE, HOP_ONLINE, N_FREQS,
    SAMPLE_RATE, WIN_LEN,
};
