//! Noisy / direct-path-clean training pairs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normalize::{draw_target_dbfs, offline_gain, peak, DEFAULT_DBFS_RANGE};
use crate::synth::corpus::{Corpus, Role};
use crate::synth::ops::{extract_direct_path, fit_noise, mix_at_snr, reverberate};

pub const REVERB_PROBABILITY: f64 = 0.8;
pub const SNR_RANGE: (f64, f64) = (-5.0, 20.0);

/// Everything needed to rebuild one pair from a corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisRecipe {
    pub speech_id: String,
    pub rir_id: Option<String>,
    pub noise_id: String,
    /// In `[-5, 20]`, or `+inf` for a noise-free pair.
    pub snr_db: f64,
    pub target_dbfs: f64,
    pub seed: u64,
    /// Crop (or zero-pad) the speech to this many samples.
    pub clip_samples: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pair {
    pub noisy: Vec<f64>,
    pub clean: Vec<f64>,
    /// Gain applied to both signals.
    pub gain: f64,
    pub reverberant: bool,
}

/// Ranges recipes are drawn from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecipeRanges {
    pub snr_db: (f64, f64),
    pub target_dbfs: (f64, f64),
    pub clip_samples: Option<usize>,
}

impl Default for RecipeRanges {
    fn default() -> Self {
        RecipeRanges { snr_db: SNR_RANGE, target_dbfs: DEFAULT_DBFS_RANGE, clip_samples: None }
    }
}

impl SynthesisRecipe {
    /// Draws corpus entries and levels from `rng`.
    pub fn draw<R: Rng + ?Sized>(rng: &mut R, corpus: &Corpus, ranges: &RecipeRanges) -> Result<Self> {
        if corpus.speech.is_empty() || corpus.noises.is_empty() {
            return Err(Error::MissingEntry("corpus has no speech or no noise".into()));
        }
        let speech_id = corpus.speech[rng.random_range(0..corpus.speech.len())].id.clone();
        let rir_id = if corpus.rirs.is_empty() {
            None
        } else {
            Some(corpus.rirs[rng.random_range(0..corpus.rirs.len())].id.clone())
        };
        let noise_id = corpus.noises[rng.random_range(0..corpus.noises.len())].id.clone();
        Ok(SynthesisRecipe {
            speech_id,
            rir_id,
            noise_id,
            snr_db: rng.random_range(ranges.snr_db.0..=ranges.snr_db.1),
            target_dbfs: draw_target_dbfs(rng, ranges.target_dbfs),
            seed: rng.random(),
            clip_samples: ranges.clip_samples,
        })
    }

    /// `n` recipes drawn from a generator seeded with `seed`.
    pub fn draw_many(seed: u64, n: usize, corpus: &Corpus, ranges: &RecipeRanges) -> Result<Vec<Self>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| Self::draw(&mut rng, corpus, ranges)).collect()
    }

    /// Whether this recipe convolves with its RIR (the first draw of the
    /// recipe's own generator, true with probability 0.8).
    pub fn reverberant(&self) -> bool {
        self.rir_id.is_some() && reverb_draw(self.seed)
    }

    fn validate(&self) -> Result<()> {
        let ok = self.snr_db == f64::INFINITY || (SNR_RANGE.0..=SNR_RANGE.1).contains(&self.snr_db);
        if !ok {
            return Err(Error::InvalidArgument(format!("snr {} dB outside [-5, 20]", self.snr_db)));
        }
        if !(self.target_dbfs < 0.0) {
            return Err(Error::InvalidArgument(format!("target level {} dBFS must be negative", self.target_dbfs)));
        }
        Ok(())
    }
}

fn reverb_draw(seed: u64) -> bool {
    ChaCha8Rng::seed_from_u64(seed).random_bool(REVERB_PROBABILITY)
}

fn crop<R: Rng + ?Sized>(x: &[f64], len: Option<usize>, rng: &mut R) -> Vec<f64> {
    match len {
        Some(n) if x.len() > n => {
            let start = rng.random_range(0..=x.len() - n);
            x[start..start + n].to_vec()
        }
        Some(n) => {
            let mut v = x.to_vec();
            v.resize(n, 0.0);
            v
        }
        None => x.to_vec(),
    }
}

pub fn make_pair(recipe: &SynthesisRecipe, corpus: &Corpus) -> Result<Pair> {
    recipe.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(recipe.seed);
    let reverberant = rng.random_bool(REVERB_PROBABILITY) && recipe.rir_id.is_some();
    let speech = corpus.get(Role::Speech, &recipe.speech_id)?;
    let noise = corpus.get(Role::Noise, &recipe.noise_id)?;
    let dry = crop(&speech.samples, recipe.clip_samples, &mut rng);
    let (wet, clean) = match (&recipe.rir_id, reverberant) {
        (Some(rir_id), true) => {
            let rir = &corpus.get(Role::Rir, rir_id)?.samples;
            (reverberate(&dry, rir)?, reverberate(&dry, &extract_direct_path(rir)?)?)
        }
        _ => (dry.clone(), dry),
    };
    let noise = fit_noise(&noise.samples, wet.len(), &mut rng)?;
    let noisy = mix_at_snr(&wet, &noise, recipe.snr_db)?;
    let (mut gain, mut noisy) = offline_gain(&noisy, recipe.target_dbfs)?;
    let mut clean: Vec<f64> = clean.iter().map(|v| v * gain).collect();
    // The direct-path signal can occasionally peak above the mixture; keep
    // both inside full scale with a shared extra gain.
    let cp = peak(&clean);
    if cp >= 1.0 {
        let extra = 10f64.powf(recipe.target_dbfs / 20.0) / cp;
        gain *= extra;
        noisy.iter_mut().for_each(|v| *v *= extra);
        clean.iter_mut().for_each(|v| *v *= extra);
    }
    Ok(Pair { noisy, clean, gain, reverberant })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::corpus::DemoCorpusSpec;

    fn corpus() -> Corpus {
        Corpus::synthetic(
            11,
            DemoCorpusSpec { n_speech: 3, n_rir: 2, n_noise: 3, speech_seconds: 1.0, noise_seconds: 0.7 },
        )
    }

    #[test]
    fn dry_pair_without_noise_is_identical() {
        let c = corpus();
        let recipe = SynthesisRecipe {
            speech_id: "speech001".into(),
            rir_id: None,
            noise_id: "noise000_white".into(),
            snr_db: f64::INFINITY,
            target_dbfs: -3.0,
            seed: 5,
            clip_samples: None,
        };
        let p = make_pair(&recipe, &c).unwrap();
        assert!(!p.reverberant);
        assert_eq!(p.noisy, p.clean);
    }

    #[test]
    fn same_recipe_same_bytes() {
        let c = corpus();
        let ranges = RecipeRanges { clip_samples: Some(8000), ..Default::default() };
        for r in SynthesisRecipe::draw_many(3, 6, &c, &ranges).unwrap() {
            let a = make_pair(&r, &c).unwrap();
            let b = make_pair(&r, &c).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.noisy.len(), 8000);
            assert_eq!(a.clean.len(), 8000);
            assert!(peak(&a.noisy) < 1.0 && peak(&a.clean) < 1.0);
            assert_eq!(a.reverberant, r.reverberant());
        }
    }

    #[test]
    fn out_of_range_snr_and_missing_entry() {
        let c = corpus();
        let mut r = SynthesisRecipe::draw_many(1, 1, &c, &RecipeRanges::default()).unwrap().remove(0);
        r.snr_db = 30.0;
        assert!(make_pair(&r, &c).is_err());
        r.snr_db = 0.0;
        r.noise_id = "missing".into();
        assert!(matches!(make_pair(&r, &c), Err(Error::MissingEntry(_))));
    }
}
