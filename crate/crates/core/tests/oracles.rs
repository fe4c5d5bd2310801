//! Independent oracles for level normalization, pair synthesis and metrics.

mod common;

use common::pairs;
use melclean_core::dsp::{log_mel, power_mel, Framing, MelFilterbank, StftEngine, HOP_ONLINE};
use melclean_core::metrics::{logmel_mae, lsd, si_sdr};
use melclean_core::normalize::{denormalize, draw_target_dbfs, offline_gain, online_normalize, peak, DEFAULT_DBFS_RANGE};
use melclean_core::synth::generate::rir;
use melclean_core::synth::ops::mean_power;
use melclean_core::synth::{
    extract_direct_path, make_pair, mix_at_snr, reverberate, Corpus, DemoCorpusSpec, RecipeRanges, SynthesisRecipe,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noise(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn online_normalization_is_scale_invariant(seed in 0u64..1000, log_g in -4.0f64..4.0) {
        let g = 10f64.powf(log_g);
        let x = noise(seed, 4000);
        let e = StftEngine::new();
        let a = online_normalize(&e.stft(&x, HOP_ONLINE, Framing::Causal).unwrap(), 200).unwrap().0;
        let scaled: Vec<f64> = x.iter().map(|v| v * g).collect();
        let b = online_normalize(&e.stft(&scaled, HOP_ONLINE, Framing::Causal).unwrap(), 200).unwrap().0;
        for (fa, fb) in a.frames().zip(b.frames()) {
            for (p, q) in fa.iter().zip(fb) {
                prop_assert!((p - q).norm() <= 1e-9 * p.norm().max(1e-300) + 1e-12);
            }
        }
    }

    #[test]
    fn denormalization_recovers_the_frames(seed in 0u64..1000) {
        let spec = StftEngine::new().stft(&noise(seed, 3000), HOP_ONLINE, Framing::Causal).unwrap();
        let (norm, mus) = online_normalize(&spec, 50).unwrap();
        let back = denormalize(&norm, &mus).unwrap();
        for (fa, fb) in spec.frames().zip(back.frames()) {
            for (p, q) in fa.iter().zip(fb) {
                prop_assert!((p - q).norm() <= 1e-12 * p.norm().max(1e-12));
            }
        }
    }

    #[test]
    fn convolution_matches_direct_sum(seed in 0u64..1000, n in 1usize..600, l in 1usize..300) {
        let s = noise(seed, n);
        let h = noise(seed + 1, l);
        let y = reverberate(&s, &h).unwrap();
        prop_assert_eq!(y.len(), n);
        for (i, &v) in y.iter().enumerate() {
            let direct: f64 = (0..l.min(i + 1)).map(|k| h[k] * s[i - k]).sum();
            prop_assert!((v - direct).abs() < 1e-8);
        }
    }

    #[test]
    fn mixing_hits_the_requested_snr(seed in 0u64..1000, snr in -5.0f64..20.0) {
        let s = noise(seed, 2000);
        let nz: Vec<f64> = noise(seed + 7, 2000).iter().map(|v| v * 0.3).collect();
        let mix = mix_at_snr(&s, &nz, snr).unwrap();
        let residual: Vec<f64> = mix.iter().zip(&s).map(|(m, v)| m - v).collect();
        let measured = 10.0 * (mean_power(&s) / mean_power(&residual)).log10();
        prop_assert!((measured - snr).abs() < 0.01);
    }
}

#[test]
fn offline_peaks_stay_in_range_over_many_draws() {
    let (lo, hi) = (10f64.powf(-6.0 / 20.0), 10f64.powf(-1.0 / 20.0));
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for i in 0..1000 {
        let x: Vec<f64> = noise(i, 200).iter().map(|v| v * rng.random_range(0.01..3.0)).collect();
        let target = draw_target_dbfs(&mut rng, DEFAULT_DBFS_RANGE);
        let (_, y) = offline_gain(&x, target).unwrap();
        let p = peak(&y);
        assert!(p >= lo * (1.0 - 1e-12) && p <= hi * (1.0 + 1e-12) && p < 1.0, "draw {i}: {p}");
    }
}

#[test]
fn reverb_fraction_is_eighty_percent() {
    let corpus = Corpus::synthetic(1, DemoCorpusSpec { n_speech: 2, n_rir: 2, n_noise: 2, speech_seconds: 0.5, noise_seconds: 0.5 });
    let recipes = SynthesisRecipe::draw_many(9, 10_000, &corpus, &RecipeRanges::default()).unwrap();
    let frac = recipes.iter().filter(|r| r.reverberant()).count() as f64 / 1e4;
    assert!((0.78..=0.82).contains(&frac), "{frac}");
    // The flag reflects what synthesis actually does.
    for r in recipes.iter().take(20) {
        assert_eq!(make_pair(r, &corpus).unwrap().reverberant, r.reverberant());
    }
}

#[test]
fn direct_path_keeps_the_peak_and_drops_energy() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for t60 in [0.2, 0.5, 1.0] {
        let h = rir(&mut rng, t60);
        let d = extract_direct_path(&h).unwrap();
        let p = h.iter().enumerate().fold((0, 0.0), |m, (i, v)| if v.abs() > m.1 { (i, v.abs()) } else { m }).0;
        assert_eq!(d[p], h[p]);
        assert!(mean_power(&d) < mean_power(&h));
        for (i, (&a, &b)) in d.iter().zip(&h).enumerate() {
            if i + 8 < p || i > p + 40 {
                assert_eq!(a, 0.0);
            } else {
                assert_eq!(a, b);
            }
        }
    }
}

#[test]
fn pairs_share_gain_and_length() {
    for p in pairs(6, 12, 6000) {
        assert_eq!(p.noisy.len(), p.clean.len());
        assert!(peak(&p.noisy) < 1.0 && peak(&p.clean) < 1.0);
        assert!(p.noisy.iter().chain(&p.clean).all(|v| v.is_finite()));
    }
    assert_eq!(pairs(6, 3, 6000), pairs(6, 3, 6000));
}

#[test]
fn logmel_mae_matches_brute_force() {
    let fb = MelFilterbank::new();
    let e = StftEngine::new();
    let a = log_mel(&power_mel(&e.stft(&noise(1, 3000), 128, Framing::Centered).unwrap(), &fb).unwrap(), 1e-5).unwrap();
    let b = log_mel(&power_mel(&e.stft(&noise(2, 3000), 128, Framing::Centered).unwrap(), &fb).unwrap(), 1e-5).unwrap();
    let mut sum = 0.0;
    for t in 0..a.n_frames() {
        for m in 0..a.n_bands() {
            sum += (a.at(m, t) - b.at(m, t)).abs();
        }
    }
    let brute = sum / (a.n_frames() * a.n_bands()) as f64;
    assert!((logmel_mae(&a, &b).unwrap() - brute).abs() < 1e-7);
}

#[test]
fn lsd_matches_brute_force() {
    let a: Vec<f64> = noise(3, 257 * 6).iter().map(|v| v.abs() + 0.01).collect();
    let b: Vec<f64> = noise(4, 257 * 6).iter().map(|v| v.abs() + 0.01).collect();
    let mut total = 0.0;
    for t in 0..6 {
        let mut s = 0.0;
        for k in 0..257 {
            let d = 20.0 * (a[t * 257 + k] / b[t * 257 + k]).log10();
            s += d * d;
        }
        total += (s / 257.0).sqrt();
    }
    assert!((lsd(&a, &b, 257).unwrap() - total / 6.0).abs() < 1e-6);
}

#[test]
fn si_sdr_with_orthogonal_noise_matches_closed_form() {
    let r = noise(5, 4000);
    let mut n = noise(6, 4000);
    // Remove the component of n along r.
    let k = n.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / r.iter().map(|v| v * v).sum::<f64>();
    n.iter_mut().zip(&r).for_each(|(a, b)| *a -= k * b);
    for target_db in [-5.0, 0.0, 12.5, 30.0] {
        let g = (mean_power(&r) / (mean_power(&n) * 10f64.powf(target_db / 10.0))).sqrt();
        let est: Vec<f64> = r.iter().zip(&n).map(|(a, b)| 2.0 * a + 2.0 * g * b).collect();
        assert!((si_sdr(&est, &r).unwrap() - target_db).abs() < 0.01);
    }
}
