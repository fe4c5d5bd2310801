mod common;

use common::{fd_check, random, toy};
use melclean_core::dsp::{MelFilterbank, N_FREQS, N_MELS};
use melclean_core::model::{average_checkpoints, EnhancementModel, FreqScale, Mode, ModelConfig, Target};
use melclean_core::model::blocks::{BandTransform, NarrowBand};
use melclean_core::Error;
use melclean_nn::{Grads, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn input(seed: u64, frames: usize) -> Tensor {
    random(&mut rng(seed), &[1, N_FREQS, frames, 2], 1.0)
}

/// Indices of `[rows, cols, ...]` rows (axis 0 groups of `inner` values)
/// whose contents differ.
fn changed_groups(a: &Tensor, b: &Tensor, group: usize) -> Vec<usize> {
    a.data()
        .chunks(group)
        .zip(b.data().chunks(group))
        .enumerate()
        .filter(|(_, (x, y))| x != y)
        .map(|(i, _)| i)
        .collect()
}

#[test]
fn toy_model_runs_on_a_short_input() {
    let m = toy(Mode::Offline, Target::Mapping, 0);
    let (y, _) = m.forward(&input(1, 10)).unwrap();
    assert_eq!(y.shape(), [1, N_MELS, 10]);
    assert!(y.is_finite());
}

#[test]
fn wrong_input_shapes_are_rejected() {
    let m = toy(Mode::Offline, Target::Mapping, 0);
    assert!(matches!(m.forward(&Tensor::zeros(&[1, 256, 4, 2])), Err(Error::Shape(_))));
    assert!(matches!(m.forward(&Tensor::zeros(&[1, N_FREQS, 0, 2])), Err(Error::Shape(_))));
    let mut bad = input(1, 3);
    bad.data_mut()[5] = f32::NAN;
    assert!(matches!(m.forward(&bad), Err(Error::NonFinite(_))));
}

#[test]
fn offline_small_parameter_count() {
    let m = EnhancementModel::build(ModelConfig::offline_s(Target::Mapping), 0).unwrap();
    let n = m.num_params() as f64;
    eprintln!("offline S parameters: {n}");
    assert!((n - 2.5e6).abs() <= 0.15 * 2.5e6);
}

#[test]
fn build_is_deterministic_per_seed() {
    let a = toy(Mode::Online, Target::Mask, 3);
    let b = toy(Mode::Online, Target::Mask, 3);
    let c = toy(Mode::Online, Target::Mask, 4);
    assert_eq!(a.params, b.params);
    assert_ne!(a.params, c.params);
}

#[test]
fn mask_output_is_strictly_inside_unit_interval() {
    let m = toy(Mode::Offline, Target::Mask, 0);
    let (y, _) = m.forward(&input(2, 8).map(|v| v * 50.0)).unwrap();
    assert!(y.data().iter().all(|&v| v > 0.0 && v < 1.0));
}

#[test]
fn cross_band_is_frame_independent() {
    let m = toy(Mode::Offline, Target::Mapping, 5);
    let (t, h) = (6, m.config.hidden);
    for (block, f) in [(&m.lin_cross, N_FREQS), (&m.band_cross[0], N_MELS)] {
        let x = random(&mut rng(6), &[t, f, h], 1.0);
        let (y0, _) = block.forward(&m.params, &x).unwrap();
        for probe in [0, 3, t - 1] {
            let mut xp = x.clone();
            xp.data_mut()[probe * f * h + 7] += 0.5;
            let (y1, _) = block.forward(&m.params, &xp).unwrap();
            assert_eq!(changed_groups(&y0, &y1, f * h), vec![probe]);
        }
    }
}

#[test]
fn narrow_band_and_input_layer_are_frequency_independent() {
    for mode in [Mode::Online, Mode::Offline] {
        let m = toy(mode, Target::Mapping, 7);
        let (f, t, h) = (12, 9, m.config.hidden);
        let x = random(&mut rng(8), &[f, t, h], 1.0);
        let (y0, _) = m.lin_narrow.forward(&m.params, &x, None).unwrap();
        let xi = random(&mut rng(9), &[f, t, 2], 1.0);
        let (z0, _) = m.input.forward(&m.params, &xi).unwrap();
        for probe in [0, 5, f - 1] {
            let mut xp = x.clone();
            xp.data_mut()[probe * t * h + 3 * h + 1] -= 0.7;
            let (y1, _) = m.lin_narrow.forward(&m.params, &xp, None).unwrap();
            assert_eq!(changed_groups(&y0, &y1, t * h), vec![probe], "{mode:?}");

            let mut xq = xi.clone();
            xq.data_mut()[probe * t * 2 + 4] += 0.3;
            let (z1, _) = m.input.forward(&m.params, &xq).unwrap();
            assert_eq!(changed_groups(&z0, &z1, t * h), vec![probe], "{mode:?}");
        }
    }
}

/// Frames of `[1, bands, T]` whose value changed.
fn changed_frames(a: &Tensor, b: &Tensor) -> Vec<usize> {
    let t = a.shape()[2];
    let mut out: Vec<usize> = (0..a.len()).filter(|&i| a.data()[i] != b.data()[i]).map(|i| i % t).collect();
    out.sort_unstable();
    out.dedup();
    out
}

#[test]
fn online_model_is_causal() {
    let m = toy(Mode::Online, Target::Mapping, 11);
    let t = 12;
    let x = input(12, t);
    let (y0, _) = m.forward(&x).unwrap();
    for probe in [0, 5, t - 1] {
        let mut xp = x.clone();
        for f in 0..N_FREQS {
            xp.data_mut()[(f * t + probe) * 2] += 0.25;
        }
        let (y1, _) = m.forward(&xp).unwrap();
        let changed = changed_frames(&y0, &y1);
        assert!(!changed.is_empty());
        assert!(changed.iter().all(|&c| c >= probe), "frame {probe} leaked into {changed:?}");
    }
}

#[test]
fn offline_model_sees_the_future() {
    let m = toy(Mode::Offline, Target::Mapping, 13);
    let t = 12;
    let x = input(14, t);
    let (y0, _) = m.forward(&x).unwrap();
    let mut xp = x.clone();
    xp.data_mut()[(40 * t + t - 1) * 2] += 1.0;
    let (y1, _) = m.forward(&xp).unwrap();
    assert!(changed_frames(&y0, &y1).contains(&0));
}

#[test]
fn shared_flinear_drives_every_band_block() {
    let mut cfg = ModelConfig::toy(Mode::Offline, Target::Mapping);
    cfg.depth = 3;
    let mut m = EnhancementModel::build(cfg, 15).unwrap();
    assert!(m.band_cross.iter().all(|b| b.flinear.w == m.shared_flinear.w && b.flinear.b == m.shared_flinear.b));
    let x = random(&mut rng(16), &[4, N_MELS, cfg.hidden], 1.0);
    let before: Vec<Tensor> = m.band_cross.iter().map(|b| b.forward(&m.params, &x).unwrap().0).collect();
    let w = m.shared_flinear.w;
    m.params.get_mut(w).data_mut()[0] += 0.5;
    for (b, y0) in m.band_cross.iter().zip(&before) {
        let (y1, _) = b.forward(&m.params, &x).unwrap();
        assert_ne!(&y1, y0);
    }
}

#[test]
fn zeroed_cross_band_is_identity() {
    let mut m = toy(Mode::Offline, Target::Mapping, 17);
    for t in m.params.tensors_mut() {
        t.data_mut().fill(0.0);
    }
    let x = random(&mut rng(18), &[3, N_FREQS, m.config.hidden], 1.0);
    assert_eq!(m.lin_cross.forward(&m.params, &x).unwrap().0, x);
    let xb = random(&mut rng(19), &[3, N_MELS, m.config.hidden], 1.0);
    assert_eq!(m.band_cross[0].forward(&m.params, &xb).unwrap().0, xb);
}

#[test]
fn band_transform_matches_dense_product() {
    let fb = MelFilterbank::new();
    let bt = BandTransform::new(fb.weights(), N_MELS, N_FREQS);
    let h = 5;
    let x = random(&mut rng(20), &[2, N_FREQS, h], 1.0);
    let y = bt.forward(&x).unwrap();
    for n in 0..2 {
        for m in 0..N_MELS {
            for c in 0..h {
                let dense: f64 = (0..N_FREQS).map(|k| fb.weight(m, k) * x.data()[(n * N_FREQS + k) * h + c] as f64).sum();
                let got = y.data()[(n * N_MELS + m) * h + c] as f64;
                assert!((got - dense).abs() <= 1e-6 * dense.abs().max(1.0), "{got} vs {dense}");
            }
        }
    }
    let mut one_hot = Tensor::zeros(&[1, N_FREQS, 1]);
    one_hot.data_mut()[30] = 1.0;
    let col = bt.forward(&one_hot).unwrap();
    for m in 0..N_MELS {
        assert_eq!(col.data()[m], fb.weight(m, 30) as f32);
    }
}

#[test]
fn online_forward_equals_chunked_stream_bitwise() {
    let m = toy(Mode::Online, Target::Mask, 21);
    let t = 17;
    let x = input(22, t);
    let (full, _) = m.forward(&x).unwrap();
    for cuts in [vec![1, 16], vec![5, 5, 7], vec![1; 17]] {
        let mut state = m.init_state(1).unwrap();
        let mut parts = Vec::new();
        let mut start = 0;
        for len in cuts {
            let chunk = x.clone().reshape(&[N_FREQS, t, 2]).unwrap().slice_axis1(start, start + len);
            let y = m.forward_stream(&chunk.reshape(&[1, N_FREQS, len, 2]).unwrap(), &mut state).unwrap();
            parts.push(y.reshape(&[N_MELS, len, 1]).unwrap());
            start += len;
        }
        let refs: Vec<&Tensor> = parts.iter().collect();
        let joined = Tensor::concat_axis1(&refs).unwrap().reshape(&[1, N_MELS, t]).unwrap();
        assert_eq!(joined, full);
    }
}

#[test]
fn streaming_requires_an_online_model() {
    assert!(matches!(toy(Mode::Offline, Target::Mapping, 0).init_state(1), Err(Error::Config(_))));
}

#[test]
fn bidirectional_block_is_reversal_equivariant() {
    let m = toy(Mode::Offline, Target::Mapping, 23);
    let nb = &m.lin_narrow;
    let swapped = NarrowBand { fwd: nb.bwd.clone().unwrap(), bwd: Some(nb.fwd.clone()) };
    let x = random(&mut rng(24), &[3, 10, m.config.hidden], 1.0);
    let (y, _) = nb.forward(&m.params, &x, None).unwrap();
    let (yr, _) = swapped.forward(&m.params, &x.reverse_axis1(), None).unwrap();
    assert_eq!(yr.reverse_axis1(), y);
}

#[test]
fn end_to_end_gradients_match_finite_differences() {
    for (mode, target) in [(Mode::Offline, Target::Mapping), (Mode::Online, Target::Mask)] {
        let mut cfg = ModelConfig::toy(mode, target);
        cfg.hidden = 12;
        cfg.compression = 4;
        cfg.conv_groups = 2;
        let m = EnhancementModel::build(cfg, 25).unwrap();
        let x = random(&mut rng(26), &[1, N_FREQS, 4, 2], 1.0);
        let (ex, ep) = fd_check(
            &m.params,
            &x,
            |ps, x| m.forward_with(ps, x).unwrap().0,
            |ps, x, dy, g: &mut Grads| {
                let (_, c) = m.forward_with(ps, x).unwrap();
                m.backward_with(ps, &c, dy, g).unwrap()
            },
            1e-2,
            48,
        );
        eprintln!("{mode:?}/{target:?}: input {ex:.2e}, params {ep:.2e}");
        assert!(ex < 2e-3 && ep < 2e-3, "{mode:?}/{target:?}: input {ex:.2e}, params {ep:.2e}");
    }
}

#[test]
fn linear_scale_model_keeps_all_bins() {
    let mut cfg = ModelConfig::toy(Mode::Offline, Target::Mask);
    cfg.freq_scale = FreqScale::Linear;
    let m = EnhancementModel::build(cfg, 0).unwrap();
    assert_eq!(m.forward(&input(1, 3)).unwrap().0.shape(), [1, N_FREQS, 3]);
}

#[test]
fn checkpoints_round_trip_and_average() {
    let dir = std::env::temp_dir().join(format!("melclean-ckpt-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let m = toy(Mode::Online, Target::Mapping, 27);
    let p1 = dir.join("a.ckpt");
    m.save(&p1, serde_json::json!({ "epoch": 4 })).unwrap();
    let (back, meta) = EnhancementModel::load(&p1).unwrap();
    assert_eq!(back.params, m.params);
    assert_eq!(meta["epoch"], 4);
    assert_eq!(average_checkpoints(&[&p1]).unwrap().params, m.params);

    // Parameters all 0 and all 2 average to all 1.
    let (mut zero, mut two) = (m.clone(), m.clone());
    zero.params.tensors_mut().for_each(|t| t.data_mut().fill(0.0));
    two.params.tensors_mut().for_each(|t| t.data_mut().fill(2.0));
    let (pz, p2) = (dir.join("zero.ckpt"), dir.join("two.ckpt"));
    zero.save(&pz, serde_json::Value::Null).unwrap();
    two.save(&p2, serde_json::Value::Null).unwrap();
    let avg = average_checkpoints(&[&pz, &p2]).unwrap();
    assert!(avg.params.iter().all(|(_, t)| t.data().iter().all(|&v| v == 1.0)));

    // An average of two distinct models behaves like neither.
    let other = toy(Mode::Online, Target::Mapping, 28);
    let p3 = dir.join("b.ckpt");
    other.save(&p3, serde_json::Value::Null).unwrap();
    let mid = average_checkpoints(&[&p1, &p3]).unwrap();
    let x = input(29, 5);
    let y = mid.forward(&x).unwrap().0;
    assert_ne!(y, m.forward(&x).unwrap().0);
    assert_ne!(y, other.forward(&x).unwrap().0);

    let offline = toy(Mode::Offline, Target::Mapping, 27);
    assert!(matches!(EnhancementModel::load_expecting(&p1, &offline.config), Err(Error::CheckpointMismatch(_))));
    let p4 = dir.join("off.ckpt");
    offline.save(&p4, serde_json::Value::Null).unwrap();
    assert!(matches!(average_checkpoints(&[&p1, &p4]), Err(Error::CheckpointMismatch(_))));
    assert!(matches!(EnhancementModel::load(dir.join("missing.ckpt")), Err(Error::NotFound(_))));
    std::fs::remove_dir_all(&dir).unwrap();
}
