mod common;

use common::{pairs, toy};
use melclean_core::enhance::enhance_waveform;
use melclean_core::model::{Mode, Target};
use melclean_core::reconstruct::PhaseMode;
use melclean_core::stream::{enhance_causal, StreamSession};
use melclean_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const K: usize = 200;

fn signal(seconds: f64) -> Vec<f64> {
    let n = (seconds * 16000.0) as usize;
    let p = pairs(3, 1, n).remove(0);
    p.noisy
}

/// Random split points of `0..n`, including empty chunks.
fn chunking(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut cuts: Vec<usize> = (0..rng.random_range(1..40)).map(|_| rng.random_range(0..=n)).collect();
    cuts.push(0);
    cuts.push(n);
    cuts.sort_unstable();
    cuts
}

#[test]
fn any_chunking_matches_the_whole_signal_bitwise() {
    let x = signal(2.0);
    for target in [Target::Mapping, Target::Mask] {
        let m = toy(Mode::Online, target, 4);
        let reference = enhance_causal(&m, &x, K).unwrap();
        assert_eq!(reference.n_frames(), x.len() / 256);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let cuts = chunking(&mut rng, x.len());
            let mut s = StreamSession::new(&m, K).unwrap();
            for w in cuts.windows(2) {
                s.push(&x[w[0]..w[1]]).unwrap();
            }
            s.finalize().unwrap();
            assert_eq!(s.output(), &reference, "cuts {cuts:?}");
        }
    }
}

#[test]
fn empty_push_changes_nothing() {
    let m = toy(Mode::Online, Target::Mapping, 4);
    let x = signal(0.2);
    let mut a = StreamSession::new(&m, K).unwrap();
    let mut b = StreamSession::new(&m, K).unwrap();
    assert_eq!(a.push(&[]).unwrap().n_frames(), 0);
    a.push(&x[..1000]).unwrap();
    a.push(&[]).unwrap();
    a.push(&x[1000..]).unwrap();
    b.push(&x).unwrap();
    assert_eq!(a.output(), b.output());
}

#[test]
fn frames_are_emitted_as_soon_as_each_hop_completes() {
    let m = toy(Mode::Online, Target::Mapping, 4);
    let x = signal(0.1);
    let mut s = StreamSession::new(&m, K).unwrap();
    // Causal framing: one frame per complete hop, the first window padded
    // on the left with 256 zeros.
    assert_eq!(s.push(&x[..255]).unwrap().n_frames(), 0);
    assert_eq!(s.push(&x[255..256]).unwrap().n_frames(), 1);
    assert_eq!(s.push(&x[256..768]).unwrap().n_frames(), 2);
    assert_eq!(s.frames(), 3);
    // A trailing partial hop yields nothing at the end either.
    s.push(&x[768..900]).unwrap();
    assert_eq!(s.finalize().unwrap().n_frames(), 0);
    assert_eq!(s.frames(), 3);
}

#[test]
fn finalized_sessions_reject_input() {
    let m = toy(Mode::Online, Target::Mapping, 4);
    let mut s = StreamSession::new(&m, K).unwrap();
    s.push(&signal(0.1)).unwrap();
    s.finalize().unwrap();
    assert!(matches!(s.push(&[0.0; 10]), Err(Error::Finalized)));
    assert!(matches!(s.finalize(), Err(Error::Finalized)));
}

#[test]
fn offline_models_cannot_stream() {
    let m = toy(Mode::Offline, Target::Mapping, 4);
    assert!(matches!(StreamSession::new(&m, K), Err(Error::Config(_))));
}

#[test]
fn non_finite_samples_are_rejected() {
    let m = toy(Mode::Online, Target::Mapping, 4);
    let mut s = StreamSession::new(&m, K).unwrap();
    assert!(matches!(s.push(&[0.0, f64::NAN]), Err(Error::NonFinite(_))));
}

#[test]
fn streamed_waveform_equals_whole_utterance_enhancement() {
    let m = toy(Mode::Online, Target::Mask, 6);
    let x = signal(0.6);
    let mut s = StreamSession::new(&m, K).unwrap();
    for c in x.chunks(777) {
        s.push(c).unwrap();
    }
    s.finalize().unwrap();
    let streamed = s.waveform(PhaseMode::Noisy).unwrap();
    let whole = enhance_waveform(&m, &x, K, PhaseMode::Noisy).unwrap();
    assert_eq!(streamed, whole.waveform);
    assert_eq!(streamed.len(), x.len());
}
