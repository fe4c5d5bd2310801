//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use melclean_core::model::{EnhancementModel, Mode, ModelConfig, Target};
use melclean_core::synth::{make_pair, Corpus, DemoCorpusSpec, Pair, RecipeRanges, SynthesisRecipe};
use melclean_nn::{Grads, ParamSet, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random(rng: &mut ChaCha8Rng, shape: &[usize], scale: f32) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

pub fn toy(mode: Mode, target: Target, seed: u64) -> EnhancementModel {
    EnhancementModel::build(ModelConfig::toy(mode, target), seed).unwrap()
}

/// Synthesized pairs from a small demo corpus.
pub fn pairs(seed: u64, n: usize, clip_samples: usize) -> Vec<Pair> {
    let corpus = Corpus::synthetic(seed, DemoCorpusSpec::default());
    let ranges = RecipeRanges { clip_samples: Some(clip_samples), ..Default::default() };
    SynthesisRecipe::draw_many(seed + 1, n, &corpus, &ranges)
        .unwrap()
        .iter()
        .map(|r| make_pair(r, &corpus).unwrap())
        .collect()
}

fn probe(y: &Tensor, w: &[f32]) -> f64 {
    y.data().iter().zip(w).map(|(&a, &b)| a as f64 * b as f64).sum()
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    assert!(den > 1e-6, "finite-difference gradient vanishes; the check would be vacuous");
    num / den
}

/// Central finite differences of `L = Σ w·f(x)` against the analytic
/// gradients, measured norm-wise. Returns (input error, parameter error).
pub fn fd_check(
    ps: &ParamSet,
    x: &Tensor,
    fwd: impl Fn(&ParamSet, &Tensor) -> Tensor,
    bwd: impl Fn(&ParamSet, &Tensor, &Tensor, &mut Grads) -> Tensor,
    h: f32,
    max_coords: usize,
) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let y = fwd(ps, x);
    let w: Vec<f32> = (0..y.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let dy = Tensor::from_vec(y.shape(), w.clone()).unwrap();
    let mut grads = Grads::zeros_like(ps);
    let dx = bwd(ps, x, &dy, &mut grads);

    let stride = x.len().div_ceil(max_coords).max(1);
    let (mut ga, mut gf) = (Vec::new(), Vec::new());
    for i in (0..x.len()).step_by(stride) {
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp.data_mut()[i] += h;
        xm.data_mut()[i] -= h;
        let hh = (xp.data()[i] - xm.data()[i]) as f64;
        gf.push((probe(&fwd(ps, &xp), &w) - probe(&fwd(ps, &xm), &w)) / hh);
        ga.push(dx.data()[i] as f64);
    }
    let ex = rel(&ga, &gf);

    let (mut pa, mut pf) = (Vec::new(), Vec::new());
    for id in ps.ids() {
        let n = ps.get(id).len();
        let stride = n.div_ceil(max_coords / 8 + 1).max(1);
        for i in (0..n).step_by(stride) {
            let (mut pp, mut pm) = (ps.clone(), ps.clone());
            pp.get_mut(id).data_mut()[i] += h;
            pm.get_mut(id).data_mut()[i] -= h;
            let hh = (pp.get(id).data()[i] - pm.get(id).data()[i]) as f64;
            pf.push((probe(&fwd(&pp, x), &w) - probe(&fwd(&pm, x), &w)) / hh);
            pa.push(grads.get(id).data()[i] as f64);
        }
    }
    let ep = if pa.is_empty() { 0.0 } else { rel(&pa, &pf) };
    (ex, ep)
}
