//! The full enhancement network.
//!
//! ```text
//! [B, 257, T, 2] ─ T-Conv1d ─ cross-band(257, H/c) ─ narrow-band
//!   ─ filterbank 257→bands ─ L × (cross-band(bands, shared F-Linear) ─ narrow-band)
//!   ─ Linear(H→1) [─ sigmoid] → [B, bands, T]
//! ```

use melclean_nn::activation::{sigmoid, sigmoid_backward};
use melclean_nn::{
    AxisLinear, Conv1d, Grads, Linear, MambaConfig, MambaState, Padding, ParamSet, Tensor,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dsp::{ComplexSpectrogram, MelFilterbank, N_FREQS};
use crate::error::{Error, Result};
use crate::model::blocks::{swap_inner, BandTransform, CrossBand, CrossBandCache, NarrowBand, NarrowBandCache};
use crate::model::config::{FreqScale, Mode, ModelConfig, Target};

/// f32 sigmoids round to exactly 0 or 1 for large arguments; the mask head
/// keeps its output strictly inside the unit interval.
pub const MASK_FLOOR: f32 = f32::MIN_POSITIVE;
pub const MASK_CEIL: f32 = 1.0 - f32::EPSILON / 2.0;

#[derive(Clone, Debug)]
pub struct EnhancementModel {
    pub config: ModelConfig,
    pub params: ParamSet,
    pub input: Conv1d,
    pub lin_cross: CrossBand,
    pub lin_narrow: NarrowBand,
    pub transform: BandTransform,
    /// The F-Linear shared by every post-filterbank cross-band block.
    pub shared_flinear: AxisLinear,
    pub band_cross: Vec<CrossBand>,
    pub band_narrow: Vec<NarrowBand>,
    pub head: Linear,
}

/// Intermediate values kept for the backward pass.
pub struct ModelCache {
    batch: usize,
    frames: usize,
    input_xp: Tensor,
    lin_cross: CrossBandCache,
    lin_narrow: NarrowBandCache,
    band_cross: Vec<CrossBandCache>,
    band_narrow: Vec<NarrowBandCache>,
    head_in: Tensor,
    /// Sigmoid outputs for the mask target.
    mask: Option<Tensor>,
}

/// Causal streaming state of an online model for a batch of streams.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    batch: usize,
    input_hist: Vec<f32>,
    narrow: Vec<MambaState>,
}

impl ModelState {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

impl EnhancementModel {
    /// Builds the model with parameters drawn from `seed`.
    pub fn build(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamSet::new();
        let h = config.hidden;
        let padding = match config.mode {
            Mode::Online => Padding::Causal,
            Mode::Offline => Padding::Centered,
        };
        let bands = config.n_bands();
        let mamba = MambaConfig { d_model: h, expand: config.expand, d_state: config.d_state, d_conv: 4 };
        let bidirectional = config.mode == Mode::Offline;

        let input = Conv1d::new(&mut ps, &mut rng, "input.tconv", 2, h, config.kernel, 1, padding, true)?;
        let c = config.compressed();
        let lin_fl = AxisLinear::new(&mut ps, &mut rng, "lin_cross.flinear", N_FREQS, c);
        let lin_cross = CrossBand::new(
            &mut ps,
            &mut rng,
            "lin_cross",
            h,
            config.conv_groups,
            config.kernel,
            Some(c),
            lin_fl,
        )?;
        let lin_narrow = NarrowBand::new(&mut ps, &mut rng, "lin_narrow", mamba, bidirectional)?;
        let fb = match config.freq_scale {
            FreqScale::Mel => MelFilterbank::new(),
            FreqScale::Linear => MelFilterbank::identity(),
        };
        let transform = BandTransform::new(fb.weights(), bands, N_FREQS);
        let shared_flinear = AxisLinear::new(&mut ps, &mut rng, "band_cross.shared_flinear", bands, h);
        let mut band_cross = Vec::new();
        let mut band_narrow = Vec::new();
        for i in 0..config.depth - 1 {
            band_cross.push(CrossBand::new(
                &mut ps,
                &mut rng,
                &format!("band_cross.{i}"),
                h,
                config.conv_groups,
                config.kernel,
                None,
                shared_flinear.clone(),
            )?);
            band_narrow.push(NarrowBand::new(&mut ps, &mut rng, &format!("band_narrow.{i}"), mamba, bidirectional)?);
        }
        let head = Linear::new(&mut ps, &mut rng, "head", h, 1, true);
        Ok(EnhancementModel {
            config,
            params: ps,
            input,
            lin_cross,
            lin_narrow,
            transform,
            shared_flinear,
            band_cross,
            band_narrow,
            head,
        })
    }

    pub fn num_params(&self) -> usize {
        self.params.num_scalars()
    }

    pub fn n_bands(&self) -> usize {
        self.config.n_bands()
    }

    pub fn init_state(&self, batch: usize) -> Result<ModelState> {
        if self.config.mode != Mode::Online {
            return Err(Error::Config("streaming state requires an online model".into()));
        }
        let rows = batch * N_FREQS;
        let band_rows = batch * self.n_bands();
        let mut narrow = vec![self.lin_narrow.fwd.init_state(rows)];
        narrow.extend(self.band_narrow.iter().map(|nb| nb.fwd.init_state(band_rows)));
        Ok(ModelState { batch, input_hist: vec![0.0; rows * self.input.history_len() * 2], narrow })
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize)> {
        let s = x.shape();
        if s.len() != 4 || s[1] != N_FREQS || s[3] != 2 || s[2] == 0 {
            return Err(Error::Shape(format!("model input must be [batch, 257, frames>0, 2], got {s:?}")));
        }
        Ok((s[0], s[2]))
    }

    /// `x: [batch, 257, frames, 2]` (real and imaginary parts) → `[batch, bands, frames]`.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, ModelCache)> {
        self.run(&self.params, x, None)
    }

    pub fn forward_with(&self, ps: &ParamSet, x: &Tensor) -> Result<(Tensor, ModelCache)> {
        self.run(ps, x, None)
    }

    /// Processes the next chunk of frames of an online stream.
    pub fn forward_stream(&self, x: &Tensor, state: &mut ModelState) -> Result<Tensor> {
        let (b, _) = self.check_input(x)?;
        if b != state.batch {
            return Err(Error::Shape(format!("state holds {} streams, input {b}", state.batch)));
        }
        Ok(self.run(&self.params, x, Some(state))?.0)
    }

    fn run(&self, ps: &ParamSet, x: &Tensor, mut state: Option<&mut ModelState>) -> Result<(Tensor, ModelCache)> {
        let (b, t) = self.check_input(x)?;
        if !x.is_finite() {
            return Err(Error::NonFinite("model input"));
        }
        let f = N_FREQS;
        let bands = self.n_bands();
        let rows = x.clone().reshape(&[b * f, t, 2])?;
        let (hid, input_xp) = match state.as_deref_mut() {
            Some(st) => self.input.forward_stream(ps, &rows, &mut st.input_hist)?,
            None => self.input.forward(ps, &rows)?,
        };

        let (hc, lin_cross) = self.lin_cross.forward(ps, &swap_inner(&hid, b, f, t))?;
        let st0 = state.as_deref_mut().map(|s| &mut s.narrow[0]);
        let (hn, lin_narrow) = self.lin_narrow.forward(ps, &swap_inner(&hc, b, t, f), st0)?;

        let mut h = self.transform.forward(&swap_inner(&hn, b, f, t))?;
        let mut band_cross = Vec::with_capacity(self.band_cross.len());
        let mut band_narrow = Vec::with_capacity(self.band_narrow.len());
        for (i, (cb, nb)) in self.band_cross.iter().zip(&self.band_narrow).enumerate() {
            let (y, c) = cb.forward(ps, &h)?;
            band_cross.push(c);
            let st = state.as_deref_mut().map(|s| &mut s.narrow[i + 1]);
            let (y, c) = nb.forward(ps, &swap_inner(&y, b, t, bands), st)?;
            band_narrow.push(c);
            h = swap_inner(&y, b, bands, t);
        }
        // Back to [b * bands, t, hidden] for the per-bin head.
        let head_in = swap_inner(&h, b, t, bands);
        let out = self.head.forward(ps, &head_in)?.reshape(&[b, bands, t])?;
        let (out, mask) = match self.config.target {
            Target::Mapping => (out, None),
            Target::Mask => {
                let m = out.map(|v| sigmoid(v).clamp(MASK_FLOOR, MASK_CEIL));
                (m.clone(), Some(m))
            }
        };
        Ok((
            out,
            ModelCache { batch: b, frames: t, input_xp, lin_cross, lin_narrow, band_cross, band_narrow, head_in, mask },
        ))
    }

    /// Accumulates parameter gradients for `dy = dL/d(output)` and returns
    /// `dL/d(input)`.
    pub fn backward(&self, cache: &ModelCache, dy: &Tensor, grads: &mut Grads) -> Result<Tensor> {
        self.backward_with(&self.params, cache, dy, grads)
    }

    pub fn backward_with(&self, ps: &ParamSet, cache: &ModelCache, dy: &Tensor, grads: &mut Grads) -> Result<Tensor> {
        let (b, t) = (cache.batch, cache.frames);
        let (f, bands) = (N_FREQS, self.n_bands());
        if dy.shape() != [b, bands, t] {
            return Err(Error::Shape(format!("output gradient {:?} does not match [{b}, {bands}, {t}]", dy.shape())));
        }
        let dpre = match &cache.mask {
            Some(m) => Tensor::from_vec(dy.shape(), sigmoid_backward(m.data(), dy.data()))?,
            None => dy.clone(),
        };
        let dpre = dpre.reshape(&[b * bands, t, 1])?;
        let dh = self.head.backward(ps, &cache.head_in, &dpre, grads);
        let mut dh = swap_inner(&dh, b, bands, t);
        for i in (0..self.band_cross.len()).rev() {
            let dn = self.band_narrow[i].backward(ps, &cache.band_narrow[i], &swap_inner(&dh, b, t, bands), grads);
            dh = self.band_cross[i].backward(ps, &cache.band_cross[i], &swap_inner(&dn, b, bands, t), grads);
        }
        let dhn = self.transform.backward(&dh);
        let dhc = self.lin_narrow.backward(ps, &cache.lin_narrow, &swap_inner(&dhn, b, t, f), grads);
        let dhid = self.lin_cross.backward(ps, &cache.lin_cross, &swap_inner(&dhc, b, f, t), grads);
        let dx = self.input.backward(ps, &cache.input_xp, &swap_inner(&dhid, b, t, f), grads);
        Ok(dx.reshape(&[b, f, t, 2])?)
    }
}

/// Packs spectrograms of equal length into `[batch, 257, frames, 2]`.
pub fn pack_spectrograms(specs: &[&ComplexSpectrogram]) -> Result<Tensor> {
    let t = specs.first().map(|s| s.n_frames()).ok_or(Error::EmptyInput("spectrogram batch"))?;
    if specs.iter().any(|s| s.n_frames() != t) {
        return Err(Error::Shape("spectrograms in a batch must have equal frame counts".into()));
    }
    let mut data = vec![0.0f32; specs.len() * N_FREQS * t * 2];
    for (bi, s) in specs.iter().enumerate() {
        for ti in 0..t {
            for (fi, c) in s.frame(ti).iter().enumerate() {
                let o = ((bi * N_FREQS + fi) * t + ti) * 2;
                data[o] = c.re as f32;
                data[o + 1] = c.im as f32;
            }
        }
    }
    Ok(Tensor::from_vec(&[specs.len(), N_FREQS, t, 2], data)?)
}

/// Splits `[batch, bands, frames]` into frame-major `f64` matrices.
pub fn unpack_bands(y: &Tensor) -> Vec<Vec<f64>> {
    let s = y.shape();
    let (b, bands, t) = (s[0], s[1], s[2]);
    (0..b)
        .map(|bi| {
            let mut out = vec![0.0; bands * t];
            for m in 0..bands {
                for ti in 0..t {
                    out[ti * bands + m] = y.data()[(bi * bands + m) * t + ti] as f64;
                }
            }
            out
        })
        .collect()
}

/// Inverse of [`unpack_bands`]: frame-major matrices → `[batch, bands, frames]`.
pub fn pack_bands(items: &[&[f64]], bands: usize) -> Result<Tensor> {
    let t = items.first().map(|v| v.len() / bands).ok_or(Error::EmptyInput("band batch"))?;
    let mut data = vec![0.0f32; items.len() * bands * t];
    for (bi, v) in items.iter().enumerate() {
        if v.len() != bands * t {
            return Err(Error::Shape("band matrices in a batch must have equal sizes".into()));
        }
        for ti in 0..t {
            for m in 0..bands {
                data[(bi * bands + m) * t + ti] = v[ti * bands + m] as f32;
            }
        }
    }
    Ok(Tensor::from_vec(&[items.len(), bands, t], data)?)
}
