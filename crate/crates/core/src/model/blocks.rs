//! Cross-band and narrow-band blocks, the hidden filterbank and layout helpers.
//!
//! Cross-band blocks see `[frames, freqs, hidden]` (each frame independent);
//! narrow-band blocks see `[freqs, frames, hidden]` (each frequency
//! independent). A batch dimension is folded into the first axis.

use melclean_nn::activation::{silu, silu_grad};
use melclean_nn::gemm::{gemm, View};
use melclean_nn::{
    AxisLinear, Conv1d, Grads, LayerNorm, LayerNormCache, Linear, MambaBlock, MambaCache,
    MambaConfig, MambaState, Padding, ParamSet, Tensor,
};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

/// `[b * p, q, h]` → `[b * q, p, h]`.
pub fn swap_inner(x: &Tensor, b: usize, p: usize, q: usize) -> Tensor {
    let h = x.last_dim();
    debug_assert_eq!(x.len(), b * p * q * h);
    let mut out = Tensor::zeros(&[b * q, p, h]);
    let (src, dst) = (x.data(), out.data_mut());
    for bi in 0..b {
        for i in 0..p {
            for j in 0..q {
                let s = ((bi * p + i) * q + j) * h;
                let d = ((bi * q + j) * p + i) * h;
                dst[d..d + h].copy_from_slice(&src[s..s + h]);
            }
        }
    }
    out
}

fn silu_tensor(x: &Tensor) -> Tensor {
    x.map(silu)
}

fn silu_back(pre: &Tensor, dy: &Tensor) -> Tensor {
    let mut d = dy.clone();
    for (g, &v) in d.data_mut().iter_mut().zip(pre.data()) {
        *g *= silu_grad(v);
    }
    d
}

/// Pre-norm residual stack: F-GConv1d → F-Linear → F-GConv1d.
#[derive(Clone, Debug)]
pub struct CrossBand {
    pub ln1: LayerNorm,
    pub conv1: Conv1d,
    pub ln2: LayerNorm,
    /// Hidden → compressed and compressed → hidden maps around the F-Linear.
    pub squeeze: Option<(Linear, Linear)>,
    pub flinear: AxisLinear,
    pub ln3: LayerNorm,
    pub conv2: Conv1d,
}

pub struct CrossBandCache {
    ln1: LayerNormCache,
    conv1_in: Tensor,
    conv1_out: Tensor,
    ln2: LayerNormCache,
    a2: Tensor,
    squeezed: Option<(Tensor, Tensor)>,
    fl_in: Tensor,
    ln3: LayerNormCache,
    conv2_in: Tensor,
    conv2_out: Tensor,
}

impl CrossBand {
    /// `flinear` is passed in so several blocks can share one parameter set.
    pub fn new(
        ps: &mut ParamSet,
        rng: &mut ChaCha8Rng,
        name: &str,
        hidden: usize,
        groups: usize,
        kernel: usize,
        squeeze: Option<usize>,
        flinear: AxisLinear,
    ) -> Result<Self> {
        let conv = |ps: &mut ParamSet, rng: &mut ChaCha8Rng, n: &str| {
            Conv1d::new(ps, rng, &format!("{name}.{n}"), hidden, hidden, kernel, groups, Padding::Centered, true)
        };
        let ln1 = LayerNorm::new(ps, &format!("{name}.norm1"), hidden);
        let conv1 = conv(ps, rng, "fconv1")?;
        let ln2 = LayerNorm::new(ps, &format!("{name}.norm2"), hidden);
        let squeeze = squeeze.map(|c| {
            (
                Linear::new(ps, rng, &format!("{name}.squeeze"), hidden, c, true),
                Linear::new(ps, rng, &format!("{name}.unsqueeze"), c, hidden, true),
            )
        });
        let ln3 = LayerNorm::new(ps, &format!("{name}.norm3"), hidden);
        let conv2 = conv(ps, rng, "fconv2")?;
        Ok(CrossBand { ln1, conv1, ln2, squeeze, flinear, ln3, conv2 })
    }

    /// `x: [frames, freqs, hidden]`.
    pub fn forward(&self, ps: &ParamSet, x: &Tensor) -> Result<(Tensor, CrossBandCache)> {
        let (a1, ln1) = self.ln1.forward(ps, x)?;
        let (conv1_out, conv1_in) = self.conv1.forward(ps, &a1)?;
        let mut x1 = x.clone();
        x1.add_assign(&silu_tensor(&conv1_out));

        let (a2, ln2) = self.ln2.forward(ps, &x1)?;
        let (v, squeezed, fl_in) = match &self.squeeze {
            Some((sq, unsq)) => {
                let zp = sq.forward(ps, &a2)?;
                let z = silu_tensor(&zp);
                let u = self.flinear.forward(ps, &z)?;
                let v = unsq.forward(ps, &u)?;
                (v, Some((zp, u)), z)
            }
            None => (self.flinear.forward(ps, &a2)?, None, a2.clone()),
        };
        let mut x2 = x1;
        x2.add_assign(&v);

        let (a3, ln3) = self.ln3.forward(ps, &x2)?;
        let (conv2_out, conv2_in) = self.conv2.forward(ps, &a3)?;
        let mut y = x2;
        y.add_assign(&silu_tensor(&conv2_out));
        Ok((y, CrossBandCache { ln1, conv1_in, conv1_out, ln2, a2, squeezed, fl_in, ln3, conv2_in, conv2_out }))
    }

    pub fn backward(&self, ps: &ParamSet, c: &CrossBandCache, dy: &Tensor, grads: &mut Grads) -> Tensor {
        let dc2 = silu_back(&c.conv2_out, dy);
        let da3 = self.conv2.backward(ps, &c.conv2_in, &dc2, grads);
        let mut dx2 = self.ln3.backward(ps, &c.ln3, &da3, grads);
        dx2.add_assign(dy);

        let da2 = match (&self.squeeze, &c.squeezed) {
            (Some((sq, unsq)), Some((zp, u))) => {
                let du = unsq.backward(ps, u, &dx2, grads);
                let dz = self.flinear.backward(ps, &c.fl_in, &du, grads);
                let dzp = silu_back(zp, &dz);
                sq.backward(ps, &c.a2, &dzp, grads)
            }
            _ => self.flinear.backward(ps, &c.fl_in, &dx2, grads),
        };
        let mut dx1 = self.ln2.backward(ps, &c.ln2, &da2, grads);
        dx1.add_assign(&dx2);

        let dc1 = silu_back(&c.conv1_out, &dx1);
        let da1 = self.conv1.backward(ps, &c.conv1_in, &dc1, grads);
        let mut dx = self.ln1.backward(ps, &c.ln1, &da1, grads);
        dx.add_assign(&dx1);
        dx
    }
}

/// Forward Mamba, plus a backward Mamba whose output is averaged in when
/// running offline.
#[derive(Clone, Debug)]
pub struct NarrowBand {
    pub fwd: MambaBlock,
    pub bwd: Option<MambaBlock>,
}

pub struct NarrowBandCache {
    fwd: MambaCache,
    bwd: Option<MambaCache>,
}

impl NarrowBand {
    pub fn new(ps: &mut ParamSet, rng: &mut ChaCha8Rng, name: &str, cfg: MambaConfig, bidirectional: bool) -> Result<Self> {
        let fwd = MambaBlock::new(ps, rng, &format!("{name}.fwd"), cfg)?;
        let bwd = if bidirectional { Some(MambaBlock::new(ps, rng, &format!("{name}.bwd"), cfg)?) } else { None };
        Ok(NarrowBand { fwd, bwd })
    }

    /// `x: [freqs, frames, hidden]`. `state` is only meaningful for the
    /// forward-only (causal) block.
    pub fn forward(&self, ps: &ParamSet, x: &Tensor, state: Option<&mut MambaState>) -> Result<(Tensor, NarrowBandCache)> {
        let (yf, cf) = self.fwd.forward(ps, x, state)?;
        match &self.bwd {
            None => Ok((yf, NarrowBandCache { fwd: cf, bwd: None })),
            Some(b) => {
                let (yb, cb) = b.forward(ps, &x.reverse_axis1(), None)?;
                let mut y = yf;
                y.add_assign(&yb.reverse_axis1());
                y.scale(0.5);
                Ok((y, NarrowBandCache { fwd: cf, bwd: Some(cb) }))
            }
        }
    }

    pub fn backward(&self, ps: &ParamSet, c: &NarrowBandCache, dy: &Tensor, grads: &mut Grads) -> Tensor {
        match (&self.bwd, &c.bwd) {
            (Some(b), Some(cb)) => {
                let mut half = dy.clone();
                half.scale(0.5);
                let mut dx = self.fwd.backward(ps, &c.fwd, &half, grads);
                let dxb = b.backward(ps, cb, &half.reverse_axis1(), grads);
                dx.add_assign(&dxb.reverse_axis1());
                dx
            }
            _ => self.fwd.backward(ps, &c.fwd, dy, grads),
        }
    }
}

/// Fixed `[bands, freqs]` weight matrix contracted over the frequency axis
/// of `[frames, freqs, hidden]`.
#[derive(Clone, Debug)]
pub struct BandTransform {
    weights: Vec<f32>,
    pub bands: usize,
    pub freqs: usize,
}

impl BandTransform {
    pub fn new(weights: &[f64], bands: usize, freqs: usize) -> Self {
        assert_eq!(weights.len(), bands * freqs);
        BandTransform { weights: weights.iter().map(|&w| w as f32).collect(), bands, freqs }
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (n, f, h) = x.dims3()?;
        if f != self.freqs {
            return Err(crate::Error::Shape(format!("band transform expects {} bins, got {f}", self.freqs)));
        }
        let mut y = Tensor::zeros(&[n, self.bands, h]);
        let a = View::row_major(&self.weights, self.bands, f);
        for (xi, yi) in x.data().chunks_exact(f * h).zip(y.data_mut().chunks_exact_mut(self.bands * h)) {
            gemm(a, View::row_major(xi, f, h), 0.0, yi);
        }
        Ok(y)
    }

    pub fn backward(&self, dy: &Tensor) -> Tensor {
        let (n, _, h) = dy.dims3().expect("rank-3 gradient");
        let mut dx = Tensor::zeros(&[n, self.freqs, h]);
        let at = View::row_major(&self.weights, self.bands, self.freqs).t();
        for (di, dyi) in dx.data_mut().chunks_exact_mut(self.freqs * h).zip(dy.data().chunks_exact(self.bands * h)) {
            gemm(at, View::row_major(dyi, self.bands, h), 0.0, di);
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn swap_inner_round_trip() {
        let x = Tensor::from_vec(&[6, 4, 2], (0..48).map(|i| i as f32).collect()).unwrap();
        let y = swap_inner(&x, 2, 3, 4);
        assert_eq!(y.shape(), &[8, 3, 2]);
        assert_eq!(y.data()[((4 + 1) * 3 + 2) * 2], x.data()[((3 + 2) * 4 + 1) * 2]);
        assert_eq!(swap_inner(&y, 2, 4, 3), x);
    }

    #[test]
    fn band_transform_one_hot() {
        let w: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let bt = BandTransform::new(&w, 3, 4);
        let mut x = Tensor::zeros(&[1, 4, 2]);
        x.data_mut()[2 * 2 + 1] = 1.0;
        let y = bt.forward(&x).unwrap();
        for m in 0..3 {
            assert_eq!(y.data()[m * 2], 0.0);
            assert_eq!(y.data()[m * 2 + 1], w[m * 4 + 2] as f32);
        }
    }
}
