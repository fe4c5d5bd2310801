//! Across-axis linear map applied separately to every channel.
//!
//! For `x: [n, f, c]`, `y[n, g, ch] = Σ_f W[ch, g, f] · x[n, f, ch] + b[ch, g]`.

use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, Result};
use crate::gemm::{gemm, gemm_strided, View};
use crate::params::{uniform, Grads, ParamId, ParamSet};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct AxisLinear {
    pub w: ParamId,
    pub b: ParamId,
    pub len: usize,
    pub channels: usize,
}

impl AxisLinear {
    pub fn new(ps: &mut ParamSet, rng: &mut ChaCha8Rng, name: &str, len: usize, channels: usize) -> Self {
        let bound = 1.0 / (len as f32).sqrt();
        let w = ps.add(format!("{name}.weight"), uniform(rng, &[channels, len, len], bound));
        let b = ps.add(format!("{name}.bias"), uniform(rng, &[channels, len], bound));
        AxisLinear { w, b, len, channels }
    }

    fn check(&self, x: &Tensor) -> Result<usize> {
        let (n, f, c) = x.dims3()?;
        if f != self.len || c != self.channels {
            return shape_err(format!(
                "axis linear expects [_, {}, {}], got {:?}",
                self.len,
                self.channels,
                x.shape()
            ));
        }
        Ok(n)
    }

    pub fn forward(&self, ps: &ParamSet, x: &Tensor) -> Result<Tensor> {
        let n = self.check(x)?;
        let (f, c) = (self.len, self.channels);
        let mut y = Tensor::zeros(x.shape());
        let bias = ps.get(self.b).data();
        for row in y.data_mut().chunks_exact_mut(f * c) {
            for (g, vals) in row.chunks_exact_mut(c).enumerate() {
                for (ch, v) in vals.iter_mut().enumerate() {
                    *v = bias[ch * f + g];
                }
            }
        }
        if n == 0 {
            return Ok(y);
        }
        let w = ps.get(self.w).data();
        for ch in 0..c {
            let a = View::row_major(&w[ch * f * f..(ch + 1) * f * f], f, f);
            let b = View { data: &x.data()[ch..], rows: f, cols: n, rs: c, cs: f * c };
            gemm_strided(a, b, 1.0, &mut y.data_mut()[ch..], c, f * c);
        }
        Ok(y)
    }

    pub fn backward(&self, ps: &ParamSet, x: &Tensor, dy: &Tensor, grads: &mut Grads) -> Tensor {
        let n = x.shape()[0];
        let (f, c) = (self.len, self.channels);
        let mut dx = Tensor::zeros(x.shape());
        {
            let gb = grads.get_mut(self.b).data_mut();
            for row in dy.data().chunks_exact(f * c) {
                for (g, vals) in row.chunks_exact(c).enumerate() {
                    for (ch, &v) in vals.iter().enumerate() {
                        gb[ch * f + g] += v;
                    }
                }
            }
        }
        if n == 0 {
            return dx;
        }
        let w = ps.get(self.w).data();
        for ch in 0..c {
            let dyv = View { data: &dy.data()[ch..], rows: f, cols: n, rs: c, cs: f * c };
            let xt = View { data: &x.data()[ch..], rows: n, cols: f, rs: f * c, cs: c };
            gemm(dyv, xt, 1.0, &mut grads.get_mut(self.w).data_mut()[ch * f * f..(ch + 1) * f * f]);
            let wt = View::row_major(&w[ch * f * f..(ch + 1) * f * f], f, f).t();
            gemm_strided(wt, dyv, 0.0, &mut dx.data_mut()[ch..], c, f * c);
        }
        dx
    }
}
