use crate::error::{shape_err, Result};
use crate::params::{Grads, ParamId, ParamSet};
use crate::tensor::Tensor;

const LN_EPS: f32 = 1e-5;

/// Layer normalization over the last axis with learned scale and shift.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub dim: usize,
}

/// Normalized input and per-row reciprocal standard deviations.
#[derive(Clone, Debug)]
pub struct LayerNormCache {
    xhat: Vec<f32>,
    rstd: Vec<f32>,
}

impl LayerNorm {
    pub fn new(ps: &mut ParamSet, name: &str, dim: usize) -> Self {
        let gamma = ps.add(format!("{name}.gamma"), Tensor::full(&[dim], 1.0));
        let beta = ps.add(format!("{name}.beta"), Tensor::zeros(&[dim]));
        LayerNorm { gamma, beta, dim }
    }

    pub fn forward(&self, ps: &ParamSet, x: &Tensor) -> Result<(Tensor, LayerNormCache)> {
        if x.last_dim() != self.dim {
            return shape_err(format!("layer norm over {} got {:?}", self.dim, x.shape()));
        }
        let d = self.dim;
        let gamma = ps.get(self.gamma).data();
        let beta = ps.get(self.beta).data();
        let mut y = Tensor::zeros(x.shape());
        let mut xhat = vec![0.0; x.len()];
        let mut rstd = Vec::with_capacity(x.rows());
        for ((xr, yr), hr) in x
            .data()
            .chunks_exact(d)
            .zip(y.data_mut().chunks_exact_mut(d))
            .zip(xhat.chunks_exact_mut(d))
        {
            let mean = xr.iter().sum::<f32>() / d as f32;
            let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / d as f32;
            let r = 1.0 / (var + LN_EPS).sqrt();
            rstd.push(r);
            for j in 0..d {
                let h = (xr[j] - mean) * r;
                hr[j] = h;
                yr[j] = h * gamma[j] + beta[j];
            }
        }
        Ok((y, LayerNormCache { xhat, rstd }))
    }

    pub fn backward(
        &self,
        ps: &ParamSet,
        cache: &LayerNormCache,
        dy: &Tensor,
        grads: &mut Grads,
    ) -> Tensor {
        let d = self.dim;
        let gamma = ps.get(self.gamma).data();
        let mut dgamma = vec![0.0f32; d];
        let mut dbeta = vec![0.0f32; d];
        let mut dx = Tensor::zeros(dy.shape());
        let mut g = vec![0.0f32; d];
        for (((dyr, hr), dxr), &r) in dy
            .data()
            .chunks_exact(d)
            .zip(cache.xhat.chunks_exact(d))
            .zip(dx.data_mut().chunks_exact_mut(d))
            .zip(&cache.rstd)
        {
            let mut mean_g = 0.0;
            let mut mean_gh = 0.0;
            for j in 0..d {
                dgamma[j] += dyr[j] * hr[j];
                dbeta[j] += dyr[j];
                g[j] = dyr[j] * gamma[j];
                mean_g += g[j];
                mean_gh += g[j] * hr[j];
            }
            mean_g /= d as f32;
            mean_gh /= d as f32;
            for j in 0..d {
                dxr[j] = r * (g[j] - mean_g - hr[j] * mean_gh);
            }
        }
        for (a, b) in grads.get_mut(self.gamma).data_mut().iter_mut().zip(dgamma) {
            *a += b;
        }
        for (a, b) in grads.get_mut(self.beta).data_mut().iter_mut().zip(dbeta) {
            *a += b;
        }
        dx
    }
}
