//! Pre-norm residual Mamba-style block.
//!
//! ```text
//! [xm, z] = in_proj(LN(x))
//! u       = silu(causal_depthwise_conv(xm))
//! y       = x + out_proj(ssm_scan(u) * silu(z))
//! ```

use rand_chacha::ChaCha8Rng;

use crate::activation::{silu, silu_grad};
use crate::conv::{Conv1d, Padding};
use crate::error::{shape_err, Result};
use crate::linear::Linear;
use crate::norm::{LayerNorm, LayerNormCache};
use crate::params::{Grads, ParamSet};
use crate::ssm::{Direction, SsmCache, SsmLayer, SsmState};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MambaConfig {
    pub d_model: usize,
    pub expand: usize,
    pub d_state: usize,
    pub d_conv: usize,
}

impl MambaConfig {
    pub fn d_inner(&self) -> usize {
        self.expand * self.d_model
    }

    pub fn dt_rank(&self) -> usize {
        self.d_model.div_ceil(16)
    }
}

#[derive(Clone, Debug)]
pub struct MambaBlock {
    pub norm: LayerNorm,
    pub in_proj: Linear,
    pub conv: Conv1d,
    pub ssm: SsmLayer,
    pub out_proj: Linear,
    pub d_model: usize,
    pub d_inner: usize,
}

/// Streaming state for a batch of independent sequences.
#[derive(Clone, Debug, PartialEq)]
pub struct MambaState {
    pub conv_hist: Vec<f32>,
    pub ssm: SsmState,
}

pub struct MambaCache {
    ln: LayerNormCache,
    xn: Tensor,
    conv_in: Tensor,
    u: Tensor,
    z: Tensor,
    ssm: SsmCache,
    ys: Tensor,
    gated: Tensor,
}

fn split_last(x: &Tensor, at: usize) -> (Tensor, Tensor) {
    let d = x.last_dim();
    let mut sa = x.shape().to_vec();
    let mut sb = x.shape().to_vec();
    *sa.last_mut().unwrap() = at;
    *sb.last_mut().unwrap() = d - at;
    let mut a = Tensor::zeros(&sa);
    let mut b = Tensor::zeros(&sb);
    for ((row, ra), rb) in x
        .data()
        .chunks_exact(d)
        .zip(a.data_mut().chunks_exact_mut(at))
        .zip(b.data_mut().chunks_exact_mut(d - at))
    {
        ra.copy_from_slice(&row[..at]);
        rb.copy_from_slice(&row[at..]);
    }
    (a, b)
}

fn join_last(a: &Tensor, b: &Tensor) -> Tensor {
    let (da, db) = (a.last_dim(), b.last_dim());
    let mut shape = a.shape().to_vec();
    *shape.last_mut().unwrap() = da + db;
    let mut out = Tensor::zeros(&shape);
    for ((row, ra), rb) in out
        .data_mut()
        .chunks_exact_mut(da + db)
        .zip(a.data().chunks_exact(da))
        .zip(b.data().chunks_exact(db))
    {
        row[..da].copy_from_slice(ra);
        row[da..].copy_from_slice(rb);
    }
    out
}

impl MambaBlock {
    pub fn new(ps: &mut ParamSet, rng: &mut ChaCha8Rng, name: &str, cfg: MambaConfig) -> Result<Self> {
        let di = cfg.d_inner();
        let norm = LayerNorm::new(ps, &format!("{name}.norm"), cfg.d_model);
        let in_proj = Linear::new(ps, rng, &format!("{name}.in_proj"), cfg.d_model, 2 * di, false);
        let conv = Conv1d::new(ps, rng, &format!("{name}.conv"), di, di, cfg.d_conv, di, Padding::Causal, true)?;
        let ssm = SsmLayer::new(ps, rng, &format!("{name}.ssm"), di, cfg.d_state, cfg.dt_rank());
        let out_proj = Linear::new(ps, rng, &format!("{name}.out_proj"), di, cfg.d_model, true);
        Ok(MambaBlock { norm, in_proj, conv, ssm, out_proj, d_model: cfg.d_model, d_inner: di })
    }

    pub fn init_state(&self, batch: usize) -> MambaState {
        MambaState {
            conv_hist: vec![0.0; batch * self.conv.history_len() * self.d_inner],
            ssm: SsmState::zeros(batch, &self.ssm),
        }
    }

    /// `x: [batch, t, d_model]`. With `state`, processes one chunk of a
    /// causal stream and advances the state.
    pub fn forward(
        &self,
        ps: &ParamSet,
        x: &Tensor,
        state: Option<&mut MambaState>,
    ) -> Result<(Tensor, MambaCache)> {
        let (_, _, h) = x.dims3()?;
        if h != self.d_model {
            return shape_err(format!("mamba block expects width {}, got {:?}", self.d_model, x.shape()));
        }
        let (xn, ln) = self.norm.forward(ps, x)?;
        let xz = self.in_proj.forward(ps, &xn)?;
        let (xm, z) = split_last(&xz, self.d_inner);
        let (u, conv_in, ssm_state) = match state {
            Some(st) => {
                let (u, xp) = self.conv.forward_stream(ps, &xm, &mut st.conv_hist)?;
                (u, xp, Some(&mut st.ssm))
            }
            None => {
                let (u, xp) = self.conv.forward(ps, &xm)?;
                (u, xp, None)
            }
        };
        let us = u.map(silu);
        let (ys, ssm) = self.ssm.forward(ps, &us, Direction::Forward, ssm_state)?;
        let mut gated = ys.clone();
        for (g, &zv) in gated.data_mut().iter_mut().zip(z.data()) {
            *g *= silu(zv);
        }
        let mut y = self.out_proj.forward(ps, &gated)?;
        y.add_assign(x);
        Ok((y, MambaCache { ln, xn, conv_in, u, z, ssm, ys, gated }))
    }

    pub fn backward(&self, ps: &ParamSet, cache: &MambaCache, dy: &Tensor, grads: &mut Grads) -> Tensor {
        let dg = self.out_proj.backward(ps, &cache.gated, dy, grads);
        let mut dys = dg.clone();
        let mut dz = Tensor::zeros(cache.z.shape());
        for (((dyv, dzv), (&g, &zv)), &yv) in dys
            .data_mut()
            .iter_mut()
            .zip(dz.data_mut())
            .zip(dg.data().iter().zip(cache.z.data()))
            .zip(cache.ys.data())
        {
            *dyv = g * silu(zv);
            *dzv = g * yv * silu_grad(zv);
        }
        let dus = self.ssm.backward(ps, &cache.ssm, &dys, grads);
        let mut du = dus;
        for (d, &uv) in du.data_mut().iter_mut().zip(cache.u.data()) {
            *d *= silu_grad(uv);
        }
        let dxm = self.conv.backward(ps, &cache.conv_in, &du, grads);
        let dxz = join_last(&dxm, &dz);
        let dxn = self.in_proj.backward(ps, &cache.xn, &dxz, grads);
        let mut dx = self.norm.backward(ps, &cache.ln, &dxn, grads);
        dx.add_assign(dy);
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn block() -> (ParamSet, MambaBlock) {
        let mut ps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let cfg = MambaConfig { d_model: 8, expand: 2, d_state: 4, d_conv: 4 };
        let b = MambaBlock::new(&mut ps, &mut rng, "m", cfg).unwrap();
        (ps, b)
    }

    fn input(b: usize, t: usize) -> Tensor {
        Tensor::from_vec(&[b, t, 8], (0..b * t * 8).map(|i| (i as f32 * 0.71).sin()).collect()).unwrap()
    }

    #[test]
    fn zero_output_projection_is_pure_residual() {
        let (mut ps, b) = block();
        ps.get_mut(b.out_proj.w).data_mut().fill(0.0);
        ps.get_mut(b.out_proj.b.unwrap()).data_mut().fill(0.0);
        let x = input(2, 5);
        assert_eq!(b.forward(&ps, &x, None).unwrap().0, x);
    }

    #[test]
    fn causal_in_time() {
        let (ps, b) = block();
        let x = input(1, 12);
        let (y0, _) = b.forward(&ps, &x, None).unwrap();
        let mut x1 = x.clone();
        x1.data_mut()[7 * 8 + 3] -= 2.0;
        let (y1, _) = b.forward(&ps, &x1, None).unwrap();
        assert_eq!(y0.data()[..7 * 8], y1.data()[..7 * 8]);
        assert_ne!(y0.data()[7 * 8..8 * 8], y1.data()[7 * 8..8 * 8]);
    }

    #[test]
    fn streaming_chunks_match_full_run() {
        let (ps, b) = block();
        let x = input(3, 20);
        let (full, _) = b.forward(&ps, &x, None).unwrap();
        let mut st = b.init_state(3);
        let mut parts = Vec::new();
        for (s, e) in [(0, 3), (3, 4), (4, 17), (17, 20)] {
            parts.push(b.forward(&ps, &x.slice_axis1(s, e), Some(&mut st)).unwrap().0);
        }
        let refs: Vec<&Tensor> = parts.iter().collect();
        assert_eq!(Tensor::concat_axis1(&refs).unwrap(), full);
    }
}
