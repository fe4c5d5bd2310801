//! Grouped 1-D convolution over the middle axis of `[batch, length, channels]`.

use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, NnError, Result};
use crate::gemm::{gemm, View};
use crate::params::{uniform, Grads, ParamId, ParamSet};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// `k - 1` zeros (or carried history) on the left; output `t` sees inputs `<= t`.
    Causal,
    /// `(k - 1) / 2` zeros on each side; `k` must be odd.
    Centered,
}

#[derive(Clone, Debug)]
pub struct Conv1d {
    /// `[c_out, c_in / groups, kernel]`
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub groups: usize,
    pub padding: Padding,
}

impl Conv1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ps: &mut ParamSet,
        rng: &mut ChaCha8Rng,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        groups: usize,
        padding: Padding,
        bias: bool,
    ) -> Result<Self> {
        if groups == 0 || c_in % groups != 0 || c_out % groups != 0 {
            return Err(NnError::Config(format!(
                "groups {groups} must divide c_in {c_in} and c_out {c_out}"
            )));
        }
        if kernel == 0 || (padding == Padding::Centered && kernel % 2 == 0) {
            return Err(NnError::Config(format!("kernel {kernel} invalid for {padding:?}")));
        }
        let cig = c_in / groups;
        let bound = 1.0 / ((cig * kernel) as f32).sqrt();
        let w = ps.add(format!("{name}.weight"), uniform(rng, &[c_out, cig, kernel], bound));
        let b = bias.then(|| ps.add(format!("{name}.bias"), uniform(rng, &[c_out], bound)));
        Ok(Conv1d { w, b, c_in, c_out, kernel, groups, padding })
    }

    fn pads(&self) -> (usize, usize) {
        match self.padding {
            Padding::Causal => (self.kernel - 1, 0),
            Padding::Centered => ((self.kernel - 1) / 2, (self.kernel - 1) / 2),
        }
    }

    /// Length of the left context carried between streaming chunks.
    pub fn history_len(&self) -> usize {
        self.kernel - 1
    }

    fn depthwise(&self) -> bool {
        self.groups == self.c_in && self.groups == self.c_out
    }

    /// Depthwise weights rearranged to `[kernel, c]`.
    fn taps(&self, ps: &ParamSet) -> Vec<f32> {
        let (k, c) = (self.kernel, self.c_out);
        let w = ps.get(self.w).data();
        let mut out = vec![0.0; k * c];
        for co in 0..c {
            for kk in 0..k {
                out[kk * c + co] = w[co * k + kk];
            }
        }
        out
    }

    /// Grouped weights expanded to block-diagonal `[kernel, c_in, c_out]`
    /// matrices, so each tap becomes one dense product.
    fn dense(&self, ps: &ParamSet) -> Vec<f32> {
        let (k, ci_n, co_n) = (self.kernel, self.c_in, self.c_out);
        let (cig, cog) = (ci_n / self.groups, co_n / self.groups);
        let w = ps.get(self.w).data();
        let mut out = vec![0.0; k * ci_n * co_n];
        for co in 0..co_n {
            let g = co / cog;
            for ci in 0..cig {
                for kk in 0..k {
                    out[(kk * ci_n + g * cig + ci) * co_n + co] = w[(co * cig + ci) * k + kk];
                }
            }
        }
        out
    }

    fn check(&self, x: &Tensor) -> Result<(usize, usize)> {
        let (b, l, c) = x.dims3()?;
        if c != self.c_in {
            return shape_err(format!("conv expects {} channels, got {:?}", self.c_in, x.shape()));
        }
        Ok((b, l))
    }

    /// Builds the padded input `[b, l + k - 1, c_in]`, taking the left context
    /// from `history` when given.
    fn padded(&self, x: &Tensor, history: Option<&[f32]>) -> Tensor {
        let (b, l, c) = x.dims3().unwrap();
        let (pl, pr) = self.pads();
        let lp = l + pl + pr;
        let mut xp = Tensor::zeros(&[b, lp, c]);
        let dst = xp.data_mut();
        for i in 0..b {
            if let Some(h) = history {
                dst[i * lp * c..(i * lp + pl) * c].copy_from_slice(&h[i * pl * c..(i + 1) * pl * c]);
            }
            dst[(i * lp + pl) * c..(i * lp + pl + l) * c]
                .copy_from_slice(&x.data()[i * l * c..(i + 1) * l * c]);
        }
        xp
    }

    fn run(&self, ps: &ParamSet, xp: &Tensor, l: usize) -> Tensor {
        let (b, lp, c) = xp.dims3().unwrap();
        let (k, co_n) = (self.kernel, self.c_out);
        let bias = self.b.map(|id| ps.get(id).data());
        let mut y = Tensor::zeros(&[b, l, co_n]);
        let xd = xp.data();
        if self.depthwise() {
            let wk = self.taps(ps);
            let yd = y.data_mut();
            for i in 0..b {
                for t in 0..l {
                    let out = &mut yd[(i * l + t) * co_n..(i * l + t + 1) * co_n];
                    if let Some(bias) = bias {
                        out.copy_from_slice(bias);
                    }
                    for kk in 0..k {
                        let xr = &xd[(i * lp + t + kk) * c..(i * lp + t + kk + 1) * c];
                        for ((o, &w), &xv) in out.iter_mut().zip(&wk[kk * c..(kk + 1) * c]).zip(xr) {
                            *o += w * xv;
                        }
                    }
                }
            }
            return y;
        }
        if b * l == 0 {
            return y;
        }
        // Treat the padded batch as one long sequence: output row r sees
        // padded rows r..r+k. Rows that straddle two batch items are dropped.
        let wd = self.dense(ps);
        let m = b * lp - (k - 1);
        let mut full = vec![0.0f32; m * co_n];
        if let Some(bias) = bias {
            for row in full.chunks_exact_mut(co_n) {
                row.copy_from_slice(bias);
            }
        }
        for kk in 0..k {
            gemm(
                View::row_major(&xd[kk * c..(kk + m) * c], m, c),
                View::row_major(&wd[kk * c * co_n..(kk + 1) * c * co_n], c, co_n),
                1.0,
                &mut full,
            );
        }
        let yd = y.data_mut();
        for i in 0..b {
            yd[i * l * co_n..(i + 1) * l * co_n].copy_from_slice(&full[i * lp * co_n..(i * lp + l) * co_n]);
        }
        y
    }

    /// Full-sequence forward. Returns the output and the padded input, which
    /// is the cache needed by [`Conv1d::backward`].
    pub fn forward(&self, ps: &ParamSet, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let (_, l) = self.check(x)?;
        let xp = self.padded(x, None);
        Ok((self.run(ps, &xp, l), xp))
    }

    /// Causal forward on a chunk whose left context is `history`
    /// (`[b, k - 1, c_in]`, zeros at stream start). `history` is advanced to
    /// the last `k - 1` inputs so that consecutive chunks reproduce a single
    /// full-sequence call exactly.
    pub fn forward_stream(
        &self,
        ps: &ParamSet,
        x: &Tensor,
        history: &mut Vec<f32>,
    ) -> Result<(Tensor, Tensor)> {
        if self.padding != Padding::Causal {
            return Err(NnError::Config("streaming requires causal padding".into()));
        }
        let (b, l) = self.check(x)?;
        let hl = self.history_len();
        if history.len() != b * hl * self.c_in {
            return shape_err(format!(
                "history holds {} values, expected {}",
                history.len(),
                b * hl * self.c_in
            ));
        }
        let xp = self.padded(x, Some(history));
        let y = self.run(ps, &xp, l);
        let lp = l + hl;
        let c = self.c_in;
        for i in 0..b {
            history[i * hl * c..(i + 1) * hl * c]
                .copy_from_slice(&xp.data()[(i * lp + l) * c..(i * lp + lp) * c]);
        }
        Ok((y, xp))
    }

    /// Accumulates weight/bias gradients and returns `dL/dx` (history excluded).
    pub fn backward(&self, ps: &ParamSet, xp: &Tensor, dy: &Tensor, grads: &mut Grads) -> Tensor {
        let (b, lp, c) = xp.dims3().unwrap();
        let (_, l, co_n) = dy.dims3().unwrap();
        let (pl, _) = self.pads();
        let k = self.kernel;
        let mut dxp = vec![0.0f32; xp.len()];
        let xd = xp.data();
        let dyd = dy.data();
        if let Some(bid) = self.b {
            let gb = grads.get_mut(bid).data_mut();
            for row in dyd.chunks_exact(co_n) {
                for (g, &d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
        }
        if self.depthwise() {
            let wk = self.taps(ps);
            let mut dwk = vec![0.0f32; wk.len()];
            for i in 0..b {
                for t in 0..l {
                    let dyr = &dyd[(i * l + t) * co_n..(i * l + t + 1) * co_n];
                    for kk in 0..k {
                        let base = (i * lp + t + kk) * c;
                        let xr = &xd[base..base + c];
                        for ((g, &d), &xv) in dwk[kk * c..(kk + 1) * c].iter_mut().zip(dyr).zip(xr) {
                            *g += d * xv;
                        }
                        for ((g, &d), &w) in dxp[base..base + c].iter_mut().zip(dyr).zip(&wk[kk * c..(kk + 1) * c]) {
                            *g += d * w;
                        }
                    }
                }
            }
            let gw = grads.get_mut(self.w).data_mut();
            for co in 0..co_n {
                for kk in 0..k {
                    gw[co * k + kk] += dwk[kk * c + co];
                }
            }
        } else if b * l > 0 {
            let wd = self.dense(ps);
            let m = b * lp - (k - 1);
            let mut dfull = vec![0.0f32; m * co_n];
            for i in 0..b {
                dfull[i * lp * co_n..(i * lp + l) * co_n].copy_from_slice(&dyd[i * l * co_n..(i + 1) * l * co_n]);
            }
            let dyv = View::row_major(&dfull, m, co_n);
            let mut dwd = vec![0.0f32; wd.len()];
            for kk in 0..k {
                let xv = View::row_major(&xd[kk * c..(kk + m) * c], m, c);
                gemm(xv.t(), dyv, 1.0, &mut dwd[kk * c * co_n..(kk + 1) * c * co_n]);
                let wt = View::row_major(&wd[kk * c * co_n..(kk + 1) * c * co_n], c, co_n).t();
                gemm(dyv, wt, 1.0, &mut dxp[kk * c..(kk + m) * c]);
            }
            let (cig, cog) = (c / self.groups, co_n / self.groups);
            let gw = grads.get_mut(self.w).data_mut();
            for co in 0..co_n {
                let g = co / cog;
                for ci in 0..cig {
                    for kk in 0..k {
                        gw[(co * cig + ci) * k + kk] += dwd[(kk * c + g * cig + ci) * co_n + co];
                    }
                }
            }
        }
        let mut dx = Tensor::zeros(&[b, l, c]);
        for i in 0..b {
            dx.data_mut()[i * l * c..(i + 1) * l * c]
                .copy_from_slice(&dxp[(i * lp + pl) * c..(i * lp + pl + l) * c]);
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn conv(c: usize, groups: usize, padding: Padding) -> (ParamSet, Conv1d) {
        let mut ps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let conv = Conv1d::new(&mut ps, &mut rng, "c", c, c, 5, groups, padding, true).unwrap();
        (ps, conv)
    }

    #[test]
    fn centered_identity_kernel() {
        let (mut ps, conv) = conv(2, 2, Padding::Centered);
        let w = ps.get_mut(conv.w).data_mut();
        w.fill(0.0);
        w[2] = 1.0;
        w[5 + 2] = 1.0;
        ps.get_mut(conv.b.unwrap()).data_mut().fill(0.0);
        let x = Tensor::from_vec(&[1, 6, 2], (0..12).map(|v| v as f32 - 5.0).collect()).unwrap();
        let (y, _) = conv.forward(&ps, &x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn causal_output_ignores_future() {
        let (ps, conv) = conv(4, 2, Padding::Causal);
        let x = Tensor::from_vec(&[1, 10, 4], (0..40).map(|v| (v as f32).sin()).collect()).unwrap();
        let (y0, _) = conv.forward(&ps, &x).unwrap();
        let mut x1 = x.clone();
        x1.data_mut()[6 * 4 + 1] += 3.0;
        let (y1, _) = conv.forward(&ps, &x1).unwrap();
        for t in 0..10 {
            let same = y0.data()[t * 4..t * 4 + 4] == y1.data()[t * 4..t * 4 + 4];
            assert_eq!(same, t < 6, "t = {t}");
        }
    }

    #[test]
    fn streaming_matches_full_bitwise() {
        let (ps, conv) = conv(4, 4, Padding::Causal);
        let x = Tensor::from_vec(&[2, 13, 4], (0..104).map(|v| (v as f32 * 0.7).cos()).collect())
            .unwrap();
        let (full, _) = conv.forward(&ps, &x).unwrap();
        let mut hist = vec![0.0; 2 * 4 * 4];
        let mut parts = Vec::new();
        for (s, e) in [(0, 1), (1, 5), (5, 5), (5, 13)] {
            parts.push(conv.forward_stream(&ps, &x.slice_axis1(s, e), &mut hist).unwrap().0);
        }
        let refs: Vec<&Tensor> = parts.iter().collect();
        assert_eq!(Tensor::concat_axis1(&refs).unwrap(), full);
    }

    #[test]
    fn rejects_bad_groups() {
        let mut ps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(Conv1d::new(&mut ps, &mut rng, "c", 6, 6, 5, 4, Padding::Causal, true).is_err());
        assert!(Conv1d::new(&mut ps, &mut rng, "d", 4, 4, 4, 1, Padding::Centered, true).is_err());
    }
}
