//! Diagonal selective state-space scan.
//!
//! For every channel `c` and state index `s`:
//!
//! ```text
//! h_t[c,s] = exp(Δ_t[c] A[c,s]) h_{t-1}[c,s] + Δ_t[c] B_t[s] x_t[c]
//! y_t[c]   = Σ_s C_t[s] h_t[c,s] + D[c] x_t[c]
//! ```
//!
//! `Δ_t = softplus(dt_proj(x_proj(x_t)[..R]))`, `B_t` and `C_t` are the other
//! two slices of `x_proj(x_t)`, and `A = -exp(a_log)` so the per-step decay
//! always lies in `(0, 1)`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::activation::{exp_fast, lane_sum, softplus, softplus_grad};
use crate::error::{shape_err, NnError, Result};
use crate::linear::Linear;
use crate::params::{uniform, Grads, ParamId, ParamSet};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    /// Scan the time-reversed input and re-reverse the output.
    Backward,
}

#[derive(Clone, Debug)]
pub struct SsmLayer {
    pub x_proj: Linear,
    pub dt_proj: Linear,
    /// `[d_inner, d_state]`
    pub a_log: ParamId,
    /// `[d_inner]`
    pub d: ParamId,
    pub d_inner: usize,
    pub d_state: usize,
    pub dt_rank: usize,
}

/// Recurrent state for a batch of sequences: `[batch, d_inner, d_state]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SsmState {
    pub h: Vec<f32>,
}

impl SsmState {
    pub fn zeros(batch: usize, layer: &SsmLayer) -> Self {
        SsmState { h: vec![0.0; batch * layer.d_inner * layer.d_state] }
    }
}

pub struct SsmCache {
    direction: Direction,
    x: Tensor,
    dt_in: Tensor,
    dt_raw: Tensor,
    /// `softplus(dt_raw)`
    delta: Vec<f32>,
    dbc: Tensor,
    /// Initial state of every sequence. The per-step states are recomputed in
    /// the backward pass rather than stored.
    h0: Vec<f32>,
}

/// Borrowed inputs of one scan; every per-step array is laid out `[b, t, ·]`.
struct Scan<'a> {
    a: &'a [f32],
    dskip: &'a [f32],
    x: &'a [f32],
    delta: &'a [f32],
    dbc: &'a [f32],
    batch: usize,
    steps: usize,
}

/// Gradient buffers filled by the backward scan.
struct ScanGrads<'a> {
    dx: &'a mut [f32],
    ddbc: &'a mut [f32],
    ddelta: &'a mut [f32],
    ga: &'a mut [f32],
    gd: &'a mut [f32],
}

impl SsmLayer {
    pub fn new(
        ps: &mut ParamSet,
        rng: &mut ChaCha8Rng,
        name: &str,
        d_inner: usize,
        d_state: usize,
        dt_rank: usize,
    ) -> Self {
        let x_proj = Linear::new(ps, rng, &format!("{name}.x_proj"), d_inner, dt_rank + 2 * d_state, false);
        let dt_proj = Linear::new(ps, rng, &format!("{name}.dt_proj"), dt_rank, d_inner, true);
        let std = (dt_rank as f32).powf(-0.5);
        *ps.get_mut(dt_proj.w) = uniform(rng, &[dt_rank, d_inner], std);
        // Δ = softplus(bias) starts log-uniform in [0.01, 0.1].
        let bias = ps.get_mut(dt_proj.b.unwrap()).data_mut();
        for b in bias.iter_mut() {
            let u: f32 = rng.random_range(0.0..1.0);
            let dt = (0.01f32.ln() + u * (0.1f32.ln() - 0.01f32.ln())).exp();
            *b = dt + (-(-dt).exp_m1()).ln();
        }
        let mut a_log = Tensor::zeros(&[d_inner, d_state]);
        for row in a_log.data_mut().chunks_exact_mut(d_state) {
            for (s, v) in row.iter_mut().enumerate() {
                *v = ((s + 1) as f32).ln();
            }
        }
        let a_log = ps.add(format!("{name}.a_log"), a_log);
        let d = ps.add(format!("{name}.d"), Tensor::full(&[d_inner], 1.0));
        SsmLayer { x_proj, dt_proj, a_log, d, d_inner, d_state, dt_rank }
    }

    fn check_params(&self, ps: &ParamSet) -> Result<()> {
        for id in [self.a_log, self.d, self.x_proj.w, self.dt_proj.w] {
            if !ps.get(id).is_finite() {
                return Err(NnError::NonFinite(ps.name(id).to_string()));
            }
        }
        Ok(())
    }

    /// One recurrence step: updates `h` in place and writes the decay factors.
    #[inline(always)]
    fn advance(&self, a: &[f32], x: &[f32], delta: &[f32], bv: &[f32], h: &mut [f32], dec: &mut [f32]) {
        let n = self.d_state;
        for ch in 0..self.d_inner {
            let dx = delta[ch] * x[ch];
            let hc = &mut h[ch * n..(ch + 1) * n];
            let dc = &mut dec[ch * n..(ch + 1) * n];
            for (e, &av) in dc.iter_mut().zip(&a[ch * n..(ch + 1) * n]) {
                *e = exp_fast(delta[ch] * av);
            }
            for ((hv, &e), &b) in hc.iter_mut().zip(dc.iter()).zip(bv) {
                *hv = e * *hv + dx * b;
            }
        }
    }

    /// Runs every sequence from the state in `h`, leaving the final states
    /// there and writing the outputs to `y`.
    #[inline(always)]
    fn scan_forward_impl(&self, s: &Scan, h: &mut [f32], y: &mut [f32]) {
        let (c, n, r) = (self.d_inner, self.d_state, self.dt_rank);
        let (width, sz) = (r + 2 * n, c * n);
        let mut dec = vec![0.0f32; sz];
        let mut tmp = vec![0.0f32; n];
        for (bi, hb) in h.chunks_exact_mut(sz).enumerate().take(s.batch) {
            for row in bi * s.steps..(bi + 1) * s.steps {
                let xr = &s.x[row * c..(row + 1) * c];
                let proj = &s.dbc[row * width..(row + 1) * width];
                let (bv, cv) = (&proj[r..r + n], &proj[r + n..]);
                self.advance(s.a, xr, &s.delta[row * c..(row + 1) * c], bv, hb, &mut dec);
                let yr = &mut y[row * c..(row + 1) * c];
                for (ch, hc) in hb.chunks_exact(n).enumerate() {
                    for ((t, &cs), &hv) in tmp.iter_mut().zip(cv).zip(hc) {
                        *t = cs * hv;
                    }
                    yr[ch] = lane_sum(&tmp) + s.dskip[ch] * xr[ch];
                }
            }
        }
    }

    /// Reverse-mode pass over every sequence. Each sequence's trajectory is
    /// rebuilt with the same operations as the forward scan first.
    #[inline(always)]
    fn scan_backward_impl(&self, s: &Scan, h0: &[f32], dy: &[f32], g: &mut ScanGrads) {
        let (c, n, r) = (self.d_inner, self.d_state, self.dt_rank);
        let (width, sz, t) = (r + 2 * n, c * n, s.steps);
        let mut dh = vec![0.0f32; sz];
        let (mut t1, mut t2) = (vec![0.0f32; n], vec![0.0f32; n]);
        // States h_0..h_t and decays of one sequence.
        let mut hs = vec![0.0f32; (t + 1) * sz];
        let mut decay = vec![0.0f32; t * sz];
        for bi in 0..s.batch {
            hs[..sz].copy_from_slice(&h0[bi * sz..(bi + 1) * sz]);
            for ti in 0..t {
                let row = bi * t + ti;
                let proj = &s.dbc[row * width..(row + 1) * width];
                let (done, next) = hs.split_at_mut((ti + 1) * sz);
                next[..sz].copy_from_slice(&done[ti * sz..]);
                self.advance(
                    s.a,
                    &s.x[row * c..(row + 1) * c],
                    &s.delta[row * c..(row + 1) * c],
                    &proj[r..r + n],
                    &mut next[..sz],
                    &mut decay[ti * sz..(ti + 1) * sz],
                );
            }
            dh.fill(0.0);
            for ti in (0..t).rev() {
                let row = bi * t + ti;
                let xr = &s.x[row * c..(row + 1) * c];
                let dyr = &dy[row * c..(row + 1) * c];
                let delta = &s.delta[row * c..(row + 1) * c];
                let proj = &s.dbc[row * width..(row + 1) * width];
                let (bv, cv) = (&proj[r..r + n], &proj[r + n..]);
                let dec = &decay[ti * sz..(ti + 1) * sz];
                let hcur = &hs[(ti + 1) * sz..(ti + 2) * sz];
                let hprev = &hs[ti * sz..(ti + 1) * sz];
                let (_, rest) = g.ddbc[row * width..(row + 1) * width].split_at_mut(r);
                let (db, dc) = rest.split_at_mut(n);
                let ddelta = &mut g.ddelta[row * c..(row + 1) * c];
                let dxr = &mut g.dx[row * c..(row + 1) * c];
                for ch in 0..c {
                    let (g_y, xv, dl) = (dyr[ch], xr[ch], delta[ch]);
                    g.gd[ch] += g_y * xv;
                    let off = ch * n;
                    let (dhc, gac) = (&mut dh[off..off + n], &mut g.ga[off..off + n]);
                    let (ec, ac) = (&dec[off..off + n], &s.a[off..off + n]);
                    let (hc, hp) = (&hcur[off..off + n], &hprev[off..off + n]);
                    for (d, &hv) in dc.iter_mut().zip(hc) {
                        *d += g_y * hv;
                    }
                    // dh now holds the total gradient reaching h_t.
                    for (gv, &cs) in dhc.iter_mut().zip(cv) {
                        *gv += g_y * cs;
                    }
                    for (((tv, &gv), (&e, &av)), (&hpv, &bs)) in
                        t1.iter_mut().zip(&*dhc).zip(ec.iter().zip(ac)).zip(hp.iter().zip(bv))
                    {
                        *tv = gv * hpv * e * av + gv * bs * xv;
                    }
                    for ((gav, &gv), (&e, &hpv)) in gac.iter_mut().zip(&*dhc).zip(ec.iter().zip(hp)) {
                        *gav += gv * hpv * e * dl;
                    }
                    for ((d, tv), (&gv, &bs)) in db.iter_mut().zip(t2.iter_mut()).zip(dhc.iter().zip(bv)) {
                        *d += gv * dl * xv;
                        *tv = gv * dl * bs;
                    }
                    for (gv, &e) in dhc.iter_mut().zip(ec) {
                        *gv *= e;
                    }
                    ddelta[ch] = lane_sum(&t1);
                    dxr[ch] += g_y * s.dskip[ch] + lane_sum(&t2);
                }
            }
        }
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn scan_forward_avx2(&self, s: &Scan, h: &mut [f32], y: &mut [f32]) {
        self.scan_forward_impl(s, h, y)
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn scan_backward_avx2(&self, s: &Scan, h0: &[f32], dy: &[f32], g: &mut ScanGrads) {
        self.scan_backward_impl(s, h0, dy, g)
    }

    // The AVX2 builds run the same elementwise operations in the same order
    // (FMA contraction stays off), so both paths agree bit for bit.
    fn scan_forward(&self, s: &Scan, h: &mut [f32], y: &mut [f32]) {
        #[cfg(target_arch = "x86_64")]
        if is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports the enabled feature.
            return unsafe { self.scan_forward_avx2(s, h, y) };
        }
        self.scan_forward_impl(s, h, y)
    }

    fn scan_backward(&self, s: &Scan, h0: &[f32], dy: &[f32], g: &mut ScanGrads) {
        #[cfg(target_arch = "x86_64")]
        if is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports the enabled feature.
            return unsafe { self.scan_backward_avx2(s, h0, dy, g) };
        }
        self.scan_backward_impl(s, h0, dy, g)
    }

    /// Runs the scan over `x: [batch, t, d_inner]`.
    ///
    /// With `state` given, the scan starts from it and leaves the final state
    /// there; splitting a sequence and chaining the state reproduces the
    /// unsplit outputs bit for bit.
    pub fn forward(
        &self,
        ps: &ParamSet,
        x: &Tensor,
        direction: Direction,
        state: Option<&mut SsmState>,
    ) -> Result<(Tensor, SsmCache)> {
        let (b, t, c) = x.dims3()?;
        if c != self.d_inner {
            return shape_err(format!("scan expects {} channels, got {:?}", self.d_inner, x.shape()));
        }
        if t == 0 {
            return shape_err("scan needs at least one step");
        }
        self.check_params(ps)?;
        let x = match direction {
            Direction::Forward => x.clone(),
            Direction::Backward => x.reverse_axis1(),
        };
        let (n, r) = (self.d_state, self.dt_rank);
        let width = r + 2 * n;
        let dbc = self.x_proj.forward(ps, &x)?;
        let mut dt_in = Tensor::zeros(&[b, t, r]);
        for (dst, src) in dt_in.data_mut().chunks_exact_mut(r).zip(dbc.data().chunks_exact(width)) {
            dst.copy_from_slice(&src[..r]);
        }
        let dt_raw = self.dt_proj.forward(ps, &dt_in)?;
        let a: Vec<f32> = ps.get(self.a_log).data().iter().map(|v| -v.exp()).collect();
        let dskip = ps.get(self.d).data();

        let sz = c * n;
        let h0 = match &state {
            Some(s) => {
                if s.h.len() != b * sz {
                    return shape_err(format!("state holds {} values, expected {}", s.h.len(), b * sz));
                }
                s.h.clone()
            }
            None => vec![0.0; b * sz],
        };
        let delta: Vec<f32> = dt_raw.data().iter().map(|&v| softplus(v)).collect();
        let mut y = Tensor::zeros(&[b, t, c]);
        let mut h = h0.clone();
        let scan = Scan { a: &a, dskip, x: x.data(), delta: &delta, dbc: dbc.data(), batch: b, steps: t };
        self.scan_forward(&scan, &mut h, y.data_mut());
        if let Some(s) = state {
            s.h = h;
        }
        let y = match direction {
            Direction::Forward => y,
            Direction::Backward => y.reverse_axis1(),
        };
        Ok((y, SsmCache { direction, x, dt_in, dt_raw, delta, dbc, h0 }))
    }

    pub fn backward(&self, ps: &ParamSet, cache: &SsmCache, dy: &Tensor, grads: &mut Grads) -> Tensor {
        let dy = match cache.direction {
            Direction::Forward => dy.clone(),
            Direction::Backward => dy.reverse_axis1(),
        };
        let (b, t, c) = cache.x.dims3().unwrap();
        let (n, r) = (self.d_state, self.dt_rank);
        let width = r + 2 * n;
        let sz = c * n;
        let a: Vec<f32> = ps.get(self.a_log).data().iter().map(|v| -v.exp()).collect();
        let dskip = ps.get(self.d).data();
        let mut dx = vec![0.0f32; cache.x.len()];
        let mut ddbc = Tensor::zeros(&[b, t, width]);
        let mut ddelta = vec![0.0f32; b * t * c];
        let mut ga = vec![0.0f32; sz];
        let mut gd = vec![0.0f32; c];
        let scan = Scan {
            a: &a,
            dskip,
            x: cache.x.data(),
            delta: &cache.delta,
            dbc: cache.dbc.data(),
            batch: b,
            steps: t,
        };
        let mut sg = ScanGrads { dx: &mut dx, ddbc: ddbc.data_mut(), ddelta: &mut ddelta, ga: &mut ga, gd: &mut gd };
        self.scan_backward(&scan, &cache.h0, dy.data(), &mut sg);
        let ddt_raw = Tensor::from_vec(
            &[b, t, c],
            ddelta.iter().zip(cache.dt_raw.data()).map(|(&d, &v)| d * softplus_grad(v)).collect(),
        )
        .unwrap();
        for ((g, &gav), &av) in grads.get_mut(self.a_log).data_mut().iter_mut().zip(&ga).zip(&a) {
            *g += gav * av;
        }
        for (g, v) in grads.get_mut(self.d).data_mut().iter_mut().zip(gd) {
            *g += v;
        }
        let d_dt_in = self.dt_proj.backward(ps, &cache.dt_in, &ddt_raw, grads);
        for (dst, src) in ddbc.data_mut().chunks_exact_mut(width).zip(d_dt_in.data().chunks_exact(r)) {
            dst[..r].copy_from_slice(src);
        }
        let dx_proj = self.x_proj.backward(ps, &cache.x, &ddbc, grads);
        for (a, b) in dx.iter_mut().zip(dx_proj.data()) {
            *a += b;
        }
        let dx = Tensor::from_vec(&[b, t, c], dx).unwrap();
        match cache.direction {
            Direction::Forward => dx,
            Direction::Backward => dx.reverse_axis1(),
        }
    }
}
