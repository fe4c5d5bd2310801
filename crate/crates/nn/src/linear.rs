use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, Result};
use crate::gemm::{gemm, View};
use crate::params::{uniform, Grads, ParamId, ParamSet};
use crate::tensor::Tensor;

/// Affine map over the last axis: `y = x·W + b` with `W: [d_in, d_out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new(
        ps: &mut ParamSet,
        rng: &mut ChaCha8Rng,
        name: &str,
        d_in: usize,
        d_out: usize,
        bias: bool,
    ) -> Self {
        let bound = 1.0 / (d_in as f32).sqrt();
        let w = ps.add(format!("{name}.weight"), uniform(rng, &[d_in, d_out], bound));
        let b = bias.then(|| ps.add(format!("{name}.bias"), uniform(rng, &[d_out], bound)));
        Linear { w, b, d_in, d_out }
    }

    fn out_shape(&self, x: &Tensor) -> Result<Vec<usize>> {
        if x.last_dim() != self.d_in {
            return shape_err(format!("linear expects last dim {}, got {:?}", self.d_in, x.shape()));
        }
        let mut shape = x.shape().to_vec();
        *shape.last_mut().unwrap() = self.d_out;
        Ok(shape)
    }

    pub fn forward(&self, ps: &ParamSet, x: &Tensor) -> Result<Tensor> {
        let shape = self.out_shape(x)?;
        let rows = x.rows();
        let mut y = Tensor::zeros(&shape);
        let beta = match self.b {
            Some(b) => {
                let bias = ps.get(b).data();
                for row in y.data_mut().chunks_exact_mut(self.d_out) {
                    row.copy_from_slice(bias);
                }
                1.0
            }
            None => 0.0,
        };
        gemm(
            View::row_major(x.data(), rows, self.d_in),
            View::row_major(ps.get(self.w).data(), self.d_in, self.d_out),
            beta,
            y.data_mut(),
        );
        Ok(y)
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&self, ps: &ParamSet, x: &Tensor, dy: &Tensor, grads: &mut Grads) -> Tensor {
        let rows = x.rows();
        assert_eq!(dy.rows(), rows);
        assert_eq!(dy.last_dim(), self.d_out);
        let xv = View::row_major(x.data(), rows, self.d_in);
        let dyv = View::row_major(dy.data(), rows, self.d_out);
        gemm(xv.t(), dyv, 1.0, grads.get_mut(self.w).data_mut());
        if let Some(b) = self.b {
            let gb = grads.get_mut(b).data_mut();
            for row in dy.data().chunks_exact(self.d_out) {
                for (g, &d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
        }
        let mut dx = Tensor::zeros(x.shape());
        gemm(
            dyv,
            View::row_major(ps.get(self.w).data(), self.d_in, self.d_out).t(),
            0.0,
            dx.data_mut(),
        );
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn identity_weight_passes_input() {
        let mut ps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lin = Linear::new(&mut ps, &mut rng, "l", 3, 3, true);
        let w = ps.get_mut(lin.w).data_mut();
        w.fill(0.0);
        for i in 0..3 {
            w[i * 3 + i] = 1.0;
        }
        ps.get_mut(lin.b.unwrap()).data_mut().fill(0.0);
        let x = Tensor::from_vec(&[2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.25, -1.0]).unwrap();
        assert_eq!(lin.forward(&ps, &x).unwrap(), x);
    }

    #[test]
    fn zero_input_gives_bias() {
        let mut ps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lin = Linear::new(&mut ps, &mut rng, "l", 4, 2, true);
        let y = lin.forward(&ps, &Tensor::zeros(&[3, 5, 4])).unwrap();
        assert_eq!(y.shape(), &[3, 5, 2]);
        let b = ps.get(lin.b.unwrap()).data();
        for row in y.data().chunks(2) {
            assert_eq!(row, b);
        }
    }

    #[test]
    fn rejects_wrong_width() {
        let mut ps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lin = Linear::new(&mut ps, &mut rng, "l", 4, 2, false);
        assert!(lin.forward(&ps, &Tensor::zeros(&[3])).is_err());
    }
}
