//! Dense row-major f32 tensor with up to four dimensions.

use crate::error::{shape_err, Result};

pub const MAX_DIMS: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        assert!(shape.len() <= MAX_DIMS, "tensor rank {} exceeds {MAX_DIMS}", shape.len());
        Tensor { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    pub fn full(shape: &[usize], value: f32) -> Self {
        let mut t = Self::zeros(shape);
        t.data.fill(value);
        t
    }

    pub fn from_vec(shape: &[usize], data: Vec<f32>) -> Result<Self> {
        if shape.len() > MAX_DIMS {
            return shape_err(format!("rank {} exceeds {MAX_DIMS}", shape.len()));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return shape_err(format!("shape {shape:?} needs {n} values, got {}", data.len()));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    /// Size of the trailing dimension.
    pub fn last_dim(&self) -> usize {
        *self.shape.last().unwrap_or(&1)
    }

    /// Number of rows when the tensor is viewed as `[.., last_dim]`.
    pub fn rows(&self) -> usize {
        let d = self.last_dim();
        if d == 0 {
            0
        } else {
            self.data.len() / d
        }
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() || shape.len() > MAX_DIMS {
            return shape_err(format!("cannot reshape {:?} into {shape:?}", self.shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [a, b, c] => Ok((a, b, c)),
            _ => shape_err(format!("expected rank 3, got {:?}", self.shape)),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Swaps the first two axes of a rank-3 tensor: `[a, b, c] -> [b, a, c]`.
    pub fn swap01(&self) -> Tensor {
        let (a, b, c) = self.dims3().expect("swap01 needs a rank-3 tensor");
        let mut out = vec![0.0; self.data.len()];
        for i in 0..a {
            for j in 0..b {
                let src = (i * b + j) * c;
                let dst = (j * a + i) * c;
                out[dst..dst + c].copy_from_slice(&self.data[src..src + c]);
            }
        }
        Tensor { shape: vec![b, a, c], data: out }
    }

    /// Reverses the middle axis of a rank-3 tensor `[b, l, c]`.
    pub fn reverse_axis1(&self) -> Tensor {
        let (b, l, c) = self.dims3().expect("reverse_axis1 needs a rank-3 tensor");
        let mut out = vec![0.0; self.data.len()];
        for i in 0..b {
            for t in 0..l {
                let src = (i * l + t) * c;
                let dst = (i * l + (l - 1 - t)) * c;
                out[dst..dst + c].copy_from_slice(&self.data[src..src + c]);
            }
        }
        Tensor { shape: self.shape.clone(), data: out }
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn scale(&mut self, s: f32) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn sum_f64(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f32 {
        assert_eq!(self.shape, other.shape);
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max)
    }

    /// Concatenates rank-3 tensors along axis 1.
    pub fn concat_axis1(parts: &[&Tensor]) -> Result<Tensor> {
        let first = match parts.first() {
            Some(p) => p,
            None => return shape_err("concat of zero tensors"),
        };
        let (b, _, c) = first.dims3()?;
        let mut total = 0;
        for p in parts {
            let (pb, pl, pc) = p.dims3()?;
            if pb != b || pc != c {
                return shape_err(format!("concat {:?} with {:?}", first.shape, p.shape));
            }
            total += pl;
        }
        let mut out = Tensor::zeros(&[b, total, c]);
        for i in 0..b {
            let mut off = 0;
            for p in parts {
                let pl = p.shape[1];
                let src = &p.data[i * pl * c..(i + 1) * pl * c];
                let dst = (i * total + off) * c;
                out.data[dst..dst + pl * c].copy_from_slice(src);
                off += pl;
            }
        }
        Ok(out)
    }

    /// Slices a rank-3 tensor along axis 1: `[b, start..end, c]`.
    pub fn slice_axis1(&self, start: usize, end: usize) -> Tensor {
        let (b, l, c) = self.dims3().expect("slice_axis1 needs a rank-3 tensor");
        assert!(start <= end && end <= l);
        let n = end - start;
        let mut out = Tensor::zeros(&[b, n, c]);
        for i in 0..b {
            let src = (i * l + start) * c;
            out.data[i * n * c..(i + 1) * n * c].copy_from_slice(&self.data[src..src + n * c]);
        }
        out
    }
}
