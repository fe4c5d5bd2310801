//! Named parameter storage and matching gradient buffers.
//!
//! Layers hold [`ParamId`] handles into a [`ParamSet`] rather than owning
//! their weights. Two layers holding the same id share the weights, and the
//! gradient contributions of both land in the same [`Grads`] slot.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{NnError, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor. Names must be unique.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter name {name}");
        self.names.push(name);
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter())
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.tensors.iter_mut()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Checks that `other` has the same names and shapes in the same order.
    pub fn check_compatible(&self, other: &ParamSet) -> Result<()> {
        if self.len() != other.len() {
            return Err(NnError::Checkpoint(format!(
                "parameter count differs: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        for ((na, ta), (nb, tb)) in self.iter().zip(other.iter()) {
            if na != nb || ta.shape() != tb.shape() {
                return Err(NnError::Checkpoint(format!(
                    "parameter mismatch: {na} {:?} vs {nb} {:?}",
                    ta.shape(),
                    tb.shape()
                )));
            }
        }
        Ok(())
    }

    /// Overwrites all values from `other`, which must be compatible.
    pub fn copy_from(&mut self, other: &ParamSet) -> Result<()> {
        self.check_compatible(other)?;
        for (dst, src) in self.tensors.iter_mut().zip(&other.tensors) {
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }

    /// Elementwise arithmetic mean of compatible parameter sets.
    pub fn average(sets: &[ParamSet]) -> Result<ParamSet> {
        let first = sets
            .first()
            .ok_or_else(|| NnError::Checkpoint("nothing to average".into()))?;
        let mut acc: Vec<Vec<f64>> =
            first.tensors.iter().map(|t| vec![0.0; t.len()]).collect();
        for set in sets {
            first.check_compatible(set)?;
            for (a, t) in acc.iter_mut().zip(&set.tensors) {
                for (x, &v) in a.iter_mut().zip(t.data()) {
                    *x += v as f64;
                }
            }
        }
        let k = sets.len() as f64;
        let mut out = first.clone();
        for (t, a) in out.tensors.iter_mut().zip(acc) {
            for (v, s) in t.data_mut().iter_mut().zip(a) {
                *v = (s / k) as f32;
            }
        }
        Ok(out)
    }
}

/// Gradient buffers parallel to a [`ParamSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct Grads {
    tensors: Vec<Tensor>,
}

impl Grads {
    pub fn zeros_like(params: &ParamSet) -> Self {
        Grads { tensors: params.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect() }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn zero(&mut self) {
        for t in &mut self.tensors {
            t.data_mut().fill(0.0);
        }
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f32) {
        for t in &mut self.tensors {
            t.scale(s);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.data().iter())
            .map(|&g| (g as f64) * (g as f64))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }
}

/// Uniform initialization in `[-bound, bound)`.
pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], bound: f32) -> Tensor {
    let mut t = Tensor::zeros(shape);
    if bound > 0.0 {
        for v in t.data_mut() {
            *v = rng.random_range(-bound..bound);
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn average_two_sets() {
        let mut a = ParamSet::new();
        a.add("w", Tensor::full(&[2], 0.0));
        let mut b = ParamSet::new();
        b.add("w", Tensor::full(&[2], 2.0));
        let avg = ParamSet::average(&[a.clone(), b]).unwrap();
        assert_eq!(avg.get(ParamId(0)).data(), &[1.0, 1.0]);
        assert_eq!(ParamSet::average(&[a.clone()]).unwrap(), a);
    }

    #[test]
    fn average_rejects_mismatch() {
        let mut a = ParamSet::new();
        a.add("w", Tensor::zeros(&[2]));
        let mut b = ParamSet::new();
        b.add("w", Tensor::zeros(&[3]));
        assert!(ParamSet::average(&[a, b]).is_err());
    }

    #[test]
    fn uniform_respects_bound_and_seed() {
        let mut r1 = ChaCha8Rng::seed_from_u64(3);
        let mut r2 = ChaCha8Rng::seed_from_u64(3);
        let a = uniform(&mut r1, &[100], 0.5);
        let b = uniform(&mut r2, &[100], 0.5);
        assert_eq!(a, b);
        assert!(a.data().iter().all(|v| v.abs() <= 0.5));
    }
}
