//! Minimal dense f32 layers with hand-written reverse-mode gradients.
//!
//! Every layer exposes a `forward` that returns whatever it needs to cache and
//! a `backward` that accumulates parameter gradients into a [`Grads`] and
//! returns the gradient with respect to its input. Parameters live in a shared
//! [`ParamSet`] so that weight sharing is expressed by reusing a [`ParamId`].
//!
//! Sequence layers work on `[batch, length, channels]` tensors.

pub mod activation;
pub mod checkpoint;
pub mod conv;
pub mod error;
pub mod flinear;
pub mod gemm;
pub mod linear;
pub mod mamba;
pub mod norm;
pub mod params;
pub mod ssm;
pub mod tensor;

pub use conv::{Conv1d, Padding};
pub use error::{NnError, Result};
pub use flinear::AxisLinear;
pub use linear::Linear;
pub use mamba::{MambaBlock, MambaCache, MambaConfig, MambaState};
pub use norm::{LayerNorm, LayerNormCache};
pub use params::{Grads, ParamId, ParamSet};
pub use ssm::{Direction, SsmCache, SsmLayer, SsmState};
pub use tensor::Tensor;
