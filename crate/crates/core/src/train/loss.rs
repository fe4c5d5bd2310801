//! Training losses: MAE on logMel (mapping) and MSE on the ratio mask.

use melclean_nn::Tensor;

use crate::error::{Error, Result};
use crate::model::Target;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    Mae,
    Mse,
}

impl LossKind {
    pub fn for_target(target: Target) -> Self {
        match target {
            Target::Mapping => LossKind::Mae,
            Target::Mask => LossKind::Mse,
        }
    }
}

fn check(pred: &Tensor, target: &Tensor) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!("prediction {:?} vs target {:?}", pred.shape(), target.shape())));
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput("loss inputs"));
    }
    Ok(())
}

/// Mean absolute difference, accumulated in `f64`.
pub fn loss_mae(pred: &Tensor, target: &Tensor) -> Result<f64> {
    check(pred, target)?;
    let s: f64 = pred.data().iter().zip(target.data()).map(|(&p, &t)| (p as f64 - t as f64).abs()).sum();
    Ok(s / pred.len() as f64)
}

/// Mean squared difference, accumulated in `f64`.
pub fn loss_mrm(pred: &Tensor, target: &Tensor) -> Result<f64> {
    check(pred, target)?;
    let s: f64 = pred.data().iter().zip(target.data()).map(|(&p, &t)| (p as f64 - t as f64).powi(2)).sum();
    Ok(s / pred.len() as f64)
}

/// Loss value and its gradient with respect to `pred`. The MAE subgradient
/// at a tie is 0.
pub fn loss_and_grad(kind: LossKind, pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    let n = pred.len() as f32;
    let (value, grad): (f64, Vec<f32>) = match kind {
        LossKind::Mae => (
            loss_mae(pred, target)?,
            pred.data()
                .iter()
                .zip(target.data())
                .map(|(&p, &t)| if p > t { 1.0 / n } else if p < t { -1.0 / n } else { 0.0 })
                .collect(),
        ),
        LossKind::Mse => (
            loss_mrm(pred, target)?,
            pred.data().iter().zip(target.data()).map(|(&p, &t)| 2.0 * (p - t) / n).collect(),
        ),
    };
    Ok((value, Tensor::from_vec(pred.shape(), grad)?))
}
