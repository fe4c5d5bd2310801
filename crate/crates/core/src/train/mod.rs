//! Losses, AdamW, the learning-rate schedule and the training loop.

pub mod loss;
pub mod optim;
pub mod trainer;

pub use loss::{loss_and_grad, loss_mae, loss_mrm, LossKind};
pub use optim::{clip_global_norm, lr_at, AdamW, AdamWConfig};
pub use trainer::{batch_tensors, evaluate, TrainConfig, TrainReport, Trainer};
