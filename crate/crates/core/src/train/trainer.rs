use std::collections::VecDeque;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use melclean_nn::{Grads, ParamSet, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::features::Example;
use crate::model::{pack_bands, pack_spectrograms, EnhancementModel};
use crate::train::loss::{loss_and_grad, LossKind};
use crate::train::optim::{clip_global_norm, lr_at, AdamW, AdamWConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr0: f64,
    /// Per-epoch multiplicative decay of the learning rate.
    pub lr_decay: f64,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Hard cap on optimizer steps across all epochs.
    pub max_steps: Option<usize>,
    /// Average the parameters of the last `average_last` epochs at the end.
    pub average_last: usize,
    pub seed: u64,
    pub adamw: AdamWConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 1e-3,
            lr_decay: 0.99,
            clip_norm: 10.0,
            batch_size: 4,
            epochs: 10,
            max_steps: None,
            average_last: 10,
            seed: 0,
            adamw: AdamWConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr0 > 0.0
            && self.clip_norm > 0.0
            && self.lr_decay > 0.0
            && self.batch_size > 0
            && self.epochs > 0
            && self.average_last > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(
                "learning rate, decay, clip norm, batch size, epochs and averaging window must be positive".into(),
            ))
        }
    }
}

/// Stacks examples into `([batch, 257, T, 2], [batch, bands, T])`, cropping
/// every example to the shortest one.
pub fn batch_tensors(examples: &[&Example], bands: usize) -> Result<(Tensor, Tensor)> {
    let t = examples.iter().map(|e| e.n_frames()).min().ok_or(Error::EmptyInput("batch"))?;
    let mut specs = Vec::with_capacity(examples.len());
    let mut targets = Vec::with_capacity(examples.len());
    for e in examples {
        if e.target.len() != e.n_frames() * bands {
            return Err(Error::Shape(format!("example target holds {} values, expected {}", e.target.len(), e.n_frames() * bands)));
        }
        let mut spec = e.analysis.input.clone();
        if spec.n_frames() > t {
            let data = spec.frames().take(t).flatten().copied().collect();
            spec = crate::dsp::ComplexSpectrogram::from_frames(data, spec.n_freqs(), spec.hop, spec.framing)?;
        }
        specs.push(spec);
        targets.push(&e.target[..t * bands]);
    }
    let refs: Vec<_> = specs.iter().collect();
    Ok((pack_spectrograms(&refs)?, pack_bands(&targets, bands)?))
}

/// Mean loss over `examples` without updating anything.
pub fn evaluate(model: &EnhancementModel, examples: &[Example], batch_size: usize) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::EmptyInput("evaluation set"));
    }
    let kind = LossKind::for_target(model.config.target);
    let mut total = 0.0;
    for chunk in examples.chunks(batch_size.max(1)) {
        let refs: Vec<&Example> = chunk.iter().collect();
        let (x, y) = batch_tensors(&refs, model.n_bands())?;
        let (pred, _) = model.forward(&x)?;
        total += loss_and_grad(kind, &pred, &y)?.0 * chunk.len() as f64;
    }
    Ok(total / examples.len() as f64)
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct TrainReport {
    /// Loss of every applied or skipped step, in order.
    pub step_losses: Vec<f64>,
    /// Validation loss at the end of every epoch (empty without a validation set).
    pub val_losses: Vec<f64>,
    pub steps: usize,
    pub epochs: usize,
    /// Steps dropped because the loss or a gradient was not finite.
    pub skipped: usize,
    pub checkpoints: Vec<PathBuf>,
}

struct CsvLog(BufWriter<File>);

impl CsvLog {
    fn create(path: &Path) -> Result<Self> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "step,epoch,lr,loss,val_loss")?;
        Ok(CsvLog(w))
    }

    fn row(&mut self, step: usize, epoch: usize, lr: f64, loss: f64, val: Option<f64>) -> Result<()> {
        let val = val.map(|v| v.to_string()).unwrap_or_default();
        writeln!(self.0, "{step},{epoch},{lr},{loss},{val}")?;
        Ok(())
    }
}

/// Owns the optimizer state for one model.
pub struct Trainer<'a> {
    pub model: &'a mut EnhancementModel,
    pub config: TrainConfig,
    optimizer: AdamW,
    out_dir: Option<PathBuf>,
}

impl<'a> Trainer<'a> {
    /// With `out_dir`, a CSV log and one checkpoint per epoch are written there.
    pub fn new(model: &'a mut EnhancementModel, config: TrainConfig, out_dir: Option<&Path>) -> Result<Self> {
        config.validate()?;
        let optimizer = AdamW::new(&model.params, config.adamw);
        Ok(Trainer { model, config, optimizer, out_dir: out_dir.map(Path::to_path_buf) })
    }

    /// One forward/backward/update on `batch`. Returns the loss and whether
    /// the update was applied.
    pub fn step(&mut self, batch: &[&Example], lr: f64) -> Result<(f64, bool)> {
        let (x, y) = batch_tensors(batch, self.model.n_bands())?;
        let (pred, cache) = self.model.forward(&x)?;
        let (loss, dy) = loss_and_grad(LossKind::for_target(self.model.config.target), &pred, &y)?;
        let mut grads = Grads::zeros_like(&self.model.params);
        self.model.backward(&cache, &dy, &mut grads)?;
        if !loss.is_finite() || !grads.is_finite() {
            return Ok((loss, false));
        }
        clip_global_norm(&mut grads, self.config.clip_norm);
        self.optimizer.step(&mut self.model.params, &grads, lr);
        Ok((loss, true))
    }

    pub fn fit(&mut self, train: &[Example], val: &[Example]) -> Result<TrainReport> {
        if train.is_empty() {
            return Err(Error::EmptyInput("training set"));
        }
        let cfg = self.config.clone();
        let mut log = match &self.out_dir {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                Some(CsvLog::create(&dir.join("train_log.csv"))?)
            }
            None => None,
        };
        let mut report = TrainReport::default();
        let mut recent: VecDeque<ParamSet> = VecDeque::new();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut order: Vec<usize> = (0..train.len()).collect();
        let max_steps = cfg.max_steps.unwrap_or(usize::MAX);
        for epoch in 0..cfg.epochs {
            if report.steps >= max_steps {
                break;
            }
            let lr = lr_at(cfg.lr0, cfg.lr_decay, epoch);
            order.shuffle(&mut rng);
            let batches: Vec<&[usize]> = order.chunks(cfg.batch_size).collect();
            let n_batches = batches.len();
            for (bi, idx) in batches.into_iter().enumerate() {
                if report.steps >= max_steps {
                    break;
                }
                let batch: Vec<&Example> = idx.iter().map(|&i| &train[i]).collect();
                let (loss, applied) = self.step(&batch, lr)?;
                report.steps += 1;
                report.skipped += usize::from(!applied);
                report.step_losses.push(loss);
                let last_in_epoch = bi + 1 == n_batches || report.steps >= max_steps;
                let val_loss = if last_in_epoch && !val.is_empty() {
                    let v = evaluate(self.model, val, cfg.batch_size)?;
                    report.val_losses.push(v);
                    Some(v)
                } else {
                    None
                };
                if let Some(log) = &mut log {
                    log.row(report.steps, epoch, lr, loss, val_loss)?;
                }
            }
            report.epochs = epoch + 1;
            self.end_epoch(epoch, &mut recent, &mut report)?;
        }
        if recent.len() > 1 {
            let sets: Vec<ParamSet> = recent.into_iter().collect();
            self.model.set_average(&sets)?;
        }
        if let Some(log) = &mut log {
            log.0.flush()?;
        }
        if let Some(dir) = &self.out_dir {
            let path = dir.join("final.ckpt");
            self.model.save(&path, json!({ "steps": report.steps, "averaged_epochs": self.config.average_last }))?;
            report.checkpoints.push(path);
        }
        Ok(report)
    }

    fn end_epoch(&mut self, epoch: usize, recent: &mut VecDeque<ParamSet>, report: &mut TrainReport) -> Result<()> {
        recent.push_back(self.model.params.clone());
        while recent.len() > self.config.average_last {
            recent.pop_front();
        }
        if let Some(dir) = &self.out_dir {
            let path = dir.join(format!("epoch_{epoch:03}.ckpt"));
            let lr = lr_at(self.config.lr0, self.config.lr_decay, epoch);
            self.model.save(&path, json!({ "epoch": epoch, "lr": lr, "steps": report.steps }))?;
            report.checkpoints.push(path);
        }
        Ok(())
    }
}
