//! The training loop: shuffled minibatches, analytic gradients, AdamW updates
//! under a warmup+cosine schedule, and best-validation-loss checkpointing.

mod optim;
mod schedule;

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::{make_batches, PairedDataset, Split};
use crate::error::{Error, Result};
use crate::loss::{batch_loss, loss_backward, LossConfig};
use crate::model::{save_checkpoint, DualEncoderModel};
use crate::rng::derive_seed;

pub use optim::{adamw_step, AdamW, OptimizerState};
pub use schedule::{LrSchedule, StepDecay, WarmupCosine};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub warmup_steps: u64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub drop_last: bool,
    pub loss: LossConfig,
    pub checkpoint_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamW::default();
        TrainConfig {
            epochs: 30,
            batch_size: 64,
            lr_max: 1e-3,
            lr_min: 0.0,
            warmup_steps: 50,
            weight_decay: adam.weight_decay,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            seed: 0,
            drop_last: true,
            loss: LossConfig::default(),
            checkpoint_path: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.epochs < 1 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch_size < 2 {
            return bad(format!("batch_size must be >= 2, got {}", self.batch_size));
        }
        if !(self.lr_min >= 0.0 && self.lr_min <= self.lr_max && self.lr_max.is_finite()) {
            return bad(format!(
                "need 0 <= lr_min <= lr_max, got lr_min {} lr_max {}",
                self.lr_min, self.lr_max
            ));
        }
        if self.weight_decay.is_nan()
            || self.weight_decay < 0.0
            || self.eps.is_nan()
            || self.eps <= 0.0
        {
            return bad("weight_decay must be >= 0 and eps > 0".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must be in [0, 1)".into());
        }
        self.loss.validate()
    }

    pub fn adamw(&self) -> AdamW {
        AdamW {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }

    pub fn schedule(&self) -> WarmupCosine {
        WarmupCosine {
            lr_max: self.lr_max,
            lr_min: self.lr_min,
            warmup_steps: self.warmup_steps,
        }
    }
}

/// Warmup+cosine rate for optimizer step `step` (1-based; step 0 is the
/// state before any update).
pub fn lr_at(step: u64, cfg: &TrainConfig, total_steps: u64) -> f64 {
    cfg.schedule().lr_at(step, total_steps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Per-pair mean loss of the end-of-epoch model over the train split.
    pub train_loss: f64,
    /// Per-pair mean of the step losses seen during the epoch.
    pub train_loss_running: f64,
    pub val_loss: Option<f64>,
    pub checkpointed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_loss: f64,
    pub best_epoch: usize,
    /// `"val"`, or `"train"` when the dataset has no validation pairs.
    pub selection_split: Split,
    pub checkpoint_writes: usize,
    pub steps: u64,
    pub final_lr: f64,
    pub wall_clock_seconds: f64,
}

impl TrainReport {
    /// The report as JSON with the timing field moved into a `header` object,
    /// so everything outside `header` is reproducible.
    pub fn to_json(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        let obj = v.as_object_mut().expect("object");
        let secs = obj.remove("wall_clock_seconds").unwrap_or(Value::Null);
        obj.insert(
            "header".into(),
            serde_json::json!({ "wall_clock_seconds": secs }),
        );
        v
    }
}

#[derive(Serialize)]
struct StepLog {
    step: u64,
    epoch: usize,
    lr: f64,
    loss: f64,
    ce_term: f64,
    margin_term: f64,
}

#[derive(Serialize)]
struct EpochLog {
    epoch: usize,
    train_loss: f64,
    val_loss: Option<f64>,
    checkpointed: bool,
}

fn log_line(log: &mut dyn Write, record: &impl Serialize) -> Result<()> {
    let mut line = serde_json::to_vec(record)?;
    line.push(b'\n');
    log.write_all(&line)
        .map_err(|e| Error::io("<training log>", e))
}

/// Per-pair mean loss over `split`, batched in a fixed order derived from
/// `cfg.seed`. `None` if the split is empty.
pub fn evaluate_loss(
    model: &DualEncoderModel,
    ds: &PairedDataset,
    split: Split,
    cfg: &TrainConfig,
) -> Result<Option<f64>> {
    let batches = make_batches(ds, split, cfg.batch_size, cfg.seed, false)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for batch in &batches {
        let (x, y) = ds.batch_features(batch);
        sum += batch_loss(&x, &y, model, &cfg.loss)?.total;
        count += batch.len();
    }
    Ok((count > 0).then(|| sum / count as f64))
}

fn batches_per_epoch(n_train: usize, cfg: &TrainConfig) -> usize {
    if cfg.drop_last {
        n_train / cfg.batch_size
    } else {
        n_train.div_ceil(cfg.batch_size)
    }
}

/// Writes the loss and training configuration into the model's config echo.
fn stamp_meta(model: &mut DualEncoderModel, cfg: &TrainConfig) -> Result<()> {
    let mut meta = match std::mem::take(&mut model.meta) {
        Value::Object(m) => m,
        Value::Null => serde_json::Map::new(),
        other => {
            let mut m = serde_json::Map::new();
            m.insert("previous".into(), other);
            m
        }
    };
    meta.insert("loss".into(), serde_json::to_value(&cfg.loss)?);
    let mut train = serde_json::to_value(cfg)?;
    let obj = train.as_object_mut().expect("object");
    obj.remove("loss");
    // output location, not configuration
    obj.remove("checkpoint_path");
    meta.insert("train".into(), train);
    model.meta = Value::Object(meta);
    Ok(())
}

pub fn train(
    model: DualEncoderModel,
    ds: &PairedDataset,
    cfg: &TrainConfig,
) -> Result<(DualEncoderModel, TrainReport)> {
    train_logged(model, ds, cfg, &mut std::io::sink())
}

/// [`train`], also writing one JSON line per step and per epoch to `log`.
pub fn train_logged(
    model: DualEncoderModel,
    ds: &PairedDataset,
    cfg: &TrainConfig,
    log: &mut dyn Write,
) -> Result<(DualEncoderModel, TrainReport)> {
    train_with_schedule(model, ds, cfg, &cfg.schedule(), log)
}

pub fn train_with_schedule(
    mut model: DualEncoderModel,
    ds: &PairedDataset,
    cfg: &TrainConfig,
    schedule: &dyn LrSchedule,
    log: &mut dyn Write,
) -> Result<(DualEncoderModel, TrainReport)> {
    cfg.validate()?;
    let started = Instant::now();
    let n_train = ds.split_len(Split::Train);
    if n_train == 0 {
        return Err(Error::Dataset("train split is empty".into()));
    }
    if cfg.batch_size > n_train {
        return Err(Error::InvalidArgument(format!(
            "batch_size {} exceeds train split size {n_train}",
            cfg.batch_size
        )));
    }
    if model.img_dim() != ds.image_store().dim() || model.txt_dim() != ds.text_store().dim() {
        return Err(Error::InvalidArgument(format!(
            "model expects ({}, {}) features, dataset has ({}, {})",
            model.img_dim(),
            model.txt_dim(),
            ds.image_store().dim(),
            ds.text_store().dim()
        )));
    }
    stamp_meta(&mut model, cfg)?;

    let has_val = ds.split_len(Split::Val) > 0;
    let selection_split = if has_val { Split::Val } else { Split::Train };
    let total_steps = (cfg.epochs * batches_per_epoch(n_train, cfg)) as u64;
    let hp = cfg.adamw();
    let block_lens: Vec<usize> = model.param_blocks().iter().map(|b| b.len()).collect();
    let mut state = OptimizerState::new(&block_lens);

    let mut step = 0u64;
    let mut lr = schedule.lr_at(0, total_steps);
    let mut best: Option<(f64, usize, DualEncoderModel)> = None;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut writes = 0usize;

    for epoch in 1..=cfg.epochs {
        let batches = make_batches(
            ds,
            Split::Train,
            cfg.batch_size,
            derive_seed(cfg.seed, epoch as u64),
            cfg.drop_last,
        )?;
        let mut running = 0.0;
        let mut seen = 0usize;
        for batch in &batches {
            let (x, y) = ds.batch_features(batch);
            let (out, grads) = loss_backward(&x, &y, &model, &cfg.loss)?;
            step += 1;
            if !out.total.is_finite() {
                return Err(Error::Divergence {
                    step,
                    epoch,
                    value: out.total,
                });
            }
            lr = schedule.lr_at(step, total_steps);
            adamw_step(
                &mut model.param_blocks_mut(),
                &grads.blocks(),
                &mut state,
                lr,
                &hp,
            )?;
            if model
                .param_blocks()
                .iter()
                .any(|b| b.iter().any(|v| !v.is_finite()))
            {
                return Err(Error::Divergence {
                    step,
                    epoch,
                    value: f64::NAN,
                });
            }
            running += out.total;
            seen += batch.len();
            log_line(
                log,
                &StepLog {
                    step,
                    epoch,
                    lr,
                    loss: out.total,
                    ce_term: out.ce_term,
                    margin_term: out.margin_term,
                },
            )?;
        }

        let train_loss =
            evaluate_loss(&model, ds, Split::Train, cfg)?.expect("train split non-empty");
        let val_loss = evaluate_loss(&model, ds, Split::Val, cfg)?;
        let key = val_loss.unwrap_or(train_loss);
        if !key.is_finite() {
            return Err(Error::Divergence {
                step,
                epoch,
                value: key,
            });
        }
        let improved = best.as_ref().is_none_or(|(b, _, _)| key < *b);
        if improved {
            if let Some(path) = &cfg.checkpoint_path {
                save_checkpoint(&model, path)?;
            }
            writes += 1;
            best = Some((key, epoch, model.clone()));
        }
        log_line(
            log,
            &EpochLog {
                epoch,
                train_loss,
                val_loss,
                checkpointed: improved,
            },
        )?;
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            train_loss_running: if seen > 0 { running / seen as f64 } else { 0.0 },
            val_loss,
            checkpointed: improved,
        });
    }

    let (best_loss, best_epoch, best_model) = best.expect("at least one epoch");
    let report = TrainReport {
        epochs,
        best_loss,
        best_epoch,
        selection_split,
        checkpoint_writes: writes,
        steps: step,
        final_lr: lr,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    Ok((best_model, report))
}
