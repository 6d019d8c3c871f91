use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use crate::data::LabeledEpochs;
use crate::error::{invalid, Error, Result};
use crate::model::{forward, load_checkpoint, save_checkpoint, ModelParams, Phase};
use crate::nn::softmax_xent;
use crate::numerics::Rng;

/// Trials per forward pass when computing losses in inference mode.
pub const EVAL_BATCH: usize = 64;

/// Optimizer, epoch loop and early-stopping settings. The monitored quantity
/// is always the validation loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub seed: u64,
    pub checkpoint_path: PathBuf,
    /// CSV log `epoch,train_loss,val_loss`, rewritten from scratch by each fit.
    pub log_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            max_epochs: 200,
            patience: 35,
            batch_size: 16,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            seed: 0,
            checkpoint_path: PathBuf::from("best.sten"),
            log_path: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(invalid(format!(
                "learning_rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.max_epochs == 0 {
            return Err(invalid("max_epochs must be >= 1"));
        }
        if self.patience >= self.max_epochs {
            return Err(invalid(format!(
                "patience ({}) must be < max_epochs ({})",
                self.patience, self.max_epochs
            )));
        }
        if self.batch_size < 2 {
            return Err(invalid(format!(
                "batch_size must be >= 2 for train-mode batch norm, got {}",
                self.batch_size
            )));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(invalid(format!("{name} must be in [0, 1), got {beta}")));
            }
        }
        if self.eps_adam.is_nan() || self.eps_adam <= 0.0 {
            return Err(invalid(format!(
                "eps_adam must be > 0, got {}",
                self.eps_adam
            )));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps_adam,
        }
    }
}

/// Outcome of [`fit`]. Epochs are numbered from 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub stopped_epoch: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Parameters were reloaded from the best checkpoint.
    pub restored: bool,
}

/// One pass over `data` in shuffled mini-batches. A final batch of a single
/// trial is dropped. Returns the per-trial mean loss over the batches used.
pub fn train_epoch(
    params: &mut ModelParams,
    state: &mut AdamState,
    data: &LabeledEpochs,
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<f64> {
    let adam = cfg.adam();
    let mut order: Vec<usize> = (0..data.len()).collect();
    rng.shuffle(&mut order);

    let (mut total, mut seen) = (0.0, 0usize);
    for batch in order.chunks(cfg.batch_size) {
        if batch.len() < 2 {
            continue;
        }
        let (x, y) = data.batch(batch)?;
        let (logits, trace) = forward(params, &x, Phase::Train(rng))?;
        let xent = softmax_xent(&logits, &y)?;
        let loss = f64::from(xent.loss);
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                what: "training loss".into(),
            });
        }
        trace.commit_running_stats(params);
        let grads = trace.backward(&xent.grad)?;
        adam_step(params, &grads, state, &adam)?;
        params.apply_maxnorm();
        total += loss * batch.len() as f64;
        seen += batch.len();
    }
    if seen == 0 {
        return Err(invalid(format!(
            "training split needs at least 2 trials, got {}",
            data.len()
        )));
    }
    Ok(total / seen as f64)
}

/// Mean cross-entropy over `data` with dropout off and batch norm on running
/// statistics. Batches are summed in order, so the result is reproducible.
pub fn evaluate_loss(params: &ModelParams, data: &LabeledEpochs) -> Result<f64> {
    let order: Vec<usize> = (0..data.len()).collect();
    let mut total = 0.0;
    for batch in order.chunks(EVAL_BATCH) {
        let (x, y) = data.batch(batch)?;
        let (logits, _) = forward(params, &x, Phase::Infer)?;
        total += softmax_xent(&logits.cast::<f64>(), &y)?.loss * batch.len() as f64;
    }
    Ok(total / data.len() as f64)
}

/// Source of the monitored validation loss.
pub trait Validator {
    fn validation_loss(&mut self, params: &ModelParams, epoch: usize) -> Result<f64>;
}

impl Validator for &LabeledEpochs {
    fn validation_loss(&mut self, params: &ModelParams, _epoch: usize) -> Result<f64> {
        evaluate_loss(params, self)
    }
}

impl<F: FnMut(&ModelParams, usize) -> Result<f64>> Validator for F {
    fn validation_loss(&mut self, params: &ModelParams, epoch: usize) -> Result<f64> {
        self(params, epoch)
    }
}

/// Train on `train`, early-stop on the validation loss of `val`, and return
/// the parameters of the best epoch.
pub fn fit(
    params: ModelParams,
    train: &LabeledEpochs,
    val: &LabeledEpochs,
    cfg: &TrainConfig,
) -> Result<(ModelParams, FitReport)> {
    fit_with(params, train, val, cfg)
}

/// [`fit`] with an arbitrary validation-loss source.
///
/// The checkpoint is written once before the first epoch, so an unwritable
/// path fails before any training, and again on every strict improvement.
/// Training stops after `patience` epochs without improvement or at
/// `max_epochs`.
pub fn fit_with(
    mut params: ModelParams,
    train: &LabeledEpochs,
    mut validator: impl Validator,
    cfg: &TrainConfig,
) -> Result<(ModelParams, FitReport)> {
    cfg.validate()?;
    save_checkpoint(&params, &cfg.checkpoint_path)?;
    let mut log = cfg.log_path.as_deref().map(open_log).transpose()?;

    let mut rng = Rng::new(cfg.seed);
    let mut state = AdamState::for_model(&params)?;
    let mut report = FitReport {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        stopped_epoch: 0,
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
        restored: false,
    };
    let mut stale = 0;
    for epoch in 1..=cfg.max_epochs {
        let train_loss = train_epoch(&mut params, &mut state, train, cfg, &mut rng)?;
        let val_loss = validator.validation_loss(&params, epoch)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFinite {
                what: format!("validation loss at epoch {epoch}"),
            });
        }
        report.train_loss.push(train_loss);
        report.val_loss.push(val_loss);
        report.stopped_epoch = epoch;
        if let Some(file) = log.as_mut() {
            writeln!(file, "{epoch},{train_loss},{val_loss}")?;
        }

        if val_loss < report.best_val_loss {
            report.best_val_loss = val_loss;
            report.best_epoch = epoch;
            stale = 0;
            save_checkpoint(&params, &cfg.checkpoint_path)?;
        } else {
            stale += 1;
        }
        log::info!(
            "epoch {epoch}: train {train_loss:.5} val {val_loss:.5} (best {:.5} at {})",
            report.best_val_loss,
            report.best_epoch
        );
        if stale >= cfg.patience {
            break;
        }
    }

    let best = load_checkpoint(&cfg.checkpoint_path)?;
    report.restored = true;
    Ok((best, report))
}

fn open_log(path: &Path) -> Result<File> {
    let mut file = File::create(path)?;
    writeln!(file, "epoch,train_loss,val_loss")?;
    Ok(file)
}
