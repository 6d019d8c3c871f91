//! Adam, the epoch loop, and early stopping on validation loss with
//! restoration of the best checkpoint.

mod adam;
mod fit;

pub use adam::{adam_step, adam_update, AdamConfig, AdamState};
pub use fit::{
    evaluate_loss, fit, fit_with, train_epoch, FitReport, TrainConfig, Validator, EVAL_BATCH,
};
