//! Accuracy, F1 and confusion counts, and a bandpower-threshold baseline.

mod baseline;

pub use baseline::BandpowerBaseline;

use serde::{Deserialize, Serialize};

use crate::data::LabeledEpochs;
use crate::error::{invalid, shape_err, Error, Result};
use crate::model::{predict, ModelParams};
use crate::train::EVAL_BATCH;

/// Binary classification summary. Positive class is 1 (High valence).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub f1: f64,
    /// `confusion[actual][predicted]`
    pub confusion: [[u64; 2]; 2],
    pub n: u64,
}

impl MetricsReport {
    pub fn precision(&self) -> f64 {
        let [[_, fp], [_, tp]] = self.confusion;
        ratio(tp, tp + fp)
    }

    pub fn recall(&self) -> f64 {
        let [_, [fn_, tp]] = self.confusion;
        ratio(tp, tp + fn_)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// F1 is 0 whenever precision or recall has a zero denominator.
pub fn compute_metrics(predicted: &[usize], actual: &[usize]) -> Result<MetricsReport> {
    if predicted.len() != actual.len() {
        return Err(shape_err(
            "metrics",
            format!("{} predictions", actual.len()),
            predicted.len().to_string(),
        ));
    }
    if predicted.is_empty() {
        return Err(invalid("metrics need at least one prediction"));
    }
    let mut confusion = [[0u64; 2]; 2];
    for (row, (&p, &a)) in predicted.iter().zip(actual).enumerate() {
        for label in [p, a] {
            if label > 1 {
                return Err(Error::LabelOutOfRange {
                    row,
                    label,
                    classes: 2,
                });
            }
        }
        confusion[a][p] += 1;
    }
    let n = predicted.len() as u64;
    let (tp, fp, fn_) = (confusion[1][1], confusion[0][1], confusion[1][0]);
    let f1 = if tp + fp == 0 || tp + fn_ == 0 {
        0.0
    } else {
        let (p, r) = (ratio(tp, tp + fp), ratio(tp, tp + fn_));
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    };
    Ok(MetricsReport {
        accuracy: (confusion[0][0] + tp) as f64 / n as f64,
        f1,
        confusion,
        n,
    })
}

/// Inference-mode class predictions for every trial of `data`.
pub fn predict_labels(params: &ModelParams, data: &LabeledEpochs) -> Result<Vec<usize>> {
    let order: Vec<usize> = (0..data.len()).collect();
    let mut out = Vec::with_capacity(data.len());
    for batch in order.chunks(EVAL_BATCH) {
        let (x, _) = data.batch(batch)?;
        out.extend(predict(params, &x)?);
    }
    Ok(out)
}

/// [`compute_metrics`] of the model on `data`.
pub fn evaluate(params: &ModelParams, data: &LabeledEpochs) -> Result<MetricsReport> {
    compute_metrics(&predict_labels(params, data)?, &data.labels)
}
