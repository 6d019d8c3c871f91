use crate::error::{invalid, shape_err, Error, Result};
use crate::numerics::Tensor;

/// Lowest and highest valence rating on the self-assessment scale.
pub const VALENCE_RANGE: (f32, f32) = (1.0, 9.0);

/// EEG trials `[n_trials, n_channels, n_samples]` with per-trial subject and
/// valence rating.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSet {
    trials: Tensor<f32>,
    subject_ids: Vec<u32>,
    valence: Vec<f32>,
    sample_rate_hz: f32,
}

impl EpochSet {
    pub fn new(
        trials: Tensor<f32>,
        subject_ids: Vec<u32>,
        valence: Vec<f32>,
        sample_rate_hz: f32,
    ) -> Result<Self> {
        if trials.rank() != 3 {
            return Err(shape_err(
                "epoch set",
                "[n_trials, n_channels, n_samples]",
                format!("{:?}", trials.shape()),
            ));
        }
        let n = trials.shape()[0];
        for (what, len) in [
            ("subject ids", subject_ids.len()),
            ("valence", valence.len()),
        ] {
            if len != n {
                return Err(shape_err(
                    "epoch set",
                    format!("{n} {what}"),
                    len.to_string(),
                ));
            }
        }
        if let Some(index) = valence
            .iter()
            .position(|v| !(VALENCE_RANGE.0..=VALENCE_RANGE.1).contains(v))
        {
            return Err(Error::RatingOutOfRange {
                index,
                value: valence[index],
            });
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(invalid(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        Ok(Self {
            trials,
            subject_ids,
            valence,
            sample_rate_hz,
        })
    }

    pub fn trials(&self) -> &Tensor<f32> {
        &self.trials
    }

    pub fn subject_ids(&self) -> &[u32] {
        &self.subject_ids
    }

    pub fn valence(&self) -> &[f32] {
        &self.valence
    }

    pub fn sample_rate_hz(&self) -> f32 {
        self.sample_rate_hz
    }

    pub fn n_trials(&self) -> usize {
        self.trials.shape()[0]
    }

    pub fn n_channels(&self) -> usize {
        self.trials.shape()[1]
    }

    pub fn n_samples(&self) -> usize {
        self.trials.shape()[2]
    }

    /// Channel-major samples of one trial.
    pub fn trial(&self, index: usize) -> &[f32] {
        let len = self.n_channels() * self.n_samples();
        &self.trials.data()[index * len..(index + 1) * len]
    }

    /// Distinct subject ids in first-appearance order.
    pub fn subjects(&self) -> Vec<u32> {
        let mut seen = Vec::new();
        for &s in &self.subject_ids {
            if !seen.contains(&s) {
                seen.push(s);
            }
        }
        seen
    }

    /// The trials at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(invalid("cannot select zero trials"));
        }
        let len = self.n_channels() * self.n_samples();
        let mut data = Vec::with_capacity(indices.len() * len);
        for &i in indices {
            if i >= self.n_trials() {
                return Err(invalid(format!(
                    "trial {i} out of range for {} trials",
                    self.n_trials()
                )));
            }
            data.extend_from_slice(self.trial(i));
        }
        Ok(Self {
            trials: Tensor::from_vec(&[indices.len(), self.n_channels(), self.n_samples()], data)?,
            subject_ids: indices.iter().map(|&i| self.subject_ids[i]).collect(),
            valence: indices.iter().map(|&i| self.valence[i]).collect(),
            sample_rate_hz: self.sample_rate_hz,
        })
    }

    /// Same metadata, per-channel rows rewritten by `f(row, out)`.
    pub(crate) fn map_rows(&self, mut f: impl FnMut(&[f32], &mut [f32])) -> Self {
        let t = self.n_samples();
        let mut out = self.trials.clone();
        for (src, dst) in self
            .trials
            .data()
            .chunks_exact(t)
            .zip(out.data_mut().chunks_exact_mut(t))
        {
            f(src, dst);
        }
        Self {
            trials: out,
            ..self.clone()
        }
    }
}

/// Binary valence class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Valence {
    Low = 0,
    High = 1,
}

/// `High` iff the rating is at least 5. Ratings outside `[1, 9]` are errors.
pub fn binarize_valence(ratings: &[f32]) -> Result<Vec<usize>> {
    ratings
        .iter()
        .enumerate()
        .map(|(index, &value)| {
            if !(VALENCE_RANGE.0..=VALENCE_RANGE.1).contains(&value) {
                Err(Error::RatingOutOfRange { index, value })
            } else if value >= 5.0 {
                Ok(Valence::High as usize)
            } else {
                Ok(Valence::Low as usize)
            }
        })
        .collect()
}

/// An [`EpochSet`] with its binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEpochs {
    pub epochs: EpochSet,
    pub labels: Vec<usize>,
}

impl LabeledEpochs {
    pub fn from_epochs(epochs: EpochSet) -> Result<Self> {
        let labels = binarize_valence(epochs.valence())?;
        Ok(Self { epochs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Network input `[b, 1, C, T]` for the trials at `indices`.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor<f32>, Vec<usize>)> {
        let es = &self.epochs;
        let (c, t) = (es.n_channels(), es.n_samples());
        let mut data = Vec::with_capacity(indices.len() * c * t);
        for &i in indices {
            data.extend_from_slice(es.trial(i));
        }
        let x = Tensor::from_vec(&[indices.len(), 1, c, t], data)?;
        Ok((x, indices.iter().map(|&i| self.labels[i]).collect()))
    }

    /// Same labels, trials replaced by `f(epochs)`.
    pub fn map_epochs(&self, f: impl FnOnce(&EpochSet) -> Result<EpochSet>) -> Result<Self> {
        Ok(Self {
            epochs: f(&self.epochs)?,
            labels: self.labels.clone(),
        })
    }
}

/// Subject-disjoint train / validation / test partition.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSplit {
    pub train: LabeledEpochs,
    pub val: LabeledEpochs,
    pub test: LabeledEpochs,
}

impl LabeledSplit {
    pub fn map_epochs(&self, f: impl Fn(&EpochSet) -> Result<EpochSet>) -> Result<Self> {
        Ok(Self {
            train: self.train.map_epochs(&f)?,
            val: self.val.map_epochs(&f)?,
            test: self.test.map_epochs(&f)?,
        })
    }
}
