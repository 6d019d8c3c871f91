use serde::{Deserialize, Serialize};

use crate::data::{posterior_channels, EpochSet, LabeledEpochs, Periodogram};
use crate::error::{invalid, Result};

/// Threshold on the relative 8-12 Hz power of the posterior channels:
/// trials above `threshold` are called High.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandpowerBaseline {
    pub low_hz: f64,
    pub high_hz: f64,
    pub threshold: f64,
}

impl BandpowerBaseline {
    pub const ALPHA: (f64, f64) = (8.0, 12.0);

    /// Mean over posterior channels of band power divided by total power,
    /// which cancels per-channel gain.
    pub fn features(es: &EpochSet, low_hz: f64, high_hz: f64) -> Vec<f64> {
        let (c, t) = (es.n_channels(), es.n_samples());
        let p = Periodogram::new(t, f64::from(es.sample_rate_hz()));
        let channels = posterior_channels(c);
        let k = channels.len() as f64;
        (0..es.n_trials())
            .map(|i| {
                let trial = es.trial(i);
                channels
                    .clone()
                    .map(|ch| {
                        let row = &trial[ch * t..(ch + 1) * t];
                        let total: f64 = p.power(row).iter().skip(1).sum();
                        if total == 0.0 {
                            0.0
                        } else {
                            p.band_power(row, low_hz, high_hz) / total
                        }
                    })
                    .sum::<f64>()
                    / k
            })
            .collect()
    }

    /// Threshold maximising training accuracy, chosen among midpoints of
    /// consecutive sorted features (lowest on ties).
    pub fn fit(train: &LabeledEpochs) -> Result<Self> {
        if train.is_empty() {
            return Err(invalid("baseline needs training trials"));
        }
        let (low_hz, high_hz) = Self::ALPHA;
        let feats = Self::features(&train.epochs, low_hz, high_hz);
        let mut order: Vec<(f64, usize)> = feats
            .into_iter()
            .zip(train.labels.iter().copied())
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0));

        // Threshold below every feature: everything High.
        let mut correct: i64 = order.iter().filter(|(_, y)| *y == 1).count() as i64;
        let mut best = (correct, order[0].0 - 1.0);
        for i in 0..order.len() {
            correct += if order[i].1 == 0 { 1 } else { -1 };
            let cut = match order.get(i + 1) {
                Some(next) => (order[i].0 + next.0) / 2.0,
                None => order[i].0 + 1.0,
            };
            if correct > best.0 {
                best = (correct, cut);
            }
        }
        Ok(Self {
            low_hz,
            high_hz,
            threshold: best.1,
        })
    }

    pub fn predict(&self, es: &EpochSet) -> Vec<usize> {
        Self::features(es, self.low_hz, self.high_hz)
            .into_iter()
            .map(|f| usize::from(f > self.threshold))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, split_subject_independent};
    use crate::eval::compute_metrics;
    use crate::numerics::Rng;

    #[test]
    fn separates_synthetic_classes() {
        let es = generate_synthetic(10, 8, 8, 250, 125.0, 3).unwrap();
        let split = split_subject_independent(&es, 0.3, 0.2, &mut Rng::new(1)).unwrap();
        let baseline = BandpowerBaseline::fit(&split.train).unwrap();
        let r = compute_metrics(&baseline.predict(&split.test.epochs), &split.test.labels).unwrap();
        assert!(r.accuracy >= 0.8, "{r:?}");
    }

    #[test]
    fn threshold_between_separable_features() {
        let es = generate_synthetic(2, 6, 4, 125, 125.0, 8).unwrap();
        let data = LabeledEpochs::from_epochs(es).unwrap();
        let baseline = BandpowerBaseline::fit(&data).unwrap();
        let feats = BandpowerBaseline::features(&data.epochs, 8.0, 12.0);
        let fitted = compute_metrics(&baseline.predict(&data.epochs), &data.labels).unwrap();
        let best_possible = feats
            .iter()
            .map(|&t| {
                let pred: Vec<usize> = feats.iter().map(|&f| usize::from(f > t)).collect();
                compute_metrics(&pred, &data.labels).unwrap().accuracy
            })
            .fold(0.0, f64::max);
        assert!(fitted.accuracy >= best_possible);
    }
}
