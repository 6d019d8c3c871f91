//! Synthetic EEG with a designed valence signature.
//!
//! Every channel carries 1/f background noise. High-valence trials add a
//! 10 Hz burst with a Gaussian envelope on the posterior channels (the last
//! quarter). Each subject has its own channel gains, burst frequency and
//! burst strength, so subjects differ while the class cue stays shared.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::epochs::EpochSet;
use crate::error::{invalid, Result};
use crate::numerics::{Rng, Tensor};

/// Standard deviation of the background noise, in microvolts.
pub const NOISE_UV: f64 = 10.0;
/// Peak burst amplitude relative to the noise standard deviation.
pub const BURST_GAIN: f64 = 1.2;
/// Nominal burst frequency.
pub const BURST_HZ: f64 = 10.0;

/// Channels carrying the burst: the last `max(1, n_channels / 4)`.
pub fn posterior_channels(n_channels: usize) -> std::ops::Range<usize> {
    let k = (n_channels / 4).max(1);
    n_channels - k..n_channels
}

struct Subject {
    gains: Vec<f64>,
    burst_hz: f64,
    burst_scale: f64,
}

/// `n_subjects * trials_per_subject` trials, grouped by subject, with ids
/// `0..n_subjects`. Each subject gets `floor(k / 2)` or `ceil(k / 2)` High
/// trials, in random order.
pub fn generate_synthetic(
    n_subjects: usize,
    trials_per_subject: usize,
    n_channels: usize,
    n_samples: usize,
    sample_rate_hz: f32,
    seed: u64,
) -> Result<EpochSet> {
    if n_subjects == 0 || trials_per_subject == 0 || n_channels == 0 || n_samples < 2 {
        return Err(invalid(format!(
            "synthetic set needs positive counts and >= 2 samples, got {n_subjects} subjects, \
             {trials_per_subject} trials, {n_channels} channels, {n_samples} samples"
        )));
    }
    let fs = f64::from(sample_rate_hz);
    let mut rng = Rng::new(seed);
    let noise = PinkNoise::new(n_samples, fs);
    let posterior = posterior_channels(n_channels);
    let trial_len = n_channels * n_samples;

    let n = n_subjects * trials_per_subject;
    let mut data = Vec::with_capacity(n * trial_len);
    let mut subject_ids = Vec::with_capacity(n);
    let mut valence = Vec::with_capacity(n);
    for s in 0..n_subjects {
        let subject = Subject {
            gains: (0..n_channels)
                .map(|_| rng.uniform_range(0.5, 1.5))
                .collect(),
            burst_hz: BURST_HZ + rng.uniform_range(-0.5, 0.5),
            burst_scale: rng.uniform_range(0.8, 1.2),
        };
        let half = trials_per_subject / 2;
        let n_high = half
            + if trials_per_subject % 2 == 1 {
                rng.below(2)
            } else {
                0
            };
        let mut high: Vec<bool> = (0..trials_per_subject).map(|i| i < n_high).collect();
        rng.shuffle(&mut high);

        for is_high in high {
            let rating = if is_high {
                5.0 + 4.0 * rng.uniform()
            } else {
                // kept clear of 5 so the f32 rating cannot round up into High
                1.0 + 3.99 * rng.uniform()
            };
            let burst = if is_high {
                let amp = BURST_GAIN * subject.burst_scale * rng.uniform_range(0.75, 1.25);
                let phase = rng.uniform_range(0.0, 2.0 * PI);
                let duration = n_samples as f64 / fs;
                let centre = duration * rng.uniform_range(0.35, 0.65);
                let width = duration * 0.25;
                Some(
                    (0..n_samples)
                        .map(|i| {
                            let t = i as f64 / fs;
                            let env = (-0.5 * ((t - centre) / width).powi(2)).exp();
                            amp * env * (2.0 * PI * subject.burst_hz * t + phase).sin()
                        })
                        .collect::<Vec<f64>>(),
                )
            } else {
                None
            };
            for c in 0..n_channels {
                let mut row = noise.sample(&mut rng);
                if let (Some(b), true) = (&burst, posterior.contains(&c)) {
                    for (v, bv) in row.iter_mut().zip(b) {
                        *v += bv;
                    }
                }
                let g = subject.gains[c] * NOISE_UV;
                data.extend(row.iter().map(|v| (v * g) as f32));
            }
            subject_ids.push(s as u32);
            valence.push(rating as f32);
        }
    }
    EpochSet::new(
        Tensor::from_vec(&[n, n_channels, n_samples], data)?,
        subject_ids,
        valence,
        sample_rate_hz,
    )
}

/// Unit-variance noise with power falling as 1/f, shaped in the frequency
/// domain from white Gaussian noise.
struct PinkNoise {
    inverse: std::sync::Arc<dyn rustfft::Fft<f64>>,
    forward: std::sync::Arc<dyn rustfft::Fft<f64>>,
    shape: Vec<f64>,
}

impl PinkNoise {
    fn new(n: usize, fs: f64) -> Self {
        let mut planner = FftPlanner::new();
        let df = fs / n as f64;
        let shape = (0..n)
            .map(|k| {
                let k = k.min(n - k);
                if k == 0 {
                    0.0
                } else {
                    1.0 / (k as f64 * df).sqrt()
                }
            })
            .collect();
        Self {
            inverse: planner.plan_fft_inverse(n),
            forward: planner.plan_fft_forward(n),
            shape,
        }
    }

    fn sample(&self, rng: &mut Rng) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = (0..self.shape.len())
            .map(|_| Complex::new(rng.normal(), 0.0))
            .collect();
        self.forward.process(&mut buf);
        for (b, s) in buf.iter_mut().zip(&self.shape) {
            *b *= s;
        }
        self.inverse.process(&mut buf);
        let row: Vec<f64> = buf.iter().map(|c| c.re).collect();
        let n = row.len() as f64;
        let mean = row.iter().sum::<f64>() / n;
        let std = (row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        row.iter().map(|v| (v - mean) / std.max(1e-12)).collect()
    }
}
