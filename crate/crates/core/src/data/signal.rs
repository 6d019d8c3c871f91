use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::epochs::EpochSet;
use crate::error::{invalid, Result};

/// Guard added to the standard deviation when standardizing.
pub const STANDARDIZE_EPS: f64 = 1e-8;

/// Length of the bandpass FIR.
pub const FIR_TAPS: usize = 251;

/// Per trial and channel: subtract the mean and divide by the population
/// standard deviation plus [`STANDARDIZE_EPS`].
pub fn standardize(es: &EpochSet) -> EpochSet {
    es.map_rows(|src, dst| {
        let n = src.len() as f64;
        let mean = src.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
        let var = src
            .iter()
            .map(|&v| (f64::from(v) - mean).powi(2))
            .sum::<f64>()
            / n;
        let scale = 1.0 / (var.sqrt() + STANDARDIZE_EPS);
        for (d, &s) in dst.iter_mut().zip(src) {
            *d = ((f64::from(s) - mean) * scale) as f32;
        }
    })
}

/// Hamming-windowed sinc bandpass with unit gain at the band centre.
pub fn bandpass_taps(
    low_hz: f64,
    high_hz: f64,
    sample_rate_hz: f64,
    taps: usize,
) -> Result<Vec<f64>> {
    let nyquist = sample_rate_hz / 2.0;
    if !(low_hz > 0.0 && low_hz < high_hz && high_hz < nyquist) {
        return Err(invalid(format!(
            "band {low_hz}-{high_hz} Hz must satisfy 0 < low < high < {nyquist} Hz (Nyquist)"
        )));
    }
    if taps.is_multiple_of(2) {
        return Err(invalid(format!("FIR length must be odd, got {taps}")));
    }
    let (fl, fh) = (low_hz / sample_rate_hz, high_hz / sample_rate_hz);
    let m = (taps / 2) as f64;
    let sinc = |x: f64| {
        if x == 0.0 {
            1.0
        } else {
            (PI * x).sin() / (PI * x)
        }
    };
    let mut h: Vec<f64> = (0..taps)
        .map(|i| {
            let k = (i as f64 - m).abs();
            let window = 0.54 + 0.46 * (PI * k / m).cos();
            window * (2.0 * fh * sinc(2.0 * fh * k) - 2.0 * fl * sinc(2.0 * fl * k))
        })
        .collect();
    let centre = 2.0 * PI * (fl + fh) / 2.0;
    let gain = h
        .iter()
        .enumerate()
        .map(|(i, &c)| Complex::from_polar(c, -centre * i as f64))
        .sum::<Complex<f64>>()
        .norm();
    for c in &mut h {
        *c /= gain;
    }
    Ok(h)
}

/// Index into `0..n` of position `i` of the signal extended by repeated
/// mirror images that include the edge sample (`.. x1 x0 | x0 x1 ..`).
fn mirror(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let r = i.rem_euclid(period) as usize;
    if r < n {
        r
    } else {
        2 * n - 1 - r
    }
}

/// Zero-phase filtering of one row: pad both ends by `taps - 1` mirrored
/// samples, run the FIR forward, then backward, and crop.
pub fn filtfilt(h: &[f64], x: &[f32]) -> Vec<f32> {
    let n = x.len();
    let pad = h.len() - 1;
    let mut buf: Vec<f64> = (-(pad as isize)..(n + pad) as isize)
        .map(|i| f64::from(x[mirror(i, n)]))
        .collect();
    for _ in 0..2 {
        let mut out = vec![0.0; buf.len()];
        for (i, o) in out.iter_mut().enumerate() {
            let lags = h.len().min(i + 1);
            *o = (0..lags).map(|k| h[k] * buf[i - k]).sum();
        }
        out.reverse();
        buf = out;
    }
    buf[pad..pad + n].iter().map(|&v| v as f32).collect()
}

/// Every channel of every trial through [`filtfilt`] with a
/// [`FIR_TAPS`]-tap bandpass.
pub fn bandpass_filter(es: &EpochSet, low_hz: f64, high_hz: f64) -> Result<EpochSet> {
    let h = bandpass_taps(low_hz, high_hz, f64::from(es.sample_rate_hz()), FIR_TAPS)?;
    Ok(es.map_rows(|src, dst| dst.copy_from_slice(&filtfilt(&h, src))))
}

/// One-sided power spectrum of fixed-length real signals.
pub struct Periodogram {
    fft: Arc<dyn Fft<f64>>,
    n: usize,
    sample_rate_hz: f64,
}

impl Periodogram {
    pub fn new(n: usize, sample_rate_hz: f64) -> Self {
        Self {
            fft: FftPlanner::new().plan_fft_forward(n),
            n,
            sample_rate_hz,
        }
    }

    pub fn bin_hz(&self) -> f64 {
        self.sample_rate_hz / self.n as f64
    }

    /// Power of bins `0..=n/2`, scaled so that a unit-amplitude sine on a
    /// bin has power 0.5 and the bins sum to the mean square.
    pub fn power(&self, x: &[f32]) -> Vec<f64> {
        assert_eq!(x.len(), self.n, "periodogram length");
        let mut buf: Vec<Complex<f64>> =
            x.iter().map(|&v| Complex::new(f64::from(v), 0.0)).collect();
        self.fft.process(&mut buf);
        let n2 = (self.n * self.n) as f64;
        (0..=self.n / 2)
            .map(|k| {
                let p = buf[k].norm_sqr() / n2;
                if k == 0 || 2 * k == self.n {
                    p
                } else {
                    2.0 * p
                }
            })
            .collect()
    }

    /// Amplitude of a sinusoid sitting on the bin nearest `freq_hz`.
    pub fn amplitude(&self, x: &[f32], freq_hz: f64) -> f64 {
        let k = (freq_hz / self.bin_hz()).round() as usize;
        (2.0 * self.power(x)[k]).sqrt()
    }

    /// Summed power of the bins with centre frequency in `[low_hz, high_hz]`.
    pub fn band_power(&self, x: &[f32], low_hz: f64, high_hz: f64) -> f64 {
        let df = self.bin_hz();
        self.power(x)
            .iter()
            .enumerate()
            .filter(|&(k, _)| (low_hz..=high_hz).contains(&(k as f64 * df)))
            .map(|(_, p)| p)
            .sum()
    }
}
