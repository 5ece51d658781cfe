//! Broadband audio to slow amplitude envelope.
//!
//! Pipeline: magnitude of the FFT-based analytic signal, optional power-law
//! compression, 4th-order Butterworth low-pass at half the target rate (two
//! cascaded biquads, run forward and backward for zero phase), then
//! decimation by picking every `rate / target`-th sample.

use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};

use super::TimeSeries;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeConfig {
    /// Exponent applied to the envelope magnitude before filtering. 1.0 is linear.
    pub compression: f64,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        Self { compression: 1.0 }
    }
}

pub fn extract_envelope(audio: &TimeSeries, target_rate_hz: f64) -> Result<TimeSeries> {
    extract_envelope_with(audio, target_rate_hz, &EnvelopeConfig::default())
}

pub fn extract_envelope_with(audio: &TimeSeries, target_rate_hz: f64, cfg: &EnvelopeConfig) -> Result<TimeSeries> {
    let fs = audio.rate_hz();
    if !(target_rate_hz.is_finite() && target_rate_hz > 0.0) || fs < 2.0 * target_rate_hz {
        return Err(Error::InvalidRate(format!(
            "target {target_rate_hz} Hz needs an input rate of at least twice that, got {fs} Hz"
        )));
    }
    if !(cfg.compression.is_finite() && cfg.compression > 0.0) {
        return Err(Error::InvalidInput(format!("compression exponent {} must be positive", cfg.compression)));
    }

    let mut env = analytic_magnitude(audio.samples());
    if cfg.compression != 1.0 {
        env.iter_mut().for_each(|v| *v = v.powf(cfg.compression));
    }
    let mut filtered = butterworth4_lowpass(&env, target_rate_hz / 2.0, fs);
    // the low-pass can undershoot on sharp onsets
    filtered.iter_mut().for_each(|v| *v = v.max(0.0));

    let ratio = fs / target_rate_hz;
    let n_out = (audio.len() as f64 * target_rate_hz / fs).floor() as usize;
    let samples = (0..n_out).map(|i| filtered[((i as f64 * ratio).floor() as usize).min(filtered.len() - 1)]).collect();
    TimeSeries::new(audio.label(), target_rate_hz, samples)
}

/// |x + i·H{x}| with the Hilbert transform taken in the frequency domain.
fn analytic_magnitude(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    // one-sided spectrum: keep DC (and Nyquist for even n), double positive bins
    let half = n / 2;
    for (k, c) in buf.iter_mut().enumerate() {
        let gain = if k == 0 || (n.is_multiple_of(2) && k == half) {
            1.0
        } else if k <= (n - 1) / 2 {
            2.0
        } else {
            0.0
        };
        *c *= gain;
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.norm() / n as f64).collect()
}

#[derive(Debug, Clone, Copy)]
struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
}

impl Biquad {
    /// Bilinear-transform low-pass section with pre-warped cutoff.
    fn lowpass(cutoff_hz: f64, fs: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * cutoff_hz / fs;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / (2.0 * q);
        let a0 = 1.0 + alpha;
        Self {
            b0: (1.0 - cos) / 2.0 / a0,
            b1: (1.0 - cos) / a0,
            b2: (1.0 - cos) / 2.0 / a0,
            a1: -2.0 * cos / a0,
            a2: (1.0 - alpha) / a0,
        }
    }

    /// Transposed direct form II, state initialised to the steady state of `x[0]`.
    fn run(&self, x: &[f64]) -> Vec<f64> {
        let Some(&x0) = x.first() else { return Vec::new() };
        let mut z2 = (self.b2 - self.a2) * x0;
        let mut z1 = (self.b1 - self.a1) * x0 + z2;
        x.iter()
            .map(|&v| {
                let y = self.b0 * v + z1;
                z1 = self.b1 * v - self.a1 * y + z2;
                z2 = self.b2 * v - self.a2 * y;
                y
            })
            .collect()
    }
}

/// 4th-order Butterworth run forward then backward, so the envelope is not delayed.
fn butterworth4_lowpass(x: &[f64], cutoff_hz: f64, fs: f64) -> Vec<f64> {
    // pole-pair quality factors of a 4th-order Butterworth prototype
    let q1 = 1.0 / (2.0 * (PI / 8.0).cos());
    let q2 = 1.0 / (2.0 * (3.0 * PI / 8.0).cos());
    let stages = [Biquad::lowpass(cutoff_hz, fs, q1), Biquad::lowpass(cutoff_hz, fs, q2)];
    let forward = stages.iter().fold(x.to_vec(), |acc, s| s.run(&acc));
    let mut reversed: Vec<f64> = forward.into_iter().rev().collect();
    reversed = stages.iter().fold(reversed, |acc, s| s.run(&acc));
    reversed.reverse();
    reversed
}
