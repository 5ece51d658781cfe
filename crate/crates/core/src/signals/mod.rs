//! Time-series containers and the transforms every downstream stage shares.
//!
//! Variance is always the population variance (divide by `n`). For normalised
//! signals half the mean squared difference then equals `1 - rho` exactly.

mod csvio;
mod envelope;

use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Condition, Error, Result};

pub use csvio::{read_recording, write_recording, RecordingMeta};
pub use envelope::{extract_envelope, extract_envelope_with, EnvelopeConfig};

/// The six left-temporal electrodes of the extended 10-20 layout.
pub const LEFT_TEMPORAL: [&str; 6] = ["FT7", "T7", "TP7", "CP5", "FC5", "C5"];

/// Channel labels of the 64-channel extended 10-20 (BioSemi) layout.
pub const TEN_TWENTY_64: [&str; 64] = [
    "Fp1", "AF7", "AF3", "F1", "F3", "F5", "F7", "FT7", "FC5", "FC3", "FC1", "C1", "C3", "C5", "T7", "TP7", "CP5",
    "CP3", "CP1", "P1", "P3", "P5", "P7", "P9", "PO7", "PO3", "O1", "Iz", "Oz", "POz", "Pz", "CPz", "Fpz", "Fp2",
    "AF8", "AF4", "AFz", "Fz", "F2", "F4", "F6", "F8", "FT8", "FC6", "FC4", "FC2", "FCz", "Cz", "C2", "C4", "C6", "T8",
    "TP8", "CP6", "CP4", "CP2", "P2", "P4", "P6", "P8", "P10", "PO8", "PO4", "O2",
];

/// One named, uniformly sampled, finite real sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    label: String,
    rate_hz: f64,
    samples: Vec<f64>,
}

impl TimeSeries {
    pub fn new(label: impl Into<String>, rate_hz: f64, samples: Vec<f64>) -> Result<Self> {
        let label = label.into();
        if !(rate_hz.is_finite() && rate_hz > 0.0) {
            return Err(Error::InvalidRate(format!("{label}: rate {rate_hz} Hz")));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("{label}: non-finite sample at index {i}")));
        }
        Ok(Self { label, rate_hz, samples })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Sub-series over `range`, keeping label and rate.
    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        if range.start > range.end || range.end > self.len() {
            return Err(Error::ShapeMismatch(format!(
                "{}: range {:?} outside series of length {}",
                self.label,
                range,
                self.len()
            )));
        }
        Ok(Self { label: self.label.clone(), rate_hz: self.rate_hz, samples: self.samples[range].to_vec() })
    }

    pub fn mean(&self) -> f64 {
        mean(&self.samples)
    }

    /// Population variance.
    pub fn variance(&self) -> f64 {
        population_variance(&self.samples)
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub(crate) fn population_variance(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / xs.len() as f64
}

/// A variance this small relative to the signal magnitude is rounding noise.
pub(crate) fn is_constant(xs: &[f64]) -> bool {
    let var = population_variance(xs);
    let scale = xs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    var <= 0.0 || var.sqrt() <= 1e-13 * scale.max(f64::MIN_POSITIVE)
}

/// Rescale to zero mean and unit population variance.
pub fn normalize(x: &TimeSeries) -> Result<TimeSeries> {
    if x.len() < 2 || is_constant(&x.samples) {
        return Err(Error::ZeroVarianceSignal(x.label.clone()));
    }
    let m = x.mean();
    let centred: Vec<f64> = x.samples.iter().map(|v| v - m).collect();
    let m2 = mean(&centred);
    let sd = population_variance(&centred).sqrt();
    Ok(TimeSeries {
        label: x.label.clone(),
        rate_hz: x.rate_hz,
        samples: centred.into_iter().map(|v| (v - m2) / sd).collect(),
    })
}

/// Inclusive range of lags, in samples, applied as `x[t + tau]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LagWindow {
    pub tau_min: i64,
    pub tau_max: i64,
}

impl LagWindow {
    pub fn new(tau_min: i64, tau_max: i64) -> Result<Self> {
        if tau_min > tau_max {
            return Err(Error::InvalidInput(format!("lag window [{tau_min}, {tau_max}] is reversed")));
        }
        Ok(Self { tau_min, tau_max })
    }

    /// Window covering `[start_ms, end_ms]` at `rate_hz`, rounded to whole samples.
    pub fn from_ms(start_ms: f64, end_ms: f64, rate_hz: f64) -> Result<Self> {
        let to_samples = |ms: f64| (ms * rate_hz / 1000.0).round() as i64;
        Self::new(to_samples(start_ms), to_samples(end_ms))
    }

    pub fn n_lags(&self) -> usize {
        (self.tau_max - self.tau_min + 1) as usize
    }

    pub fn lags(&self) -> impl Iterator<Item = i64> {
        self.tau_min..=self.tau_max
    }

    /// Time indices `t` of a length-`len` series for which every `t + tau` is in range.
    pub fn valid_rows(&self, len: usize) -> Result<Range<usize>> {
        let n = len as i64;
        let start = (-self.tau_min).max(0);
        let end = (n - self.tau_max).min(n);
        if end <= start {
            return Err(Error::WindowTooLarge { tau_min: self.tau_min, tau_max: self.tau_max, len });
        }
        Ok(start as usize..end as usize)
    }
}

/// Lag-embedding matrix: row `i` is valid time `t`, column `k` holds `x[t + tau_min + k]`.
///
/// Rows whose lags would leave the series are dropped rather than zero-padded.
pub fn lag_embed(x: &TimeSeries, w: LagWindow) -> Result<DMatrix<f64>> {
    let rows = w.valid_rows(x.len())?;
    let n_rows = rows.len();
    let s = &x.samples;
    Ok(DMatrix::from_fn(n_rows, w.n_lags(), |i, k| {
        let t = (rows.start + i) as i64 + w.tau_min + k as i64;
        s[t as usize]
    }))
}

/// An aligned set of channels from one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultichannelRecording {
    channels: Vec<TimeSeries>,
    pub subject_id: String,
    pub trial_id: String,
    pub condition: Condition,
}

impl MultichannelRecording {
    pub fn new(
        channels: Vec<TimeSeries>,
        subject_id: impl Into<String>,
        trial_id: impl Into<String>,
        condition: Condition,
    ) -> Result<Self> {
        if let Some(first) = channels.first() {
            for ch in &channels[1..] {
                if ch.rate_hz != first.rate_hz || ch.len() != first.len() {
                    return Err(Error::ShapeMismatch(format!(
                        "channel `{}` ({} Hz, {} samples) does not match `{}` ({} Hz, {} samples)",
                        ch.label,
                        ch.rate_hz,
                        ch.len(),
                        first.label,
                        first.rate_hz,
                        first.len()
                    )));
                }
            }
        }
        for (i, ch) in channels.iter().enumerate() {
            if channels[..i].iter().any(|c| c.label == ch.label) {
                return Err(Error::InvalidInput(format!("duplicate channel label `{}`", ch.label)));
            }
        }
        Ok(Self { channels, subject_id: subject_id.into(), trial_id: trial_id.into(), condition })
    }

    pub fn channels(&self) -> &[TimeSeries] {
        &self.channels
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn labels(&self) -> Vec<String> {
        self.channels.iter().map(|c| c.label.clone()).collect()
    }

    pub fn channel(&self, label: &str) -> Option<&TimeSeries> {
        self.channels.iter().find(|c| c.label == label)
    }

    /// Shared sample rate; `None` for an empty recording.
    pub fn rate_hz(&self) -> Option<f64> {
        self.channels.first().map(|c| c.rate_hz)
    }

    /// Shared channel length (0 for an empty recording).
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, |c| c.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        let channels = self.channels.iter().map(|c| c.slice(range.clone())).collect::<Result<_>>()?;
        Ok(Self { channels, ..self.clone_meta() })
    }

    /// Every channel normalised to zero mean and unit variance.
    pub fn normalized(&self) -> Result<Self> {
        let channels = self.channels.iter().map(normalize).collect::<Result<_>>()?;
        Ok(Self { channels, ..self.clone_meta() })
    }

    fn clone_meta(&self) -> Self {
        Self {
            channels: Vec::new(),
            subject_id: self.subject_id.clone(),
            trial_id: self.trial_id.clone(),
            condition: self.condition,
        }
    }
}

/// Keep the requested channels, in the requested order.
pub fn select_channels<S: AsRef<str>>(r: &MultichannelRecording, labels: &[S]) -> Result<MultichannelRecording> {
    let channels = labels
        .iter()
        .map(|l| r.channel(l.as_ref()).cloned().ok_or_else(|| Error::UnknownChannel(l.as_ref().to_string())))
        .collect::<Result<Vec<_>>>()?;
    MultichannelRecording::new(channels, r.subject_id.clone(), r.trial_id.clone(), r.condition)
}
