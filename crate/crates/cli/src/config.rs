//! Run configuration.
//!
//! The config file is TOML. Its first key must be `format_version = 1`;
//! every other key is optional and falls back to the defaults below.
//!
//! ```toml
//! format_version = 1
//! seed = 1
//! rate_hz = 64.0
//! channel_subset = ["FT7", "T7", "TP7", "CP5", "FC5", "C5"]
//! lag_window_ms = [0.0, 250.0]
//! lambda_grid = [1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1e3, 1e4, 1e5, 1e6]
//! kde_level = 0.01
//! bin_width_bits = 0.005
//! bin_stride_bits = 0.0025
//! fit_mode = "binned_means"        # or "raw_points"
//! surrogate_shift_samples = 0      # 0 disables the time-shift surrogate
//!
//! [embed]
//! source_history_len = 16
//! target_history_len = 16
//! source_target_delay = 1
//!
//! [scenario]                       # used by `simulate`
//! n_subjects = 15
//! n_trials = 60
//! n_samples = 3200
//! n_channels = 6
//! attended_coupling = 1.0
//! distractor_coupling = 0.3
//! observation_noise = 2.0
//! volume_conduction = 1.0
//! gain_spread = 0.5
//! ```
//!
//! The config hash is the SHA-256 of the canonical JSON form of every field.
//! Paths are passed on the command line and are not part of the config.

use std::path::Path;

use neurotrack::analysis::{CurveConfig, FitMode, DEFAULT_BIN_STRIDE, DEFAULT_BIN_WIDTH, DEFAULT_SUPPORT_LEVEL};
use neurotrack::decoder::default_lambda_grid;
use neurotrack::infotheory::EmbedSpec;
use neurotrack::signals::{LagWindow, LEFT_TEMPORAL};
use neurotrack::synth::AadScenario;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const CONFIG_FORMAT_VERSION: u32 = 1;

/// Scenario parameters; the seed lives on [`RunConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_subjects: usize,
    pub n_trials: usize,
    pub n_samples: usize,
    pub n_channels: usize,
    pub attended_coupling: f64,
    pub distractor_coupling: f64,
    pub observation_noise: f64,
    pub volume_conduction: f64,
    pub gain_spread: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let d = AadScenario::default();
        Self {
            n_subjects: d.n_subjects,
            n_trials: d.n_trials,
            n_samples: d.n_samples,
            n_channels: d.n_channels,
            attended_coupling: d.attended_coupling,
            distractor_coupling: d.distractor_coupling,
            observation_noise: d.observation_noise,
            volume_conduction: d.volume_conduction,
            gain_spread: d.gain_spread,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub format_version: u32,
    pub seed: u64,
    pub rate_hz: f64,
    pub channel_subset: Vec<String>,
    pub lag_window_ms: (f64, f64),
    pub lambda_grid: Vec<f64>,
    pub embed: EmbedSpec,
    pub kde_level: f64,
    pub bin_width_bits: f64,
    pub bin_stride_bits: f64,
    pub fit_mode: FitMode,
    pub surrogate_shift_samples: usize,
    pub scenario: ScenarioConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            format_version: CONFIG_FORMAT_VERSION,
            seed: 1,
            rate_hz: 64.0,
            channel_subset: LEFT_TEMPORAL.iter().map(|s| s.to_string()).collect(),
            lag_window_ms: (0.0, 250.0),
            lambda_grid: default_lambda_grid(),
            embed: EmbedSpec::default(),
            kde_level: DEFAULT_SUPPORT_LEVEL,
            bin_width_bits: DEFAULT_BIN_WIDTH,
            bin_stride_bits: DEFAULT_BIN_STRIDE,
            fit_mode: FitMode::BinnedMeans,
            surrogate_shift_samples: 0,
            scenario: ScenarioConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let first = text.lines().map(str::trim).find(|l| !l.is_empty() && !l.starts_with('#'));
        if !first.is_some_and(|l| l.starts_with("format_version")) {
            return Err(CliError::Config(format!("{}: first key must be `format_version`", path.display())));
        }
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |m: String| Err(CliError::Config(m));
        if self.format_version != CONFIG_FORMAT_VERSION {
            return fail(format!("unsupported format_version {}", self.format_version));
        }
        if !(self.rate_hz > 0.0 && self.rate_hz.is_finite()) {
            return fail(format!("rate_hz must be positive, got {}", self.rate_hz));
        }
        if self.channel_subset.is_empty() {
            return fail("channel_subset is empty".into());
        }
        if self.lag_window_ms.0 > self.lag_window_ms.1 {
            return fail(format!("lag_window_ms {:?} is reversed", self.lag_window_ms));
        }
        if self.lambda_grid.is_empty() || self.lambda_grid.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return fail("lambda_grid must be non-empty, finite and nonnegative".into());
        }
        self.embed.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if !(self.kde_level >= 0.0) {
            return fail("kde_level must be nonnegative".into());
        }
        if !(self.bin_width_bits > 0.0 && self.bin_stride_bits > 0.0) {
            return fail("bin width and stride must be positive".into());
        }
        self.aad_scenario().validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn lag_window(&self) -> LagWindow {
        LagWindow::from_ms(self.lag_window_ms.0, self.lag_window_ms.1, self.rate_hz).expect("validated lag window")
    }

    pub fn curve_config(&self) -> CurveConfig {
        CurveConfig {
            support_level: self.kde_level,
            bin_width: self.bin_width_bits,
            bin_stride: self.bin_stride_bits,
            fit_mode: self.fit_mode,
        }
    }

    pub fn aad_scenario(&self) -> AadScenario {
        let s = &self.scenario;
        AadScenario {
            n_subjects: s.n_subjects,
            n_trials: s.n_trials,
            n_samples: s.n_samples,
            n_channels: s.n_channels,
            attended_coupling: s.attended_coupling,
            distractor_coupling: s.distractor_coupling,
            observation_noise: s.observation_noise,
            volume_conduction: s.volume_conduction,
            gain_spread: s.gain_spread,
            rate_hz: self.rate_hz,
            seed: self.seed,
        }
    }

    /// Hex SHA-256 of the canonical JSON serialisation.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}
