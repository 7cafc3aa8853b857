use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use evfb_core::channel::FadingParams;
use evfb_core::mdp::RewardSpec;
use evfb_core::simulator::{TrajectoryConfig, DEFAULT_WARMUP};

/// Used when neither `rewards.snr_db` nor `rewards.snr` is given.
pub const DEFAULT_SNR_DB: f64 = 20.0;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    /// Transmit antennas L.
    pub antennas: usize,
    /// Normalized Doppler f_D·T_c.
    pub doppler: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self { antennas: 3, doppler: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub m: usize,
    pub n: usize,
    /// Monte Carlo draws for the transition model.
    pub samples: usize,
    /// Reuse a model written by `evfb model` instead of estimating one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { m: 16, n: 16, samples: 1_000_000, model: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardsSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    /// Linear SNR; resolved from `snr_db` when that is given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr: Option<f64>,
    /// Price for `solve` and `evaluate`.
    pub alpha: f64,
    /// Prices for `sweep`.
    pub alphas: Vec<f64>,
}

impl Default for RewardsSection {
    fn default() -> Self {
        Self { snr_db: None, snr: None, alpha: 1.0, alphas: (0..=10).map(|k| k as f64 / 5.0).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodebookSection {
    /// "lloyd" or "random".
    pub method: String,
    pub size: usize,
    pub training: usize,
    pub iterations: usize,
    /// Shapes drawn for the ε statistics.
    pub eps_samples: usize,
    /// Reuse a codebook written by `evfb codebook`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl Default for CodebookSection {
    fn default() -> Self {
        Self { method: "lloyd".into(), size: 16, training: 100_000, iterations: 50, eps_samples: 200_000, path: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectorySection {
    pub slots: usize,
    pub warmup: usize,
}

impl Default for TrajectorySection {
    fn default() -> Self {
        Self { slots: 1_000_000, warmup: DEFAULT_WARMUP }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// Also write the periodic-feedback baseline.
    pub periodic: bool,
    pub max_period: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { periodic: true, max_period: 40 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Prefix prepended to every output file name.
    pub output: String,
    pub channel: ChannelSection,
    pub grid: GridSection,
    pub rewards: RewardsSection,
    /// Present only for finite-rate feedback.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub codebook: Option<CodebookSection>,
    pub trajectory: TrajectorySection,
    pub sweep: SweepSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            output: "evfb_".into(),
            channel: ChannelSection::default(),
            grid: GridSection::default(),
            rewards: RewardsSection::default(),
            codebook: None,
            trajectory: TrajectorySection::default(),
            sweep: SweepSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        Self::parse(&text).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse { path: path.into(), message },
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut config: Self =
            toml::from_str(text).map_err(|e| ConfigError::Parse { path: PathBuf::new(), message: e.to_string() })?;
        config.resolve()?;
        Ok(config)
    }

    /// Validate every field and convert a dB SNR to linear, once.
    pub fn resolve(&mut self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        match (self.rewards.snr_db, self.rewards.snr) {
            (Some(_), Some(_)) => return bad("give either rewards.snr_db or rewards.snr, not both".into()),
            (Some(db), None) => {
                if !db.is_finite() {
                    return bad(format!("rewards.snr_db must be finite, got {db}"));
                }
                self.rewards.snr = Some(10f64.powf(db / 10.0));
                self.rewards.snr_db = None;
            }
            (None, Some(_)) => {}
            (None, None) => self.rewards.snr = Some(10f64.powf(DEFAULT_SNR_DB / 10.0)),
        }
        let snr = self.snr();
        if !(snr > 0.0 && snr.is_finite()) {
            return bad(format!("SNR must be positive, got {snr}"));
        }
        if self.channel.antennas == 0 {
            return bad("channel.antennas must be at least 1".into());
        }
        if !(self.channel.doppler >= 0.0 && self.channel.doppler.is_finite()) {
            return bad(format!("channel.doppler must be finite and nonnegative, got {}", self.channel.doppler));
        }
        if self.grid.m == 0 || self.grid.n == 0 {
            return bad("grid.m and grid.n must be at least 1".into());
        }
        if self.grid.samples < self.grid.n {
            return bad(format!("grid.samples must be at least grid.n ({})", self.grid.n));
        }
        if !(self.rewards.alpha >= 0.0 && self.rewards.alpha.is_finite()) {
            return bad(format!("rewards.alpha must be finite and nonnegative, got {}", self.rewards.alpha));
        }
        if self.rewards.alphas.is_empty() {
            return bad("rewards.alphas must not be empty".into());
        }
        if self.rewards.alphas.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return bad("rewards.alphas must be finite and nonnegative".into());
        }
        if self.rewards.alphas.windows(2).any(|w| !(w[1] > w[0])) {
            return bad("rewards.alphas must be strictly increasing".into());
        }
        if let Some(cb) = &self.codebook {
            if cb.path.is_none() {
                if cb.method != "lloyd" && cb.method != "random" {
                    return bad(format!("codebook.method must be \"lloyd\" or \"random\", got {:?}", cb.method));
                }
                if cb.size == 0 {
                    return bad("codebook.size must be at least 1".into());
                }
                if cb.method == "lloyd" && cb.training < 100 * cb.size {
                    return bad(format!("codebook.training must be at least {}", 100 * cb.size));
                }
            }
            if cb.eps_samples < 2 {
                return bad("codebook.eps_samples must be at least 2".into());
            }
        }
        if self.sweep.max_period == 0 {
            return bad("sweep.max_period must be at least 1".into());
        }
        self.trajectory()?;
        Ok(())
    }

    pub fn snr(&self) -> f64 {
        self.rewards.snr.unwrap_or_else(|| 10f64.powf(self.rewards.snr_db.unwrap_or(DEFAULT_SNR_DB) / 10.0))
    }

    pub fn fading(&self) -> evfb_core::Result<FadingParams> {
        FadingParams::new(self.channel.antennas, self.channel.doppler)
    }

    pub fn reward_spec(&self, alpha: f64) -> evfb_core::Result<RewardSpec> {
        RewardSpec::new(self.snr(), alpha)
    }

    pub fn trajectory(&self) -> Result<TrajectoryConfig, ConfigError> {
        TrajectoryConfig::new(self.trajectory.slots, self.trajectory.warmup, self.trajectory_seed())
            .map_err(|e| ConfigError::Invalid(format!("trajectory: {e}")))
    }

    pub fn model_seed(&self) -> u64 {
        self.seed
    }

    /// Keeps the fading trajectory independent of the model draws.
    pub fn trajectory_seed(&self) -> u64 {
        self.seed.wrapping_add(0x5EED_0000_0000)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
