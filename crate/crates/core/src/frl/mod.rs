//! Frequency representation learning: multi-resolution pairs, Nyquist-normalized
//! positional encoding and a frequency-weighted amplitude loss, together with
//! the training loop shared by the baseline and all ablations.

pub mod encoding;
pub mod forecast;
pub mod loss;
pub mod multires;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use encoding::{build_encoded_input, pe_channels, pe_freq, pe_freq_cos, EncodedInput};
pub use forecast::{
    predict_rollout, rollout_batch, ExactEvolution, Forecaster, IdentityForecaster, TrainedForecaster,
};
pub use loss::{loss, LossParts};
pub use multires::build_multires_dataset;
pub use train::{composite_loss, identity_validation_mse, train, training_data, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Baseline,
    Frl,
}

impl std::fmt::Display for TrainMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TrainMode::Baseline => "baseline",
            TrainMode::Frl => "frl",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingPreset {
    /// Half the batches at `ρ0`, half at `ρ0/2`, none coarser.
    Table,
    Uniform,
}

/// Per-batch level probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LevelSampling {
    Preset(SamplingPreset),
    Explicit(Vec<f64>),
}

impl Default for LevelSampling {
    fn default() -> Self {
        LevelSampling::Preset(SamplingPreset::Table)
    }
}

impl LevelSampling {
    pub fn probabilities(&self, levels: usize) -> Result<Vec<f64>> {
        if levels == 0 {
            return Err(Error::Precondition("at least one level is required".into()));
        }
        let p = match self {
            LevelSampling::Preset(SamplingPreset::Table) => {
                let mut p = vec![0.0; levels];
                if levels == 1 {
                    p[0] = 1.0;
                } else {
                    p[0] = 0.5;
                    p[1] = 0.5;
                }
                p
            }
            LevelSampling::Preset(SamplingPreset::Uniform) => vec![1.0 / levels as f64; levels],
            LevelSampling::Explicit(p) => {
                if p.len() != levels {
                    return Err(Error::Precondition(format!(
                        "{} sampling probabilities for {levels} levels",
                        p.len()
                    )));
                }
                if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::Precondition("sampling probabilities must be >= 0".into()));
                }
                let s: f64 = p.iter().sum();
                if (s - 1.0).abs() > 1e-9 {
                    return Err(Error::Precondition(format!("sampling probabilities sum to {s}")));
                }
                p.clone()
            }
        };
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrlConfig {
    /// Number of resolution levels `ρ_j = ρ0 / 2^j`, `j < levels`.
    pub levels: usize,
    pub level_sampling: LevelSampling,
    /// Harmonics per axis in the positional encoding.
    pub n_freq: usize,
    pub lambda: f64,
    pub warmup_epochs: usize,
    pub alpha_radial: f64,
    pub mu_phys: f64,
    pub use_multires: bool,
    pub use_freq_enc: bool,
    pub use_freq_loss: bool,
}

impl Default for FrlConfig {
    fn default() -> Self {
        Self {
            levels: 3,
            level_sampling: LevelSampling::default(),
            n_freq: 8,
            lambda: 0.1,
            warmup_epochs: 5,
            alpha_radial: 1.0,
            mu_phys: 0.0,
            use_multires: true,
            use_freq_enc: true,
            use_freq_loss: true,
        }
    }
}

impl FrlConfig {
    /// Settings used for baseline training: every component off, no physics term.
    pub fn baseline(&self) -> Self {
        Self {
            use_multires: false,
            use_freq_enc: false,
            use_freq_loss: false,
            mu_phys: 0.0,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.levels > 16 {
            return Err(Error::Precondition(format!("levels = {} must be in 1..=16", self.levels)));
        }
        if self.n_freq == 0 {
            return Err(Error::Precondition("n_freq must be at least 1".into()));
        }
        for (name, v) in [("lambda", self.lambda), ("alpha_radial", self.alpha_radial), ("mu_phys", self.mu_phys)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Precondition(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        self.level_sampling.probabilities(self.levels)?;
        Ok(())
    }

    /// Checks that `ρ0` supports every level.
    pub fn validate_for_resolution(&self, rows: usize, cols: usize) -> Result<()> {
        self.validate()?;
        let levels = if self.use_multires { self.levels } else { 1 };
        let f = 1usize << (levels - 1);
        if rows % f != 0 || cols % f != 0 {
            return Err(Error::Shape(format!(
                "{rows}x{cols} is not divisible by 2^{} for {levels} levels",
                levels - 1
            )));
        }
        crate::field::check_grid(rows / f, cols / f)
    }

    /// Spectral-loss weight at `epoch` (zero-based): `λ · min(1, epoch / warmup)`.
    pub fn lambda_eff(&self, epoch: usize) -> f64 {
        if !self.use_freq_loss {
            return 0.0;
        }
        if self.warmup_epochs == 0 {
            return self.lambda;
        }
        self.lambda * (epoch as f64 / self.warmup_epochs as f64).min(1.0)
    }

    pub fn in_channels(&self) -> usize {
        1 + 4 * self.n_freq
    }
}
