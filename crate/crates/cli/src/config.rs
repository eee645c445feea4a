//! JSON configuration schema shared by the subcommands. Every run is a
//! pure function of (config, seed); all per-task seeds derive from the
//! top-level one.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use pexp_core::ebayes::GridResolution;
use pexp_core::hbayes::McmcConfig;
use pexp_core::prior::{HyperParamMode, HyperPriorSpec};
use pexp_core::seq::TruthSpec;
use pexp_core::wn::TruncationRule;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config field `{field}`: {message}")]
    Invalid { field: &'static str, message: String },
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Which posterior(s) a study runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Eb,
    Hb,
    Both,
}

/// Candidate-grid controls plus the regularity window used by the
/// regularity-selection modes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    #[serde(default = "default_tau_per_decade")]
    pub tau_per_decade: f64,
    #[serde(default = "default_alpha_step")]
    pub alpha_step: f64,
    #[serde(default)]
    pub alpha_window: Option<(f64, f64)>,
}

fn default_tau_per_decade() -> f64 {
    25.0
}

fn default_alpha_step() -> f64 {
    0.05
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            tau_per_decade: default_tau_per_decade(),
            alpha_step: default_alpha_step(),
            alpha_window: None,
        }
    }
}

impl GridConfig {
    pub fn resolution(&self) -> GridResolution {
        GridResolution { tau_per_decade: self.tau_per_decade, alpha_step: self.alpha_step }
    }
}

/// Full experiment description.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub truth: TruthSpec,
    pub n_list: Vec<f64>,
    pub l_rule: TruncationRule,
    /// Prior shape p in [1, 2].
    pub p: f64,
    pub mode: HyperParamMode,
    /// Required whenever a hierarchical posterior is run.
    #[serde(default)]
    pub hyper: Option<HyperPriorSpec>,
    pub method: Method,
    #[serde(default)]
    pub mcmc: McmcConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replications")]
    pub replications: u32,
    pub out_dir: PathBuf,
}

fn default_replications() -> u32 {
    1
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_list.is_empty() {
            return Err(ConfigError::Invalid {
                field: "n_list",
                message: "at least one noise level is required".into(),
            });
        }
        if self.n_list.iter().any(|&n| !(n > 0.0)) {
            return Err(ConfigError::Invalid {
                field: "n_list",
                message: "noise levels must be positive".into(),
            });
        }
        if !(1.0..=2.0).contains(&self.p) {
            return Err(ConfigError::Invalid {
                field: "p",
                message: format!("prior shape must lie in [1, 2], got {}", self.p),
            });
        }
        if self.replications == 0 {
            return Err(ConfigError::Invalid {
                field: "replications",
                message: "must be positive".into(),
            });
        }
        match (&self.hyper, self.method) {
            (Some(h), _) => h.validate(&self.mode).map_err(|e| ConfigError::Invalid {
                field: "hyper",
                message: e.to_string(),
            })?,
            (None, Method::Eb) => {}
            (None, _) => {
                return Err(ConfigError::Invalid {
                    field: "hyper",
                    message: "required for hierarchical methods".into(),
                })
            }
        }
        if matches!(self.mode, HyperParamMode::AlphaOnly { .. } | HyperParamMode::Both)
            && self.grid.alpha_window.is_none()
            && self.method != Method::Hb
        {
            return Err(ConfigError::Invalid {
                field: "grid.alpha_window",
                message: "required when the regularity is a free hyper-parameter under EB".into(),
            });
        }
        Ok(())
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Derives a per-task RNG seed from the base seed and task indices; the
/// splitmix-style mixing keeps distinct tasks on distinct streams no
/// matter how the scheduler interleaves them.
pub fn derive_seed(base: u64, n_index: usize, rep: u32, salt: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9e37_79b9_7f4a_7c15_u64.wrapping_mul(1 + n_index as u64))
        .wrapping_add(0x2545_f491_4f6c_dd1d_u64.wrapping_mul(1 + rep as u64))
        .wrapping_add(salt.wrapping_mul(0xd6e8_feb8_6659_fd93));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The default evaluation grid for figures: 201 points in (0, 1].
pub fn default_eval_grid() -> Vec<f64> {
    (1..=201).map(|i| i as f64 / 201.0).collect()
}
