//! Experiment configuration schema (versioned JSON).

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use bae_nn::{Algorithm, LossKind, PhaseSchedule};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetConfig {
    /// Logistic-mixture regression grid.
    Simulated {
        d: Vec<usize>,
        nu_star: Vec<usize>,
        n: Vec<usize>,
        #[serde(default = "default_sigma")]
        sigma: Vec<f64>,
    },
    /// IDX image classification with a Gaussian noise grid.
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        #[serde(default = "default_train_subset")]
        train_subset: usize,
        #[serde(default = "default_test_subset")]
        test_subset: usize,
        noise: Vec<f64>,
        #[serde(default = "default_true")]
        clip_to_unit: bool,
    },
}

fn default_sigma() -> Vec<f64> {
    vec![0.0]
}
fn default_train_subset() -> usize {
    8000
}
fn default_test_subset() -> usize {
    2000
}
fn default_true() -> bool {
    true
}
fn default_hidden() -> usize {
    64
}
fn default_epochs() -> usize {
    20
}
fn default_lr() -> f64 {
    0.001
}
fn default_batch() -> usize {
    32
}
fn default_w_nn() -> f64 {
    0.1
}
fn default_w_ae() -> f64 {
    0.9
}
fn default_train_fraction() -> f64 {
    0.8
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExperimentConfig {
    pub version: u32,
    pub dataset: DatasetConfig,
    /// Autoencoder bottleneck grid (ignored by the plain baseline).
    pub bottleneck: Vec<usize>,
    #[serde(default = "default_hidden")]
    pub discriminator_hidden: usize,
    pub algorithms: Vec<Algorithm>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_w_nn")]
    pub w_nn: f64,
    #[serde(default = "default_w_ae")]
    pub w_ae: f64,
    #[serde(default)]
    pub phases_per_epoch: PhaseSchedule,
    /// Train share of the simulated data (the image path uses the
    /// stratified subset sizes instead).
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).context("parsing experiment config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            bail!("unsupported config version {}", self.version);
        }
        if self.seeds.is_empty() {
            bail!("seeds must be non-empty");
        }
        if self.algorithms.is_empty() {
            bail!("algorithms must be non-empty");
        }
        if self.bottleneck.is_empty() {
            bail!("bottleneck grid must be non-empty");
        }
        if !(0.0..=1.0).contains(&self.w_nn) || !(0.0..=1.0).contains(&self.w_ae) {
            bail!("w_nn and w_ae must lie in [0, 1]");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            bail!("epochs and batch_size must be positive");
        }
        if !(0.0..1.0).contains(&self.train_fraction) && self.train_fraction != 1.0 {
            bail!("train_fraction must lie in (0, 1]");
        }
        match &self.dataset {
            DatasetConfig::Simulated { d, nu_star, n, sigma } => {
                if d.is_empty() || nu_star.is_empty() || n.is_empty() || sigma.is_empty() {
                    bail!("every simulated grid axis must be non-empty");
                }
                if self.train_fraction >= 1.0 {
                    bail!("simulated runs need a non-empty test split");
                }
            }
            DatasetConfig::Idx { noise, .. } => {
                if noise.is_empty() {
                    bail!("noise grid must be non-empty");
                }
            }
        }
        Ok(())
    }

    /// Losses and the eval metric implied by the dataset kind.
    pub fn losses(&self) -> (LossKind, LossKind, bae_nn::EvalMetric) {
        match self.dataset {
            DatasetConfig::Simulated { .. } => {
                (LossKind::Mse, LossKind::Mse, bae_nn::EvalMetric::Mse)
            }
            DatasetConfig::Idx { .. } => (
                LossKind::CategoricalCrossEntropy,
                LossKind::BinaryCrossEntropy,
                bae_nn::EvalMetric::Accuracy,
            ),
        }
    }
}
