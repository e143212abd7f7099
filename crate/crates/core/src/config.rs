//! Experiment configuration. Every section has defaults, so an empty
//! document is a valid configuration.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::contrastive::{LossConfig, LossMode};
use crate::error::{Error, Result};
use crate::graph::ThresholdConfig;
use crate::neural::{ArchSpec, GateKind};
use crate::trainer::{AdamConfig, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub record_timing: bool,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            max_epochs: 500,
            patience: 50,
            seed: 0,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            record_timing: false,
        }
    }
}

/// Widths left unset follow the input dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub hidden_dim: Option<usize>,
    pub layers: usize,
    pub proj_dim: Option<usize>,
    pub attn_dim: Option<usize>,
    pub gate: GateKind,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            hidden_dim: None,
            layers: 2,
            proj_dim: None,
            attn_dim: None,
            gate: GateKind::Scalar,
        }
    }
}

impl ArchConfig {
    pub fn resolve(&self, input_dim: usize) -> ArchSpec {
        let base = ArchSpec::for_input(input_dim);
        ArchSpec {
            input_dim,
            hidden_dim: self.hidden_dim.unwrap_or(base.hidden_dim),
            layers: self.layers,
            proj_dim: self.proj_dim.unwrap_or(base.proj_dim),
            attn_dim: self.attn_dim.unwrap_or(base.attn_dim),
            gate: self.gate,
        }
    }
}

/// Downstream logistic-regression probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Scale each representation row to unit length before fitting.
    pub normalize: bool,
    /// Seed of the stratified labeled subsample.
    pub split_seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            learning_rate: 0.1,
            normalize: true,
            split_seed: 0,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("classifier learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Inputs for the sweep harnesses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub label_rates: Vec<f64>,
    pub modes: Vec<LossMode>,
    pub seeds: Vec<u64>,
    pub sweep_param: Option<String>,
    pub sweep_values: Vec<f64>,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            label_rates: vec![0.01, 0.05, 0.1, 0.2],
            modes: LossMode::ALL.to_vec(),
            seeds: vec![0],
            sweep_param: None,
            sweep_values: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoConfig {
    pub bundle: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub log: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub thresholds: ThresholdConfig,
    pub loss: LossConfig,
    pub train: TrainSettings,
    pub arch: ArchConfig,
    pub classifier: ClassifierConfig,
    pub label_rate: f64,
    pub harness: HarnessConfig,
    pub io: IoConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            thresholds: ThresholdConfig::default(),
            loss: LossConfig::default(),
            train: TrainSettings::default(),
            arch: ArchConfig::default(),
            classifier: ClassifierConfig::default(),
            label_rate: 0.1,
            harness: HarnessConfig::default(),
            io: IoConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            max_epochs: self.train.max_epochs,
            patience: self.train.patience,
            loss: self.loss,
            seed: self.train.seed,
            adam: AdamConfig {
                learning_rate: self.train.learning_rate,
                beta1: self.train.beta1,
                beta2: self.train.beta2,
                eps: self.train.eps,
            },
            checkpoint_path: self.io.checkpoint.clone(),
            record_timing: self.train.record_timing,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.thresholds.validate()?;
        self.train_config().validate()?;
        self.classifier.validate()?;
        if !(self.label_rate > 0.0 && self.label_rate <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "label_rate {} outside (0, 1]",
                self.label_rate
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}
