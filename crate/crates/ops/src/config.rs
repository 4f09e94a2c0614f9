use std::path::Path;

use serde::{Deserialize, Serialize};
use ttf_core::eval::{AblationGrid, InputMode};
use ttf_core::ltv::{Day, LtvDataset};
use ttf_core::model::{Activation, BackboneHparams, BackboneKind, CovariateConfig, ModelConfig};
use ttf_core::preprocess::SmoothScales;
use ttf_core::synth::GeneratorConfig;
use ttf_core::training::{LossKind, TrainConfig};
use ttf_core::trapezoid::WindowSpec;

use crate::error::{OpsError, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub generator: GeneratorConfig,
    pub model: ModelSettings,
    pub train: TrainConfig,
    pub split: SplitSettings,
    pub predict: PredictSettings,
    pub monitor: MonitorSettings,
    pub ablation: AblationSettings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub s: usize,
    pub scales: Vec<usize>,
    pub backbone: BackboneKind,
    pub hidden: usize,
    pub blocks: usize,
    pub dropout: f64,
    pub activation: Activation,
    pub trend_kernel: usize,
    pub fusion_hidden: usize,
    pub positional_encoding: bool,
    /// Channel one-hot and calendar covariates.
    pub covariates: bool,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            m: 10,
            n: 60,
            k: 20,
            s: 1,
            scales: vec![1, 3, 7, 14],
            backbone: BackboneKind::Mixer,
            hidden: 16,
            blocks: 1,
            dropout: 0.0,
            activation: Activation::Gelu,
            trend_kernel: 7,
            fusion_hidden: 32,
            positional_encoding: true,
            covariates: true,
        }
    }
}

impl ModelSettings {
    pub fn spec(&self) -> Result<WindowSpec> {
        Ok(WindowSpec::new(self.m, self.n, self.k, self.s)?)
    }

    pub fn model_config(&self, data: &LtvDataset, seed: u64) -> Result<ModelConfig> {
        let cfg = ModelConfig {
            spec: self.spec()?,
            scales: SmoothScales::new(self.scales.clone())?,
            backbone: self.backbone,
            backbone_hparams: self.hparams(),
            covariates: if self.covariates {
                CovariateConfig::full(data.channels())
            } else {
                CovariateConfig::none()
            },
            fusion_hidden: self.fusion_hidden,
            positional_encoding: self.positional_encoding,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn hparams(&self) -> BackboneHparams {
        BackboneHparams {
            hidden: self.hidden,
            blocks: self.blocks,
            dropout: self.dropout,
            activation: self.activation,
            trend_kernel: self.trend_kernel,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSettings {
    /// Share of each channel's forecast origins held out for validation metrics.
    pub test_fraction: f64,
    /// Keeps every n-th fitting window per channel.
    pub train_stride: usize,
}

impl Default for SplitSettings {
    fn default() -> Self {
        SplitSettings {
            test_fraction: 0.2,
            train_stride: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictSettings {
    /// Newest cohorts forecast per channel.
    pub cohorts: usize,
    /// Treat this date as the last observed day; defaults to the data's end.
    pub as_of: Option<Day>,
}

impl Default for PredictSettings {
    fn default() -> Self {
        PredictSettings {
            cohorts: 7,
            as_of: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorSettings {
    pub window_days: usize,
    /// Absolute MAPE_p increase over baseline (0.02 = 2 percentage points).
    pub threshold: f64,
    pub retrain_every_days: usize,
}

impl Default for MonitorSettings {
    fn default() -> Self {
        MonitorSettings {
            window_days: 7,
            threshold: 0.02,
            retrain_every_days: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSettings {
    pub inputs: Vec<InputMode>,
    pub scales: Vec<Vec<usize>>,
    pub losses: Vec<LossKind>,
    pub positional_encoding: Vec<bool>,
    pub backbones: Vec<BackboneKind>,
}

impl Default for AblationSettings {
    fn default() -> Self {
        AblationSettings {
            inputs: vec![InputMode::Trapezoidal(20)],
            scales: vec![vec![1, 3, 7, 14]],
            losses: vec![LossKind::Utilitarian, LossKind::Mse],
            positional_encoding: vec![true],
            backbones: vec![BackboneKind::Mixer],
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| OpsError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| OpsError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn ablation_grid(&self, data: &LtvDataset, seed: u64) -> Result<AblationGrid> {
        let template = self.model.model_config(data, seed)?;
        let scales = self
            .ablation
            .scales
            .iter()
            .map(|s| SmoothScales::new(s.clone()))
            .collect::<ttf_core::Result<Vec<_>>>()?;
        Ok(AblationGrid {
            m: self.model.m,
            n: self.model.n,
            inputs: self.ablation.inputs.clone(),
            scales,
            losses: self.ablation.losses.clone(),
            positional_encoding: self.ablation.positional_encoding.clone(),
            backbones: self.ablation.backbones.clone(),
            template,
            train: self.train.clone(),
            test_fraction: self.split.test_fraction,
            train_stride: self.split.train_stride,
            covariates: self.model.covariates,
            seed,
        })
    }
}
