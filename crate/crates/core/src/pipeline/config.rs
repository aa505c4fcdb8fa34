use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{CorpusConfig, Split, VOCAB_SIZE};
use crate::error::{Error, Result};
use crate::losses::{LossConfig, LossWeights, WindowMode, DEFAULT_ALIGN_CLAMP};
use crate::model::ModelConfig;

fn default_true() -> bool {
    true
}
fn default_clamp() -> f64 {
    DEFAULT_ALIGN_CLAMP
}

/// The `[loss]` table of a training config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    /// `ctc`, `align`, `ts`, `ts+align`, `ts-best:±N` or `ts-avg:±N`.
    pub recipe: String,
    #[serde(default)]
    pub weights: LossWeights,
    #[serde(default = "default_true")]
    pub use_ctc: bool,
    #[serde(default = "default_clamp")]
    pub align_clamp: f64,
    /// Teacher checkpoint path; the CLI `--teacher` flag overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teacher: Option<String>,
}

impl LossSection {
    pub fn recipe(recipe: &str) -> Self {
        Self {
            recipe: recipe.to_string(),
            weights: LossWeights::default(),
            use_ctc: true,
            align_clamp: DEFAULT_ALIGN_CLAMP,
            teacher: None,
        }
    }

    pub fn to_loss_config(&self) -> Result<LossConfig> {
        let mut cfg = LossConfig::from_recipe(&self.recipe)?;
        cfg.weights = self.weights;
        cfg.use_ctc = self.use_ctc;
        cfg.align_clamp = self.align_clamp;
        if let Some(ts) = cfg.ts.as_mut() {
            ts.teacher_checkpoint = self.teacher.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// How dev PER is compared when deciding to halve the learning rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrCompare {
    #[default]
    Previous,
    Best,
}

fn default_epochs() -> usize {
    25
}
fn default_lr() -> f64 {
    0.0005
}
fn default_halving_start() -> usize {
    8
}
fn default_batch() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub loss: LossSection,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    /// First epoch (1-based) after which the learning rate may halve.
    #[serde(default = "default_halving_start")]
    pub lr_halving_start_epoch: usize,
    #[serde(default)]
    pub lr_compare: LrCompare,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    /// Corpus directory; the CLI `--corpus` flag overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    /// Train on all three within-stack orderings every epoch.
    #[serde(default)]
    pub augmentation: bool,
}

impl TrainConfig {
    pub fn new(model: ModelConfig, recipe: &str) -> Self {
        Self {
            model,
            loss: LossSection::recipe(recipe),
            epochs: default_epochs(),
            lr: default_lr(),
            lr_halving_start_epoch: default_halving_start(),
            lr_compare: LrCompare::default(),
            batch_size: default_batch(),
            seed: 0,
            corpus: None,
            augmentation: false,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loss.to_loss_config()?;
        if self.model.vocab_size != VOCAB_SIZE {
            return Err(Error::Config(format!("vocab_size {} but the inventory has {VOCAB_SIZE}", self.model.vocab_size)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

pub fn corpus_config_from_toml(text: &str) -> Result<CorpusConfig> {
    let cfg: CorpusConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn default_windows() -> Vec<i64> {
    vec![-6, -3, 0, 3, 6]
}
fn default_modes() -> Vec<WindowMode> {
    vec![WindowMode::Best, WindowMode::Avg]
}
fn default_split() -> Split {
    Split::Test
}

/// Student window sweep against one fixed teacher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub corpus: PathBuf,
    pub teacher: PathBuf,
    /// Delay reference, normally the alignment-trained bidirectional model.
    #[serde(default)]
    pub reference: Option<PathBuf>,
    /// Student settings; its loss recipe is replaced per sweep point.
    pub student: TrainConfig,
    #[serde(default = "default_windows")]
    pub windows: Vec<i64>,
    #[serde(default = "default_modes")]
    pub modes: Vec<WindowMode>,
    #[serde(default = "default_split")]
    pub split: Split,
}

impl SweepConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = toml::from_str(&std::fs::read_to_string(path)?).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.windows.is_empty() || cfg.modes.is_empty() {
            return Err(Error::Config("sweep needs at least one window and one mode".into()));
        }
        cfg.student.validate()?;
        Ok(cfg)
    }
}
