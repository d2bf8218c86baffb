//! TOML run configuration. Every section is optional and falls back to the
//! full-scale defaults; unknown keys are rejected.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use transfuse_core::destruct::{TransformKind, TransformSpec};
use transfuse_core::fuse::FusionRule;
use transfuse_core::loss::LossConfig;
use transfuse_core::model::ModelConfig;
use transfuse_core::trainer::TrainConfig;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub image_size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grad_clip: Option<f64>,
    pub checkpoint_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection::from(&TrainConfig::default())
    }
}

impl From<&TrainConfig> for TrainSection {
    fn from(c: &TrainConfig) -> Self {
        TrainSection {
            epochs: c.epochs,
            batch_size: c.batch_size,
            learning_rate: c.learning_rate,
            weight_decay: c.weight_decay,
            seed: c.seed,
            image_size: c.image_size,
            grad_clip: c.grad_clip,
            checkpoint_every: c.checkpoint_every,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfigFile {
    pub train: TrainSection,
    pub transform: TransformSpec,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub fusion: FusionRule,
}

impl RunConfigFile {
    pub fn from_train_config(c: &TrainConfig) -> Self {
        RunConfigFile {
            train: TrainSection::from(c),
            transform: c.transform.clone(),
            model: c.model.clone(),
            loss: c.loss.clone(),
            fusion: FusionRule::default(),
        }
    }

    /// The 64×64 overfit setup.
    pub fn desk_scale() -> Self {
        Self::from_train_config(&TrainConfig::desk_scale())
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config { path: origin.to_path_buf(), msg: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            weight_decay: t.weight_decay,
            seed: t.seed,
            image_size: t.image_size,
            grad_clip: t.grad_clip,
            checkpoint_every: t.checkpoint_every,
            transform: self.transform.clone(),
            loss: self.loss.clone(),
            model: self.model.clone(),
        }
    }

    /// Applies command-line flags on top of the file values.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.train.seed = seed;
        }
        if let Some(epochs) = o.epochs {
            self.train.epochs = epochs;
        }
        if let Some(size) = o.image_size {
            self.train.image_size = size;
            self.model.patch.image_size = size;
        }
        if o.no_transformer {
            self.model.transformer_branch = false;
        }
        if let Some(forced) = &o.force {
            self.transform.force(forced);
        }
        for &kind in &o.disable {
            self.transform.disable(kind);
        }
        if let Some(rule) = o.rule {
            self.fusion.kind = rule;
        }
    }
}

/// Flag values that override the configuration file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub image_size: Option<usize>,
    pub no_transformer: bool,
    pub disable: Vec<TransformKind>,
    /// Exactly these transforms on every subregion.
    pub force: Option<Vec<TransformKind>>,
    pub rule: Option<transfuse_core::fuse::FusionKind>,
}

/// Parses `"nl+b+ns"`-style transform lists.
pub fn parse_transform_list(s: &str) -> std::result::Result<Vec<TransformKind>, String> {
    if s == "none" {
        return Ok(Vec::new());
    }
    s.split('+')
        .map(|p| TransformKind::from_short_name(p.trim()).ok_or_else(|| format!("unknown transform '{p}' (use nl, b, ns)")))
        .collect()
}
