//! Experiment configuration file: one JSON object tree, unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{noise_groups, NoiseKind, NoiseSpec};
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default = "defaults::classes")]
    pub classes: usize,
    #[serde(default = "defaults::clips_per_class")]
    pub clips_per_class: usize,
    #[serde(default = "defaults::patches_per_clip")]
    pub patches_per_clip: usize,
    #[serde(default = "defaults::dims")]
    pub dims: usize,
    #[serde(default = "defaults::spread")]
    pub spread: f64,
    #[serde(default = "defaults::test_clips_per_class")]
    pub test_clips_per_class: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            classes: defaults::classes(),
            clips_per_class: defaults::clips_per_class(),
            patches_per_clip: defaults::patches_per_clip(),
            dims: defaults::dims(),
            spread: defaults::spread(),
            test_clips_per_class: defaults::test_clips_per_class(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Directory for metrics, model, prune report and summary files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub data: DataConfig,
    /// Applied to the training data in order.
    #[serde(default)]
    pub noise: Vec<NoiseSpec>,
    #[serde(default)]
    pub train: TrainConfig,
    /// Replace the smoothing group map with one derived from the per-class
    /// symmetric noise rates.
    #[serde(default)]
    pub smoothing_groups_from_noise: bool,
    #[serde(default = "defaults::runs")]
    pub runs: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            noise: Vec::new(),
            train: TrainConfig::default(),
            smoothing_groups_from_noise: false,
            runs: defaults::runs(),
            base_seed: 0,
            output: OutputConfig::default(),
        }
    }
}

mod defaults {
    pub fn classes() -> usize {
        4
    }
    pub fn clips_per_class() -> usize {
        50
    }
    pub fn patches_per_clip() -> usize {
        3
    }
    pub fn dims() -> usize {
        8
    }
    pub fn spread() -> f64 {
        0.35
    }
    pub fn test_clips_per_class() -> usize {
        100
    }
    pub fn runs() -> usize {
        7
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: Self = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        if d.classes < 2 {
            return Err(Error::config("data.classes", "need at least 2 classes"));
        }
        for (field, v) in [
            ("data.clips_per_class", d.clips_per_class),
            ("data.patches_per_clip", d.patches_per_clip),
            ("data.dims", d.dims),
            ("data.test_clips_per_class", d.test_clips_per_class),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        if !(d.spread > 0.0 && d.spread.is_finite()) {
            return Err(Error::config("data.spread", "must be a positive number"));
        }
        for spec in &self.noise {
            spec.validate(Some(d.classes))?;
        }
        if self.runs == 0 {
            return Err(Error::config("runs", "must be at least 1"));
        }
        if self.smoothing_groups_from_noise && self.train.smoothing.is_none() {
            return Err(Error::config(
                "smoothing_groups_from_noise",
                "set, but train.smoothing is absent",
            ));
        }
        self.resolved_train_config(0)?.validate()
    }

    /// Per-class symmetric noise rate summed over all symmetric noise specs.
    pub fn symmetric_class_rates(&self) -> Vec<f64> {
        (0..self.data.classes)
            .map(|c| {
                self.noise
                    .iter()
                    .filter(|n| n.kind == NoiseKind::Symmetric)
                    .map(|n| match &n.class_rates {
                        Some(r) if c < r.len() => r[c],
                        Some(_) => 0.0,
                        None => n.rate,
                    })
                    .sum()
            })
            .collect()
    }

    /// Training configuration for one run: seed replaced, smoothing groups
    /// derived from noise rates when requested.
    pub fn resolved_train_config(&self, seed: u64) -> Result<TrainConfig> {
        let mut train = self.train.clone();
        train.seed = seed;
        if self.smoothing_groups_from_noise {
            if let Some(policy) = train.smoothing.as_mut() {
                policy.groups = Some(noise_groups(&self.symmetric_class_rates()));
            }
        }
        Ok(train)
    }
}
