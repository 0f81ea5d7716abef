//! Training-visible data: examples (patches) grouped into clips.
//!
//! Ground-truth bookkeeping for injected noise lives in the harness and is
//! never part of these types.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ExampleId = u64;
pub type ClipId = u64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub example_id: ExampleId,
    pub clip_id: ClipId,
    pub features: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub num_classes: usize,
    pub examples: Vec<Example>,
}

impl Dataset {
    pub fn new(num_classes: usize, examples: Vec<Example>) -> Result<Self> {
        let ds = Self {
            num_classes,
            examples,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::invalid("a dataset needs at least 2 classes"));
        }
        let dim = self.feature_dim();
        let mut ids = BTreeSet::new();
        let mut clip_label = BTreeMap::new();
        for ex in &self.examples {
            if ex.label >= self.num_classes {
                return Err(Error::invalid(format!(
                    "example {} has label {} but K = {}",
                    ex.example_id, ex.label, self.num_classes
                )));
            }
            if Some(ex.features.len()) != dim {
                return Err(Error::invalid(format!(
                    "example {} has {} features, expected {}",
                    ex.example_id,
                    ex.features.len(),
                    dim.unwrap_or(0)
                )));
            }
            if ex.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "example {} has a non-finite feature",
                    ex.example_id
                )));
            }
            if !ids.insert(ex.example_id) {
                return Err(Error::invalid(format!("duplicate example id {}", ex.example_id)));
            }
            if let Some(prev) = clip_label.insert(ex.clip_id, ex.label) {
                if prev != ex.label {
                    return Err(Error::invalid(format!(
                        "clip {} mixes labels {prev} and {}",
                        ex.clip_id, ex.label
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.examples.first().map(|e| e.features.len())
    }

    /// Clip ids in first-appearance order.
    pub fn clip_ids(&self) -> Vec<ClipId> {
        let mut seen = BTreeSet::new();
        self.examples
            .iter()
            .filter(|e| seen.insert(e.clip_id))
            .map(|e| e.clip_id)
            .collect()
    }

    pub fn clip_count(&self) -> usize {
        self.examples.iter().map(|e| e.clip_id).collect::<BTreeSet<_>>().len()
    }

    /// Label of every clip.
    pub fn clip_labels(&self) -> BTreeMap<ClipId, usize> {
        self.examples.iter().map(|e| (e.clip_id, e.label)).collect()
    }

    pub fn clip_of_example(&self) -> BTreeMap<ExampleId, ClipId> {
        self.examples.iter().map(|e| (e.example_id, e.clip_id)).collect()
    }

    /// Keep only examples whose clip satisfies `keep`, preserving order.
    pub fn filter_clips(&self, keep: impl Fn(ClipId) -> bool) -> Dataset {
        Dataset {
            num_classes: self.num_classes,
            examples: self
                .examples
                .iter()
                .filter(|e| keep(e.clip_id))
                .cloned()
                .collect(),
        }
    }
}
