//! mixup: virtual examples built as convex combinations of example pairs,
//! `x = l*x_i + (1-l)*x_j`, `y = l*y_i + (1-l)*y_j` with `l ~ Beta(a, a)`.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{sample_beta, RngStream};
use crate::smoothing::LabelDistribution;

/// A training input paired with its (possibly soft) target.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub target: LabelDistribution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pairing {
    /// Mix a batch with a random permutation of itself.
    #[default]
    Intra,
    /// Mix a batch positionally with a second batch.
    Inter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixupPolicy {
    pub alpha: f64,
    #[serde(default)]
    pub warm_up_epochs: usize,
    #[serde(default)]
    pub pairing: Pairing,
    #[serde(default = "enabled_default")]
    pub enabled: bool,
}

fn enabled_default() -> bool {
    true
}

/// Interpolation strengths searched in the reference experiments.
pub const ALPHA_GRID: [f64; 6] = [0.1, 0.2, 0.3, 0.4, 1.0, 2.0];
/// Warm-up lengths searched in the reference experiments.
pub const WARM_UP_GRID: [usize; 3] = [0, 5, 10];

impl MixupPolicy {
    pub fn new(alpha: f64, warm_up_epochs: usize) -> Self {
        Self {
            alpha,
            warm_up_epochs,
            pairing: Pairing::Intra,
            enabled: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.enabled && !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::config(
                "mixup.alpha",
                format!("alpha must be > 0 when mixup is enabled, got {}", self.alpha),
            ));
        }
        Ok(())
    }

    /// Whether mixing happens in `epoch` (0-based).
    pub fn active_at(&self, epoch: usize) -> bool {
        self.enabled && epoch >= self.warm_up_epochs
    }
}

pub fn mix_pair(
    x_i: &[f64],
    y_i: &LabelDistribution,
    x_j: &[f64],
    y_j: &LabelDistribution,
    lambda: f64,
) -> Result<(Vec<f64>, LabelDistribution)> {
    if x_i.len() != x_j.len() {
        return Err(Error::invalid(format!(
            "feature dimensions differ: {} vs {}",
            x_i.len(),
            x_j.len()
        )));
    }
    if y_i.num_classes() != y_j.num_classes() {
        return Err(Error::invalid(format!(
            "class counts differ: {} vs {}",
            y_i.num_classes(),
            y_j.num_classes()
        )));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!("lambda {lambda} outside [0, 1]")));
    }
    let x = x_i
        .iter()
        .zip(x_j)
        .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
        .collect();
    Ok((x, y_i.blend(y_j, lambda)))
}

/// Mix a training batch. Returns the batch unchanged while mixup is disabled
/// or still warming up.
pub fn apply_mixup(
    batch: &[Sample],
    partner: Option<&[Sample]>,
    policy: &MixupPolicy,
    epoch: usize,
    rng: &mut RngStream,
) -> Result<Vec<Sample>> {
    if batch.is_empty() {
        return Err(Error::invalid("mixup needs a non-empty batch"));
    }
    if !policy.active_at(epoch) {
        return Ok(batch.to_vec());
    }
    policy.validate()?;

    let partners: Vec<&Sample> = match policy.pairing {
        Pairing::Intra => {
            let mut order: Vec<usize> = (0..batch.len()).collect();
            order.shuffle(rng);
            order.iter().map(|&i| &batch[i]).collect()
        }
        Pairing::Inter => {
            let other = partner.ok_or_else(|| {
                Error::config("mixup.pairing", "inter-batch mixup needs a partner batch")
            })?;
            if other.len() != batch.len() {
                return Err(Error::invalid(format!(
                    "partner batch has {} samples, expected {}",
                    other.len(),
                    batch.len()
                )));
            }
            other.iter().collect()
        }
    };

    batch
        .iter()
        .zip(partners)
        .map(|(a, b)| {
            let lambda = sample_beta(policy.alpha, rng)?;
            let (features, target) = mix_pair(&a.features, &a.target, &b.features, &b.target, lambda)?;
            Ok(Sample { features, target })
        })
        .collect()
}
