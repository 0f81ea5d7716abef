//! Large-loss instance rejection: thresholds, per-batch discarding after
//! `n1` epochs and one-shot pruning of whole clips.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dataset::{ClipId, Dataset, ExampleId};
use crate::error::{Error, Result};
use crate::losses::LossReport;
use crate::numerics::percentile;

/// How the rejection threshold `t` is derived from a loss array. Losses
/// strictly greater than `t` are rejected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SelectionRule {
    /// `t = m * max(losses)`, `m` in `[0, 1]`.
    MaxFraction { m: f64 },
    /// `t = percentile(losses, l)`, `l` in `[0, 100]`.
    Percentile { l: f64 },
}

impl SelectionRule {
    /// Percentile rule that rejects about `count` instances of a batch of
    /// `batch_size`.
    pub fn discard_count(count: usize, batch_size: usize) -> Result<Self> {
        if batch_size == 0 || count >= batch_size {
            return Err(Error::invalid(format!(
                "cannot discard {count} of {batch_size} instances"
            )));
        }
        Ok(SelectionRule::Percentile {
            l: 100.0 * (1.0 - count as f64 / batch_size as f64),
        })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SelectionRule::MaxFraction { m } if !(0.0..=1.0).contains(&m) => Err(Error::config(
                "stage.rule.m",
                format!("m = {m} is outside [0, 1]"),
            )),
            SelectionRule::Percentile { l } if !(0.0..=100.0).contains(&l) => Err(Error::config(
                "stage.rule.l",
                format!("l = {l} is outside [0, 100]"),
            )),
            _ => Ok(()),
        }
    }

    pub fn threshold(&self, losses: &[f64]) -> Result<f64> {
        threshold_from_rule(losses, self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    #[default]
    None,
    /// Drop large-loss instances from every mini-batch from epoch `n1` on.
    Discard,
    /// Remove the largest-loss clips from the train set after `n1` epochs.
    Prune,
}

/// Two-stage schedule: `n1` epochs with the configured loss only, then
/// instance selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StagePlan {
    #[serde(default)]
    pub n1: usize,
    pub strategy: Strategy,
    #[serde(default = "keep_all")]
    pub rule: SelectionRule,
    #[serde(default)]
    pub prune_count: usize,
    /// Number of prune-then-train rounds, each `n1` epochs apart.
    #[serde(default = "one")]
    pub prune_rounds: usize,
}

fn one() -> usize {
    1
}

fn keep_all() -> SelectionRule {
    SelectionRule::MaxFraction { m: 1.0 }
}

impl Default for StagePlan {
    fn default() -> Self {
        Self {
            n1: 0,
            strategy: Strategy::None,
            rule: keep_all(),
            prune_count: 0,
            prune_rounds: 1,
        }
    }
}

impl StagePlan {
    pub fn discard(n1: usize, rule: SelectionRule) -> Self {
        Self {
            n1,
            strategy: Strategy::Discard,
            rule,
            ..Self::default()
        }
    }

    pub fn prune(n1: usize, prune_count: usize) -> Self {
        Self {
            n1,
            strategy: Strategy::Prune,
            prune_count,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.rule.validate()?;
        if self.strategy == Strategy::Prune {
            if self.prune_rounds == 0 {
                return Err(Error::config("stage.prune_rounds", "must be at least 1"));
            }
            if self.prune_rounds > 1 && self.n1 == 0 {
                return Err(Error::config(
                    "stage.n1",
                    "iterative pruning needs n1 >= 1 epochs between rounds",
                ));
            }
        }
        Ok(())
    }
}

pub fn threshold_from_rule(losses: &[f64], rule: &SelectionRule) -> Result<f64> {
    if losses.is_empty() {
        return Err(Error::invalid("threshold of an empty loss array"));
    }
    if let Some(v) = losses.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::invalid(format!("loss {v} is not a finite nonnegative number")));
    }
    rule.validate().map_err(|e| Error::invalid(e.to_string()))?;
    match *rule {
        SelectionRule::MaxFraction { m } => {
            let max = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Ok(m * max)
        }
        SelectionRule::Percentile { l } => percentile(losses, l),
    }
}

/// Keep-mask (`true` = keep) for one mini-batch. Before epoch `n1` every
/// instance is kept; afterwards instances above the threshold are dropped,
/// but never all of them.
pub fn discard_mask(losses: &LossReport, rule: &SelectionRule, epoch: usize, n1: usize) -> Result<Vec<bool>> {
    if losses.is_empty() {
        return Err(Error::invalid("discard mask of an empty batch"));
    }
    if epoch < n1 {
        return Ok(vec![true; losses.len()]);
    }
    let t = threshold_from_rule(&losses.per_example, rule)?;
    let mut mask: Vec<bool> = losses.per_example.iter().map(|l| *l <= t).collect();
    if !mask.iter().any(|k| *k) {
        let min = losses.per_example.iter().copied().fold(f64::INFINITY, f64::min);
        mask = losses.per_example.iter().map(|l| *l == min).collect();
    }
    Ok(mask)
}

/// Arithmetic mean of patch losses per clip.
pub fn clip_losses(
    patch_losses: &LossReport,
    clip_of_example: &BTreeMap<ExampleId, ClipId>,
) -> Result<BTreeMap<ClipId, f64>> {
    let mut acc: BTreeMap<ClipId, (f64, usize)> = BTreeMap::new();
    for (id, loss) in patch_losses.example_ids.iter().zip(&patch_losses.per_example) {
        let clip = clip_of_example.get(id).ok_or_else(|| {
            Error::config("clip_of_example", format!("example {id} has no clip assignment"))
        })?;
        let entry = acc.entry(*clip).or_insert((0.0, 0));
        entry.0 += loss;
        entry.1 += 1;
    }
    Ok(acc
        .into_iter()
        .map(|(clip, (sum, n))| (clip, sum / n as f64))
        .collect())
}

/// Clips in removal order: largest loss first, higher clip id first on ties.
pub fn removal_order(clip_losses: &BTreeMap<ClipId, f64>) -> Vec<(ClipId, f64)> {
    let mut ranked: Vec<(ClipId, f64)> = clip_losses.iter().map(|(c, l)| (*c, *l)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(b.0.cmp(&a.0)));
    ranked
}

/// One line of a prune report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneRecord {
    pub clip_id: ClipId,
    pub clip_loss: f64,
    /// 1 for the largest loss.
    pub rank: usize,
    pub removed: bool,
    /// Pruning round, 0 for the first.
    #[serde(default)]
    pub round: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneOutcome {
    pub kept: Dataset,
    /// Removed clip ids in removal order.
    pub removed: Vec<ClipId>,
    pub report: Vec<PruneRecord>,
}

/// Remove the `prune_count` clips with the largest clip-level loss.
pub fn prune_dataset(
    dataset: &Dataset,
    clip_losses: &BTreeMap<ClipId, f64>,
    prune_count: usize,
) -> Result<PruneOutcome> {
    let clips: BTreeSet<ClipId> = dataset.examples.iter().map(|e| e.clip_id).collect();
    if prune_count >= clips.len() {
        return Err(Error::invalid(format!(
            "cannot prune {prune_count} of {} clips",
            clips.len()
        )));
    }
    if let Some(c) = clips.iter().find(|c| !clip_losses.contains_key(c)) {
        return Err(Error::invalid(format!("clip {c} has no loss")));
    }
    if let Some(c) = clip_losses.keys().find(|c| !clips.contains(c)) {
        return Err(Error::invalid(format!("loss given for unknown clip {c}")));
    }

    let order = removal_order(clip_losses);
    let removed: Vec<ClipId> = order.iter().take(prune_count).map(|(c, _)| *c).collect();
    let removed_set: BTreeSet<ClipId> = removed.iter().copied().collect();
    let report = order
        .iter()
        .enumerate()
        .map(|(i, (clip, loss))| PruneRecord {
            clip_id: *clip,
            clip_loss: *loss,
            rank: i + 1,
            removed: i < prune_count,
            round: 0,
        })
        .collect();
    Ok(PruneOutcome {
        kept: dataset.filter_clips(|c| !removed_set.contains(&c)),
        removed,
        report,
    })
}
