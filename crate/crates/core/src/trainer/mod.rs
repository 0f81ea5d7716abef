//! Training loop: seeded mini-batches, Adam, learning-rate halving on
//! validation plateaus, early stopping, and the two-stage schedule in which
//! large-loss instances are discarded or pruned after `n1` epochs.

mod model;
mod optim;
mod schedule;
mod split;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use model::{Architecture, Layer, ModelParams, DEFAULT_HIDDEN_UNITS};
pub use optim::Adam;
pub use schedule::{plateau_step, PlateauStep};
pub use split::{stratified_split, validation_clip_count};

use crate::dataset::{ClipId, Dataset};
use crate::error::{Error, Result};
use crate::losses::{loss_and_gradient, LossReport, LossSpec};
use crate::mixup::{apply_mixup, MixupPolicy, Sample};
use crate::numerics::{argmax, softmax_unchecked, RngStream};
use crate::selection::{clip_losses, discard_mask, prune_dataset, PruneRecord, StagePlan, Strategy};
use crate::smoothing::{smooth_with_policy, LabelDistribution, SmoothingPolicy};

// RNG stream ids within one training seed.
pub(crate) const STREAM_SPLIT: u64 = 1;
const STREAM_INIT: u64 = 2;
const STREAM_SHUFFLE: u64 = 3;
const STREAM_MIXUP: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::initial_lr")]
    pub initial_lr: f64,
    #[serde(default = "defaults::lr_halving_patience")]
    pub lr_halving_patience: usize,
    #[serde(default = "defaults::early_stop_patience")]
    pub early_stop_patience: usize,
    #[serde(default = "defaults::val_fraction")]
    pub val_fraction: f64,
    #[serde(default = "defaults::max_epochs")]
    pub max_epochs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub architecture: Architecture,
    #[serde(default = "defaults::loss")]
    pub loss: LossSpec,
    #[serde(default)]
    pub stage: StagePlan,
    #[serde(default)]
    pub smoothing: Option<SmoothingPolicy>,
    #[serde(default)]
    pub mixup: Option<MixupPolicy>,
}

mod defaults {
    use crate::losses::LossSpec;

    pub fn batch_size() -> usize {
        64
    }
    pub fn initial_lr() -> f64 {
        0.001
    }
    pub fn lr_halving_patience() -> usize {
        5
    }
    pub fn early_stop_patience() -> usize {
        15
    }
    pub fn val_fraction() -> f64 {
        0.15
    }
    pub fn max_epochs() -> usize {
        100
    }
    pub fn loss() -> LossSpec {
        LossSpec::Cce
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: defaults::batch_size(),
            initial_lr: defaults::initial_lr(),
            lr_halving_patience: defaults::lr_halving_patience(),
            early_stop_patience: defaults::early_stop_patience(),
            val_fraction: defaults::val_fraction(),
            max_epochs: defaults::max_epochs(),
            seed: 0,
            architecture: Architecture::Linear,
            loss: defaults::loss(),
            stage: StagePlan::default(),
            smoothing: None,
            mixup: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be at least 1"));
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(Error::config("train.initial_lr", "must be a positive number"));
        }
        if self.lr_halving_patience == 0 {
            return Err(Error::config("train.lr_halving_patience", "must be at least 1"));
        }
        if self.early_stop_patience == 0 {
            return Err(Error::config("train.early_stop_patience", "must be at least 1"));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::config("train.val_fraction", "must lie in (0, 1)"));
        }
        self.architecture.validate()?;
        self.loss.validate()?;
        self.stage.validate()?;
        if let Some(s) = &self.smoothing {
            s.validate()?;
        }
        if let Some(m) = &self.mixup {
            m.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 0-based epoch index.
    pub epoch: usize,
    /// Mean loss over the instances used for gradient updates.
    pub train_loss: f64,
    pub val_accuracy: f64,
    /// Learning rate used during the epoch.
    pub lr: f64,
    /// Fraction of instances not discarded.
    pub kept_fraction: f64,
    /// Training clips at the start of the epoch.
    pub train_clips: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    /// Parameters from the epoch with the best validation accuracy.
    pub model: ModelParams,
    pub history: Vec<EpochRecord>,
    /// Present iff the stage plan prunes and pruning happened.
    pub prune_report: Option<Vec<PruneRecord>>,
    /// Every clip removed by pruning, in removal order.
    pub removed_clips: Vec<ClipId>,
    pub best_epoch: Option<usize>,
}

/// Clip-level accuracy: patch softmax outputs are averaged per clip and the
/// argmax is compared to the clip label.
pub fn evaluate(model: &ModelParams, dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty dataset"));
    }
    let mut per_clip: BTreeMap<ClipId, (Vec<f64>, usize)> = BTreeMap::new();
    for ex in &dataset.examples {
        let p = softmax_unchecked(&model.logits(&ex.features));
        let entry = per_clip
            .entry(ex.clip_id)
            .or_insert_with(|| (vec![0.0; p.len()], ex.label));
        for (acc, v) in entry.0.iter_mut().zip(&p) {
            *acc += v;
        }
    }
    let correct = per_clip
        .values()
        .filter(|(sum, label)| argmax(sum) == *label)
        .count();
    Ok(correct as f64 / per_clip.len() as f64)
}

struct TrainSet {
    data: Dataset,
    targets: Vec<LabelDistribution>,
}

impl TrainSet {
    fn new(data: Dataset, smoothing: Option<&SmoothingPolicy>) -> Result<Self> {
        let k = data.num_classes;
        let targets = data
            .examples
            .iter()
            .map(|e| match smoothing {
                Some(policy) => smooth_with_policy(e.label, k, policy),
                None => LabelDistribution::one_hot(e.label, k),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { data, targets })
    }

    fn sample(&self, i: usize) -> Sample {
        Sample {
            features: self.data.examples[i].features.clone(),
            target: self.targets[i].clone(),
        }
    }

    fn len(&self) -> usize {
        self.targets.len()
    }
}

pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutput> {
    train_with_observer(dataset, config, |_| Ok(()))
}

/// As [`train`], calling `observer` after every completed epoch.
pub fn train_with_observer(
    dataset: &Dataset,
    config: &TrainConfig,
    mut observer: impl FnMut(&EpochRecord) -> Result<()>,
) -> Result<TrainOutput> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::invalid("training dataset is empty"));
    }
    dataset.validate()?;
    let feature_dim = dataset.feature_dim().unwrap_or(0);

    let (train_split, val_split) = stratified_split(dataset, config.val_fraction, config.seed)?;
    let mut model = ModelParams::init(
        config.architecture,
        feature_dim,
        dataset.num_classes,
        &mut RngStream::new(config.seed, STREAM_INIT),
    )?;
    let mut train_set = TrainSet::new(train_split, config.smoothing.as_ref())?;

    let mut output = TrainOutput {
        model: model.clone(),
        history: Vec::new(),
        prune_report: None,
        removed_clips: Vec::new(),
        best_epoch: None,
    };
    if config.max_epochs == 0 {
        return Ok(output);
    }

    let stage = &config.stage;
    let mut prune_rounds_done = 0;
    if stage.strategy == Strategy::Prune && stage.n1 == 0 {
        prune_round(&model, &mut train_set, config, 0, &mut output)?;
        prune_rounds_done = 1;
    }

    let mut adam = Adam::new(model.param_count());
    let mut shuffle_rng = RngStream::new(config.seed, STREAM_SHUFFLE);
    let mut mixup_rng = RngStream::new(config.seed, STREAM_MIXUP);
    let mut lr = config.initial_lr;
    let mut plateau = PlateauStep {
        lr,
        stall_counter: 0,
        best: f64::NEG_INFINITY,
    };
    let mut best_val = f64::NEG_INFINITY;
    let mut early_stop_counter = 0;
    let mut grad = vec![0.0; model.param_count()];

    for epoch in 0..config.max_epochs {
        let train_clips = train_set.data.clip_count();
        let n = train_set.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut shuffle_rng);
        let mixup = config.mixup.as_ref().filter(|m| m.active_at(epoch));
        let partner_order = match mixup {
            Some(m) if m.pairing == crate::mixup::Pairing::Inter => {
                let mut p: Vec<usize> = (0..n).collect();
                p.shuffle(&mut mixup_rng);
                Some(p)
            }
            _ => None,
        };
        let discarding = stage.strategy == Strategy::Discard;

        let mut loss_sum = 0.0;
        let mut kept_total = 0usize;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let mut samples: Vec<Sample> = chunk.iter().map(|&i| train_set.sample(i)).collect();
            if let Some(policy) = mixup {
                let partner: Option<Vec<Sample>> = partner_order.as_ref().map(|p| {
                    let start = b * config.batch_size;
                    p[start..start + chunk.len()].iter().map(|&i| train_set.sample(i)).collect()
                });
                samples = apply_mixup(&samples, partner.as_deref(), policy, epoch, &mut mixup_rng)?;
            }

            let mut losses = Vec::with_capacity(samples.len());
            let mut dlogits = Vec::with_capacity(samples.len());
            for s in &samples {
                let logits = model.logits(&s.features);
                if logits.iter().any(|z| !z.is_finite()) {
                    return Err(Error::Training {
                        epoch,
                        message: "non-finite logits".into(),
                    });
                }
                let p = softmax_unchecked(&logits);
                let (loss, g) = loss_and_gradient(&config.loss, s.target.values(), &p);
                if !loss.is_finite() {
                    return Err(Error::Training {
                        epoch,
                        message: format!("non-finite loss {loss}"),
                    });
                }
                losses.push(loss);
                dlogits.push(g);
            }

            let mask = if discarding {
                let ids = chunk.iter().map(|&i| train_set.data.examples[i].example_id).collect();
                discard_mask(&LossReport::new(losses.clone(), ids)?, &stage.rule, epoch, stage.n1)?
            } else {
                vec![true; losses.len()]
            };
            let kept = mask.iter().filter(|k| **k).count();
            let scale = 1.0 / kept as f64;
            grad.iter_mut().for_each(|g| *g = 0.0);
            for ((s, g), keep) in samples.iter().zip(&dlogits).zip(&mask) {
                if *keep {
                    model.accumulate_gradient(&s.features, g, scale, &mut grad);
                }
            }
            adam.step(&mut model, &grad, lr);
            loss_sum += losses.iter().zip(&mask).filter(|(_, k)| **k).map(|(l, _)| l).sum::<f64>();
            kept_total += kept;
        }

        if model.params().any(|v| !v.is_finite()) {
            return Err(Error::Training {
                epoch,
                message: "non-finite parameters after update".into(),
            });
        }

        let val_accuracy = evaluate(&model, &val_split)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / kept_total as f64,
            val_accuracy,
            lr,
            kept_fraction: kept_total as f64 / n as f64,
            train_clips,
        };
        observer(&record)?;
        output.history.push(record);

        if val_accuracy > best_val {
            best_val = val_accuracy;
            output.model = model.clone();
            output.best_epoch = Some(epoch);
            early_stop_counter = 0;
        } else {
            early_stop_counter += 1;
        }
        plateau = plateau_step(plateau.best, val_accuracy, plateau.stall_counter, lr, config.lr_halving_patience);
        lr = plateau.lr;

        if stage.strategy == Strategy::Prune
            && prune_rounds_done < stage.prune_rounds
            && epoch + 1 == stage.n1 * (prune_rounds_done + 1)
        {
            prune_round(&model, &mut train_set, config, prune_rounds_done, &mut output)?;
            prune_rounds_done += 1;
        }

        if early_stop_counter >= config.early_stop_patience {
            break;
        }
    }
    Ok(output)
}

/// Score the train set with the current model and drop the
/// `prune_count` clips with the largest mean loss.
fn prune_round(
    model: &ModelParams,
    train_set: &mut TrainSet,
    config: &TrainConfig,
    round: usize,
    output: &mut TrainOutput,
) -> Result<()> {
    let prune_count = config.stage.prune_count;
    let clips = train_set.data.clip_count();
    if prune_count >= clips {
        return Err(Error::config(
            "stage.prune_count",
            format!("cannot prune {prune_count} of {clips} training clips"),
        ));
    }
    let mut losses = Vec::with_capacity(train_set.len());
    for (ex, target) in train_set.data.examples.iter().zip(&train_set.targets) {
        let p = softmax_unchecked(&model.logits(&ex.features));
        losses.push(loss_and_gradient(&config.loss, target.values(), &p).0);
    }
    let ids = train_set.data.examples.iter().map(|e| e.example_id).collect();
    let report = LossReport::new(losses, ids)?;
    let per_clip = clip_losses(&report, &train_set.data.clip_of_example())?;
    let outcome = prune_dataset(&train_set.data, &per_clip, prune_count)?;

    let removed: BTreeSet<ClipId> = outcome.removed.iter().copied().collect();
    let targets = train_set
        .data
        .examples
        .iter()
        .zip(&train_set.targets)
        .filter(|(e, _)| !removed.contains(&e.clip_id))
        .map(|(_, t)| t.clone())
        .collect();
    *train_set = TrainSet {
        data: outcome.kept,
        targets,
    };
    output.removed_clips.extend(outcome.removed);
    output
        .prune_report
        .get_or_insert_with(Vec::new)
        .extend(outcome.report.into_iter().map(|r| PruneRecord { round, ..r }));
    Ok(())
}
