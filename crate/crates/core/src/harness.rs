//! Synthetic benchmark: Gaussian blobs with a clip/patch hierarchy, label
//! noise injection with hidden ground truth, and the multi-run experiment
//! protocol (mean accuracy with a 95% t-interval).

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{DataConfig, ExperimentConfig};
use crate::dataset::{ClipId, Dataset, Example};
use crate::error::{Error, Result};
use crate::numerics::{mean_ci, RngStream};
use crate::smoothing::NoiseGroup;
use crate::trainer::{evaluate, train};

const STREAM_CENTERS: u64 = 10;
const STREAM_TRAIN_SAMPLES: u64 = 11;
const STREAM_TEST_SAMPLES: u64 = 12;
const STREAM_NOISE: u64 = 20;

/// Harness-private bookkeeping for one example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// `None` marks out-of-vocabulary content that belongs to no class.
    pub clean_label: Option<usize>,
    pub corrupted: bool,
}

/// A dataset together with the ground truth of every example (same order).
#[derive(Debug, Clone, PartialEq)]
pub struct TrackedDataset {
    pub data: Dataset,
    pub truth: Vec<GroundTruth>,
}

impl TrackedDataset {
    pub fn clean(data: Dataset) -> Self {
        let truth = data
            .examples
            .iter()
            .map(|e| GroundTruth {
                clean_label: Some(e.label),
                corrupted: false,
            })
            .collect();
        Self { data, truth }
    }

    pub fn corrupted_clips(&self) -> BTreeSet<ClipId> {
        self.data
            .examples
            .iter()
            .zip(&self.truth)
            .filter(|(_, t)| t.corrupted)
            .map(|(e, _)| e.clip_id)
            .collect()
    }

    /// Fraction of `removed` clips that were corrupted; `None` if empty.
    pub fn precision_of(&self, removed: &[ClipId]) -> Option<f64> {
        if removed.is_empty() {
            return None;
        }
        let corrupted = self.corrupted_clips();
        let hits = removed.iter().filter(|c| corrupted.contains(c)).count();
        Some(hits as f64 / removed.len() as f64)
    }
}

/// Class centers on the unit sphere in `dims` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassCenters(pub Vec<Vec<f64>>);

impl ClassCenters {
    pub fn generate(classes: usize, dims: usize, seed: u64) -> Self {
        let mut rng = RngStream::new(seed, STREAM_CENTERS);
        let centers = (0..classes)
            .map(|_| loop {
                let v: Vec<f64> = (0..dims).map(|_| rng.gaussian()).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 1e-12 {
                    break v.into_iter().map(|x| x / norm).collect();
                }
            })
            .collect();
        Self(centers)
    }

    /// Clips drawn around each center, patches drawn around each clip
    /// center, both with isotropic standard deviation `spread`. Examples are
    /// ordered class, clip, patch with sequential ids.
    pub fn sample(
        &self,
        clips_per_class: usize,
        patches_per_clip: usize,
        spread: f64,
        rng: &mut RngStream,
    ) -> Result<Dataset> {
        let mut examples = Vec::with_capacity(self.0.len() * clips_per_class * patches_per_clip);
        let mut clip_id = 0;
        for (label, center) in self.0.iter().enumerate() {
            for _ in 0..clips_per_class {
                let clip_center: Vec<f64> = center.iter().map(|c| c + spread * rng.gaussian()).collect();
                for _ in 0..patches_per_clip {
                    let features = clip_center.iter().map(|c| c + spread * rng.gaussian()).collect();
                    examples.push(Example {
                        example_id: examples.len() as u64,
                        clip_id,
                        features,
                        label,
                    });
                }
                clip_id += 1;
            }
        }
        Dataset::new(self.0.len(), examples)
    }
}

fn check_blob_args(data: &DataConfig) -> Result<()> {
    if data.classes < 2 {
        return Err(Error::invalid("need at least 2 classes"));
    }
    if data.clips_per_class == 0 || data.patches_per_clip == 0 || data.dims == 0 {
        return Err(Error::invalid("clip, patch and dimension counts must be >= 1"));
    }
    if !(data.spread > 0.0 && data.spread.is_finite()) {
        return Err(Error::invalid("spread must be a positive number"));
    }
    Ok(())
}

/// Clean synthetic dataset. Class centers and samples both derive from `seed`.
pub fn generate_blobs(data: &DataConfig, seed: u64) -> Result<TrackedDataset> {
    check_blob_args(data)?;
    let centers = ClassCenters::generate(data.classes, data.dims, seed);
    let ds = centers.sample(
        data.clips_per_class,
        data.patches_per_clip,
        data.spread,
        &mut RngStream::new(seed, STREAM_TRAIN_SAMPLES),
    )?;
    Ok(TrackedDataset::clean(ds))
}

/// Held-out clean test set drawn from the same class centers as
/// [`generate_blobs`] with the same `seed`.
pub fn generate_test_set(data: &DataConfig, seed: u64) -> Result<Dataset> {
    check_blob_args(data)?;
    let centers = ClassCenters::generate(data.classes, data.dims, seed);
    centers.sample(
        data.test_clips_per_class,
        data.patches_per_clip,
        data.spread,
        &mut RngStream::new(seed, STREAM_TEST_SAMPLES),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    /// In-vocabulary: the clip label is flipped to another class.
    Symmetric,
    /// Out-of-vocabulary: the clip content is replaced, the label kept.
    Oov,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    #[serde(default)]
    pub rate: f64,
    /// Per-class rates (indexed by current clip label); overrides `rate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_rates: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseSpec {
    pub fn symmetric(rate: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::Symmetric,
            rate,
            class_rates: None,
            seed,
        }
    }

    pub fn oov(rate: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::Oov,
            rate,
            class_rates: None,
            seed,
        }
    }

    pub fn validate(&self, num_classes: Option<usize>) -> Result<()> {
        let ok = |r: f64| (0.0..=1.0).contains(&r);
        if !ok(self.rate) {
            return Err(Error::config("noise.rate", format!("{} is outside [0, 1]", self.rate)));
        }
        if let Some(rates) = &self.class_rates {
            if let Some(r) = rates.iter().find(|r| !ok(**r)) {
                return Err(Error::config("noise.class_rates", format!("{r} is outside [0, 1]")));
            }
            if let Some(k) = num_classes {
                if rates.len() != k {
                    return Err(Error::config(
                        "noise.class_rates",
                        format!("{} rates given for {k} classes", rates.len()),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Rate applied to clips currently labelled `class`.
    pub fn rate_for(&self, class: usize) -> f64 {
        match &self.class_rates {
            Some(r) => r[class],
            None => self.rate,
        }
    }
}

/// `round(rate * n)` clips, chosen by seeded shuffle of `clips`.
fn choose_clips(clips: &[ClipId], rate: f64, rng: &mut RngStream) -> Vec<ClipId> {
    let count = (rate * clips.len() as f64).round() as usize;
    let mut pool = clips.to_vec();
    pool.shuffle(rng);
    pool.truncate(count.min(clips.len()));
    pool
}

/// Clips to corrupt: per-class pools when class rates are given, otherwise
/// one pool over the whole dataset.
fn select_for_noise(ds: &Dataset, spec: &NoiseSpec, rng: &mut RngStream) -> Vec<ClipId> {
    let clips = ds.clip_ids();
    match &spec.class_rates {
        None => choose_clips(&clips, spec.rate, rng),
        Some(_) => {
            let labels = ds.clip_labels();
            let mut chosen = Vec::new();
            for class in 0..ds.num_classes {
                let pool: Vec<ClipId> = clips.iter().copied().filter(|c| labels[c] == class).collect();
                chosen.extend(choose_clips(&pool, spec.rate_for(class), rng));
            }
            chosen
        }
    }
}

pub fn inject_symmetric_noise(dataset: &TrackedDataset, spec: &NoiseSpec) -> Result<TrackedDataset> {
    spec.validate(Some(dataset.data.num_classes))?;
    let k = dataset.data.num_classes;
    let mut rng = RngStream::new(spec.seed, STREAM_NOISE);
    let chosen = select_for_noise(&dataset.data, spec, &mut rng);
    let labels = dataset.data.clip_labels();
    let new_label: BTreeMap<ClipId, usize> = chosen
        .into_iter()
        .map(|clip| {
            let old = labels[&clip];
            let mut other = rng.below(k - 1);
            if other >= old {
                other += 1;
            }
            (clip, other)
        })
        .collect();

    let mut out = dataset.clone();
    for (ex, truth) in out.data.examples.iter_mut().zip(out.truth.iter_mut()) {
        if let Some(label) = new_label.get(&ex.clip_id) {
            ex.label = *label;
            truth.corrupted = truth.clean_label != Some(*label);
        }
    }
    Ok(out)
}

pub fn inject_oov_noise(dataset: &TrackedDataset, spec: &NoiseSpec) -> Result<TrackedDataset> {
    spec.validate(Some(dataset.data.num_classes))?;
    let mut out = dataset.clone();
    let Some(dims) = dataset.data.feature_dim() else {
        return Ok(out);
    };
    let mut rng = RngStream::new(spec.seed, STREAM_NOISE);
    let chosen: BTreeSet<ClipId> = select_for_noise(&dataset.data, spec, &mut rng).into_iter().collect();
    if chosen.is_empty() {
        return Ok(out);
    }

    // box centred on the data range, twice as wide in every dimension
    let mut lo = vec![f64::INFINITY; dims];
    let mut hi = vec![f64::NEG_INFINITY; dims];
    for ex in &dataset.data.examples {
        for (d, v) in ex.features.iter().enumerate() {
            lo[d] = lo[d].min(*v);
            hi[d] = hi[d].max(*v);
        }
    }
    for (ex, truth) in out.data.examples.iter_mut().zip(out.truth.iter_mut()) {
        if chosen.contains(&ex.clip_id) {
            for (d, f) in ex.features.iter_mut().enumerate() {
                let mid = 0.5 * (lo[d] + hi[d]);
                let width = hi[d] - lo[d];
                *f = mid - width + 2.0 * width * rng.uniform();
            }
            truth.clean_label = None;
            truth.corrupted = true;
        }
    }
    Ok(out)
}

pub fn inject_noise(dataset: &TrackedDataset, spec: &NoiseSpec) -> Result<TrackedDataset> {
    match spec.kind {
        NoiseKind::Symmetric => inject_symmetric_noise(dataset, spec),
        NoiseKind::Oov => inject_oov_noise(dataset, spec),
    }
}

/// Two-group assignment from per-class noise rates: classes strictly below
/// the median rate are low-noise, the rest high-noise.
pub fn noise_groups(class_rates: &[f64]) -> BTreeMap<usize, NoiseGroup> {
    if class_rates.is_empty() {
        return BTreeMap::new();
    }
    let median = crate::numerics::percentile(class_rates, 50.0).unwrap_or(0.0);
    class_rates
        .iter()
        .enumerate()
        .map(|(c, r)| (c, if *r < median { NoiseGroup::Low } else { NoiseGroup::High }))
        .collect()
}

/// Mean accuracies (percent) over seeded runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_fingerprint: String,
    pub per_run_accuracy: Vec<f64>,
    pub mean: f64,
    pub ci_half_width: f64,
    /// Fraction of pruned clips that were corrupted, per run with pruning.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_run_prune_precision: Vec<f64>,
}

impl RunSummary {
    pub fn from_accuracies(config_fingerprint: String, per_run_accuracy: Vec<f64>) -> Result<Self> {
        let (mean, ci_half_width) = mean_ci(&per_run_accuracy, 0.95)?;
        Ok(Self {
            config_fingerprint,
            per_run_accuracy,
            mean,
            ci_half_width,
            per_run_prune_precision: Vec::new(),
        })
    }

    /// `acc = MM.M ± H.H`
    pub fn display_line(&self) -> String {
        format!("acc = {:.1} ± {:.1}", self.mean, self.ci_half_width)
    }
}

/// Seed of run `run`: depends on the base seed and run index only, so
/// different methods see identical noisy datasets.
pub fn run_seed(base_seed: u64, run: usize) -> u64 {
    base_seed.wrapping_add(run as u64)
}

/// The noisy training set and clean test set of one run.
pub fn build_run_data(config: &ExperimentConfig, run: usize) -> Result<(TrackedDataset, Dataset)> {
    let seed = run_seed(config.base_seed, run);
    let mut train_set = generate_blobs(&config.data, seed)?;
    for (j, spec) in config.noise.iter().enumerate() {
        let spec = NoiseSpec {
            seed: seed.wrapping_mul(1_000).wrapping_add(j as u64),
            ..spec.clone()
        };
        train_set = inject_noise(&train_set, &spec)?;
    }
    let test_set = generate_test_set(&config.data, seed)?;
    Ok((train_set, test_set))
}

/// Outcome of one generate, corrupt, split, train, evaluate pipeline.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// Clean test accuracy in percent.
    pub accuracy: f64,
    pub prune_precision: Option<f64>,
}

pub fn run_once(config: &ExperimentConfig, run: usize) -> Result<RunOutcome> {
    let (train_set, test_set) = build_run_data(config, run)?;
    let train_config = config.resolved_train_config(run_seed(config.base_seed, run))?;
    let out = train(&train_set.data, &train_config)?;
    let accuracy = 100.0 * evaluate(&out.model, &test_set)?;
    Ok(RunOutcome {
        accuracy,
        prune_precision: train_set.precision_of(&out.removed_clips),
    })
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<RunSummary> {
    config.validate()?;
    let outcomes: Vec<Result<RunOutcome>> = (0..config.runs)
        .into_par_iter()
        .map(|run| {
            run_once(config, run).map_err(|e| Error::Experiment {
                run,
                source: Box::new(e),
            })
        })
        .collect();
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let mut summary = RunSummary::from_accuracies(
        config_fingerprint(config)?,
        outcomes.iter().map(|o| o.accuracy).collect(),
    )?;
    summary.per_run_prune_precision = outcomes.iter().filter_map(|o| o.prune_precision).collect();
    Ok(summary)
}

/// SHA-256 of the canonical JSON form of the configuration, hex encoded.
pub fn config_fingerprint(config: &ExperimentConfig) -> Result<String> {
    let canonical = serde_json::to_vec(config)?;
    Ok(hex::encode(Sha256::digest(&canonical)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(classes: usize, clips: usize, patches: usize, dims: usize, spread: f64) -> DataConfig {
        DataConfig {
            classes,
            clips_per_class: clips,
            patches_per_clip: patches,
            dims,
            spread,
            ..DataConfig::default()
        }
    }

    #[test]
    fn blob_counts_and_balance() {
        let ds = generate_blobs(&data(4, 50, 3, 8, 0.4), 1).unwrap();
        assert_eq!(ds.data.len(), 600);
        assert_eq!(ds.data.clip_count(), 200);
        for class in 0..4 {
            assert_eq!(ds.data.examples.iter().filter(|e| e.label == class).count(), 150);
        }
        assert!(ds.truth.iter().all(|t| !t.corrupted));
    }

    #[test]
    fn tiny_spread_collapses_patches() {
        let ds = generate_blobs(&data(3, 2, 4, 5, 1e-300), 3).unwrap();
        for clip in ds.data.examples.chunks(4) {
            assert!(clip.iter().all(|e| e.features == clip[0].features));
        }
    }

    #[test]
    fn blobs_are_deterministic() {
        let a = generate_blobs(&data(4, 10, 2, 6, 0.3), 9).unwrap();
        let b = generate_blobs(&data(4, 10, 2, 6, 0.3), 9).unwrap();
        assert_eq!(a, b);
        assert!(generate_blobs(&data(1, 10, 2, 6, 0.3), 9).is_err());
        assert!(generate_blobs(&data(3, 0, 2, 6, 0.3), 9).is_err());
        assert!(generate_blobs(&data(3, 2, 2, 6, 0.0), 9).is_err());
    }

    #[test]
    fn centers_lie_on_unit_sphere() {
        let c = ClassCenters::generate(5, 8, 2);
        for v in &c.0 {
            assert!((v.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_noise_counts() {
        let clean = generate_blobs(&data(4, 50, 3, 8, 0.4), 1).unwrap();
        let same = inject_symmetric_noise(&clean, &NoiseSpec::symmetric(0.0, 5)).unwrap();
        assert_eq!(same, clean);

        let noisy = inject_symmetric_noise(&clean, &NoiseSpec::symmetric(0.3, 5)).unwrap();
        assert_eq!(noisy.corrupted_clips().len(), 60);
        for (e, t) in noisy.data.examples.iter().zip(&noisy.truth) {
            assert_eq!(t.corrupted, Some(e.label) != t.clean_label);
        }

        let all = inject_symmetric_noise(&clean, &NoiseSpec::symmetric(1.0, 5)).unwrap();
        assert!(all.data.examples.iter().zip(&all.truth).all(|(e, t)| Some(e.label) != t.clean_label));
        noisy.data.validate().unwrap();
    }

    #[test]
    fn per_class_noise_counts() {
        let clean = generate_blobs(&data(4, 50, 1, 4, 0.4), 2).unwrap();
        let spec = NoiseSpec {
            class_rates: Some(vec![0.2, 0.2, 0.5, 0.5]),
            ..NoiseSpec::symmetric(0.0, 8)
        };
        let noisy = inject_symmetric_noise(&clean, &spec).unwrap();
        for (class, expected) in [(0, 10), (1, 10), (2, 25), (3, 25)] {
            let n = noisy.truth.iter().filter(|t| t.corrupted && t.clean_label == Some(class)).count();
            assert_eq!(n, expected);
        }
        let bad = NoiseSpec {
            class_rates: Some(vec![0.2, 0.2]),
            ..spec
        };
        assert!(inject_symmetric_noise(&clean, &bad).is_err());
    }

    #[test]
    fn oov_noise_replaces_features_only() {
        let clean = generate_blobs(&data(4, 50, 3, 8, 0.4), 1).unwrap();
        assert_eq!(inject_oov_noise(&clean, &NoiseSpec::oov(0.0, 1)).unwrap(), clean);

        let noisy = inject_oov_noise(&clean, &NoiseSpec::oov(0.5, 1)).unwrap();
        assert_eq!(noisy.corrupted_clips().len(), 100);
        let labels_before: Vec<usize> = clean.data.examples.iter().map(|e| e.label).collect();
        let labels_after: Vec<usize> = noisy.data.examples.iter().map(|e| e.label).collect();
        assert_eq!(labels_before, labels_after);

        let dims = 8;
        let mut lo = vec![f64::INFINITY; dims];
        let mut hi = vec![f64::NEG_INFINITY; dims];
        for e in &clean.data.examples {
            for d in 0..dims {
                lo[d] = lo[d].min(e.features[d]);
                hi[d] = hi[d].max(e.features[d]);
            }
        }
        let replaced: Vec<_> = noisy
            .data
            .examples
            .iter()
            .zip(&noisy.truth)
            .filter(|(_, t)| t.corrupted)
            .collect();
        assert!(replaced.iter().all(|(_, t)| t.clean_label.is_none()));
        let outside = replaced
            .iter()
            .filter(|(e, _)| e.features.iter().enumerate().any(|(d, v)| *v < lo[d] || *v > hi[d]))
            .count();
        // a uniform draw from the doubled box lands inside with probability 2^-8
        let frac = outside as f64 / replaced.len() as f64;
        assert!(frac >= 0.9, "{frac}");
    }

    #[test]
    fn groups_from_rates() {
        let g = noise_groups(&[0.2, 0.2, 0.5, 0.5]);
        assert_eq!(g[&0], NoiseGroup::Low);
        assert_eq!(g[&1], NoiseGroup::Low);
        assert_eq!(g[&2], NoiseGroup::High);
        assert_eq!(g[&3], NoiseGroup::High);
    }

    #[test]
    fn summary_examples() {
        let s = RunSummary::from_accuracies("x".into(), vec![71.0]).unwrap();
        assert_eq!(s.ci_half_width, 0.0);
        let s = RunSummary::from_accuracies("x".into(), vec![66.0, 67.0]).unwrap();
        assert!((s.mean - 66.5).abs() < 1e-12);
        assert!((s.ci_half_width - 6.353).abs() < 1e-3);
        assert_eq!(s.display_line(), "acc = 66.5 ± 6.4");
    }
}
