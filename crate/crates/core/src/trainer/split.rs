use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;

use crate::dataset::{ClipId, Dataset};
use crate::error::{Error, Result};
use crate::numerics::RngStream;

use super::STREAM_SPLIT;

/// Number of validation clips for a class of `clips` clips.
pub fn validation_clip_count(clips: usize, val_fraction: f64) -> usize {
    // guard against 0.15 * 100 = 15.000000000000002
    ((val_fraction * clips as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Per-class clip-level split. Each class with at least one clip sends
/// `ceil(val_fraction * clips)` of them, chosen by seeded shuffle, to
/// validation. Both splits keep the original example order.
pub fn stratified_split(dataset: &Dataset, val_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "validation fraction {val_fraction} outside (0, 1)"
        )));
    }
    let mut by_class: BTreeMap<usize, Vec<ClipId>> = BTreeMap::new();
    let labels = dataset.clip_labels();
    for clip in dataset.clip_ids() {
        by_class.entry(labels[&clip]).or_default().push(clip);
    }

    let mut rng = RngStream::new(seed, STREAM_SPLIT);
    let mut val_clips = BTreeSet::new();
    for (class, mut clips) in by_class {
        if clips.len() < 2 {
            return Err(Error::invalid(format!(
                "class {class} has {} clip(s); a split needs at least 2",
                clips.len()
            )));
        }
        clips.shuffle(&mut rng);
        let n_val = validation_clip_count(clips.len(), val_fraction).min(clips.len() - 1);
        val_clips.extend(clips.into_iter().take(n_val));
    }
    let train = dataset.filter_clips(|c| !val_clips.contains(&c));
    let val = dataset.filter_clips(|c| val_clips.contains(&c));
    Ok((train, val))
}
