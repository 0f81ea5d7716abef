use noisekit::config::DataConfig;
use noisekit::harness::{generate_blobs, generate_test_set, inject_noise};
use noisekit::trainer::{evaluate, train, train_with_observer};
use noisekit::{
    Architecture, LossSpec, MixupPolicy, NoiseSpec, SelectionRule, SmoothingPolicy, StagePlan,
    TrainConfig, TrackedDataset,
};

fn blobs(spread: f64, seed: u64) -> TrackedDataset {
    let data = DataConfig {
        spread,
        ..DataConfig::default()
    };
    generate_blobs(&data, seed).unwrap()
}

fn config(max_epochs: usize) -> TrainConfig {
    TrainConfig {
        max_epochs,
        initial_lr: 0.05,
        seed: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn separable_blobs_are_learned() {
    let data = DataConfig {
        spread: 0.05,
        ..DataConfig::default()
    };
    let train_set = generate_blobs(&data, 1).unwrap();
    let test_set = generate_test_set(&data, 1).unwrap();
    for architecture in [Architecture::Linear, Architecture::OneHidden { hidden_units: 32 }] {
        let cfg = TrainConfig {
            architecture,
            ..config(40)
        };
        let out = train(&train_set.data, &cfg).unwrap();
        let acc = evaluate(&out.model, &test_set).unwrap();
        assert!(acc >= 0.95, "{architecture:?}: {acc}");
    }
}

#[test]
fn tiny_q_matches_cross_entropy_training() {
    let ds = blobs(0.3, 2);
    let base = TrainConfig {
        max_epochs: 5,
        initial_lr: 0.01,
        ..TrainConfig::default()
    };
    let a = train(&ds.data, &base).unwrap();
    let b = train(
        &ds.data,
        &TrainConfig {
            loss: LossSpec::Lq { q: 1e-6 },
            ..base.clone()
        },
    )
    .unwrap();
    for (la, lb) in a.model.layers.iter().zip(&b.model.layers) {
        for (x, y) in la.weights.iter().chain(&la.bias).zip(lb.weights.iter().chain(&lb.bias)) {
            assert!((x - y).abs() < 1e-3, "{x} vs {y}");
        }
    }
}

#[test]
fn kept_fraction_tracks_the_stage_plan() {
    let ds = blobs(0.35, 4);
    let plain = train(&ds.data, &config(15)).unwrap();
    assert!(plain.history.iter().all(|r| r.kept_fraction == 1.0));

    let cfg = TrainConfig {
        stage: StagePlan::discard(5, SelectionRule::Percentile { l: 50.0 }),
        early_stop_patience: 100,
        ..config(15)
    };
    let out = train(&ds.data, &cfg).unwrap();
    for r in &out.history {
        if r.epoch < 5 {
            assert_eq!(r.kept_fraction, 1.0, "epoch {}", r.epoch);
        } else {
            assert!(r.kept_fraction > 0.0 && r.kept_fraction < 0.75, "epoch {}: {}", r.epoch, r.kept_fraction);
        }
    }
}

#[test]
fn pruning_drops_clips_after_stage_one() {
    let noisy = inject_noise(&blobs(0.35, 5), &NoiseSpec::symmetric(0.4, 9)).unwrap();
    let cfg = TrainConfig {
        loss: LossSpec::Lq { q: 0.7 },
        stage: StagePlan::prune(4, 30),
        early_stop_patience: 100,
        ..config(8)
    };
    let out = train(&noisy.data, &cfg).unwrap();
    let clips: Vec<usize> = out.history.iter().map(|r| r.train_clips).collect();
    let start = clips[0];
    assert_eq!(clips, [start, start, start, start, start - 30, start - 30, start - 30, start - 30]);
    assert_eq!(out.removed_clips.len(), 30);
    let report = out.prune_report.as_ref().unwrap();
    assert_eq!(report.len(), start);
    assert_eq!(report.iter().filter(|r| r.removed).count(), 30);
    assert!(noisy.precision_of(&out.removed_clips).unwrap() > 0.4);
}

#[test]
fn pruning_at_epoch_zero_happens_before_training() {
    let ds = blobs(0.35, 6);
    let cfg = TrainConfig {
        stage: StagePlan::prune(0, 10),
        ..config(3)
    };
    let out = train(&ds.data, &cfg).unwrap();
    assert!(out.history.iter().all(|r| r.train_clips == 158));
    assert_eq!(out.removed_clips.len(), 10);
}

#[test]
fn no_prune_report_without_pruning() {
    let ds = blobs(0.35, 7);
    let out = train(&ds.data, &config(3)).unwrap();
    assert!(out.prune_report.is_none());
    assert!(out.removed_clips.is_empty());
}

#[test]
fn identical_configs_give_identical_histories() {
    let ds = inject_noise(&blobs(0.35, 8), &NoiseSpec::symmetric(0.3, 1)).unwrap();
    let cfg = TrainConfig {
        mixup: Some(MixupPolicy::new(0.3, 2)),
        smoothing: Some(SmoothingPolicy::uniform(0.1)),
        stage: StagePlan::discard(3, SelectionRule::MaxFraction { m: 0.93 }),
        ..config(12)
    };
    let lines = || {
        let mut out = Vec::new();
        train_with_observer(&ds.data, &cfg, |r| {
            out.push(serde_json::to_string(r)?);
            Ok(())
        })
        .unwrap();
        out
    };
    assert_eq!(lines(), lines());

    let other = train(&ds.data, &TrainConfig { seed: 4, ..cfg.clone() }).unwrap();
    let first = train(&ds.data, &cfg).unwrap();
    assert_ne!(first.model, other.model);
}

#[test]
fn best_epoch_model_is_returned() {
    let ds = inject_noise(&blobs(0.35, 9), &NoiseSpec::symmetric(0.4, 2)).unwrap();
    let out = train(&ds.data, &config(30)).unwrap();
    let best = out.best_epoch.unwrap();
    let best_acc = out.history[best].val_accuracy;
    assert!(out.history.iter().all(|r| r.val_accuracy <= best_acc));
    assert!(out.history[..best].iter().all(|r| r.val_accuracy < best_acc));
    let last = out.history.last().unwrap();
    assert!(last.epoch == 29 || last.epoch >= best + 15);
}

#[test]
fn learning_rate_halves_on_plateau() {
    let ds = blobs(0.35, 10);
    let cfg = TrainConfig {
        early_stop_patience: 1000,
        ..config(60)
    };
    let out = train(&ds.data, &cfg).unwrap();
    let lrs: Vec<f64> = out.history.iter().map(|r| r.lr).collect();
    assert_eq!(lrs[0], 0.05);
    assert!(lrs.windows(2).all(|w| w[1] == w[0] || w[1] == w[0] / 2.0));
    assert!(lrs.last().unwrap() < &0.05);
}
