//! `noisekit` command line.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{DataConfig, ExperimentConfig};
use crate::error::{Error, Result};
use crate::harness::{
    build_run_data, generate_blobs, inject_noise, run_experiment, NoiseKind, NoiseSpec, TrackedDataset,
};
use crate::records::{
    read_jsonl, read_tracked_dataset, write_dataset, write_json, write_jsonl, write_model,
    write_tracked_dataset, JsonlStream,
};
use crate::selection::PruneRecord;
use crate::trainer::{evaluate, train_with_observer};

pub const OUT_DIR_ENV: &str = "NOISEKIT_OUT_DIR";

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const MODEL_FILE: &str = "model.txt";
pub const PRUNE_REPORT_FILE: &str = "prune_report.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Parser)]
#[command(name = "noisekit", version, about = "Noise-robust training on synthetic noisy-label benchmarks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate or corrupt datasets.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Train one model and write metrics, model and prune report.
    Train(TrainArgs),
    /// Run the multi-seed protocol and report mean accuracy with a 95% CI.
    Experiment(ExperimentArgs),
    /// Summarise a prune report, optionally against harness ground truth.
    PruneReport(PruneReportArgs),
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    Generate(GenerateArgs),
    Corrupt(CorruptArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 50)]
    pub clips_per_class: usize,
    #[arg(long, default_value_t = 3)]
    pub patches_per_clip: usize,
    #[arg(long, default_value_t = 8)]
    pub dims: usize,
    #[arg(long, default_value_t = DataConfig::default().spread)]
    pub spread: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Symmetric,
    Oov,
}

#[derive(Debug, Args)]
pub struct CorruptArgs {
    #[arg(long, value_enum, default_value_t = KindArg::Symmetric)]
    pub kind: KindArg,
    #[arg(long, default_value_t = 0.0)]
    pub rate: f64,
    /// Comma-separated per-class rates; overrides --rate.
    #[arg(long, value_delimiter = ',')]
    pub class_rates: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Class count; defaults to the largest label plus one.
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Harness-private output including clean labels and corruption flags.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional copy without the private fields.
    #[arg(long)]
    pub public_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Training data; generated from the configuration when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, env = OUT_DIR_ENV, default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    pub print_config: bool,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub base_seed: Option<u64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Summary path; defaults to `summary.json` in the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, env = OUT_DIR_ENV, default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub print_config: bool,
}

#[derive(Debug, Args)]
pub struct PruneReportArgs {
    #[arg(long)]
    pub report: PathBuf,
    /// Harness-private dataset used to score removed clips.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Dataset(DatasetCommand::Generate(args)) => cmd_generate(&args),
        Command::Dataset(DatasetCommand::Corrupt(args)) => cmd_corrupt(&args),
        Command::Train(args) => cmd_train(&args),
        Command::Experiment(args) => cmd_experiment(&args),
        Command::PruneReport(args) => cmd_prune_report(&args),
    }
}

fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let data = DataConfig {
        classes: args.classes,
        clips_per_class: args.clips_per_class,
        patches_per_clip: args.patches_per_clip,
        dims: args.dims,
        spread: args.spread,
        ..DataConfig::default()
    };
    let ds = generate_blobs(&data, args.seed)?;
    write_dataset(&args.out, &ds.data)?;
    println!(
        "wrote {} examples in {} clips to {}",
        ds.data.len(),
        ds.data.clip_count(),
        args.out.display()
    );
    Ok(())
}

fn cmd_corrupt(args: &CorruptArgs) -> Result<()> {
    let input = read_tracked_dataset(&args.input, args.classes)?;
    let spec = NoiseSpec {
        kind: match args.kind {
            KindArg::Symmetric => NoiseKind::Symmetric,
            KindArg::Oov => NoiseKind::Oov,
        },
        rate: args.rate,
        class_rates: args.class_rates.clone(),
        seed: args.seed,
    };
    let noisy = inject_noise(&input, &spec)?;
    write_tracked_dataset(&args.out, &noisy)?;
    if let Some(path) = &args.public_out {
        write_dataset(path, &noisy.data)?;
    }
    let newly = noisy.corrupted_clips().len() - input.corrupted_clips().len().min(noisy.corrupted_clips().len());
    println!(
        "{} of {} clips corrupted ({} new) -> {}",
        noisy.corrupted_clips().len(),
        noisy.data.clip_count(),
        newly,
        args.out.display()
    );
    Ok(())
}

fn load_config(path: &Path, max_epochs: Option<usize>) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(n) = max_epochs {
        config.train.max_epochs = n;
    }
    Ok(config)
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let mut config = load_config(&args.config, args.max_epochs)?;
    if let Some(seed) = args.seed {
        config.train.seed = seed;
    }
    config.output.dir = Some(args.out_dir.clone());
    config.validate()?;
    if args.print_config {
        println!("{}", config.to_json_pretty()?);
        return Ok(());
    }
    let train_config = config.resolved_train_config(config.train.seed)?;

    let (train_set, test_set): (TrackedDataset, Option<_>) = match &args.data {
        Some(path) => (read_tracked_dataset(path, Some(config.data.classes))?, None),
        None => {
            let (train, test) = build_run_data(&config, 0)?;
            (train, Some(test))
        }
    };

    let metrics_path = args.out_dir.join(METRICS_FILE);
    let mut metrics = JsonlStream::create(&metrics_path)?;
    let out = train_with_observer(&train_set.data, &train_config, |record| metrics.push(record))?;

    write_model(&args.out_dir.join(MODEL_FILE), &out.model)?;
    if let Some(report) = &out.prune_report {
        write_jsonl(&args.out_dir.join(PRUNE_REPORT_FILE), report)?;
        if let Some(p) = train_set.precision_of(&out.removed_clips) {
            println!("pruned {} clips, corrupted precision {:.3}", out.removed_clips.len(), p);
        }
    }
    let best = out
        .best_epoch
        .and_then(|e| out.history.get(e))
        .map(|r| r.val_accuracy);
    println!(
        "trained {} epochs, best validation accuracy {}",
        out.history.len(),
        best.map_or("n/a".to_string(), |a| format!("{:.1}", 100.0 * a))
    );
    if let Some(test) = test_set {
        println!("clean test accuracy {:.1}", 100.0 * evaluate(&out.model, &test)?);
    }
    Ok(())
}

fn cmd_experiment(args: &ExperimentArgs) -> Result<()> {
    let mut config = load_config(&args.config, args.max_epochs)?;
    if let Some(runs) = args.runs {
        config.runs = runs;
    }
    if let Some(seed) = args.base_seed {
        config.base_seed = seed;
    }
    config.validate()?;
    if args.print_config {
        println!("{}", config.to_json_pretty()?);
        return Ok(());
    }
    let summary = run_experiment(&config)?;
    let path = args
        .out
        .clone()
        .unwrap_or_else(|| args.out_dir.join(SUMMARY_FILE));
    write_json(&path, &summary)?;
    println!("{}", summary.display_line());
    Ok(())
}

fn cmd_prune_report(args: &PruneReportArgs) -> Result<()> {
    let records: Vec<PruneRecord> = read_jsonl(&args.report)?;
    let removed: Vec<_> = records.iter().filter(|r| r.removed).map(|r| r.clip_id).collect();
    println!("{} of {} clips removed", removed.len(), records.len());
    if let Some(path) = &args.truth {
        let truth = read_tracked_dataset(path, None)?;
        match truth.precision_of(&removed) {
            Some(p) => println!("corrupted precision {p:.3}"),
            None => println!("corrupted precision n/a"),
        }
    }
    Ok(())
}

/// Error path used by `main`: every failure exits nonzero.
pub fn report_error(err: &Error) -> String {
    let mut msg = format!("error: {err}");
    let mut source = std::error::Error::source(err);
    while let Some(s) = source {
        msg.push_str(&format!("\n  caused by: {s}"));
        source = s.source();
    }
    msg
}
