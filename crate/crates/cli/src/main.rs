use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use tonguenet::annotation::SpacingKind;

mod commands;
mod overlay;

/// Ultrasound tongue-contour landmark regression.
#[derive(Parser)]
#[command(name = "tonguenet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "lowercase")]
enum Command {
    /// Generate a synthetic dataset directory.
    Synth(SynthArgs),
    /// Convert binary contour masks to a landmark CSV.
    Annotate(AnnotateArgs),
    /// Train a network on a dataset directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Print the landmarks predicted for one frame.
    Infer(InferArgs),
    /// Measure single-frame inference throughput.
    Bench(BenchArgs),
    /// Burn predicted landmarks and the reverted contour into a frame.
    Overlay(OverlayArgs),
    /// Train and evaluate one network per landmark count.
    Sweep(SweepArgs),
}

#[derive(Args, Serialize)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    count: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 128)]
    width: usize,
    #[arg(long, default_value_t = 128)]
    height: usize,
    #[arg(long, default_value_t = 10)]
    n_points: usize,
    #[arg(long, default_value_t = SpacingKind::Random)]
    spacing: SpacingKind,
    #[arg(long, default_value_t = 3.0)]
    band_sigma: f64,
    #[arg(long, default_value_t = 0.5)]
    speckle_scale: f64,
    #[arg(long, default_value_t = 0.05)]
    noise_sigma: f64,
}

#[derive(Args, Serialize)]
struct AnnotateArgs {
    /// Directory of `.pgm` masks; pixels above half intensity are contour.
    #[arg(long)]
    masks: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    n_points: usize,
    #[arg(long, default_value_t = SpacingKind::Equal)]
    spacing: SpacingKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// How a dataset directory is partitioned into train / val / test.
#[derive(Args, Serialize, Clone)]
struct SplitArgs {
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    #[arg(long, default_value_t = 0.05)]
    val_ratio: f64,
    #[arg(long, default_value_t = 0.05)]
    test_ratio: f64,
}

#[derive(Args, Serialize)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint of the model with the lowest validation MSD.
    #[arg(long)]
    out: PathBuf,
    /// Also save the final model together with its optimizer state.
    #[arg(long)]
    save_last: Option<PathBuf>,
    #[command(flatten)]
    split: SplitArgs,
    #[arg(long, default_value_t = 5e-4)]
    lr: f64,
    #[arg(long, default_value_t = 30)]
    batch_size: usize,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 1000)]
    max_iterations: usize,
    #[arg(long, default_value_t = 0.9)]
    beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
    /// Seed for shuffling, augmentation and dropout.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seed for weight initialization.
    #[arg(long, default_value_t = 0)]
    init_seed: u64,
    #[arg(long)]
    no_augment: bool,
}

#[derive(Clone, Copy, Debug, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
enum Part {
    Train,
    Val,
    Test,
    All,
}

#[derive(Args, Serialize)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = Part::Test)]
    part: Part,
    #[command(flatten)]
    split: SplitArgs,
    /// Write per-sample values as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct InferArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    image: PathBuf,
}

#[derive(Args, Serialize)]
struct BenchArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Directory of `.pgm` frames.
    #[arg(long)]
    frames: PathBuf,
    #[arg(long, default_value_t = 50)]
    warmup: usize,
    /// Timed frames; the directory is cycled through as often as needed.
    /// Defaults to one pass over the frames after warm-up.
    #[arg(long)]
    count: Option<usize>,
}

#[derive(Args, Serialize)]
struct OverlayArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct SweepArgs {
    /// Comma-separated landmark counts in [5, 100].
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    #[arg(long, default_value_t = 2000)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = SpacingKind::Random)]
    spacing: SpacingKind,
    #[arg(long, default_value_t = 128)]
    width: usize,
    #[arg(long, default_value_t = 128)]
    height: usize,
    #[arg(long, default_value_t = 5e-4)]
    lr: f64,
    #[arg(long, default_value_t = 30)]
    batch_size: usize,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 1000)]
    max_iterations: usize,
    #[arg(long, default_value_t = 100)]
    bench_frames: usize,
    #[arg(long)]
    no_augment: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    eprintln!(
        "{}",
        serde_json::to_string(&cli.command).expect("arguments serialize")
    );
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
