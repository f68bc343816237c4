//! Command-line entry point: data generation, training, evaluation,
//! throughput measurement and ablations.

mod commands;
mod manifest;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "aerodet", version, about = "Spatio-temporal tiny-object detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Where the run configuration comes from.
#[derive(Args, Debug, Clone)]
struct ConfigArgs {
    /// JSON run configuration; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from the small CPU preset instead of the defaults.
    #[arg(long, conflicts_with = "config")]
    toy: bool,
    /// Override a key, e.g. `--set train.tau=3` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render the synthetic dataset to disk.
    GenerateData {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, env = "AERODET_RUN_DIR")]
        out: PathBuf,
    },
    /// Train a detector; writes the checkpoint, loss CSV and resolved config.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, env = "AERODET_RUN_DIR")]
        out: PathBuf,
    },
    /// Run inference over a split and score it.
    Eval {
        /// Checkpoint to evaluate; its sibling config.json is used when present.
        #[arg(long, required_unless_present = "detections")]
        checkpoint: Option<PathBuf>,
        /// Score an existing detections file instead of running a model.
        #[arg(long)]
        detections: Option<PathBuf>,
        /// Dataset directory or index file; defaults to the config's data.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        split: Option<String>,
        #[arg(long)]
        stride: Option<usize>,
        /// Write this many annotated overlay images.
        #[arg(long, default_value_t = 0)]
        overlays: usize,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, env = "AERODET_RUN_DIR")]
        out: PathBuf,
    },
    /// Measure end-to-end frames per second.
    Bench {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        resolution: usize,
        #[arg(long, default_value_t = 200)]
        frames: usize,
        #[arg(long, default_value_t = 3)]
        trials: usize,
        /// Also write bench.json here.
        #[arg(long, env = "AERODET_RUN_DIR")]
        out: Option<PathBuf>,
    },
    /// Train and evaluate each variant along one axis; writes ablation.csv.
    Ablate {
        #[command(flatten)]
        config: ConfigArgs,
        /// One of tau, resolution, tca, attention.
        #[arg(long)]
        axis: String,
        #[arg(long, env = "AERODET_RUN_DIR")]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::GenerateData { config, out } => commands::generate_data(&config, &out),
        Command::Train { config, out } => commands::train(&config, &out),
        Command::Eval { checkpoint, detections, data, split, stride, overlays, config, out } => {
            commands::eval(commands::EvalArgs { checkpoint, detections, data, split, stride, overlays }, &config, &out)
        }
        Command::Bench { checkpoint, resolution, frames, trials, out } => {
            commands::bench(&checkpoint, resolution, frames, trials, out.as_deref())
        }
        Command::Ablate { config, axis, out } => commands::ablate(&config, &axis, &out),
    }
}
