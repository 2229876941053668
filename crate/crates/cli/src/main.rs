//! `lane-intent`: seeded, config-driven pipeline for lane-change intention
//! prediction. Each subcommand consumes the previous stage's artifacts from
//! the workdir and writes its own, together with a manifest.

mod config;
mod error;
mod manifest;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use error::CliError;
use lane_intent::ensemble::BagMode;
use manifest::WorkdirLock;
use stages::Paths;

#[derive(Parser)]
#[command(name = "lane-intent", version, about = "lane-change intention prediction pipeline")]
struct Cli {
    /// Flat key=value config file; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; fans out deterministically to all stages.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory holding all artifacts of a run.
    #[arg(long, global = true, default_value = "run")]
    workdir: PathBuf,
    /// Number of ensemble base learners.
    #[arg(long, global = true)]
    beta: Option<usize>,
    /// Autoencoder embedding size.
    #[arg(long, global = true)]
    embedding: Option<usize>,
    /// Concatenate the one-hot static features to the encoding.
    #[arg(long, global = true)]
    static_features: Option<bool>,
    /// Bag sampling: independent | coverage.
    #[arg(long, global = true)]
    bag_mode: Option<String>,
    /// Smooth positions before velocity derivation during ingest.
    #[arg(long, global = true)]
    smoothing: Option<bool>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic highway scenario with ground-truth maneuvers.
    Synth,
    /// Parse a recorded trajectory file into the internal track format.
    Ingest {
        /// Delimited trajectory recording with a header row.
        #[arg(long)]
        input: PathBuf,
        /// Lane geometry config (key=value).
        #[arg(long)]
        geometry: PathBuf,
    },
    /// Extract labeled observations and split them into train/test.
    Extract {
        #[arg(long)]
        tracks: Option<PathBuf>,
        #[arg(long)]
        geometry: Option<PathBuf>,
        /// Dataset name recorded in the observation files.
        #[arg(long)]
        dataset: Option<String>,
    },
    /// Fit the scaler and train the sequence autoencoder.
    TrainAe,
    /// Train a single base learner (one balanced bag).
    Train,
    /// Train the full balancing ensemble.
    TrainEnsemble,
    /// Evaluate a model on a balanced test set (both metric suites).
    Eval {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
    },
    /// Evaluate a model on observations from a different data set.
    CrossEval {
        /// Observation file from the other data set.
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Emit TTLC confidence curve tables for the lane-change classes.
    Curves {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(beta) = cli.beta {
        config.beta = beta;
    }
    if let Some(embedding) = cli.embedding {
        config.embedding = embedding;
    }
    if let Some(static_features) = cli.static_features {
        config.static_features = static_features;
    }
    if let Some(mode) = &cli.bag_mode {
        config.bag_mode = BagMode::parse(mode)
            .ok_or_else(|| CliError::config(format!("invalid bag mode `{mode}` (independent|coverage)")))?;
    }
    if let Some(smoothing) = cli.smoothing {
        config.smoothing = smoothing;
    }

    let paths = Paths::new(&cli.workdir);
    let _lock = WorkdirLock::acquire(&cli.workdir)?;

    match &cli.command {
        Command::Synth => stages::synth(&config, &paths),
        Command::Ingest { input, geometry } => stages::ingest(&config, &paths, input, geometry),
        Command::Extract { tracks, geometry, dataset } => stages::extract(
            &config,
            &paths,
            tracks.as_deref(),
            geometry.as_deref(),
            dataset.as_deref(),
        ),
        Command::TrainAe => stages::train_ae(&config, &paths),
        Command::Train => stages::train(&config, &paths, 1, "train"),
        Command::TrainEnsemble => stages::train(&config, &paths, config.beta, "train-ensemble"),
        Command::Eval { model, test } => stages::eval(&config, &paths, model.as_deref(), test.as_deref()),
        Command::CrossEval { test, model } => stages::cross_eval(&config, &paths, test, model.as_deref()),
        Command::Curves { model, test } => stages::curves(&config, &paths, model.as_deref(), test.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("lane-intent: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
