//! `pathprof`: effective-path profiling and adversarial-input detection.

mod arch;
mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::Overrides;
use crate::manifest::RunManifest;

#[derive(Parser)]
#[command(name = "pathprof", version, about = "Effective-path profiling and adversarial-input detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network and save it to <out>/model.
    Train,
    /// Extract effective paths of the first test images.
    Extract,
    /// Build per-class profiles from training images.
    Aggregate,
    /// Pairwise Jaccard similarity of the class profiles.
    Similarity,
    /// Generate adversarial or random unrecognizable inputs.
    Attack,
    /// Compute similarity features of normal and adversarial inputs.
    Featurize,
    /// Train the linear detector on a stratified split of the features.
    DetectTrain,
    /// Score held-out features and write the ROC curve.
    DetectEval,
    /// Drop path weights and compare against an equal-size control.
    Ablate,
    /// Detection quality as theta varies.
    SweepTheta,
    /// Detection quality as extraction depth varies.
    SweepDepth,
    /// Rerun the command recorded in a manifest; flags override its settings.
    Replay { manifest: PathBuf },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Extract => "extract",
            Command::Aggregate => "aggregate",
            Command::Similarity => "similarity",
            Command::Attack => "attack",
            Command::Featurize => "featurize",
            Command::DetectTrain => "detect-train",
            Command::DetectEval => "detect-eval",
            Command::Ablate => "ablate",
            Command::SweepTheta => "sweep-theta",
            Command::SweepDepth => "sweep-depth",
            Command::Replay { .. } => "replay",
        }
    }
}

fn execute(cli: &Cli) -> pathprof::Result<()> {
    if let Some(n) = cli.overrides.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| pathprof::Error::domain(format!("cannot start {n} worker threads: {e}")))?;
    }
    let (command, cfg) = match &cli.command {
        Command::Replay { manifest } => {
            if cli.overrides.config.is_some() {
                return Err(pathprof::Error::domain("replay takes its configuration from the manifest"));
            }
            let m = RunManifest::load(manifest)?;
            let mut cfg = m.config;
            cli.overrides.apply(&mut cfg, &m.command)?;
            cfg.validate()?;
            (m.command, cfg)
        }
        c => (c.name().to_string(), config::resolve(&cli.overrides, c.name())?),
    };
    log::debug!("{command} with {cfg:?}");
    commands::run(&command, &cfg)?;
    RunManifest::new(&command, &cfg).save()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
