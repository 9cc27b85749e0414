mod commands;
mod config;
mod summary;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::commands::EvalArgs;
use crate::config::{Overrides, RunConfig};

/// Long-tailed open-world semi-supervised learning on embedding vectors.
#[derive(Debug, Parser)]
#[command(name = "rowssl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// JSON run config.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for every stage; overrides seeds set in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: the config's `out`, else ./run).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Override one config key, e.g. `--set train.epochs=20`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a Gaussian blob pool.
    Synth(Common),
    /// Split a pool into labeled, unlabeled, and test sets.
    Split {
        #[command(flatten)]
        common: Common,
        /// Pool file (default: <out>/pool.emb).
        #[arg(long, value_name = "PATH")]
        pool: Option<PathBuf>,
    },
    /// Train on the labeled and unlabeled sets and write a checkpoint.
    Train(Common),
    /// Evaluate a checkpoint under the selected protocols.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Comma-separated list from train, test-recluster, test-rematch, test-inductive.
        #[arg(long, value_delimiter = ',')]
        protocols: Option<Vec<String>>,
        /// Checkpoint file (default: <out>/checkpoint.ckpt).
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        /// Directory holding the split files (default: <out>).
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
        /// Also score k-means on the raw unlabeled vectors.
        #[arg(long)]
        baseline: bool,
    },
    /// Summarize one or more run directories.
    Report {
        #[arg(required = true, value_name = "RUN_DIR")]
        runs: Vec<PathBuf>,
        /// Where to write the summary (default: the run directory when there is exactly one).
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
}

fn load(common: &Common, protocols: Option<Vec<String>>) -> Result<RunConfig> {
    let ov = Overrides { seed: common.seed, out: common.out.clone(), protocols, set: common.set.clone() };
    RunConfig::load(common.config.as_deref(), &ov)
}

fn init_threads() -> Result<()> {
    if let Ok(raw) = std::env::var("ROWSSL_THREADS") {
        let n: usize = raw.trim().parse().with_context(|| format!("ROWSSL_THREADS={raw:?} is not a count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    match cli.command {
        Command::Synth(common) => commands::synth(&load(&common, None)?),
        Command::Split { common, pool } => commands::split(&load(&common, None)?, pool.as_deref()),
        Command::Train(common) => commands::train(&load(&common, None)?),
        Command::Eval { common, protocols, checkpoint, data, baseline } => {
            let cfg = load(&common, protocols)?;
            commands::eval(&cfg, &EvalArgs { checkpoint, data, baseline }).map(|_| ())
        }
        Command::Report { runs, out } => {
            let out = match (out, runs.as_slice()) {
                (Some(o), _) => o,
                (None, [one]) => one.clone(),
                (None, _) => anyhow::bail!("--out is required when summarizing several runs"),
            };
            summary::report(&runs, &out)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
