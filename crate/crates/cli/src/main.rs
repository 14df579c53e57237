//! `magin`: train, evaluate, sweep and export plot data for the air-ground
//! MEC simulator.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use magin::Variant;

use commands::{Axis, SweepArgs, TrainArgs};

#[derive(Parser)]
#[command(name = "magin", version, about = "Hierarchical air-ground MEC simulator and MAPPO trainer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat TOML file with scenario and training keys; defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides MAGIN_SEED and the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy and write metrics, checkpoints and a manifest.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_variant)]
        variant: Option<Variant>,
        /// Run directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
        /// Checkpoint cadence in episodes; 0 keeps only the final one.
        #[arg(long, default_value_t = 50)]
        checkpoint_every: usize,
    },
    /// Evaluate a checkpoint with deterministic actions.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint file; without it a freshly initialized policy is used.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        /// Summary CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate (or train then evaluate) across one scenario axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Grid values in the axis unit (MB, GHz, count, MHz or ms).
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, conflicts_with = "train_episodes")]
        checkpoint: Option<PathBuf>,
        /// Train a fresh policy per grid point for this many episodes.
        #[arg(long)]
        train_episodes: Option<usize>,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long)]
        out: PathBuf,
        /// Run grid points concurrently; results are identical.
        #[arg(long)]
        parallel: bool,
    },
    /// Convert run metrics into long-format series for plotting.
    Plotdata {
        /// Run directories or metrics.csv files.
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            common,
            variant,
            out,
            episodes,
            checkpoint_every,
        } => {
            let (scenario, mut train) = commands::resolve_config(common.config.as_deref(), common.seed)?;
            if let Some(v) = variant {
                train.variant = v;
            }
            if let Some(n) = episodes {
                train.episodes = n;
            }
            if train.episodes == 0 {
                bail!("--episodes must be at least 1");
            }
            let ck = commands::train(TrainArgs {
                scenario,
                train,
                out,
                checkpoint_every,
            })?;
            println!("{}", ck.display());
        }
        Command::Eval {
            common,
            checkpoint,
            episodes,
            out,
        } => {
            let (scenario, train) = commands::resolve_config(common.config.as_deref(), common.seed)?;
            let policy = commands::policy_for(checkpoint.as_deref(), &scenario, &train)?;
            let row = commands::eval_row(&policy, &scenario, episodes, train.seed)?;
            commands::write_table(out.as_deref(), &commands::eval_header(), &[row])?;
        }
        Command::Sweep {
            common,
            axis,
            values,
            checkpoint,
            train_episodes,
            episodes,
            out,
            parallel,
        } => {
            let (scenario, train) = commands::resolve_config(common.config.as_deref(), common.seed)?;
            commands::sweep(SweepArgs {
                scenario,
                train,
                axis,
                values,
                checkpoint,
                train_episodes,
                eval_episodes: episodes,
                out,
                parallel,
            })?;
        }
        Command::Plotdata { inputs, out } => {
            commands::plotdata(&inputs, out.as_deref())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
