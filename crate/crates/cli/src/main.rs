#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod figures;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use commands::{CliError, Context};
use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "evfb", version, about = "Beamformer feedback scheduling: models, policies and simulations")]
struct Cli {
    /// TOML experiment config; missing keys take the defaults below.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output prefix.
    #[arg(long, global = true)]
    out: Option<String>,
    /// Suppress progress messages.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the transition model and write <prefix>model.json.
    Model,
    /// Solve for the optimal policy at rewards.alpha; writes <prefix>solve.json.
    Solve,
    /// Solve and simulate at rewards.alpha; writes <prefix>eval.json.
    Evaluate,
    /// Controlled and periodic curves over rewards.alphas; writes <prefix>sweep.csv.
    Sweep,
    /// Train or draw a codebook; writes <prefix>codebook.json.
    Codebook,
    /// Regenerate one of the canned figures as <prefix>figN.csv.
    ReproduceFig {
        #[arg(value_parser = clap::value_parser!(u8).range(3..=7))]
        figure: u8,
    },
}

fn defaults_help() -> String {
    let cfg = ExperimentConfig { codebook: Some(Default::default()), ..Default::default() };
    format!(
        "Defaults (the [codebook] section is only used when present):\n\n{}\nSNR defaults to {} dB. \
         Exit codes: 0 ok, 1 usage, 2 config or IO, 3 numerical.",
        cfg.to_toml(),
        config::DEFAULT_SNR_DB
    )
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::parse("")?,
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = cli.out {
        config.output = out;
    }
    let ctx = Context { config, quiet: cli.quiet };
    let outputs = match cli.command {
        Command::Model => commands::model(&ctx)?,
        Command::Solve => commands::solve(&ctx)?,
        Command::Evaluate => commands::evaluate(&ctx)?,
        Command::Sweep => commands::sweep(&ctx)?,
        Command::Codebook => commands::codebook(&ctx)?,
        Command::ReproduceFig { figure } => figures::reproduce(&ctx, figure)?,
    };
    outputs.commit()
}

fn main() -> ExitCode {
    let command = Cli::command().after_long_help(defaults_help());
    let cli = match command.try_get_matches().and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let quiet = cli.quiet;
    match run(cli) {
        Ok(paths) => {
            if !quiet {
                for p in paths {
                    eprintln!("evfb: wrote {}", p.display());
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("evfb: error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
