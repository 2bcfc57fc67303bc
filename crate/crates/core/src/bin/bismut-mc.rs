use std::path::PathBuf;
use std::process::ExitCode;

use bismut_mc::runner::{self, Overrides};
use clap::{Args, Parser, Subcommand};

/// Monte Carlo estimates of Feynman-Kac semigroups and their derivatives.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the configured quantities at horizon T.
    Run(Common),
    /// Estimate the configured quantities at every horizon in t_grid.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// JSON or TOML run configuration.
    config: PathBuf,
    /// Override the RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of paths.
    #[arg(long)]
    paths: Option<usize>,
    /// Worker threads; falls back to the config, then BISMUT_WORKERS, then all cores.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    workers: Option<u64>,
    /// Output file (standard output when absent).
    #[arg(long)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, sweep) = match cli.command {
        Command::Run(c) => (c, false),
        Command::Sweep(c) => (c, true),
    };
    let result = runner::workers_from_env().and_then(|default_workers| {
        let overrides = Overrides {
            seed: common.seed,
            paths: common.paths,
            workers: common.workers.map(|w| w as usize),
            output: common.output,
            default_workers,
        };
        if sweep {
            runner::sweep(&common.config, &overrides)
        } else {
            runner::run(&common.config, &overrides)
        }
    });
    match result {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bismut-mc: {e}");
            ExitCode::from(runner::exit_code(&e) as u8)
        }
    }
}
