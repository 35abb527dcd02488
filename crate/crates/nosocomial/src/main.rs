use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nosocomial::commands::{self, CommandError};
use nosocomial::config::{LoadedConfig, LOG_ENV};

/// Bayesian transmission inference for hospital wards.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit every configured model to every configured ward.
    Fit {
        #[arg(long)]
        config: PathBuf,
        /// Number of chains run at once.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// DIC, predictive checks, hidden carriage and efficacy for fitted runs.
    Assess {
        #[arg(long)]
        config: PathBuf,
        /// Directory written by `fit`; defaults to the configured output directory.
        #[arg(long)]
        runs: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Generate synthetic wards in the input file format.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate, fit and compare the posterior with the generating parameters.
    Recover {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

fn run(cli: Cli) -> Result<(), CommandError> {
    match cli.command {
        Command::Fit { config, jobs } => {
            let config = LoadedConfig::load(&config)?;
            let fits = commands::cmd_fit(&config, jobs)?;
            log::info!("wrote {} fits under {}", fits.len(), config.run.output_dir.display());
        }
        Command::Assess { config, runs, jobs } => {
            let config = LoadedConfig::load(&config)?;
            let runs = runs.unwrap_or_else(|| commands::default_runs_dir(&config));
            let out = commands::cmd_assess(&config, &runs, jobs)?;
            log::info!("wrote {} reports under {}", out.reports.len(), runs.display());
        }
        Command::Simulate { config, out } => {
            let config = LoadedConfig::load(&config)?;
            commands::cmd_simulate(&config, &out)?;
        }
        Command::Recover { config, jobs } => {
            let config = LoadedConfig::load(&config)?;
            commands::cmd_recover(&config, jobs)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
