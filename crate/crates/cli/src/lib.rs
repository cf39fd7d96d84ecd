//! Batch runner for the flexible-transit simulator: configuration, the
//! built-in scenario preset, parallel execution and CSV output.

pub mod config;
pub mod output;
pub mod preset;
pub mod runner;
pub mod summary;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::config::{ConfigFile, Overrides};
use crate::runner::{Execution, RunOptions};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("runtime failure: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Input(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ftsim", version, about = "Flexible transit feeder simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every scenario × replication cell and write CSV outputs.
    Run(RunArgs),
    /// Recompute the comparison table from a results directory.
    Summarize { dir: PathBuf },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON configuration file.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in scenario matrix.
    #[arg(long, value_parser = [preset::TABLE_10_1])]
    pub preset: Option<String>,
    /// Run only this scenario label.
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub days: Option<usize>,
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Let the AV fleet shrink to zero when yesterday had no riders.
    #[arg(long)]
    pub strict_eq103: bool,
    /// Worker threads; 1 runs cells serially, 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Skip the per-cell event logs.
    #[arg(long)]
    pub no_events: bool,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<ConfigFile, CliError> {
        let mut config = match (&self.config, &self.preset) {
            (Some(path), _) => {
                let mut c = ConfigFile::load(path)?;
                if let Some(dir) = path.parent() {
                    c.rebase_paths(dir);
                }
                c
            }
            (None, Some(name)) => preset::by_name(name)
                .ok_or_else(|| CliError::Config(format!("unknown preset {name:?}")))?,
            (None, None) => return Err(CliError::Config("pass --config or --preset".into())),
        };
        config.apply(&Overrides {
            scenario: self.scenario.clone(),
            days: self.days,
            replications: self.replications,
            seed: self.seed,
            out: self.out.clone(),
            strict_eq103: self.strict_eq103,
        })?;
        Ok(config)
    }

    pub fn options(&self) -> RunOptions {
        RunOptions {
            execution: if self.threads == 1 {
                Execution::Serial
            } else {
                Execution::Parallel {
                    threads: self.threads,
                }
            },
            write_events: !self.no_events,
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => {
            let config = args.resolve()?;
            runner::run(&config, args.options())?;
            print!("{}", runner::summarize_dir(&config.output_dir)?);
            Ok(())
        }
        Command::Summarize { dir } => {
            print!("{}", runner::summarize_dir(&dir)?);
            Ok(())
        }
    }
}

pub fn main_entry() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ftsim: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
