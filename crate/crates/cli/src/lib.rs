//! Experiment runner for the `pgpe` library.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::config::{ConfigError, Overrides, OUT_DIR_ENV};
use crate::output::{Manifest, RunDir};

pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "pgpe",
    version,
    about = "Policy gradients with parameter-based exploration: experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the experiment described by a config file.
    Run(RunArgs),
    /// Print the estimator variants and their config keys.
    ListMethods,
    /// Check a config file without running anything.
    Validate(ConfigArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    /// Override a config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Cap on worker threads.
    #[arg(long, value_name = "N")]
    pub threads: Option<usize>,
}

fn load(args: &ConfigArgs, out: Option<PathBuf>) -> Result<config::ExperimentConfig, ConfigError> {
    let overrides = Overrides {
        set: args.set.clone(),
        seed: args.seed,
        out,
        env_out: std::env::var_os(OUT_DIR_ENV).map(PathBuf::from),
    };
    config::load(&args.config, &overrides)
}

pub fn main_with(cli: Cli) -> ExitCode {
    match cli.command {
        Command::ListMethods => {
            print!("{}", commands::method_table());
            ExitCode::SUCCESS
        }
        Command::Validate(args) => match load(&args, None) {
            Ok(cfg) => {
                print!("{}", cfg.to_toml());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("config error: {e}");
                ExitCode::from(EXIT_CONFIG)
            }
        },
        Command::Run(args) => run(args),
    }
}

fn run(args: RunArgs) -> ExitCode {
    match run_experiment(args) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(RunError { code, message }) => {
            eprintln!("{message}");
            ExitCode::from(code)
        }
    }
}

/// Failure of `run_experiment`, with the process exit code it maps to.
#[derive(Debug)]
pub struct RunError {
    pub code: u8,
    pub message: String,
}

impl RunError {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: format!("config error: {}", message.into()),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: format!("error: {}", message.into()),
        }
    }
}

/// Runs one experiment and returns its run directory. Thread count follows
/// `--threads` when given, else the calling rayon pool.
pub fn run_experiment(args: RunArgs) -> Result<PathBuf, RunError> {
    let cfg = load(&args.config, args.out.clone()).map_err(|e| RunError::config(e.to_string()))?;
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(RunError::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| RunError::runtime(format!("cannot size thread pool: {e}")))?;
    }
    let dir = RunDir::create(&cfg).map_err(|e| {
        RunError::runtime(format!(
            "cannot create run directory under {}: {e}",
            cfg.output_dir.display()
        ))
    })?;
    let start = Instant::now();
    let mut manifest = Manifest::new(&cfg);
    let outcome = commands::execute(&cfg);
    let mut error = outcome.error;
    for table in outcome.tables {
        if let Err(e) = dir.write_table(table, &mut manifest) {
            error.get_or_insert(format!("writing results: {e}"));
        }
    }
    manifest.wall_time_secs = start.elapsed().as_secs_f64();
    manifest.partial = error.is_some();
    manifest.status = if error.is_some() { "error" } else { "ok" }.into();
    manifest.error = error.clone();
    if let Err(e) = dir.write_manifest(&manifest) {
        error.get_or_insert(format!("writing manifest: {e}"));
    }
    match error {
        None => Ok(dir.path),
        Some(e) => Err(RunError::runtime(format!(
            "{e} (partial results in {})",
            dir.path.display()
        ))),
    }
}
