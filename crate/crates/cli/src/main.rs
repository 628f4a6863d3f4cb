//! Command-line runner for sparse-mfc experiments.
//!
//! Exit codes: 0 on success, 1 for configuration errors, 2 for runtime errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "sparse-mfc", version, about = "Mean-field control experiments on sparse graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML experiment configuration.
    config: PathBuf,
    /// Override a config key, e.g. `--set train.iterations=10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (default: config `output`, then $SPARSEMFC_OUT, then `.`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a Chung-Lu graph; writes an edge list and a degree histogram.
    SampleGraph(Common),
    /// Compare finite simulations with the limiting approximations.
    Compare(Common),
    /// Train a policy on the limiting system or on a graph.
    Train(Common),
    /// Evaluate a trained checkpoint.
    Evaluate(Common),
    /// Roll out the two-systems approximation under a fixed policy.
    MfRollout(Common),
    /// Roll out the extensive approximation under a fixed policy.
    ExtensiveRollout(Common),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (common, f): (&Common, fn(&config::LoadedConfig, &std::path::Path) -> Result<(), CliError>) = match &cli.command {
        Command::SampleGraph(c) => (c, commands::sample_graph),
        Command::Compare(c) => (c, commands::compare),
        Command::Train(c) => (c, commands::train),
        Command::Evaluate(c) => (c, commands::evaluate),
        Command::MfRollout(c) => (c, commands::mf_rollout),
        Command::ExtensiveRollout(c) => (c, commands::extensive_rollout_cmd),
    };
    let cfg = config::load_config(&common.config, &common.set)?;
    let out = cfg.output_dir(common.out.as_deref());
    f(&cfg, &out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sparse-mfc: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
