use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mmdnet::commands;
use mmdnet::config::{Command, RunConfig};
use mmdnet::{Error, Result};

/// MMD-regularized regression experiments.
#[derive(Parser)]
#[command(name = "mmdnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Linear-map recovery on synthetic Gaussian data.
    Synth(CommonArgs),
    /// MMD landscape over rotations of a square point cloud.
    ToyRotation(CommonArgs),
    /// Embedding translation with frequency-binned precision@N.
    Translate(CommonArgs),
    /// Grid search over config keys with validation-based selection.
    Sweep(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the `seed` key.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for reports.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn effective_config(args: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for o in &args.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (command, args) = match &cli.command {
        Cmd::Synth(a) => (Command::Synth, a),
        Cmd::ToyRotation(a) => (Command::ToyRotation, a),
        Cmd::Translate(a) => (Command::Translate, a),
        Cmd::Sweep(a) => (Command::Sweep, a),
    };
    let result = effective_config(args).and_then(|cfg| commands::run(command, &cfg, &args.out));
    match result {
        Ok(summary) => {
            if let Some(v) = summary.validation_metric {
                println!("validation_metric {v}");
            }
            if let Some(t) = summary.test_metric {
                println!("test_metric {t}");
            }
            println!("reports in {}", args.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => report_error(&e),
    }
}

fn report_error(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    let mut source = std::error::Error::source(e);
    while let Some(s) = source {
        eprintln!("  caused by: {s}");
        source = s.source();
    }
    ExitCode::from(e.exit_code() as u8)
}
