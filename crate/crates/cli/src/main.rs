// `!(x > 0.0)` guards also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CommandOptions, Failure};

#[derive(Parser)]
#[command(
    name = "relaxbench",
    version,
    about = "Relaxation-limit experiments on periodic grids"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (TOML).
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Run even when structural checks fail.
    #[arg(long)]
    allow_invalid: bool,
    /// Worker threads.
    #[arg(long, env = "RELAXBENCH_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the structural hypotheses and write report.csv.
    Validate(Common),
    /// Integrate one relaxation run and write snapshots and the step log.
    Run(Common),
    /// Run an epsilon ladder and write convergence.csv.
    Converge(Common),
}

fn execute(cli: Cli) -> Result<String, Failure> {
    let (common, which) = match cli.command {
        Command::Validate(c) => (c, "validate"),
        Command::Run(c) => (c, "run"),
        Command::Converge(c) => (c, "converge"),
    };
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(Failure::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| Failure::Config(format!("{}: {e}", common.config.display())))?;
    let config = config::parse(&text).map_err(|e| Failure::Config(format!("{}: {e}", common.config.display())))?;
    let opts = CommandOptions {
        out: common.out,
        allow_invalid: common.allow_invalid,
    };
    match which {
        "validate" => commands::validate(&config, &opts),
        "run" => commands::run(&config, &opts),
        _ => commands::converge(&config, &opts),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("relaxbench: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
