//! `bdml simulate|estimate|prior-audit|asymptotics --config <path> [--seed N] [--workers N] [--out DIR]`
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
//! Results go to stdout as JSON and errors to stderr as JSON.

use std::path::PathBuf;
use std::process::ExitCode;

use bdml_core::app::{error_json, exit_code, run, EXIT_USAGE};
use bdml_core::config::{read_config, Mode};
use bdml_core::Error;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "bdml",
    version,
    about = "Bayesian double machine learning experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte Carlo comparison of the estimators over a grid of noise levels.
    Simulate(RunArgs),
    /// Fit the configured methods to a CSV dataset.
    Estimate(RunArgs),
    /// Prior draws of the selection bias and the induced prior on α.
    PriorAudit(RunArgs),
    /// Bias-rate and n·Var experiments.
    Asymptotics(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the worker count.
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn fail(code: i32, body: serde_json::Value) -> ExitCode {
    eprintln!("{body}");
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let body =
                serde_json::json!({ "error": { "kind": "usage", "message": e.to_string() } });
            return fail(EXIT_USAGE, body);
        }
    };
    let (mode, args) = match cli.command {
        Command::Simulate(a) => (Mode::Simulate, a),
        Command::Estimate(a) => (Mode::Estimate, a),
        Command::PriorAudit(a) => (Mode::PriorAudit, a),
        Command::Asymptotics(a) => (Mode::Asymptotics, a),
    };
    let result = read_config(&args.config).and_then(|mut cfg| {
        cfg.mode = Some(mode);
        if let Some(s) = args.seed {
            cfg.seed = s;
        }
        if let Some(w) = args.workers {
            cfg.workers = w;
        }
        if let Some(o) = args.out {
            cfg.out = o;
        }
        run(&cfg)
    });
    match result {
        Ok(outcome) => match serde_json::to_string_pretty(&outcome) {
            Ok(text) => {
                println!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                let err = Error::InvalidArgument(format!("cannot encode result: {e}"));
                fail(exit_code(&err), error_json(&err))
            }
        },
        Err(e) => fail(exit_code(&e), error_json(&e)),
    }
}
