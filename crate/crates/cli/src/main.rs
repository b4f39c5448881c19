mod commands;
mod config;
mod report;
mod svg;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use murmur_core::exec;

use crate::config::{Flags, RunConfig};

#[derive(Parser)]
#[command(name = "murmur", version, about = "Frobenius-trace murmurations and BSD-invariant statistics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Validate a curves CSV and summarize it.
    Ingest,
    /// Build or verify the binary trace cache.
    Traces,
    /// Sliding-window invariant series, detrending, correlations, spectra.
    Windows,
    /// Stratified profile separation with permutation nulls.
    Stratify,
    /// Confounder controls.
    Confound,
    /// Moment, Sato–Tate, crossover and reduction-type diagnostics.
    Diagnose,
    /// Low-lying zeros and their statistics.
    Zeros,
    /// Aggregate existing reports.
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Traces => "traces",
            Command::Windows => "windows",
            Command::Stratify => "stratify",
            Command::Confound => "confound",
            Command::Diagnose => "diagnose",
            Command::Zeros => "zeros",
            Command::Report => "report",
        }
    }
}

fn dispatch(command: Command, cfg: &RunConfig) -> anyhow::Result<()> {
    match command {
        Command::Ingest => commands::ingest::run(cfg),
        Command::Traces => commands::traces::run(cfg),
        Command::Windows => commands::windows::run(cfg),
        Command::Stratify => commands::stratify::run(cfg),
        Command::Confound => commands::confound::run(cfg),
        Command::Diagnose => commands::diagnose::run(cfg),
        Command::Zeros => commands::zeros::run(cfg),
        Command::Report => commands::report::run(cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = RunConfig::resolve(&cli.flags).and_then(|cfg| exec::with_threads(cfg.threads, || dispatch(cli.command, &cfg)));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            let report = serde_json::json!({
                "error": {
                    "command": cli.command.name(),
                    "message": chain.first().cloned().unwrap_or_default(),
                    "causes": &chain[1.min(chain.len())..],
                }
            });
            eprintln!("{report}");
            ExitCode::FAILURE
        }
    }
}
