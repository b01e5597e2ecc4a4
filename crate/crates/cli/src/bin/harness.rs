//! Replays recorded traces and reports routing accuracy.
//!
//! Exit status: 0 when every expectation passes, 1 when any fails, 2 when a
//! trace cannot be run at all.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pointchat_core::harness::{bless, corpus_eval, load_trace, replay_trace, ReplayOptions};

#[derive(Parser)]
#[command(name = "harness", about = "Deterministic trace replay and routing evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// LLM backend, overriding trace headers: null or scripted:<path>.
    #[arg(long, global = true)]
    backend: Option<String>,
    /// Write the machine-readable report here.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Keep session directories here instead of a temporary directory.
    #[arg(long, global = true)]
    artifact_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Replay one trace file.
    Replay {
        trace: PathBuf,
        /// Record this run's artifact hashes into the trace as expectations.
        #[arg(long)]
        bless: bool,
    },
    /// Replay every *.jsonl trace in a directory.
    Corpus { dir: PathBuf },
}

fn write_report<T: serde::Serialize>(out: Option<&PathBuf>, report: &T) -> Result<(), String> {
    let Some(path) = out else { return Ok(()) };
    let json = serde_json::to_string_pretty(report).map_err(|e| e.to_string())?;
    std::fs::write(path, json + "\n").map_err(|e| format!("{}: {e}", path.display()))
}

fn run(cli: Cli) -> Result<bool, String> {
    let opts = ReplayOptions { backend: cli.backend, artifact_root: cli.artifact_dir, config: None };
    match cli.command {
        Command::Replay { trace, bless: record } => {
            let t = load_trace(&trace).map_err(|e| e.to_string())?;
            let report = replay_trace(&t, &opts).map_err(|e| e.to_string())?;
            print!("{}", report.table());
            write_report(cli.out.as_ref(), &report)?;
            if record {
                let text = std::fs::read_to_string(&trace).map_err(|e| e.to_string())?;
                std::fs::write(&trace, bless(&text, &report.hashes())).map_err(|e| e.to_string())?;
                eprintln!("recorded {} step hashes in {}", report.hashes().len(), trace.display());
            }
            Ok(report.passed)
        }
        Command::Corpus { dir } => {
            let report = corpus_eval(&dir, &opts).map_err(|e| e.to_string())?;
            print!("{}", report.table());
            write_report(cli.out.as_ref(), &report)?;
            Ok(report.passed)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("harness: {e}");
            ExitCode::from(2)
        }
    }
}
