use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use msdiff::{execute, parse_config_with, ExitStatus, Overrides, Suite};

/// Run Maxwell-Stefan certification suites from a TOML scenario.
#[derive(Debug, Parser)]
#[command(name = "msdiff", version)]
struct Args {
    /// Scenario and run configuration.
    config: PathBuf,
    /// Suite to run; repeat for several. Replaces the `suites` list of the config.
    #[arg(long = "suite", value_name = "NAME")]
    suites: Vec<Suite>,
    /// Seed for every randomized certification.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory receiving `run-NNNN` subdirectories.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for independent runs and sample chunks.
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": "io", "path": args.config, "message": e.to_string() }));
            return ExitCode::from(ExitStatus::ConfigError.code() as u8);
        }
    };
    let overrides = Overrides {
        suites: (!args.suites.is_empty()).then_some(args.suites),
        seed: args.seed,
        out: args.out,
        workers: args.workers,
    };
    let config = match parse_config_with(&text, &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}", e.to_json());
            return ExitCode::from(ExitStatus::ConfigError.code() as u8);
        }
    };
    match execute(&config) {
        Ok((status, summary)) => {
            for c in &summary.criteria {
                println!("{}", c.line());
            }
            for f in &summary.failures {
                println!("suite {} aborted: {}", f.suite.name(), f.message);
            }
            if let Some(dir) = &summary.run_dir {
                println!("artifacts in {}", dir.display());
            }
            ExitCode::from(status.code() as u8)
        }
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": "run", "message": e.to_string() }));
            ExitCode::from(ExitStatus::CertificationFailure.code() as u8)
        }
    }
}
