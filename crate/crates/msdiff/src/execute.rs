//! Runs the selected suites and writes the run directory.
//!
//! Layout of `out/run-NNNN/`: one artifact per suite, `summary.json` and
//! `manifest.json` (sha256 of every other file). Nothing time-dependent is
//! written, so identical configs produce byte-identical files.

use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::RunResult;
use crate::io::sha256_hex;
use crate::studies::Conservation;
use crate::suites::{conservation_outcome, run_suite, CriterionOutcome, Suite};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Pass,
    CertificationFailure,
    ConfigError,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Pass => 0,
            ExitStatus::CertificationFailure => 1,
            ExitStatus::ConfigError => 2,
        }
    }
}

/// A suite that aborted with a numerical or IO error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteFailure {
    pub suite: Suite,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub seed: u64,
    pub suites: Vec<Suite>,
    pub passed: bool,
    pub criteria: Vec<CriterionOutcome>,
    pub failures: Vec<SuiteFailure>,
    #[serde(skip)]
    pub run_dir: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct ManifestEntry {
    path: String,
    bytes: usize,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest {
    schema_version: u32,
    files: Vec<ManifestEntry>,
}

/// Creates the first unused `run-NNNN` directory below `out`.
pub fn fresh_run_dir(out: &Path) -> RunResult<PathBuf> {
    fs::create_dir_all(out)?;
    for k in 1.. {
        let dir = out.join(format!("run-{k:04}"));
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }
    }
    unreachable!("unbounded search")
}

fn write_json(path: &Path, value: &impl Serialize) -> RunResult<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, &bytes)?;
    Ok(bytes)
}

/// Runs every selected suite in order and writes the run directory. An
/// empty selection writes nothing and passes.
pub fn execute(config: &RunConfig) -> RunResult<(ExitStatus, RunSummary)> {
    let mut summary = RunSummary {
        schema_version: SCHEMA_VERSION,
        seed: config.seed,
        suites: config.suites.clone(),
        passed: true,
        criteria: Vec::new(),
        failures: Vec::new(),
        run_dir: None,
    };
    if config.suites.is_empty() {
        eprintln!("warning: no suites selected; nothing to do");
        return Ok((ExitStatus::Pass, summary));
    }
    let dir = fresh_run_dir(&config.out)?;
    let mut written: Vec<(String, Vec<u8>)> = Vec::new();
    let mut conservation: Option<Conservation> = None;
    for &suite in &config.suites {
        match run_suite(suite, config) {
            Ok(out) => {
                fs::write(dir.join(suite.artifact()), &out.artifact)?;
                written.push((suite.artifact().to_string(), out.artifact));
                summary.criteria.extend(out.criteria);
                if let Some(c) = out.conservation {
                    conservation = Some(conservation.map_or(c, |acc| acc.merge(c)));
                }
            }
            Err(e) => summary.failures.push(SuiteFailure { suite, message: e.to_string() }),
        }
    }
    if let Some(c) = &conservation {
        summary.criteria.push(conservation_outcome(c));
    }
    summary.criteria.sort_by_key(|c| c.id);
    summary.passed = summary.failures.is_empty() && summary.criteria.iter().all(|c| c.passed);

    let bytes = write_json(&dir.join("summary.json"), &summary)?;
    written.push(("summary.json".to_string(), bytes));
    written.sort_by(|a, b| a.0.cmp(&b.0));
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        files: written
            .iter()
            .map(|(path, bytes)| ManifestEntry { path: path.clone(), bytes: bytes.len(), sha256: sha256_hex(bytes) })
            .collect(),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    summary.run_dir = Some(dir);
    let status = if summary.passed { ExitStatus::Pass } else { ExitStatus::CertificationFailure };
    Ok((status, summary))
}
