//! Command-line driver: reads a JSON configuration, runs one command and
//! writes its report, tables and plot data to an output directory.
//!
//! Every file written carries the SHA-256 hash of the resolved
//! configuration and the library version. Wall-clock timing goes to a
//! separate `timing.json`, so the other outputs are byte-identical for a
//! given configuration and seed.

pub mod commands;
pub mod config;
pub mod error;
pub mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::ValueEnum;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::commands::{execute, CommandReport, Table};
use crate::config::CommandConfig;
pub use crate::error::{CliError, Result};
use crate::plot::{applicable_kinds, plot_csv, plot_rows, PlotKind};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Solve the fixed point and evaluate the deterministic equivalents.
    Detequiv,
    /// Estimate `v^T (Σ + A)^{-1} v` from samples.
    Estimate,
    /// Bias-corrected LDA from two CSV groups.
    Lda,
    /// Regularized discriminant sweep from two CSV groups.
    Rda,
    /// Plug-in portfolio risks.
    Portfolio,
    /// Ridge bias and variance.
    Ridge,
    /// Monte Carlo verification experiments.
    Verify,
    /// Stieltjes transform comparison of two laws.
    Stieltjes,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Detequiv => "detequiv",
            Command::Estimate => "estimate",
            Command::Lda => "lda",
            Command::Rda => "rda",
            Command::Portfolio => "portfolio",
            Command::Ridge => "ridge",
            Command::Verify => "verify",
            Command::Stieltjes => "stieltjes",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: Command,
    pub config_path: PathBuf,
    pub out_dir: PathBuf,
    /// Overrides the configured seed.
    pub seed: Option<u64>,
    /// Worker threads; `None` uses the machine's parallelism.
    pub threads: Option<usize>,
}

/// Identifies the inputs behind every output file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stamp {
    pub command: &'static str,
    pub version: &'static str,
    pub config_hash: String,
}

impl Stamp {
    fn csv_line(&self) -> String {
        format!(
            "# config_hash={} version={}\n",
            self.config_hash, self.version
        )
    }
}

#[derive(Serialize)]
struct ResolvedConfigFile<'a> {
    #[serde(flatten)]
    stamp: &'a Stamp,
    config: &'a CommandConfig,
}

#[derive(Serialize)]
struct ReportFile<'a> {
    #[serde(flatten)]
    stamp: &'a Stamp,
    report: &'a CommandReport,
}

#[derive(Serialize)]
struct TimingFile<'a> {
    #[serde(flatten)]
    stamp: &'a Stamp,
    threads: usize,
    elapsed_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub stamp: Stamp,
    pub report: CommandReport,
    pub files: Vec<PathBuf>,
}

/// SHA-256 of the canonical JSON of a resolved configuration.
pub fn config_hash(command: Command, config: &CommandConfig) -> Result<String> {
    let canonical = serde_json::to_vec(&(command.name(), config))
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(&canonical)))
}

fn write(path: PathBuf, contents: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
    files.push(path);
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s =
        serde_json::to_string_pretty(value).map_err(|e| CliError::Invalid(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn table_csv(stamp: &Stamp, table: &Table) -> String {
    let mut out = stamp.csv_line();
    out.push_str(&table.header.join(","));
    out.push('\n');
    for row in &table.rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Writes the plot data of `kind` to `out_dir/plot_<kind>.csv`.
pub fn emit_plot_data(
    report: &CommandReport,
    kind: PlotKind,
    stamp: &Stamp,
    out_dir: &Path,
) -> Result<PathBuf> {
    let rows = plot_rows(report, kind)?;
    let path = out_dir.join(format!("plot_{kind}.csv"));
    let contents = stamp.csv_line() + &plot_csv(&rows);
    fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

pub fn try_run(manifest: &RunManifest) -> Result<RunOutput> {
    let started = Instant::now();
    let mut config = CommandConfig::load(manifest.command, &manifest.config_path)?;
    if let Some(seed) = manifest.seed {
        config = config.with_seed(seed);
    }
    let config = config.resolved();
    let stamp = Stamp {
        command: manifest.command.name(),
        version: VERSION,
        config_hash: config_hash(manifest.command, &config)?,
    };

    fs::create_dir_all(&manifest.out_dir).map_err(|e| CliError::io(&manifest.out_dir, e))?;
    let mut files = Vec::new();
    write(
        manifest.out_dir.join("resolved_config.json"),
        &to_json(&ResolvedConfigFile {
            stamp: &stamp,
            config: &config,
        })?,
        &mut files,
    )?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(manifest.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::ThreadPool(e.to_string()))?;
    let (report, table) = pool.install(|| execute(&config))?;

    write(
        manifest.out_dir.join("report.json"),
        &to_json(&ReportFile {
            stamp: &stamp,
            report: &report,
        })?,
        &mut files,
    )?;
    write(
        manifest.out_dir.join("results.csv"),
        &table_csv(&stamp, &table),
        &mut files,
    )?;
    for kind in applicable_kinds(&report) {
        files.push(emit_plot_data(&report, kind, &stamp, &manifest.out_dir)?);
    }
    write(
        manifest.out_dir.join("timing.json"),
        &to_json(&TimingFile {
            stamp: &stamp,
            threads: pool.current_num_threads(),
            elapsed_seconds: started.elapsed().as_secs_f64(),
        })?,
        &mut files,
    )?;
    Ok(RunOutput {
        stamp,
        report,
        files,
    })
}

/// Runs the manifest and maps the outcome to an exit code: 0 on success,
/// 1 on invalid input, 2 on numerical failure.
pub fn run(manifest: &RunManifest) -> i32 {
    match try_run(manifest) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
