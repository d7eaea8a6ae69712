use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use detequiv_cli::{run, Command, RunManifest};

#[derive(Debug, Parser)]
#[command(
    name = "detequiv",
    version,
    about = "Deterministic equivalents and their Monte Carlo checks"
)]
struct Args {
    command: Command,
    /// JSON configuration for the command.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let manifest = RunManifest {
        command: args.command,
        config_path: args.config,
        out_dir: args.out,
        seed: args.seed,
        threads: args.threads,
    };
    ExitCode::from(run(&manifest) as u8)
}
