use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use limitset_cli::{parse_config, run_experiment, Command};

/// Limit-set experiments: orbit growth, random walks, Patterson-Sullivan and
/// harmonic measures, Green metric, singularity diagnostics.
#[derive(Debug, Parser)]
#[command(name = "limitset", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; outputs do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Exit with status 2 when any reliability warning is raised.
    #[arg(long)]
    strict: bool,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<bool> {
    let (text, base) = match &cli.config {
        Some(p) => (
            std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
            p.parent().map(PathBuf::from).unwrap_or_default(),
        ),
        None => (String::new(), PathBuf::from(".")),
    };
    let mut cfg = parse_config(&text, &base)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.out = o;
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        pool = pool.num_threads(n);
    }
    let pool = pool.build()?;
    let outcome = pool.install(|| run_experiment(&cfg, cli.command))?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    eprintln!("wrote {} files to {}", outcome.files.len(), cfg.out.display());
    Ok(outcome.warnings.is_empty() || !cli.strict)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
