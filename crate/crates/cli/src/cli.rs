//! Command-line surface.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use gibbslz::sampler::parse_lines;
use serde_json::json;

use crate::check::{report_table, run_checks};
use crate::config::ExperimentConfig;
use crate::output::{emit, num, Table};
use crate::runner::{converge, entropy_gap_table, parse_row, sample_all, sample_table, PARSE_COLUMNS};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "gibbslz", version, about = "Canonical Gibbs strings, exact conditioned-sum oracles and LZ78 rates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Flat `section.key = value` configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed (overrides `run.seed`).
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Output directory; both CSV and JSONL files are written there.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Format written to stdout when no output directory is set.
    #[arg(long, global = true, value_parser = ["csv", "jsonl"])]
    pub format: Option<String>,
    /// Worker threads for replica fan-out.
    #[arg(long, global = true, env = "GIBBSLZ_WORKERS", value_name = "N")]
    pub workers: Option<usize>,
    /// Config override, repeatable (`--set ensemble.mu=1`).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Particle density m = ∫ l(y) dy.
    Density,
    /// Entropy rate h = ∫ g(y) dy in bits per site.
    Rate,
    /// Chemical potential for the configured density.
    SolveMu,
    /// Draw occupancy strings.
    Sample,
    /// LZ78 statistics of sampled strings or of a string file.
    Parse {
        /// Newline-delimited decimal occupancies to parse instead of sampling.
        #[arg(long, value_name = "PATH")]
        input: Option<PathBuf>,
    },
    /// LZ78 rate against h over the length grid.
    Converge,
    /// Exact entropy gap δ(ℓ, n) over the length grid.
    EntropyGap,
    /// Property battery; exits with status 2 on any failure.
    Check,
}

/// Resolves the configuration with command-line overrides applied.
pub fn resolve_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(cli.config.as_deref(), &cli.set)?;
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    if let Some(f) = &cli.format {
        cfg.format = f.parse()?;
    }
    Ok(cfg)
}

pub fn worker_count(cli: &Cli) -> usize {
    cli.workers.filter(|&w| w > 0).unwrap_or_else(|| std::thread::available_parallelism().map_or(1, usize::from))
}

fn scalar(cfg: &ExperimentConfig, quantity: &str, value: f64, mu: f64) -> Table {
    let mut t = Table::new(&["config_hash", "quantity", "value", "quad_tol", "stats", "beta", "mu"]);
    t.push(vec![
        json!(cfg.hash()),
        json!(quantity),
        num(value),
        num(cfg.quad_tol),
        json!(cfg.stats.name()),
        num(cfg.beta),
        num(mu),
    ]);
    t
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve_config(cli)?;
    let workers = worker_count(cli);
    let out = cfg.out.as_deref();
    match &cli.command {
        Command::Density => {
            let spec = cfg.spec()?;
            emit(&scalar(&cfg, "density", spec.particle_density(cfg.quad_tol)?, spec.mu()), "density", out, cfg.format)
        }
        Command::Rate => {
            let spec = cfg.spec()?;
            emit(&scalar(&cfg, "rate", spec.entropy_rate(cfg.quad_tol)?, spec.mu()), "rate", out, cfg.format)
        }
        Command::SolveMu => {
            let spec = cfg.spec()?;
            emit(&scalar(&cfg, "mu", spec.mu(), spec.mu()), "solve-mu", out, cfg.format)
        }
        Command::Sample => {
            let records = sample_all(&cfg, workers)?;
            if let Some(dir) = out {
                write_strings(dir, &records)?;
            }
            emit(&sample_table(&cfg, &records), "samples", out, cfg.format)
        }
        Command::Parse { input } => {
            let hash = cfg.hash();
            let mut t = Table::new(PARSE_COLUMNS);
            match input {
                Some(path) => {
                    let text = std::fs::read_to_string(path)
                        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
                    let values = parse_lines(&text)?;
                    t.push(parse_row(&hash, "input", 0, &values)?);
                }
                None => {
                    for r in sample_all(&cfg, workers)? {
                        if let Ok(values) = &r.values {
                            t.push(parse_row(&hash, r.kind.name(), r.replica, values)?);
                        }
                    }
                }
            }
            emit(&t, "parse", out, cfg.format)
        }
        Command::Converge => {
            let result = converge(&cfg, workers)?;
            emit(&result.rows, "converge", out, cfg.format)?;
            if out.is_none() {
                println!();
            }
            emit(&result.summary, "converge-summary", out, cfg.format)
        }
        Command::EntropyGap => emit(&entropy_gap_table(&cfg, workers)?, "entropy-gap", out, cfg.format),
        Command::Check => {
            let results = run_checks(&cfg, workers)?;
            emit(&report_table(&cfg, &results), "check", out, cfg.format)?;
            let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::Property(failed.join(", ")))
            }
        }
    }
}

fn write_strings(dir: &Path, records: &[crate::runner::SampleRecord]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    for r in records {
        if let Ok(values) = &r.values {
            let mut text = String::with_capacity(values.len() * 2);
            for k in values {
                text.push_str(&k.to_string());
                text.push('\n');
            }
            let path = dir.join(format!("{}-l{}-r{}.txt", r.kind.name(), r.len, r.replica));
            std::fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        }
    }
    Ok(())
}
