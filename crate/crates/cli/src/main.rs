mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use crate::commands::ReproduceOptions;
use crate::config::RunConfig;

/// Delay bounds, M-matrix certificates and Euler-Maruyama simulation for
/// Markov-switched SDEs under delayed state feedback.
#[derive(Debug, Parser)]
#[command(name = "delaystab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Source {
    /// TOML run configuration.
    #[arg(short, long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration: figure-5.1, figure-5.2, figure-5.3 or appendix.
    #[arg(short, long)]
    preset: Option<String>,
    /// Output directory, created if missing.
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
    /// Overrides the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Source {
    fn load(&self, fallback: Option<&str>) -> Result<RunConfig> {
        let mut cfg = match (&self.config, &self.preset, fallback) {
            (Some(path), _, _) => RunConfig::from_file(path)?,
            (None, Some(name), _) => RunConfig::preset(name)?,
            (None, None, Some(name)) => RunConfig::preset(name)?,
            (None, None, None) => bail!("pass --config <file> or --preset <name>"),
        };
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct SimulationArgs {
    #[command(flatten)]
    source: Source,
    /// Use the configuration's full-resolution settings.
    #[arg(long)]
    full: bool,
    /// Overrides the number of Monte Carlo paths.
    #[arg(long)]
    paths: Option<usize>,
    /// Also write SVG plots.
    #[arg(long)]
    plot: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Largest admissible feedback delay tau*.
    TauStar {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        /// Grid search, e.g. `--sweep p=0.5:0.99:0.01 eps=0.5:0.99:0.01`.
        #[arg(long, num_args = 1..=2, value_name = "KEY=START:STOP:STEP")]
        sweep: Option<Vec<String>>,
    },
    /// M-matrix certificate for per-mode margins.
    Certify {
        #[command(flatten)]
        source: Source,
        /// Comma-separated margins, one per mode.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        alpha: Option<Vec<f64>>,
        /// Random states per mode to probe the margins with.
        #[arg(long)]
        falsify: Option<usize>,
    },
    /// Sample paths as CSV.
    Simulate(SimulationArgs),
    /// Monte Carlo moment estimate as CSV.
    Moment(SimulationArgs),
    /// Blow-up of the delayed cubic feedback system.
    Counterexample {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        epsilon: Option<f64>,
        /// Overrides the number of delayed paths.
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        plot: bool,
    },
    /// Runs the whole oscillator and counterexample pipeline and writes a
    /// pass/fail manifest against the reference values.
    #[command(alias = "reproduce-paper")]
    Reproduce {
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Use the presets' full-resolution settings.
        #[arg(long)]
        full: bool,
        /// Overrides the oscillator path counts.
        #[arg(long)]
        paths: Option<usize>,
        /// Overrides the counterexample path counts.
        #[arg(long)]
        counterexample_paths: Option<usize>,
        #[arg(long)]
        plot: bool,
    },
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::TauStar { source, p, epsilon, sweep } => {
            let cfg = source.load(None)?;
            let sweep = sweep.map(|items| commands::parse_sweep(&items)).transpose()?;
            commands::tau_star_cmd(&cfg, &source.out, p, epsilon, sweep)?;
        }
        Command::Certify { source, alpha, falsify } => {
            let cfg = source.load(None)?;
            commands::certify_cmd(&cfg, &source.out, alpha, falsify)?;
        }
        Command::Simulate(args) => {
            let cfg = args.source.load(None)?;
            commands::simulate_cmd(&cfg, &args.source.out, args.full, args.paths, args.plot)?;
        }
        Command::Moment(args) => {
            let cfg = args.source.load(None)?;
            commands::moment_cmd(&cfg, &args.source.out, args.full, args.paths, args.plot)?;
        }
        Command::Counterexample { source, epsilon, paths, plot } => {
            let cfg = source.load(Some("appendix"))?;
            commands::counterexample_cmd(&cfg, &source.out, epsilon, paths, plot)?;
        }
        Command::Reproduce { out, seed, full, paths, counterexample_paths, plot } => {
            let opts = ReproduceOptions { seed, full, paths, counterexample_paths, plot };
            let manifest = commands::reproduce_cmd(&out, &opts)?;
            print!("{}", manifest.text());
            if !manifest.failed().is_empty() {
                eprintln!("failed checks: {}", manifest.failed().join(", "));
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
