use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use misesim::config::{parse_bound_list, ExperimentConfig};
use misesim::experiment::{cmd_compare_models, cmd_run, cmd_sweep_bounds};
use misesim::SimError;

#[derive(Parser)]
#[command(name = "misesim", version, about = "Memory-interference slowdown simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Per-interval estimates followed by a summary block
    Run(Common),
    /// Estimation error of both models against alone replays
    CompareModels(Common),
    /// MISE-QoS over a list of slowdown bounds plus an Always-Prioritize reference
    SweepBounds {
        #[command(flatten)]
        common: Common,
        /// Comma-separated bounds; fractions like 10/3 are accepted
        #[arg(long)]
        bounds: Option<String>,
    },
}

enum Failure {
    Usage(String),
    Runtime(String),
}

fn failed(e: SimError) -> Failure {
    match e {
        SimError::Config(_) => Failure::Usage(e.to_string()),
        other => Failure::Runtime(other.to_string()),
    }
}

fn load(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::load(&common.config).map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(seed) = common.seed {
        cfg.setup.seed = seed;
    }
    if let Some(h) = common.horizon {
        cfg.setup.horizon = h;
    }
    cfg.setup.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

fn write_out(cfg: &ExperimentConfig, common: &Common, csv: &str) -> Result<(), Failure> {
    match common.out.as_ref().or(cfg.output.as_ref()) {
        Some(path) => std::fs::write(path, csv).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display()))),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run(common) => {
            let cfg = load(&common)?;
            let csv = cmd_run(&cfg.setup).map_err(failed)?;
            write_out(&cfg, &common, &csv)
        }
        Command::CompareModels(common) => {
            let cfg = load(&common)?;
            let csv = cmd_compare_models(&cfg.setup).map_err(failed)?;
            write_out(&cfg, &common, &csv)
        }
        Command::SweepBounds { common, bounds } => {
            let cfg = load(&common)?;
            let bounds = match bounds {
                Some(list) => {
                    parse_bound_list(&list).ok_or_else(|| Failure::Usage(format!("invalid bounds '{list}'")))?
                }
                None => cfg.sweep_bounds.clone(),
            };
            if bounds.is_empty() {
                return Err(Failure::Usage("no bounds given (use --bounds or [qos] bounds)".into()));
            }
            if cfg.setup.policy != "mise-qos" {
                return Err(Failure::Usage("sweep-bounds needs policy = mise-qos".into()));
            }
            let csv = cmd_sweep_bounds(&cfg.setup, &bounds).map_err(failed)?;
            write_out(&cfg, &common, &csv)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("misesim: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("misesim: {msg}");
            ExitCode::from(1)
        }
    }
}
