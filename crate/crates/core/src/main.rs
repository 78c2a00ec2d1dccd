use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use tweezer_core::experiment::{
    run_hbt, run_occupancy, run_rabi_sweep, run_raman, run_trace, ExperimentConfig, RamanMode, RunSummary,
};
use tweezer_core::Error;

#[derive(Parser)]
#[command(name = "tweezer", version, about = "Single-atom pulsed photon source simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Configuration file (`key = value` lines); defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding `run.master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding `run.output_directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Trajectory count, overriding `run.trajectories`.
    #[arg(long)]
    trajectories: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Fluorescence against pulse power and the π/2π/3π OBE traces.
    Rabi(Common),
    /// Quantum-jump ensemble traces against the master equation.
    Trace(Common),
    /// Photon statistics, HBT histogram and count rates.
    Hbt(Common),
    /// Raman spectroscopy scan over the Zeeman-split lines.
    RamanScan(Common),
    /// Raman Rabi flopping on the addressed line.
    RamanFlop(Common),
    /// Blockaded trap occupancy record.
    Occupancy(Common),
    /// Print the effective configuration in canonical form.
    Config(Common),
}

fn load(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.run.master_seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.run.output_directory = out.to_string_lossy().into_owned();
    }
    if let Some(n) = common.trajectories {
        cfg.run.trajectories = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(command: Command) -> Result<Option<RunSummary>, Error> {
    let summary = match command {
        Command::Rabi(c) => run_rabi_sweep(&load(&c)?)?,
        Command::Trace(c) => run_trace(&load(&c)?)?,
        Command::Hbt(c) => run_hbt(&load(&c)?)?,
        Command::RamanScan(c) => run_raman(&load(&c)?, RamanMode::Scan)?,
        Command::RamanFlop(c) => run_raman(&load(&c)?, RamanMode::Flop)?,
        Command::Occupancy(c) => run_occupancy(&load(&c)?)?,
        Command::Config(c) => {
            print!("{}", load(&c)?.to_text());
            return Ok(None);
        }
    };
    Ok(Some(summary))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(Some(summary)) => {
            print!("{}", summary.to_text());
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            for (field, message) in e.issues() {
                if field.is_empty() {
                    eprintln!("error: message={message:?}");
                } else {
                    eprintln!("error: field={field} message={message:?}");
                }
            }
            ExitCode::from(2)
        }
    }
}
