//! `hsle`: experiments on FK Ising interfaces, hypergeometric SLE and
//! percolation crossings.
//!
//! Every command writes `<command>.csv` and `<command>.json` (the manifest)
//! into `--out` and prints a short summary. Exit status is 0 when all in-run
//! checks pass, 1 when one fails and 2 on a usage error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::UsageError;

#[derive(Debug, Parser)]
#[command(name = "hsle", version, about = "FK Ising interfaces, hypergeometric SLE and Cardy crossings")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Base RNG seed; `HSLE_SEED` overrides the config file but not this flag.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// JSON file whose keys set any flag of the command.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Drift, hypergeometric-link, Cardy-symmetry and generator grids.
    CheckIdentities(IdentityFlags),
    /// FK arc probability over refinements of a rectangle.
    FkCrossing(FkFlags),
    /// Ensemble of driving processes.
    SleSimulate(SimulateFlags),
    /// Girsanov-weighted P-measure paths against direct hSLE paths.
    GirsanovTest(GirsanovFlags),
    /// Interface-pair ensembles.
    PairSample(PairFlags),
    /// Percolation crossing estimates against Cardy's formula.
    Percolation(PercolationFlags),
    /// Loewner trace of one driving path.
    Trace(TraceFlags),
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct IdentityFlags {
    /// Points per axis of the (X, Y) log-grid.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct FkFlags {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cols: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    /// Refinements `k = 1..=mesh_steps`, each with `k·cols × k·rows` blocks.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mesh_steps: Option<usize>,
    /// Samples per refinement; 0 enumerates exactly.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweeps_between: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct SimulateFlags {
    /// chordal, fk-p-measure, hsle-16-3 or hsle-6.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    /// Only for chordal.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y0: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tmax: Option<f64>,
    /// 0 runs a single deterministic path and needs `--zero-noise`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paths: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zero_noise: Option<bool>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct GirsanovFlags {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y0: Option<f64>,
    /// Comparison time.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paths: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct PairFlags {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y0: Option<f64>,
    /// 1 samples the a-curve first, 2 the c-curve first.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order: Option<u8>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct PercolationFlags {
    /// Width over height of the rectangle; a comma-separated list runs a sweep.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aspect: Option<Vec<f64>>,
    /// Number of rows.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub side: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct TraceFlags {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y0: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tmax: Option<f64>,
    /// Retained steps per trace point.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zero_noise: Option<bool>,
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let g = &cli.global;
    match cli.command {
        Command::CheckIdentities(f) => commands::check_identities(&config::resolve("check-identities", g, &f)?),
        Command::FkCrossing(f) => commands::fk_crossing(&config::resolve("fk-crossing", g, &f)?),
        Command::SleSimulate(f) => commands::sle_simulate(&config::resolve("sle-simulate", g, &f)?),
        Command::GirsanovTest(f) => commands::girsanov_test(&config::resolve("girsanov-test", g, &f)?),
        Command::PairSample(f) => commands::pair_sample(&config::resolve("pair-sample", g, &f)?),
        Command::Percolation(f) => commands::percolation(&config::resolve("percolation", g, &f)?),
        Command::Trace(f) => commands::trace(&config::resolve("trace", g, &f)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = e.downcast_ref::<UsageError>().is_some()
                || matches!(
                    e.downcast_ref::<hsle_core::Error>(),
                    Some(hsle_core::Error::Usage(_)
                            | hsle_core::Error::Domain(_)
                            | hsle_core::Error::Sizing(_)
                            | hsle_core::Error::TooLarge { .. })
                );
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
