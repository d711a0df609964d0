//! Command-line front end: configuration, run orchestration and artifact
//! export for pulse optimization on a transmon pair.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod spectrum;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::run;
pub use config::{ConfigFile, Overrides, Preset, RunConfig};

/// Failures that map to documented exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("config error: {0}")]
    Config(String),
    #[error("integration failure: {0}")]
    Integration(String),
    #[error("gradient check failed: max relative error {max:e} exceeds {threshold:e}")]
    GradCheck { max: f64, threshold: f64 },
    #[error("schema check failed:\n  {}", .0.join("\n  "))]
    Schema(Vec<String>),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Integration(_) => 3,
            Failure::GradCheck { .. } => 4,
            Failure::Schema(_) => 1,
        }
    }
}

/// Exit code for any error returned by [`run`].
pub fn exit_code(err: &anyhow::Error) -> u8 {
    err.downcast_ref::<Failure>().map_or(1, Failure::exit_code)
}

#[derive(Debug, Parser)]
#[command(
    name = "gatefind",
    version,
    about = "Find two-qubit gate pulses for a fixed-frequency transmon pair"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML run configuration; its values override the preset.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for the initial pulse and the angle ensembles.
    #[arg(long, global = true, value_name = "INT")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// table1-g0, table1-g1, table1-g2, desk-g0, desk-g1 or desk-g2.
    #[arg(long, global = true, value_name = "NAME")]
    pub preset: Option<Preset>,
}

#[derive(Debug, Clone, Args)]
pub struct AlphaArgs {
    /// Comma-separated `amp,freq,phase,…` in rad/ns and rad.
    #[arg(long, value_name = "LIST", allow_hyphen_values = true)]
    pub alpha: Option<String>,
    /// A prior run's summary.json, or the run directory holding it.
    #[arg(long, value_name = "PATH")]
    pub alpha_from: Option<PathBuf>,
}

/// Integrator tolerances for one-off analyses; they replace the config's,
/// which are tuned for the optimization loop.
#[derive(Debug, Clone, Copy, Args)]
pub struct ToleranceArgs {
    #[arg(long, default_value_t = 1e-8)]
    pub rel_tol: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub abs_tol: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the alternating optimization and write all artifacts.
    Optimize,
    /// Write basis-state populations along a pulse.
    Propagate {
        #[command(flatten)]
        alpha: AlphaArgs,
        /// hadamard-control, ground, or a basis label such as 10.
        #[arg(long, default_value = "hadamard-control")]
        state: String,
        #[arg(long, default_value_t = 1001)]
        samples: usize,
        #[command(flatten)]
        tolerances: ToleranceArgs,
    },
    /// Write the magnitude spectrum of the control field.
    Spectrum {
        #[command(flatten)]
        alpha: AlphaArgs,
        #[arg(long, default_value_t = 1 << 20)]
        points: usize,
        /// Drop the carrier and transform the envelope alone.
        #[arg(long)]
        no_carrier: bool,
        #[arg(long, default_value_t = 20.0)]
        max_freq_ghz: f64,
    },
    /// Compare GOAT gradients with central finite differences.
    Gradcheck {
        #[command(flatten)]
        alpha: AlphaArgs,
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
        #[arg(long, default_value_t = 1e-3)]
        threshold: f64,
        #[command(flatten)]
        tolerances: ToleranceArgs,
    },
    /// Validate the artifact files in a directory.
    SchemaCheck { dir: PathBuf },
    /// Run G0, G1 and G2 side by side from the same seed.
    Compare,
}
