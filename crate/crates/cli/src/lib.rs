//! Command-line front end: configuration parsing, field files and the
//! `solve`, `gamma`, `residual`, `material-table` and `export` commands.

pub mod commands;
pub mod config;
pub mod io;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use thiserror::Error;

pub use commands::run;
pub use config::{parse_config, ConfigError, ConfigErrors, ProblemConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error:\n{0}")]
    Config(#[from] ConfigErrors),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}:{line}: {message}")]
    FieldFile {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Core(#[from] fvk_core::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit status: 2 configuration, 3 solver, 4 I/O, 5 numerics.
    pub fn exit_code(&self) -> i32 {
        use fvk_core::Error as E;
        match self {
            Self::Config(_) => 2,
            Self::Io { .. } | Self::FieldFile { .. } => 4,
            Self::Core(e) => match e {
                E::InvalidMaterial(_)
                | E::InvalidGrid(_)
                | E::GridTooSmall { .. }
                | E::NonPositiveThickness { .. }
                | E::Parse { .. }
                | E::InvalidArgument(_) => 2,
                E::LineSearchFailed { .. } | E::NonFiniteEnergy { .. } => 3,
                _ => 5,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "fvk",
    version,
    about = "Prestrained variable-thickness plate solver and diagnostics"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Minimize the limit energy and report residual diagnostics.
    Solve(CommonArgs),
    /// Compare rescaled 3D recovery energies with the limit energy.
    Gamma(CommonArgs),
    /// Evaluate weak and strong residuals of a given displacement.
    Residual(CommonArgs),
    /// Tabulate the reduced quadratic forms on sample matrices.
    MaterialTable(CommonArgs),
    /// Sample thickness, growth and displacement data on the grid.
    Export(CommonArgs),
}

#[derive(Debug, clap::Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Overrides the solver seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for parallel loops.
    #[arg(long)]
    pub threads: Option<usize>,
}

impl Command {
    pub fn args(&self) -> &CommonArgs {
        match self {
            Self::Solve(a) | Self::Gamma(a) | Self::Residual(a) | Self::MaterialTable(a) | Self::Export(a) => a,
        }
    }
}
