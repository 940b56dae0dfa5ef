//! The `sinotv` command line.
//!
//! Each subcommand writes its results plus a `manifest.toml` holding the
//! resolved configuration into `--out`. Passing that manifest back through
//! `--config` reruns the command with identical numeric output.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

pub use commands::Outcome;
pub use config::{parse_geometry, Method, RunConfig, SearchKind};

use crate::error::{Error, Result};
use crate::noise::NoisePreset;
use crate::phantoms::Rendering;

#[derive(Debug, Parser)]
#[command(name = "sinotv", version, about = "Joint image and sinogram TV reconstruction for PET")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a phantom, project it and add Poisson noise.
    Simulate(Flags),
    /// Reconstruct an image from a sinogram file.
    Reconstruct(Flags),
    /// Regularise a sinogram for a list of betas and filter-backproject each.
    ScaleSpace(Flags),
    /// Analytic against numerical flat-top heights for discs.
    OracleTable(Flags),
    /// Grid search over alpha and beta, scored by SNR against the phantom.
    Sweep(Flags),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Reconstruct(_) => "reconstruct",
            Command::ScaleSpace(_) => "scale-space",
            Command::OracleTable(_) => "oracle-table",
            Command::Sweep(_) => "sweep",
        }
    }

    fn flags(&self) -> &Flags {
        match self {
            Command::Simulate(f)
            | Command::Reconstruct(f)
            | Command::ScaleSpace(f)
            | Command::OracleTable(f)
            | Command::Sweep(f) => f,
        }
    }
}

/// Flags shared by all subcommands. Any flag left out falls back to the
/// config file, then to the built-in default.
#[derive(Debug, Default, Args, Serialize)]
pub struct Flags {
    /// Flat TOML file with the same keys as the flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// rows,cols,bins,angles,angle_step
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub geometry: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix_cache: Option<PathBuf>,

    /// disc, two_discs, two_rings, star, thin_rectangle or cross
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phantom: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r1: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r2: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intensity: Option<f64>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rendering: Option<Rendering>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_preset: Option<NoisePreset>,
    /// Mean counts in the hottest bin; overrides the preset.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counts: Option<f64>,

    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda1: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda2: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda3: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda4: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outer_max_iters: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outer_rel_tol: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cg_max_iters: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cg_rel_tol: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub em_iters: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rof_max_iters: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rof_rel_tol: Option<f64>,

    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alphas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub betas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa_search: Option<SearchKind>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub numeric: Option<bool>,

    /// Input sinogram file.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    /// Reference image file for SNR.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Worker threads; 1 gives the reference serial path.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Extra copy of the command's progress table.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log: Option<PathBuf>,
}

impl Flags {
    fn overrides(&self) -> Result<toml::Table> {
        toml::Table::try_from(self).map_err(|e| Error::Config(e.to_string()))
    }
}

pub fn resolve(command: &Command) -> Result<RunConfig> {
    let flags = command.flags();
    let mut cfg = RunConfig::resolve(flags.config.as_deref(), flags.overrides()?)?;
    cfg.command = Some(command.name().into());
    cfg.version = Some(env!("CARGO_PKG_VERSION").into());
    Ok(cfg)
}

/// Resolves the configuration and runs the command, inside a dedicated thread
/// pool when `threads` is set.
pub fn run(command: &Command) -> Result<Outcome> {
    let cfg = resolve(command)?;
    let go = || match command {
        Command::Simulate(_) => commands::simulate(&cfg),
        Command::Reconstruct(_) => commands::reconstruct(&cfg),
        Command::ScaleSpace(_) => commands::scale_space(&cfg),
        Command::OracleTable(_) => commands::oracle_table(&cfg),
        Command::Sweep(_) => commands::sweep(&cfg),
    };
    match cfg.threads {
        Some(0) => Err(Error::Config("threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(go),
        None => go(),
    }
}

/// 2 for bad configuration or input, 3 for I/O failures.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) | Error::Format(_) => 3,
        _ => 2,
    }
}

pub const EXIT_NOT_CONVERGED: i32 = 4;
