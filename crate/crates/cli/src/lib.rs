//! Command-line pipeline for sparse ground-motion model discovery.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use gmdisco::gmpe::Im;
use gmdisco::{Error, Result};

use crate::config::{load_config, RunConfig, Session};

#[derive(Debug, Parser)]
#[command(
    name = "gmdisco",
    version,
    about = "Discover sparse ground-motion prediction equations"
)]
pub struct Cli {
    /// TOML configuration file; relative paths inside resolve against its directory.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for synthetic data generation.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Intensity measure: pga or pgv.
    #[arg(long, global = true)]
    pub im: Option<Im>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and filter a flatfile into <out>/dataset.csv.
    Ingest {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Sweep thresholds, select the knee and fit the sparse equation.
    Fit {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Fixed threshold; skips knee selection.
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Number of active terms over the threshold grid.
    Sweep {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Inter- and intra-event residuals, variance components and sigma model.
    Residuals {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Attenuation curves over a magnitude, V_S30 and distance grid.
    Curves {
        /// Dataset used when the curves model is `fit`.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Comparison CSV merged into the output.
        #[arg(long)]
        comparison: Option<PathBuf>,
    },
    /// Fit on all data and on far-field data only, then compare in the near field.
    Extrapolate {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        split_km: Option<f64>,
    },
    /// Write a synthetic flatfile from a known equation.
    Synth,
}

/// Applies command-line overrides to the configuration.
pub fn session(cli: &Cli) -> Result<Session> {
    let (mut config, base_dir) = match &cli.config {
        Some(path) => {
            let config = load_config(path)?;
            let base = path
                .parent()
                .map(PathBuf::from)
                .filter(|p| !p.as_os_str().is_empty())
                .unwrap_or_else(|| PathBuf::from("."));
            (config, base)
        }
        None => (RunConfig::default(), PathBuf::from(".")),
    };
    config.run.out = match &cli.out {
        Some(out) => out.clone(),
        None if config.run.out.is_absolute() => config.run.out.clone(),
        None => base_dir.join(&config.run.out),
    };
    if let Some(im) = cli.im {
        config.run.im = im;
    }
    if let Some(seed) = cli.seed {
        config.synth.seed = seed;
    }
    Session::new(config, base_dir)
}

pub fn run(cli: &Cli) -> Result<()> {
    let session = session(cli)?;
    match &cli.command {
        Command::Ingest { input } => commands::cmd_ingest(&session, input.as_deref()),
        Command::Fit { input, delta } => commands::cmd_fit(&session, input.as_deref(), *delta),
        Command::Sweep { input } => commands::cmd_sweep(&session, input.as_deref()),
        Command::Residuals { input } => commands::cmd_residuals(&session, input.as_deref()),
        Command::Curves { input, comparison } => {
            commands::cmd_curves(&session, input.as_deref(), comparison.as_deref())
        }
        Command::Extrapolate { input, split_km } => {
            commands::cmd_extrapolate(&session, input.as_deref(), *split_km)
        }
        Command::Synth => commands::cmd_synth(&session).map(|_| ()),
    }
}

/// 2 for configuration and I/O problems, 1 for everything else.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_config() {
        2
    } else {
        1
    }
}
