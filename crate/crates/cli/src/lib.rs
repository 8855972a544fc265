//! Command-line pipeline for population-weighted temperature indices.
//!
//! Stages run from one config file: `prepare` builds the coarse grid
//! bundle, `indices`, `urban` and `migration` write CSV results, `all`
//! runs every stage the config has inputs for.

pub mod bundle;
pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

pub use bundle::{prepare, Bundle, Manifest};
pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "poptemp", version, about = "Population-weighted temperature indices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct ConfigArgs {
    /// Config file of `key = value` lines.
    #[arg(short, long)]
    pub config: PathBuf,
    /// Override a config key, e.g. `--set mask_policy=paper_compat`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Aggregate grids and build temperature means.
    Prepare(ConfigArgs),
    /// Area, population-weighted, fixed-base and chained series.
    Indices(ConfigArgs),
    /// Urban heat island adjusted series.
    Urban(ConfigArgs),
    /// Migration flows, experienced changes and adjustments.
    Migration(ConfigArgs),
    /// Every stage the config has inputs for.
    All(ConfigArgs),
    /// List config keys.
    Keys,
}

pub fn run(cli: Cli) -> Result<()> {
    let load = |a: &ConfigArgs| RunConfig::load(&a.config, &a.overrides);
    match &cli.command {
        Command::Prepare(a) => {
            prepare(&load(a)?)?;
        }
        Command::Indices(a) => {
            let cfg = load(a)?;
            commands::indices(&cfg, &Bundle::load(&cfg)?)?;
        }
        Command::Urban(a) => {
            let cfg = load(a)?;
            commands::urban(&cfg, &Bundle::load(&cfg)?)?;
        }
        Command::Migration(a) => {
            commands::migration(&load(a)?)?;
        }
        Command::All(a) => commands::all(&load(a)?)?,
        Command::Keys => {
            for (k, doc) in config::KEYS {
                println!("{k:<22} {doc}");
            }
        }
    }
    Ok(())
}
