//! Subcommand implementations. Each module owns its clap argument struct and
//! a `run` entry point; `pipeline` additionally reuses the stage helpers the
//! sibling commands expose.

pub mod bell;
pub mod mask;
pub mod optimize;
pub mod pipeline;
pub mod spectrum;
pub mod tomo;

use std::path::PathBuf;

use oamlab::{Error, Result};

use crate::output::OutputDir;
use crate::scenario::Scenario;

/// Flags shared by every subcommand.
#[derive(Debug, clap::Args)]
pub struct CommonArgs {
    /// Scenario file (TOML)
    #[arg(long, value_name = "PATH")]
    pub scenario: Option<PathBuf>,
    /// Seed override for stochastic stages
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory (overrides the scenario's output_dir)
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Overwrite existing output files
    #[arg(long)]
    pub force: bool,
}

impl CommonArgs {
    /// Load the scenario; an absent `--scenario` is a configuration error.
    pub fn load_scenario(&self) -> Result<Scenario> {
        match &self.scenario {
            Some(path) => Scenario::load(path),
            None => Err(Error::Config(
                "this command needs a scenario file; pass --scenario PATH".into(),
            )),
        }
    }

    /// Load the scenario, or fall back to the reference defaults for
    /// commands that can run from a direct input file.
    pub fn load_scenario_or_default(&self) -> Result<Scenario> {
        match &self.scenario {
            Some(path) => Scenario::load(path),
            None => Ok(Scenario::default()),
        }
    }

    /// Resolve the output directory: `--out`, then the scenario's
    /// `output_dir`, then the current directory.
    pub fn output_dir(&self, scenario: &Scenario) -> Result<OutputDir> {
        let root = self
            .out
            .clone()
            .or_else(|| scenario.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("."));
        OutputDir::new(&root, self.force)
    }
}

/// File-name suffix for sweep outputs: empty for single runs, `_00`-style
/// otherwise.
pub fn sweep_tag(index: usize, total: usize) -> String {
    if total == 1 {
        String::new()
    } else {
        format!("_{index:02}")
    }
}
