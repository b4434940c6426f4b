//! `oamlab`: scenario-driven simulator of pump-shaped orbital-angular-
//! momentum entanglement experiments.
//!
//! Each subcommand reads one TOML scenario (crystal, pump superposition,
//! detection, target subspace, optimizer gains, analysis toggles) and writes
//! schema-versioned artifacts into an output directory. Exit codes: 0 on
//! success, 2 for input or configuration errors, 3 for numerical or
//! estimation failures.

mod commands;
mod output;
mod scenario;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "oamlab",
    version,
    about = "Desk-scale twin of pump-shaped OAM-entanglement experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Joint OAM spectrum and azimuthal Schmidt number
    Spectrum(commands::spectrum::SpectrumArgs),
    /// Adaptive pump shaping against the target subspace
    Optimize(commands::optimize::OptimizeArgs),
    /// Two-qutrit state tomography from simulated or ingested counts
    Tomo(commands::tomo::TomoArgs),
    /// CGLMP Bell parameter of the carved or supplied state
    Bell(commands::bell::BellArgs),
    /// SLM phase masks for pump and detection modes
    Mask(commands::mask::MaskArgs),
    /// Full optimize -> tomo -> bell -> mask run with one summary
    Pipeline(commands::pipeline::PipelineArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Spectrum(args) => commands::spectrum::run(args),
        Command::Optimize(args) => commands::optimize::run(args),
        Command::Tomo(args) => commands::tomo::run(args),
        Command::Bell(args) => commands::bell::run(args),
        Command::Mask(args) => commands::mask::run(args),
        Command::Pipeline(args) => commands::pipeline::run(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(if e.is_input_error() { 2 } else { 3 });
    }
}
