//! `optimize`: adaptive pump shaping against the scenario's target subspace.
//!
//! Runs the simultaneous-perturbation optimizer from the scenario's pump as
//! the starting point and writes the iteration trace (JSON lines), the final
//! coefficients, and the full spectrum of the optimized pump. Reruns with the
//! same scenario and seed reproduce the trace byte for byte.

use oamlab::linalg::C64;
use oamlab::spsa::OptimizationTrace;
use oamlab::{
    joint_amplitude, run_optimization, PumpProfile, Result, SpectrumLab, SpsaConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::commands::CommonArgs;
use crate::scenario::{require_seed, Scenario};

#[derive(Debug, clap::Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Override the scenario's shot budget: "exact" or an expected count
    #[arg(long, value_name = "N|exact")]
    pub shots: Option<String>,
}

#[derive(Serialize)]
pub struct CoefficientOut {
    pub l: i32,
    pub re: f64,
    pub im: f64,
}

#[derive(Serialize)]
struct OptimizeSummary {
    schema_version: u32,
    seed: u64,
    components: Vec<i32>,
    best_iteration: u64,
    best_cost: f64,
    final_cost: f64,
    coefficients: Vec<CoefficientOut>,
    /// Exact subspace probabilities of the optimized pump (no shot noise).
    subspace_probabilities: Vec<f64>,
}

/// Outcome of the optimization stage, shared with `pipeline`.
pub struct OptimizeOutcome {
    pub pump: PumpProfile,
    pub trace: OptimizationTrace,
    pub components: Vec<i32>,
    /// Exact subspace probabilities of the optimized pump.
    pub probabilities: Vec<f64>,
}

/// Run the optimizer described by the scenario under the given seed.
pub fn execute(
    scenario: &Scenario,
    seed: u64,
    shots_flag: Option<&str>,
) -> Result<OptimizeOutcome> {
    let crystal = scenario.build_crystal()?;
    let det = scenario.build_detection(&crystal)?;
    let subspace = scenario.build_subspace()?;
    let waist = scenario.pump_waist_m(&crystal);
    let mode = scenario.shot_mode(shots_flag)?;
    let lab = SpectrumLab::new(waist, &crystal, &det, &subspace)?.with_mode(mode);
    let initial = scenario.build_pump(&crystal)?;
    let cfg: SpsaConfig = scenario.spsa_config(seed)?;
    let (pump, trace) = run_optimization(&initial, &lab, &cfg)?;

    // Noise-free readout of the optimized pump for reporting.
    let exact_lab = SpectrumLab::new(waist, &crystal, &det, &subspace)?;
    let components = exact_lab.components().to_vec();
    let coefficients: Vec<C64> = components.iter().map(|&l| pump.coefficient(l)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let probabilities = exact_lab.probabilities(&coefficients, &mut rng)?;
    Ok(OptimizeOutcome {
        pump,
        trace,
        components,
        probabilities,
    })
}

pub fn run(args: &OptimizeArgs) -> Result<()> {
    let scenario = args.common.load_scenario()?;
    let seed = require_seed(&scenario, args.common.seed, "the optimizer")?;
    let out = args.common.output_dir(&scenario)?;

    let outcome = execute(&scenario, seed, args.shots.as_deref())?;
    outcome.trace.write_jsonl(out.create("trace.jsonl")?)?;

    let coefficients = outcome
        .components
        .iter()
        .map(|&l| {
            let c = outcome.pump.coefficient(l);
            CoefficientOut {
                l,
                re: c.re,
                im: c.im,
            }
        })
        .collect();
    let final_cost = outcome
        .trace
        .records
        .last()
        .map(|r| r.accepted_cost)
        .unwrap_or(f64::NAN);
    let summary = OptimizeSummary {
        schema_version: oamlab::SCHEMA_VERSION,
        seed,
        components: outcome.components.clone(),
        best_iteration: outcome.trace.best_iteration,
        best_cost: outcome.trace.best_cost,
        final_cost,
        coefficients,
        subspace_probabilities: outcome.probabilities.clone(),
    };
    out.write_json("optimize.json", &summary)?;

    // Full spectrum of the optimized pump, same formats as `spectrum`.
    let crystal = scenario.build_crystal()?;
    let det = scenario.build_detection(&crystal)?;
    let js = joint_amplitude(&outcome.pump, &crystal, &det)?;
    let labels: Vec<i32> = (scenario.detection.l_min..=scenario.detection.l_max).collect();
    out.write_labeled_csv("optimized_spectrum.csv", &js.probabilities(), &labels, &labels)?;
    out.write_json("optimized_spectrum.json", &js.to_record())?;

    println!(
        "best cost {:.3e} at iteration {} (final {:.3e})",
        outcome.trace.best_cost, outcome.trace.best_iteration, final_cost
    );
    println!("wrote {}", out.path("optimize.json").display());
    Ok(())
}
