//! `bell`: CGLMP three-outcome Bell parameter of the scenario's carved state
//! or of a density matrix written by `tomo`.
//!
//! The exact value always appears in the report; with a shot budget the
//! headline value becomes a Poissonian counts estimate. Optional extras:
//! white-noise admixture, analyzer phase corrections, and the asymmetric
//! gamma-family scan.

use std::path::Path;

use oamlab::bell::{bell_i3, joint_outcome_table, BellSettings, OutcomeTable};
use oamlab::{
    apply_white_noise, cglmp_bases, gamma_scan, i3_value, DensityRecord, Error, QuantumState,
    Result, StateVector,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;
use serde::Serialize;

use crate::commands::{tomo, CommonArgs};
use crate::scenario::require_seed;

#[derive(Debug, clap::Args)]
pub struct BellArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Density-matrix JSON (as written by `tomo`) instead of the scenario carve
    #[arg(long, value_name = "PATH")]
    pub state: Option<std::path::PathBuf>,
    /// Also scan the asymmetric-state family for the maximal violation
    #[arg(long)]
    pub gamma_scan: bool,
    /// Estimate I3 from Poisson counts with this expected total per analyzer pair
    #[arg(long, value_name = "N")]
    pub shots: Option<u64>,
}

/// Carved state with the scenario's white-noise admixture applied.
pub fn noisy_state(psi: &StateVector, noise_p: f64) -> Result<QuantumState> {
    if noise_p < 1.0 {
        Ok(QuantumState::Mixed(apply_white_noise(psi, noise_p)?))
    } else {
        Ok(QuantumState::Pure(psi.clone()))
    }
}

fn load_state_file(path: &Path) -> Result<QuantumState> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("cannot read state file {}: {e}", path.display()),
        ))
    })?;
    let record: DensityRecord = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("state file {}: {e}", path.display())))?;
    Ok(QuantumState::Mixed(record.to_density()?))
}

/// Counts-based estimate: Poisson counts with the given expected total per
/// analyzer pair, renormalized per pair.
pub fn i3_from_counts<R: Rng + ?Sized>(
    state: &QuantumState,
    settings: &BellSettings,
    expected_per_setting: u64,
    rng: &mut R,
) -> Result<f64> {
    if expected_per_setting == 0 {
        return Err(Error::Config("bell shot budget must be at least 1".into()));
    }
    let table = joint_outcome_table(state, settings)?;
    let mut flat = Vec::with_capacity(36);
    for a in 1..=2usize {
        for b in 1..=2usize {
            let mut counts = [[0u64; 3]; 3];
            let mut total = 0u64;
            for (n, row) in counts.iter_mut().enumerate() {
                for (m, slot) in row.iter_mut().enumerate() {
                    let lambda = expected_per_setting as f64 * table.probability(a, b, n, m);
                    if lambda > 0.0 {
                        let poisson = Poisson::new(lambda).map_err(|e| {
                            Error::Numerical(format!("poisson sampler: {e}"))
                        })?;
                        *slot = rng.sample::<f64, _>(poisson).round() as u64;
                    }
                    total += *slot;
                }
            }
            if total == 0 {
                return Err(Error::Estimation(format!(
                    "no counts recorded for analyzer pair ({a}, {b})"
                )));
            }
            for row in &counts {
                for &c in row {
                    flat.push(c as f64 / total as f64);
                }
            }
        }
    }
    Ok(bell_i3(&OutcomeTable::from_flat(&flat)?))
}

#[derive(Serialize)]
struct GammaScanOut {
    gamma_max: f64,
    i3_max: f64,
}

#[derive(Serialize)]
struct BellSummary {
    schema_version: u32,
    /// Headline value: the counts estimate when a shot budget is set,
    /// otherwise the exact value.
    i3: f64,
    i3_exact: f64,
    shots: Option<u64>,
    noise_p: f64,
    phase1_rad: f64,
    phase2_rad: f64,
    state_source: String,
    gamma_scan: Option<GammaScanOut>,
}

pub fn run(args: &BellArgs) -> Result<()> {
    let scenario = args.common.load_scenario_or_default()?;
    let out = args.common.output_dir(&scenario)?;
    let shots = args.shots.or(scenario.bell.shots);

    let (state, state_source) = match &args.state {
        Some(path) => {
            if scenario.bell.noise_p < 1.0 {
                return Err(Error::Config(
                    "white-noise admixture applies to scenario carves only, \
                     not to ingested density matrices"
                        .into(),
                ));
            }
            (load_state_file(path)?, path.display().to_string())
        }
        None => {
            let psi = tomo::carve_state(&scenario, 0.0)?;
            (
                noisy_state(&psi, scenario.bell.noise_p)?,
                "scenario".to_string(),
            )
        }
    };

    let settings = cglmp_bases(scenario.bell.phase1_rad, scenario.bell.phase2_rad);
    let i3_exact = i3_value(&state, &settings)?;
    let i3 = match shots {
        Some(n) => {
            let seed = require_seed(&scenario, args.common.seed, "the counts estimate")?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            i3_from_counts(&state, &settings, n, &mut rng)?
        }
        None => i3_exact,
    };
    let scan = if args.gamma_scan || scenario.bell.gamma_scan {
        let (gamma_max, i3_max) = gamma_scan()?;
        Some(GammaScanOut { gamma_max, i3_max })
    } else {
        None
    };

    let summary = BellSummary {
        schema_version: oamlab::SCHEMA_VERSION,
        i3,
        i3_exact,
        shots,
        noise_p: scenario.bell.noise_p,
        phase1_rad: scenario.bell.phase1_rad,
        phase2_rad: scenario.bell.phase2_rad,
        state_source,
        gamma_scan: scan,
    };
    out.write_json("bell.json", &summary)?;
    println!("I3 = {i3:.4} (exact {i3_exact:.4})");
    if let Some(s) = &summary.gamma_scan {
        println!(
            "gamma scan: maximum I3 = {:.4} at gamma = {:.3}",
            s.i3_max, s.gamma_max
        );
    }
    Ok(())
}
