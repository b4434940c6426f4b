//! `spectrum`: joint OAM spectrum of the scenario's pump superposition.
//!
//! Writes the probability matrix as labeled CSV plus a JSON record with the
//! complex amplitudes. Single-OAM pumps additionally get the azimuthal
//! Schmidt number of their conservation diagonal.

use oamlab::spdc::SpectrumRecord;
use oamlab::{azimuthal_schmidt_number, joint_amplitude, JointSpectrum, Result};
use serde::Serialize;

use crate::commands::CommonArgs;
use crate::scenario::Scenario;

#[derive(Debug, clap::Args)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Serialize)]
struct SpectrumSummary {
    schema_version: u32,
    /// Azimuthal Schmidt number of the conservation diagonal; only defined
    /// for single-OAM pumps, `null` for superpositions.
    k_azimuthal: Option<f64>,
    spectrum: SpectrumRecord,
}

/// Spectrum plus the Schmidt number when the pump carries a single OAM.
pub fn compute(scenario: &Scenario) -> Result<(JointSpectrum, Option<f64>)> {
    let crystal = scenario.build_crystal()?;
    let pump = scenario.build_pump(&crystal)?;
    let det = scenario.build_detection(&crystal)?;
    let js = joint_amplitude(&pump, &crystal, &det)?;
    let components = pump.components();
    let k_azimuthal = if components.len() == 1 {
        let lambdas: Vec<f64> = js
            .diagonal_probabilities(components[0])
            .into_iter()
            .map(|(_, p)| p)
            .collect();
        Some(azimuthal_schmidt_number(&lambdas)?)
    } else {
        None
    };
    Ok((js, k_azimuthal))
}

pub fn run(args: &SpectrumArgs) -> Result<()> {
    let scenario = args.common.load_scenario()?;
    let out = args.common.output_dir(&scenario)?;
    let (js, k_azimuthal) = compute(&scenario)?;

    let labels: Vec<i32> = (scenario.detection.l_min..=scenario.detection.l_max).collect();
    let csv = out.write_labeled_csv("spectrum.csv", &js.probabilities(), &labels, &labels)?;
    let summary = SpectrumSummary {
        schema_version: oamlab::SCHEMA_VERSION,
        k_azimuthal,
        spectrum: js.to_record(),
    };
    let json = out.write_json("spectrum.json", &summary)?;

    match k_azimuthal {
        Some(k) => println!("K_az = {k:.4}"),
        None => println!("K_az undefined for a multi-component pump"),
    }
    println!("wrote {} and {}", json.display(), csv.display());
    Ok(())
}
