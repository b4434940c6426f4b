//! `mask`: SLM phase holograms for the scenario's pump superposition and for
//! the subspace's detection modes.
//!
//! The pump mask encodes the display-waist superposition; each detection mask
//! encodes the modified radial profile (true-waist ring, display-waist
//! envelope) that compensates a finite incident beam. `--verify` runs the
//! scalar-diffraction oracle and reports first-order overlaps.

use std::collections::BTreeSet;
use std::path::Path;

use oamlab::linalg::C64;
use oamlab::{
    diffraction_oracle, encode_mask, field_overlap, lg_field, modified_lg_field,
    superposition_field, Error, MaskConfig, PhaseMask, Result,
};
use serde::Serialize;

use crate::commands::CommonArgs;
use crate::output::OutputDir;
use crate::scenario::{ComponentSpec, Scenario};

#[derive(Debug, clap::Args)]
pub struct MaskArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// JSON coefficients file `[{"l": -2, "re": 0.76, "im": -0.11}, ...]`
    /// instead of the scenario's pump section
    #[arg(long, value_name = "PATH")]
    pub coefficients: Option<std::path::PathBuf>,
    /// Run the scalar-diffraction oracle and report first-order overlaps
    #[arg(long)]
    pub verify: bool,
}

fn load_coefficients(path: &Path) -> Result<Vec<(i32, C64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("cannot read coefficients file {}: {e}", path.display()),
        ))
    })?;
    let specs: Vec<ComponentSpec> = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("coefficients file {}: {e}", path.display())))?;
    if specs.is_empty() {
        return Err(Error::Format(format!(
            "coefficients file {} is empty",
            path.display()
        )));
    }
    let mut seen = BTreeSet::new();
    for s in &specs {
        if !s.re.is_finite() || !s.im.is_finite() {
            return Err(Error::Format(format!(
                "coefficients file {}: l = {} is not finite",
                path.display(),
                s.l
            )));
        }
        if !seen.insert(s.l) {
            return Err(Error::Format(format!(
                "coefficients file {}: duplicate l = {}",
                path.display(),
                s.l
            )));
        }
    }
    Ok(specs.iter().map(|s| (s.l, C64::new(s.re, s.im))).collect())
}

/// Scenario pump coefficients for display, without physical normalization
/// (the encoder normalizes amplitudes itself).
fn scenario_coefficients(scenario: &Scenario) -> Vec<(i32, C64)> {
    if scenario.pump.components.is_empty() {
        vec![(0, C64::new(1.0, 0.0))]
    } else {
        scenario
            .pump
            .components
            .iter()
            .map(|c| (c.l, C64::new(c.re, c.im)))
            .collect()
    }
}

#[derive(Serialize)]
struct CoefficientSidecar {
    l: i32,
    re: f64,
    im: f64,
}

#[derive(Serialize)]
struct MaskSidecar {
    schema_version: u32,
    kind: String,
    /// Detection OAM for detection masks, `null` for the pump mask.
    l: Option<i32>,
    display_waist_um: f64,
    /// True detection-mode waist for detection masks.
    detection_waist_um: Option<f64>,
    coefficients: Option<Vec<CoefficientSidecar>>,
    config: MaskConfig,
}

#[derive(Serialize)]
struct DetectionOverlap {
    l: i32,
    overlap: f64,
}

#[derive(Serialize)]
struct MaskReport {
    schema_version: u32,
    incident_waist_um: Option<f64>,
    /// Incident waist used to verify detection masks; defaults to the waist
    /// the modified profile is designed for.
    detection_incident_waist_um: f64,
    pump_overlap: f64,
    detection: Vec<DetectionOverlap>,
}

fn write_mask(out: &OutputDir, name: &str, mask: &PhaseMask, sidecar: &MaskSidecar) -> Result<()> {
    mask.write_pgm(out.create(&format!("{name}.pgm"))?)?;
    out.write_json(&format!("{name}.json"), sidecar)?;
    Ok(())
}

/// Encode the pump mask and, with `verify`, its first-order overlap.
/// Shared with `pipeline`.
pub fn pump_mask_stage(
    out: &OutputDir,
    coefficients: &[(i32, C64)],
    scenario: &Scenario,
    verify: bool,
) -> Result<Option<f64>> {
    let cfg = scenario.mask_config()?;
    let display_waist = scenario.display_waist_m();
    let target = superposition_field(coefficients, display_waist, &cfg)?;
    let mask = encode_mask(&target, &cfg)?;
    let sidecar = MaskSidecar {
        schema_version: oamlab::SCHEMA_VERSION,
        kind: "pump".into(),
        l: None,
        display_waist_um: scenario.mask.display_waist_um,
        detection_waist_um: None,
        coefficients: Some(
            coefficients
                .iter()
                .map(|&(l, c)| CoefficientSidecar {
                    l,
                    re: c.re,
                    im: c.im,
                })
                .collect(),
        ),
        config: cfg.clone(),
    };
    write_mask(out, "pump_mask", &mask, &sidecar)?;
    if !verify {
        return Ok(None);
    }
    let output = diffraction_oracle(&mask, cfg.incident_waist_m, &cfg)?;
    Ok(Some(field_overlap(&output, &target)?))
}

pub fn run(args: &MaskArgs) -> Result<()> {
    let scenario = args.common.load_scenario_or_default()?;
    let out = args.common.output_dir(&scenario)?;
    let coefficients = match &args.coefficients {
        Some(path) => load_coefficients(path)?,
        None => scenario_coefficients(&scenario),
    };

    let pump_overlap = pump_mask_stage(&out, &coefficients, &scenario, args.verify)?;

    // Detection masks: one per distinct OAM among the subspace legs.
    let cfg = scenario.mask_config()?;
    let display_waist = scenario.display_waist_m();
    let ratio = scenario.mask.detection_ratio;
    let detection_waist = display_waist / ratio;
    // The modified profile assumes a finite incident Gaussian whose envelope,
    // multiplied by the displayed display-waist envelope, reproduces the
    // true detection ring. Verify against that design waist unless the
    // scenario pins an incident waist explicitly.
    let detection_incident = cfg
        .incident_waist_m
        .unwrap_or(display_waist / (ratio * ratio - 1.0).sqrt());
    let subspace = scenario.build_subspace()?;
    let legs: BTreeSet<i32> = subspace
        .pairs()
        .iter()
        .flat_map(|&(s, i)| [s, i])
        .collect();
    let mut detection_overlaps = Vec::new();
    for &l in &legs {
        let field = modified_lg_field(l, display_waist, detection_waist, &cfg)?;
        let mask = encode_mask(&field, &cfg)?;
        let sidecar = MaskSidecar {
            schema_version: oamlab::SCHEMA_VERSION,
            kind: "detection".into(),
            l: Some(l),
            display_waist_um: scenario.mask.display_waist_um,
            detection_waist_um: Some(
                scenario.mask.display_waist_um / scenario.mask.detection_ratio,
            ),
            coefficients: None,
            config: cfg.clone(),
        };
        write_mask(&out, &format!("detection_l{l}"), &mask, &sidecar)?;
        if args.verify {
            let output = diffraction_oracle(&mask, Some(detection_incident), &cfg)?;
            let true_mode = lg_field(l, detection_waist, &cfg)?;
            detection_overlaps.push(DetectionOverlap {
                l,
                overlap: field_overlap(&output, &true_mode)?,
            });
        }
    }

    if args.verify {
        let report = MaskReport {
            schema_version: oamlab::SCHEMA_VERSION,
            incident_waist_um: scenario.mask.incident_waist_um,
            detection_incident_waist_um: detection_incident / 1e-6,
            pump_overlap: pump_overlap.expect("verify implies an overlap"),
            detection: detection_overlaps,
        };
        out.write_json("mask_report.json", &report)?;
        println!(
            "pump mask first-order overlap = {:.4}",
            report.pump_overlap
        );
    } else {
        println!(
            "wrote pump mask and {} detection masks to {}",
            legs.len(),
            out.path("").display()
        );
    }
    Ok(())
}
