//! `tomo`: full two-qutrit state tomography, either simulating the 225
//! projector-pair counts from the scenario's carved state or ingesting a
//! counts file recorded elsewhere.
//!
//! The scenario may sweep several pump rotations; each rotation gets its own
//! counts / density / report files plus one sweep summary. Counts files are
//! JSON lines: a schema line followed by `{"setting": k, "count": n}` records
//! in the signal-major projector order.

use std::io::Write;
use std::path::Path;

use oamlab::linalg::fidelity;
use oamlab::tomography::TomographyReport;
use oamlab::{
    bootstrap_errors, joint_amplitude, projector_counts, reconstruct_with_options, rotate_pump,
    tomography_report, DensityRecord, Error, FitOptions, QuantumState, Reconstruction, Result,
    StateVector,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::commands::{sweep_tag, CommonArgs};
use crate::output::OutputDir;
use crate::scenario::{require_seed, Scenario};

#[derive(Debug, clap::Args)]
pub struct TomoArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Ingest a 225-setting JSON-lines counts file instead of simulating
    #[arg(long, value_name = "PATH")]
    pub counts: Option<std::path::PathBuf>,
}

const N_SETTINGS: usize = 225;

#[derive(Serialize, Deserialize)]
struct CountLine {
    setting: usize,
    count: u64,
}

/// Read a counts file, reporting malformed lines by number.
pub fn read_counts(path: &Path) -> Result<Vec<u64>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("cannot read counts file {}: {e}", path.display()),
        ))
    })?;
    let mut counts: Vec<Option<u64>> = vec![None; N_SETTINGS];
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(trimmed).map_err(|e| {
            Error::Format(format!(
                "counts file {} line {line_no}: {e}",
                path.display()
            ))
        })?;
        if value.get("schema_version").is_some() {
            // Header line; nothing further to validate against yet.
            continue;
        }
        let parsed: CountLine = serde_json::from_value(value).map_err(|e| {
            Error::Format(format!(
                "counts file {} line {line_no}: {e}",
                path.display()
            ))
        })?;
        if parsed.setting >= N_SETTINGS {
            return Err(Error::Format(format!(
                "counts file {} line {line_no}: setting {} outside 0..{}",
                path.display(),
                parsed.setting,
                N_SETTINGS - 1
            )));
        }
        if counts[parsed.setting].replace(parsed.count).is_some() {
            return Err(Error::Format(format!(
                "counts file {} line {line_no}: duplicate setting {}",
                path.display(),
                parsed.setting
            )));
        }
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(setting, c)| {
            c.ok_or_else(|| {
                Error::Format(format!(
                    "counts file {}: setting {setting} is missing",
                    path.display()
                ))
            })
        })
        .collect()
}

/// Write a counts file in the format `read_counts` accepts.
pub fn write_counts(out: &OutputDir, name: &str, counts: &[u64]) -> Result<()> {
    let mut file = out.create(name)?;
    writeln!(
        file,
        "{}",
        serde_json::json!({ "schema_version": oamlab::SCHEMA_VERSION, "settings": counts.len() })
    )?;
    for (setting, &count) in counts.iter().enumerate() {
        let line = serde_json::to_string(&CountLine { setting, count })
            .map_err(|e| Error::Format(format!("cannot serialize counts: {e}")))?;
        writeln!(file, "{line}")?;
    }
    file.flush()?;
    Ok(())
}

/// Carve the scenario's qutrit state with an extra pump rotation on top of
/// the scenario's own.
pub fn carve_state(scenario: &Scenario, extra_rotation: f64) -> Result<StateVector> {
    let crystal = scenario.build_crystal()?;
    let mut pump = scenario.build_pump(&crystal)?;
    if extra_rotation != 0.0 {
        pump = rotate_pump(&pump, extra_rotation);
    }
    let det = scenario.build_detection(&crystal)?;
    let js = joint_amplitude(&pump, &crystal, &det)?;
    StateVector::from_spectrum(&js, &scenario.build_subspace()?)
}

/// One reconstruction: fit, optional bootstrap, report.
pub struct Analysis {
    pub reconstruction: Reconstruction,
    pub report: TomographyReport,
}

pub fn analyze<R: Rng + ?Sized>(
    counts: &[u64],
    options: &FitOptions,
    bootstrap_resamples: usize,
    rng: &mut R,
) -> Result<Analysis> {
    let reconstruction = reconstruct_with_options(counts, options, rng)?;
    let bootstrap = if bootstrap_resamples > 0 {
        Some(bootstrap_errors(counts, bootstrap_resamples, options, rng)?)
    } else {
        None
    };
    let report = tomography_report(&reconstruction, bootstrap.as_ref())?;
    Ok(Analysis {
        reconstruction,
        report,
    })
}

#[derive(Serialize)]
struct ReportOut {
    schema_version: u32,
    /// Extra pump rotation of this run, radians; `null` for ingested counts.
    theta_rad: Option<f64>,
    /// Uhlmann fidelity against the known carved state; `null` when the
    /// counts came from a file.
    fidelity_to_target: Option<f64>,
    converged_starts: usize,
    evaluations: u64,
    report: TomographyReport,
}

#[derive(Serialize)]
struct SweepEntry {
    theta_rad: f64,
    phases: Vec<f64>,
    purity: f64,
    lambda_max: f64,
    fidelity_to_target: f64,
}

#[derive(Serialize)]
struct SweepSummary {
    schema_version: u32,
    entries: Vec<SweepEntry>,
}

pub fn write_analysis(
    out: &OutputDir,
    tag: &str,
    analysis: &Analysis,
    theta: Option<f64>,
    fidelity_to_target: Option<f64>,
) -> Result<()> {
    let record = DensityRecord::from_density(&analysis.reconstruction.rho);
    out.write_json(&format!("rho{tag}.json"), &record)?;
    oamlab::write_density_csv(
        &analysis.reconstruction.rho,
        out.create(&format!("rho{tag}.csv"))?,
    )?;
    let report = ReportOut {
        schema_version: oamlab::SCHEMA_VERSION,
        theta_rad: theta,
        fidelity_to_target,
        converged_starts: analysis.reconstruction.converged_starts,
        evaluations: analysis.reconstruction.evaluations,
        report: analysis.report.clone(),
    };
    out.write_json(&format!("report{tag}.json"), &report)?;
    Ok(())
}

pub fn run(args: &TomoArgs) -> Result<()> {
    let scenario = args.common.load_scenario_or_default()?;
    let out = args.common.output_dir(&scenario)?;
    let seed = require_seed(&scenario, args.common.seed, "tomography")?;
    let options = scenario.fit_options()?;
    let resamples = scenario.tomography.bootstrap_resamples;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    if let Some(counts_path) = &args.counts {
        let counts = read_counts(counts_path)?;
        let analysis = analyze(&counts, &options, resamples, &mut rng)?;
        write_analysis(&out, "", &analysis, None, None)?;
        println!(
            "purity {:.4}, lambda_max {:.4}, chi^2 {:.3e}",
            analysis.report.purity, analysis.report.lambda_max, analysis.report.chi_squared
        );
        return Ok(());
    }

    let rotations = scenario.tomography.rotations_rad.clone();
    let mut entries = Vec::new();
    for (k, &theta) in rotations.iter().enumerate() {
        let tag = sweep_tag(k, rotations.len());
        let psi = carve_state(&scenario, theta)?;
        let counts = projector_counts(
            &QuantumState::Pure(psi.clone()),
            scenario.tomography.counts_total,
            &mut rng,
        )?;
        write_counts(&out, &format!("counts{tag}.jsonl"), &counts)?;
        let analysis = analyze(&counts, &options, resamples, &mut rng)?;
        let fid = fidelity(
            analysis.reconstruction.rho.matrix(),
            psi.to_density().matrix(),
        )?;
        write_analysis(&out, &tag, &analysis, Some(theta), Some(fid))?;
        println!(
            "theta {theta:.4}: fidelity {fid:.4}, purity {:.4}, lambda_max {:.4}",
            analysis.report.purity, analysis.report.lambda_max
        );
        entries.push(SweepEntry {
            theta_rad: theta,
            phases: analysis.report.phases.iter().map(|p| p.phase).collect(),
            purity: analysis.report.purity,
            lambda_max: analysis.report.lambda_max,
            fidelity_to_target: fid,
        });
    }
    if rotations.len() > 1 {
        let summary = SweepSummary {
            schema_version: oamlab::SCHEMA_VERSION,
            entries,
        };
        out.write_json("sweep.json", &summary)?;
    }
    Ok(())
}
