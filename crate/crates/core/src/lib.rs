//! Desk-scale digital twin of an orbital-angular-momentum entangled
//! photon-pair source.
//!
//! The crate models collinear degenerate down-conversion pumped by a
//! superposition of Laguerre-Gauss beams and covers the full experiment
//! cycle around it:
//!
//! * [`modes`] — LG mode math, pump superpositions, rotation phase law;
//! * [`spdc`] — joint two-photon OAM amplitudes, azimuthal Schmidt number,
//!   and a brute-force sinc-phase-matching oracle;
//! * [`detection`] — Born probabilities, white-noise states, Poissonian
//!   coincidence counting;
//! * [`spsa`] — simultaneous-perturbation stochastic approximation of the
//!   pump coefficients that equalizes qudit amplitudes;
//! * [`bell`] — CGLMP qutrit Bell test with optimal measurement bases;
//! * [`tomography`] — Gell-Mann projector design, Cholesky-parametrized
//!   density-matrix reconstruction, bootstrap error bars;
//! * [`holograms`] — exact amplitude-and-phase SLM mask encoding with an
//!   FFT diffraction oracle.
//!
//! Everything is deterministic under explicit seeds; no global RNG state.

pub mod bell;
pub mod detection;
pub mod error;
pub mod holograms;
pub mod linalg;
pub mod modes;
pub mod quad;
pub mod spdc;
pub mod spsa;
pub mod tomography;

/// Version tag embedded in every serialized artifact.
pub const SCHEMA_VERSION: u32 = 1;

pub use bell::{
    bell_i3, cglmp_bases, gamma_scan, gamma_state, i3_phase_corrected, i3_report, i3_value,
    joint_outcome_table, joint_outcome_table_counts, BellSettings, I3Report, OutcomeTable,
};
pub use detection::{
    apply_white_noise, born_probability, simulate_counts, subspace_probabilities, CountRecord,
    DensityMatrix, QuantumState, ShotMode, StateVector, Subspace,
};
pub use error::{Error, Result};
pub use holograms::{
    diffraction_oracle, encode_mask, field_overlap, inverse_sinc, lg_field, modified_lg_field,
    superposition_field, MaskConfig, PhaseMask,
};
pub use linalg::{eigh, fidelity, C64};
pub use modes::{
    hg10_in_lg_basis, lg_amplitude, mode_inner_product, rotate_pump, LgSpec, PumpProfile,
};
pub use spdc::{
    azimuthal_schmidt_number, joint_amplitude, joint_amplitude_raw, optimal_waists, sinc_oracle,
    CrystalConfig, DetectionConfig, JointSpectrum, PhaseMatching, SpectrumRecord,
};
pub use spsa::{
    fit_exponential_rate, run_optimization, spsa_gains, spsa_step, variance_cost,
    OptimizationTrace, SpectrumLab, SpsaConfig, TraceRecord,
};
pub use tomography::{
    bootstrap_errors, chi_squared, chi_squared_detailed, closest_pure_state,
    density_from_cholesky, extract_phases, gell_mann_eigenvectors, pair_projectors,
    predicted_probabilities, projector_counts, projector_probabilities, reconstruct,
    reconstruct_with_options, tomography_report, write_density_csv, BootstrapReport,
    CholeskyParams, DensityRecord, FitOptions, PhaseEstimate, ProjectorSet, PureEstimate,
    Reconstruction, TomographyReport,
};
