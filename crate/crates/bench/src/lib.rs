//! Shared fixtures for the criterion benchmarks: a standard crystal /
//! detection geometry and the qutrit-carving pump, built once per bench.

use oamlab::linalg::C64;
use oamlab::{CrystalConfig, DetectionConfig, PumpProfile, Subspace};

/// Standard 15 mm / 405 nm crystal with the collection-matched geometry.
pub fn standard_setup() -> (CrystalConfig, DetectionConfig, f64) {
    let crystal = CrystalConfig::default();
    let (pump_waist, _) = oamlab::optimal_waists(&crystal);
    let detection = DetectionConfig::matched(&crystal);
    (crystal, detection, pump_waist)
}

/// Three-component pump that concentrates the spectrum on the qutrit
/// diagonals.
pub fn qutrit_pump(waist_m: f64) -> PumpProfile {
    PumpProfile::from_components(
        waist_m,
        &[
            (-2, C64::new(0.76, 0.0)),
            (0, C64::new(0.49, 0.0)),
            (2, C64::new(0.43, 0.0)),
        ],
    )
    .expect("valid pump")
}

/// The standard diagonal qutrit target.
pub fn qutrit_subspace() -> Subspace {
    Subspace::qutrit()
}
