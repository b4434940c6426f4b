//! Transverse-mode mathematics: Laguerre-Gauss amplitudes, pump-beam
//! superpositions, and the rotation law for pump coefficients.
//!
//! Only the p = 0 radial class is representable: the waist-plane field of
//! LG_0^l with beam waist w is
//!
//! ```text
//! LG_0^l(rho, phi) = sqrt(2 / (pi |l|!)) * (1/w) * (sqrt(2) rho / w)^|l|
//!                    * exp(-rho^2 / w^2) * exp(i l phi)
//! ```
//!
//! normalized so the transverse intensity integrates to one. Rotating the
//! beam about its axis by an angle `theta` multiplies each component by
//! `exp(i l theta)`; that rephasing is how all downstream phase laws are
//! driven.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::quad::integrate_adaptive;

/// Factorial as a float; inputs here are small azimuthal indices.
pub(crate) fn factorial(n: u32) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// A single Laguerre-Gauss mode specification (azimuthal index `l`, radial
/// index fixed to zero, beam waist in meters).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LgSpec {
    l: i32,
    p: u32,
    waist_m: f64,
}

impl LgSpec {
    /// Build a mode spec. Only `p = 0` is representable; positive radial
    /// indices are rejected at construction time.
    pub fn new(l: i32, p: u32, waist_m: f64) -> Result<Self> {
        if p != 0 {
            return Err(Error::Domain(format!(
                "only p = 0 modes are representable, got p = {p}"
            )));
        }
        if !(waist_m > 0.0) || !waist_m.is_finite() {
            return Err(Error::Domain(format!(
                "beam waist must be positive and finite, got {waist_m}"
            )));
        }
        Ok(Self { l, p, waist_m })
    }

    pub fn l(&self) -> i32 {
        self.l
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn waist_m(&self) -> f64 {
        self.waist_m
    }
}

/// Radial factor of the normalized LG_0^l field (everything except the
/// azimuthal phase). Real and nonnegative.
pub fn lg_radial(l: i32, waist: f64, rho: f64) -> f64 {
    let la = l.unsigned_abs();
    let norm = (2.0 / (std::f64::consts::PI * factorial(la))).sqrt() / waist;
    let scaled = std::f64::consts::SQRT_2 * rho / waist;
    norm * scaled.powi(la as i32) * (-rho * rho / (waist * waist)).exp()
}

/// Unit-normalized LG_0^l field value at polar coordinates (`rho`, `phi`).
pub fn lg_amplitude(spec: &LgSpec, rho: f64, phi: f64) -> C64 {
    debug_assert!(rho >= 0.0, "radial coordinate must be nonnegative");
    let radial = lg_radial(spec.l, spec.waist_m, rho);
    C64::from_polar(radial, spec.l as f64 * phi)
}

/// First-order Hermite-Gauss mode expressed in the LG basis:
/// HG10 = (|l=-1> + |l=+1>) / sqrt(2).
pub fn hg10_in_lg_basis() -> Vec<(i32, C64)> {
    let c = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    vec![(-1, c), (1, c)]
}

/// A pump beam as a normalized superposition of LG_0^l components sharing one
/// waist. The accumulated rotation angle is tracked for provenance; the
/// coefficients themselves already include the rotation phases.
#[derive(Debug, Clone, PartialEq)]
pub struct PumpProfile {
    waist_m: f64,
    coefficients: BTreeMap<i32, C64>,
    rotation_rad: f64,
}

impl PumpProfile {
    /// Build a pump profile; coefficients are normalized to unit total power.
    pub fn new(waist_m: f64, coefficients: BTreeMap<i32, C64>) -> Result<Self> {
        if !(waist_m > 0.0) || !waist_m.is_finite() {
            return Err(Error::Domain(format!(
                "pump waist must be positive and finite, got {waist_m}"
            )));
        }
        if coefficients.is_empty() {
            return Err(Error::DegenerateInput("pump has no components".into()));
        }
        if coefficients.values().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::Domain("pump coefficients must be finite".into()));
        }
        let power: f64 = coefficients.values().map(|c| c.norm_sqr()).sum();
        if power <= 0.0 {
            return Err(Error::DegenerateInput(
                "pump coefficients are all zero".into(),
            ));
        }
        let scale = power.sqrt();
        let coefficients = coefficients
            .into_iter()
            .map(|(l, c)| (l, c / scale))
            .collect();
        Ok(Self {
            waist_m,
            coefficients,
            rotation_rad: 0.0,
        })
    }

    /// Pure Gaussian pump (single l = 0 component).
    pub fn gaussian(waist_m: f64) -> Result<Self> {
        Self::from_components(waist_m, &[(0, C64::new(1.0, 0.0))])
    }

    /// Convenience constructor from a component slice.
    pub fn from_components(waist_m: f64, comps: &[(i32, C64)]) -> Result<Self> {
        Self::new(waist_m, comps.iter().cloned().collect())
    }

    pub fn waist_m(&self) -> f64 {
        self.waist_m
    }

    pub fn coefficients(&self) -> &BTreeMap<i32, C64> {
        &self.coefficients
    }

    /// Coefficient of component `l`, zero when absent.
    pub fn coefficient(&self, l: i32) -> C64 {
        self.coefficients
            .get(&l)
            .copied()
            .unwrap_or(C64::new(0.0, 0.0))
    }

    /// Sorted list of component indices.
    pub fn components(&self) -> Vec<i32> {
        self.coefficients.keys().copied().collect()
    }

    /// Accumulated rotation angle in radians.
    pub fn rotation_rad(&self) -> f64 {
        self.rotation_rad
    }

    /// Total power; equals 1 after construction, exposed for invariant checks.
    pub fn total_power(&self) -> f64 {
        self.coefficients.values().map(|c| c.norm_sqr()).sum()
    }

    /// Replace the coefficients with an equally-shaped normalized set,
    /// preserving waist and rotation bookkeeping.
    pub fn with_coefficients(&self, coefficients: BTreeMap<i32, C64>) -> Result<Self> {
        let mut p = Self::new(self.waist_m, coefficients)?;
        p.rotation_rad = self.rotation_rad;
        Ok(p)
    }
}

/// Rotate the pump beam about its axis: every component picks up
/// `exp(i l theta)`, so the l = +2 component acquires +2 theta. Magnitudes
/// (and hence total power) are preserved exactly.
pub fn rotate_pump(profile: &PumpProfile, theta: f64) -> PumpProfile {
    let coefficients = profile
        .coefficients
        .iter()
        .map(|(&l, &c)| (l, c * C64::from_polar(1.0, l as f64 * theta)))
        .collect();
    PumpProfile {
        waist_m: profile.waist_m,
        coefficients,
        rotation_rad: profile.rotation_rad + theta,
    }
}

/// Inner product <a|b> of two LG modes. The azimuthal integral vanishes
/// identically for different `l`, so only the radial quadrature remains for
/// matching indices; it is evaluated adaptively over [0, 6 max(w)].
pub fn mode_inner_product(a: &LgSpec, b: &LgSpec) -> Result<C64> {
    if a.l != b.l {
        return Ok(C64::new(0.0, 0.0));
    }
    let rmax = 6.0 * a.waist_m.max(b.waist_m);
    let integrand = |rho: f64| lg_radial(a.l, a.waist_m, rho) * lg_radial(b.l, b.waist_m, rho) * rho;
    let radial = integrate_adaptive(integrand, 0.0, rmax, 16, 1e-10, 4096)?;
    Ok(C64::new(2.0 * std::f64::consts::PI * radial, 0.0))
}
