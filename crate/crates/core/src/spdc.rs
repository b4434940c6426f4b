//! Joint two-photon OAM amplitudes from collinear degenerate down-conversion.
//!
//! In the transverse-momentum representation the two-photon amplitude is
//!
//! ```text
//! Phi(q_s, q_i) = E_p(q_s + q_i) * chi(|q_s - q_i|^2)
//! ```
//!
//! where `E_p` is the angular spectrum of the pump and `chi` the longitudinal
//! phase-matching factor with paraxial mismatch `dk_z = |q_s - q_i|^2 / (4
//! k_p)`: `chi = sinc(L dk_z / 2)` exactly, or `chi = exp(-a_G L dk_z / 2)`
//! in the Gaussian approximation. Projecting onto momentum-space LG detection
//! modes `D_l` of waist `2/sigma` gives the joint OAM matrix
//!
//! ```text
//! c[l_s][l_i] = Iint Phi(q_s, q_i) D*_{l_s}(q_s) D*_{l_i}(q_i) d^2q_s d^2q_i.
//! ```
//!
//! The azimuthal integrals are performed analytically, which enforces OAM
//! conservation `l_p = l_s + l_i` exactly: entries away from a pump component
//! diagonal are identically zero, not merely small. The remaining double
//! radial integral couples through one relative angle and is evaluated with
//! Gauss-Legendre nodes radially and a uniform (spectrally accurate) angular
//! grid. A brute-force 4D Cartesian oracle with the exact sinc kernel
//! cross-checks the fast path.

use std::collections::BTreeMap;
use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::modes::{lg_radial, PumpProfile};
use crate::quad::gauss_legendre_on;

/// Longitudinal phase-matching model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseMatching {
    /// Gaussian approximation `exp(-a_G * L * dk_z / 2)`.
    Gaussian,
    /// Exact `sinc(L * dk_z / 2)`.
    Sinc,
}

/// Nonlinear crystal and pump-wavevector configuration.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CrystalConfig {
    /// Crystal length in meters.
    pub length_m: f64,
    /// Pump wavevector inside the crystal, radians per meter.
    pub k_p_rad_per_m: f64,
    /// Phase-matching model for `joint_amplitude`.
    pub model: PhaseMatching,
    /// Gaussian fit constant for the approximate model.
    pub a_g: f64,
}

impl CrystalConfig {
    /// Least-squares Gaussian fit of sinc over its main lobe.
    pub const DEFAULT_A_G: f64 = 0.455;

    pub fn new(length_m: f64, k_p_rad_per_m: f64, model: PhaseMatching, a_g: f64) -> Result<Self> {
        if !(length_m > 0.0) || !length_m.is_finite() {
            return Err(Error::Domain(format!(
                "crystal length must be positive, got {length_m}"
            )));
        }
        if !(k_p_rad_per_m > 0.0) || !k_p_rad_per_m.is_finite() {
            return Err(Error::Domain(format!(
                "pump wavevector must be positive, got {k_p_rad_per_m}"
            )));
        }
        if !(a_g > 0.0) || !a_g.is_finite() {
            return Err(Error::Domain(format!(
                "gaussian fit constant must be positive, got {a_g}"
            )));
        }
        Ok(Self {
            length_m,
            k_p_rad_per_m,
            model,
            a_g,
        })
    }

    /// Build from the vacuum pump wavelength and the refractive index at that
    /// wavelength: `k_p = 2 pi n / lambda`.
    pub fn from_vacuum_wavelength(
        length_m: f64,
        lambda_m: f64,
        refractive_index: f64,
        model: PhaseMatching,
    ) -> Result<Self> {
        if !(lambda_m > 0.0) || !(refractive_index > 0.0) {
            return Err(Error::Domain(
                "wavelength and refractive index must be positive".into(),
            ));
        }
        Self::new(
            length_m,
            2.0 * std::f64::consts::PI * refractive_index / lambda_m,
            model,
            Self::DEFAULT_A_G,
        )
    }
}

impl Default for CrystalConfig {
    /// 15 mm periodically poled KTP pumped at 405 nm (n = 1.8), Gaussian model.
    fn default() -> Self {
        Self::from_vacuum_wavelength(15e-3, 405e-9, 1.8, PhaseMatching::Gaussian)
            .expect("reference crystal constants are valid")
    }
}

/// Detection-mode configuration: single-mode waist and OAM window.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DetectionConfig {
    /// Detection beam waist sigma in meters.
    pub sigma_m: f64,
    /// Inclusive lower OAM bound.
    pub l_min: i32,
    /// Inclusive upper OAM bound.
    pub l_max: i32,
}

impl DetectionConfig {
    pub fn new(sigma_m: f64, l_min: i32, l_max: i32) -> Result<Self> {
        if !(sigma_m > 0.0) || !sigma_m.is_finite() {
            return Err(Error::Domain(format!(
                "detection waist must be positive, got {sigma_m}"
            )));
        }
        if l_min > l_max {
            return Err(Error::Domain(format!(
                "OAM window is empty: [{l_min}, {l_max}]"
            )));
        }
        Ok(Self {
            sigma_m,
            l_min,
            l_max,
        })
    }

    /// Detection matched to the crystal's optimal focusing, window [-6, 6].
    pub fn matched(crystal: &CrystalConfig) -> Self {
        let (_, sigma) = optimal_waists(crystal);
        Self {
            sigma_m: sigma,
            l_min: -6,
            l_max: 6,
        }
    }

    pub fn window_len(&self) -> usize {
        (self.l_max - self.l_min + 1) as usize
    }
}

/// Optimal focusing for a crystal: pump waist `w = sqrt(L / k_p)` and
/// detection waist `sigma = sqrt(2) * w`.
pub fn optimal_waists(crystal: &CrystalConfig) -> (f64, f64) {
    let w = (crystal.length_m / crystal.k_p_rad_per_m).sqrt();
    (w, std::f64::consts::SQRT_2 * w)
}

/// Joint OAM amplitude matrix over a finite window, normalized to unit total
/// probability within the window.
#[derive(Debug, Clone)]
pub struct JointSpectrum {
    l_min: i32,
    l_max: i32,
    c: Array2<C64>,
    leakage: Option<f64>,
}

impl JointSpectrum {
    pub fn l_min(&self) -> i32 {
        self.l_min
    }

    pub fn l_max(&self) -> i32 {
        self.l_max
    }

    fn idx(&self, l: i32) -> Result<usize> {
        if l < self.l_min || l > self.l_max {
            return Err(Error::Domain(format!(
                "OAM index {l} outside window [{}, {}]",
                self.l_min, self.l_max
            )));
        }
        Ok((l - self.l_min) as usize)
    }

    /// Complex amplitude `c[l_s][l_i]`.
    pub fn amplitude(&self, l_s: i32, l_i: i32) -> Result<C64> {
        Ok(self.c[(self.idx(l_s)?, self.idx(l_i)?)])
    }

    /// Raw amplitude matrix (rows: l_s ascending, columns: l_i ascending).
    pub fn amplitudes(&self) -> &Array2<C64> {
        &self.c
    }

    /// Probability matrix |c|^2, normalized to unit sum over the window.
    pub fn probabilities(&self) -> Array2<f64> {
        let mut p = self.c.mapv(|z| z.norm_sqr());
        let total: f64 = p.iter().sum();
        if total > 0.0 {
            p.mapv_inplace(|x| x / total);
        }
        p
    }

    /// Display variant of the probabilities, normalized by the maximum value.
    pub fn display_normalized(&self) -> Array2<f64> {
        let mut p = self.c.mapv(|z| z.norm_sqr());
        let max = p.iter().cloned().fold(0.0_f64, f64::max);
        if max > 0.0 {
            p.mapv_inplace(|x| x / max);
        }
        p
    }

    /// Probabilities along the conservation diagonal `l_s + l_i = l_p`,
    /// keyed by `l_s` ascending; not renormalized.
    pub fn diagonal_probabilities(&self, l_p: i32) -> Vec<(i32, f64)> {
        let p = self.probabilities();
        let mut out = Vec::new();
        for l_s in self.l_min..=self.l_max {
            let l_i = l_p - l_s;
            if l_i < self.l_min || l_i > self.l_max {
                continue;
            }
            out.push((
                l_s,
                p[((l_s - self.l_min) as usize, (l_i - self.l_min) as usize)],
            ));
        }
        out
    }

    /// Fraction of total (extended-window) probability lost to truncation at
    /// the configured window; `None` for spectra computed without the
    /// extended-window diagnostic (the brute-force oracle).
    pub fn truncation_leakage(&self) -> Option<f64> {
        self.leakage
    }

    /// Serializable record (JSON-friendly).
    pub fn to_record(&self) -> SpectrumRecord {
        let n = self.c.nrows();
        let mut re = vec![vec![0.0; n]; n];
        let mut im = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                re[i][j] = self.c[(i, j)].re;
                im[i][j] = self.c[(i, j)].im;
            }
        }
        let p = self.probabilities();
        let probabilities = (0..n)
            .map(|i| (0..n).map(|j| p[(i, j)]).collect())
            .collect();
        SpectrumRecord {
            schema_version: crate::SCHEMA_VERSION,
            l_min: self.l_min,
            l_max: self.l_max,
            amplitudes_re: re,
            amplitudes_im: im,
            probabilities,
            truncation_leakage: self.leakage,
        }
    }

    /// CSV export: one row per `l_s`, two columns (re, im) per `l_i`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "l_s")?;
        for l_i in self.l_min..=self.l_max {
            write!(out, ",re_{l_i},im_{l_i}")?;
        }
        writeln!(out)?;
        for l_s in self.l_min..=self.l_max {
            write!(out, "{l_s}")?;
            for l_i in self.l_min..=self.l_max {
                let z = self.c[((l_s - self.l_min) as usize, (l_i - self.l_min) as usize)];
                write!(out, ",{:.17e},{:.17e}", z.re, z.im)?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Construct directly from a window and amplitude matrix (normalizes).
    /// Intended for tests and file round trips.
    pub fn from_amplitudes(l_min: i32, l_max: i32, c: Array2<C64>) -> Result<Self> {
        let n = (l_max - l_min + 1) as usize;
        if c.nrows() != n || c.ncols() != n {
            return Err(Error::Domain(format!(
                "amplitude matrix {}x{} does not match window [{l_min}, {l_max}]",
                c.nrows(),
                c.ncols()
            )));
        }
        let total: f64 = c.iter().map(|z| z.norm_sqr()).sum();
        if total <= 0.0 {
            return Err(Error::DegenerateInput("all-zero spectrum".into()));
        }
        let scale = total.sqrt();
        Ok(Self {
            l_min,
            l_max,
            c: c.mapv(|z| z / scale),
            leakage: None,
        })
    }
}

/// JSON-serializable snapshot of a [`JointSpectrum`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumRecord {
    pub schema_version: u32,
    pub l_min: i32,
    pub l_max: i32,
    pub amplitudes_re: Vec<Vec<f64>>,
    pub amplitudes_im: Vec<Vec<f64>>,
    pub probabilities: Vec<Vec<f64>>,
    pub truncation_leakage: Option<f64>,
}

/// Azimuthal Schmidt number `K = 1 / sum(lambda^2)` from nonnegative Schmidt
/// weights (normalized internally).
pub fn azimuthal_schmidt_number(lambdas: &[f64]) -> Result<f64> {
    if lambdas.is_empty() {
        return Err(Error::Domain("empty Schmidt weight vector".into()));
    }
    if lambdas.iter().any(|&l| l < 0.0 || !l.is_finite()) {
        return Err(Error::Domain(
            "Schmidt weights must be nonnegative and finite".into(),
        ));
    }
    let total: f64 = lambdas.iter().sum();
    if total <= 0.0 {
        return Err(Error::Domain("all-zero Schmidt weight vector".into()));
    }
    let sum_sq: f64 = lambdas.iter().map(|&l| (l / total) * (l / total)).sum();
    Ok(1.0 / sum_sq)
}

fn chi_factor(model: PhaseMatching, a_g: f64, x: f64) -> f64 {
    match model {
        PhaseMatching::Gaussian => (-a_g * x).exp(),
        PhaseMatching::Sinc => {
            if x.abs() < 1e-8 {
                1.0 - x * x / 6.0
            } else {
                x.sin() / x
            }
        }
    }
}

fn check_pump_window(pump_ls: &[i32], det: &DetectionConfig) -> Result<()> {
    for &l_p in pump_ls {
        if l_p < 2 * det.l_min || l_p > 2 * det.l_max {
            return Err(Error::Config(format!(
                "pump component l = {l_p} cannot be expressed as l_s + l_i within window [{}, {}]",
                det.l_min, det.l_max
            )));
        }
    }
    Ok(())
}

/// Default radial node count for the reduced quadrature.
const N_RADIAL: usize = 72;
/// Default angular node count (uniform grid, spectrally accurate).
const N_ANGULAR: usize = 256;
/// Window extension used for the truncation-leakage diagnostic.
const LEAKAGE_EXT: i32 = 2;

/// Core reduced quadrature: raw (unnormalized) amplitude matrix over
/// `[l_lo, l_hi]^2` for an arbitrary (not necessarily normalized) pump
/// coefficient map.
fn compute_raw(
    coefficients: &BTreeMap<i32, C64>,
    pump_waist_m: f64,
    crystal: &CrystalConfig,
    sigma_m: f64,
    l_lo: i32,
    l_hi: i32,
    n_r: usize,
    n_psi: usize,
) -> Array2<C64> {
    let wq = 2.0 / pump_waist_m; // pump momentum-space waist
    let u0 = 2.0 / sigma_m; // detection momentum-space waist
    let u_max = 5.5 * u0.max(0.8 * wq);
    let (us, uw) = gauss_legendre_on(n_r, 0.0, u_max);
    let d_psi = 2.0 * std::f64::consts::PI / n_psi as f64;
    let cos_psi: Vec<f64> = (0..n_psi).map(|m| (d_psi * m as f64).cos()).collect();
    let sin_psi: Vec<f64> = (0..n_psi).map(|m| (d_psi * m as f64).sin()).collect();

    let n_l = (l_hi - l_lo + 1) as usize;
    // exp(-i l_i psi_m) for every window index and angular node.
    let phases: Vec<Vec<C64>> = (0..n_l)
        .map(|li_idx| {
            let l_i = l_lo + li_idx as i32;
            (0..n_psi)
                .map(|m| C64::from_polar(1.0, -(l_i as f64) * d_psi * m as f64))
                .collect()
        })
        .collect();
    // Detection radial profiles at the quadrature nodes.
    let radial_tab: Vec<Vec<f64>> = (0..n_l)
        .map(|li_idx| {
            let l = l_lo + li_idx as i32;
            us.iter().map(|&u| lg_radial(l, u0, u)).collect()
        })
        .collect();
    // Combined radial weights u * w.
    let ws: Vec<f64> = us.iter().zip(&uw).map(|(&u, &w)| u * w).collect();

    let mut c = Array2::<C64>::zeros((n_l, n_l));
    let mut kvec = vec![C64::new(0.0, 0.0); n_psi];
    let mut ang = vec![C64::new(0.0, 0.0); n_l * n_r * n_r];
    let l_half = crystal.length_m / (8.0 * crystal.k_p_rad_per_m);

    for (&l_p, &alpha) in coefficients {
        if alpha.norm_sqr() == 0.0 {
            continue;
        }
        // Angular kernel shared by every l_i of this pump component.
        for i in 0..n_r {
            let usi = us[i];
            for j in 0..n_r {
                let uij = us[j];
                let s2 = usi * usi + uij * uij;
                let cross = 2.0 * usi * uij;
                for (m, k) in kvec.iter_mut().enumerate() {
                    let u_plus = (s2 + cross * cos_psi[m]).max(0.0).sqrt();
                    let u_minus2 = (s2 - cross * cos_psi[m]).max(0.0);
                    let theta = (uij * sin_psi[m]).atan2(usi + uij * cos_psi[m]);
                    let x = l_half * u_minus2;
                    let mag = lg_radial(l_p, wq, u_plus) * chi_factor(crystal.model, crystal.a_g, x);
                    *k = C64::from_polar(mag, l_p as f64 * theta);
                }
                for li_idx in 0..n_l {
                    let ph = &phases[li_idx];
                    let mut s = C64::new(0.0, 0.0);
                    for m in 0..n_psi {
                        s += kvec[m] * ph[m];
                    }
                    ang[(li_idx * n_r + i) * n_r + j] = s * d_psi;
                }
            }
        }
        // Radial double integral per window entry on this conservation line.
        for li_idx in 0..n_l {
            let l_i = l_lo + li_idx as i32;
            let l_s = l_p - l_i;
            if l_s < l_lo || l_s > l_hi {
                continue;
            }
            let ls_idx = (l_s - l_lo) as usize;
            let rs = &radial_tab[ls_idx];
            let ri = &radial_tab[li_idx];
            let mut total = C64::new(0.0, 0.0);
            for i in 0..n_r {
                let fs = ws[i] * rs[i];
                let mut row = C64::new(0.0, 0.0);
                for j in 0..n_r {
                    row += (ws[j] * ri[j]) * ang[(li_idx * n_r + i) * n_r + j];
                }
                total += fs * row;
            }
            c[(ls_idx, li_idx)] += alpha * total * (2.0 * std::f64::consts::PI);
        }
    }
    c
}

/// Raw (unnormalized) joint amplitudes over the detection window for an
/// arbitrary coefficient map. Linear in the coefficients; used by the
/// adaptive-loop plant and by linearity tests.
pub fn joint_amplitude_raw(
    coefficients: &BTreeMap<i32, C64>,
    pump_waist_m: f64,
    crystal: &CrystalConfig,
    det: &DetectionConfig,
) -> Result<Array2<C64>> {
    if coefficients.is_empty() {
        return Err(Error::DegenerateInput("pump has no components".into()));
    }
    let ls: Vec<i32> = coefficients.keys().copied().collect();
    check_pump_window(&ls, det)?;
    if !(pump_waist_m > 0.0) {
        return Err(Error::Domain("pump waist must be positive".into()));
    }
    Ok(compute_raw(
        coefficients,
        pump_waist_m,
        crystal,
        det.sigma_m,
        det.l_min,
        det.l_max,
        N_RADIAL,
        N_ANGULAR,
    ))
}

/// Joint OAM spectrum of the down-converted pair for a pump superposition.
///
/// The result is normalized to unit total probability over the window. The
/// same matrix is also evaluated on a window extended by two units per side
/// and at half quadrature resolution: the former feeds the truncation-leakage
/// diagnostic, the latter guards against undetected quadrature failure.
pub fn joint_amplitude(
    pump: &PumpProfile,
    crystal: &CrystalConfig,
    det: &DetectionConfig,
) -> Result<JointSpectrum> {
    let ls = pump.components();
    check_pump_window(&ls, det)?;
    let (l_lo, l_hi) = (det.l_min - LEAKAGE_EXT, det.l_max + LEAKAGE_EXT);
    let ext = compute_raw(
        pump.coefficients(),
        pump.waist_m(),
        crystal,
        det.sigma_m,
        l_lo,
        l_hi,
        N_RADIAL,
        N_ANGULAR,
    );
    let coarse = compute_raw(
        pump.coefficients(),
        pump.waist_m(),
        crystal,
        det.sigma_m,
        det.l_min,
        det.l_max,
        N_RADIAL / 2,
        N_ANGULAR / 2,
    );

    let n = det.window_len();
    let off = LEAKAGE_EXT as usize;
    let mut c = Array2::<C64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            c[(i, j)] = ext[(i + off, j + off)];
        }
    }
    let mass_in: f64 = c.iter().map(|z| z.norm_sqr()).sum();
    let mass_tot: f64 = ext.iter().map(|z| z.norm_sqr()).sum();
    if mass_in <= 0.0 || !mass_in.is_finite() {
        return Err(Error::Numerical(
            "joint spectrum carries no probability inside the window".into(),
        ));
    }

    // Resolution guard: normalized probabilities from the two grids must agree.
    let mass_coarse: f64 = coarse.iter().map(|z| z.norm_sqr()).sum();
    let mut defect: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let p_fine = c[(i, j)].norm_sqr() / mass_in;
            let p_coarse = coarse[(i, j)].norm_sqr() / mass_coarse;
            defect = defect.max((p_fine - p_coarse).abs());
        }
    }
    if !(defect < 1e-6) {
        return Err(Error::Numerical(format!(
            "quadrature not converged: resolution-halving defect {defect:e}"
        )));
    }

    let scale = mass_in.sqrt();
    Ok(JointSpectrum {
        l_min: det.l_min,
        l_max: det.l_max,
        c: c.mapv(|z| z / scale),
        leakage: Some((1.0 - mass_in / mass_tot).max(0.0)),
    })
}

/// Grid size (points per axis) of the default brute-force oracle.
const ORACLE_N1D: usize = 48;

/// Brute-force exact-sinc oracle: same contract as [`joint_amplitude`] but
/// integrating the defining 4-dimensional integral on a dense Cartesian
/// midpoint grid with the exact sinc phase-matching kernel, regardless of the
/// crystal's configured model. Slow validation path.
pub fn sinc_oracle(
    pump: &PumpProfile,
    crystal: &CrystalConfig,
    det: &DetectionConfig,
) -> Result<JointSpectrum> {
    sinc_oracle_with_grid(pump, crystal, det, ORACLE_N1D)
}

/// [`sinc_oracle`] with an explicit grid size per axis.
pub fn sinc_oracle_with_grid(
    pump: &PumpProfile,
    crystal: &CrystalConfig,
    det: &DetectionConfig,
    n1d: usize,
) -> Result<JointSpectrum> {
    let ls: Vec<i32> = pump.components();
    check_pump_window(&ls, det)?;
    if n1d < 8 {
        return Err(Error::Config(format!(
            "oracle grid too small: {n1d} points per axis"
        )));
    }
    let wq = 2.0 / pump.waist_m();
    let u0 = 2.0 / det.sigma_m;
    let u_max = 5.0 * u0;
    let dq = 2.0 * u_max / n1d as f64;
    let q: Vec<f64> = (0..n1d)
        .map(|k| -u_max + (k as f64 + 0.5) * dq)
        .collect();

    let n_l = det.window_len();
    // Detection mode tables D_l over the plane (row-major ix * n1d + iy).
    let mut det_tab = vec![vec![C64::new(0.0, 0.0); n1d * n1d]; n_l];
    for (li_idx, table) in det_tab.iter_mut().enumerate() {
        let l = det.l_min + li_idx as i32;
        for ix in 0..n1d {
            for iy in 0..n1d {
                let u = q[ix].hypot(q[iy]);
                let phi = q[iy].atan2(q[ix]);
                table[ix * n1d + iy] = C64::from_polar(lg_radial(l, u0, u), l as f64 * phi);
            }
        }
    }

    let l_half = crystal.length_m / (8.0 * crystal.k_p_rad_per_m);
    let comps: Vec<(i32, C64)> = pump
        .coefficients()
        .iter()
        .map(|(&l, &a)| (l, a))
        .collect();

    let mut c = Array2::<C64>::zeros((n_l, n_l));
    let mut kern = vec![C64::new(0.0, 0.0); n1d * n1d];
    for ix in 0..n1d {
        for iy in 0..n1d {
            let (qix, qiy) = (q[ix], q[iy]);
            // Kernel over the signal plane for this idler point.
            for sx in 0..n1d {
                for sy in 0..n1d {
                    let px = q[sx] + qix;
                    let py = q[sy] + qiy;
                    let dif2 = (q[sx] - qix).powi(2) + (q[sy] - qiy).powi(2);
                    let chi = chi_factor(PhaseMatching::Sinc, crystal.a_g, l_half * dif2);
                    let pu = px.hypot(py);
                    let pphi = py.atan2(px);
                    let mut pump_field = C64::new(0.0, 0.0);
                    for &(l_p, alpha) in &comps {
                        pump_field +=
                            alpha * C64::from_polar(lg_radial(l_p, wq, pu), l_p as f64 * pphi);
                    }
                    kern[sx * n1d + sy] = pump_field * chi;
                }
            }
            for ls_idx in 0..n_l {
                let dtab = &det_tab[ls_idx];
                let mut s = C64::new(0.0, 0.0);
                for k in 0..n1d * n1d {
                    s += kern[k] * dtab[k].conj();
                }
                let idler_pt = ix * n1d + iy;
                for li_idx in 0..n_l {
                    c[(ls_idx, li_idx)] += s * det_tab[li_idx][idler_pt].conj();
                }
            }
        }
    }
    let dq4 = dq.powi(4);
    c.mapv_inplace(|z| z * dq4);

    // The azimuthal integral vanishes identically off the conservation
    // diagonals; the dense grid only adds round-off there, so project those
    // entries back to their exact zero.
    for ls_idx in 0..n_l {
        for li_idx in 0..n_l {
            let l_sum = det.l_min + ls_idx as i32 + det.l_min + li_idx as i32;
            if !ls.contains(&l_sum) {
                c[(ls_idx, li_idx)] = C64::new(0.0, 0.0);
            }
        }
    }

    let total: f64 = c.iter().map(|z| z.norm_sqr()).sum();
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::Numerical("oracle produced an empty spectrum".into()));
    }
    let scale = total.sqrt();
    Ok(JointSpectrum {
        l_min: det.l_min,
        l_max: det.l_max,
        c: c.mapv(|z| z / scale),
        leakage: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modes::rotate_pump;
    use approx::assert_abs_diff_eq;

    fn reference() -> (CrystalConfig, DetectionConfig) {
        let crystal = CrystalConfig::default();
        let det = DetectionConfig::matched(&crystal);
        (crystal, det)
    }

    #[test]
    fn optimal_waists_reference_values() {
        let crystal = CrystalConfig::default();
        let (w, sigma) = optimal_waists(&crystal);
        assert_abs_diff_eq!(w, 23.176e-6, epsilon = 0.01e-6);
        assert_abs_diff_eq!(sigma / w, std::f64::consts::SQRT_2, epsilon = 1e-15);
        // Quadrupling the length doubles the waist.
        let long = CrystalConfig::new(
            4.0 * crystal.length_m,
            crystal.k_p_rad_per_m,
            crystal.model,
            crystal.a_g,
        )
        .unwrap();
        let (w4, _) = optimal_waists(&long);
        assert_abs_diff_eq!(w4 / w, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_pump_populates_only_the_antidiagonal() {
        let (crystal, det) = reference();
        let (w, _) = optimal_waists(&crystal);
        let pump = PumpProfile::gaussian(w).unwrap();
        let js = joint_amplitude(&pump, &crystal, &det).unwrap();
        for l_s in det.l_min..=det.l_max {
            for l_i in det.l_min..=det.l_max {
                let a = js.amplitude(l_s, l_i).unwrap();
                if l_s + l_i == 0 {
                    assert!(a.norm() > 0.0, "diagonal entry ({l_s},{l_i}) vanished");
                } else {
                    assert_eq!(a.norm(), 0.0, "entry ({l_s},{l_i}) must be exactly zero");
                }
            }
        }
    }

    #[test]
    fn pump_l2_shifts_the_support_diagonal() {
        let (crystal, det) = reference();
        let (w, _) = optimal_waists(&crystal);
        let pump = PumpProfile::from_components(w, &[(2, C64::new(1.0, 0.0))]).unwrap();
        let js = joint_amplitude(&pump, &crystal, &det).unwrap();
        for l_s in det.l_min..=det.l_max {
            for l_i in det.l_min..=det.l_max {
                let a = js.amplitude(l_s, l_i).unwrap();
                if l_s + l_i == 2 {
                    continue;
                }
                assert_eq!(a.norm(), 0.0);
            }
        }
        assert!(js.amplitude(1, 1).unwrap().norm() > 0.0);
    }

    #[test]
    fn conservation_zeros_for_multi_component_pump() {
        let (crystal, det) = reference();
        let (w, _) = optimal_waists(&crystal);
        let pump = PumpProfile::from_components(
            w,
            &[
                (-2, C64::new(0.7, -0.1)),
                (0, C64::new(-0.1, 0.2)),
                (2, C64::new(0.3, -0.5)),
            ],
        )
        .unwrap();
        let js = joint_amplitude(&pump, &crystal, &det).unwrap();
        for l_s in det.l_min..=det.l_max {
            for l_i in det.l_min..=det.l_max {
                if ![-2, 0, 2].contains(&(l_s + l_i)) {
                    assert_eq!(js.amplitude(l_s, l_i).unwrap().norm(), 0.0);
                }
            }
        }
    }

    #[test]
    fn schmidt_number_basics() {
        assert_abs_diff_eq!(
            azimuthal_schmidt_number(&[1.0, 0.0, 0.0]).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            azimuthal_schmidt_number(&[0.5, 0.5]).unwrap(),
            2.0,
            epsilon = 1e-12
        );
        assert!(matches!(
            azimuthal_schmidt_number(&[0.0, 0.0]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            azimuthal_schmidt_number(&[]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn reference_schmidt_number_is_pinned() {
        let (crystal, det) = reference();
        let (w, _) = optimal_waists(&crystal);
        let pump = PumpProfile::gaussian(w).unwrap();
        let js = joint_amplitude(&pump, &crystal, &det).unwrap();
        let lam: Vec<f64> = js.diagonal_probabilities(0).iter().map(|&(_, p)| p).collect();
        let k = azimuthal_schmidt_number(&lam).unwrap();
        assert_abs_diff_eq!(k, 1.459, epsilon = 2e-3);
    }

    #[test]
    fn higher_pump_oam_broadens_the_spectrum() {
        let (crystal, det) = reference();
        let (w, _) = optimal_waists(&crystal);
        let js0 = joint_amplitude(&PumpProfile::gaussian(w).unwrap(), &crystal, &det).unwrap();
        let pump2 = PumpProfile::from_components(w, &[(2, C64::new(1.0, 0.0))]).unwrap();
        let js2 = joint_amplitude(&pump2, &crystal, &det).unwrap();
        let k0 = azimuthal_schmidt_number(
            &js0.diagonal_probabilities(0)
                .iter()
                .map(|&(_, p)| p)
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let k2 = azimuthal_schmidt_number(
            &js2.diagonal_probabilities(2)
                .iter()
                .map(|&(_, p)| p)
                .collect::<Vec<_>>(),
        )
        .unwrap();
        assert!(k2 > k0 + 0.5, "K(l_p=2) = {k2} should exceed K(l_p=0) = {k0}");
        assert_abs_diff_eq!(k2, 3.624, epsilon = 0.02);
    }

    #[test]
    fn diagonal_probabilities_decrease_with_l() {
        let (crystal, det) = reference();
        let (w, _) = optimal_waists(&crystal);
        let js = joint_amplitude(&PumpProfile::gaussian(w).unwrap(), &crystal, &det).unwrap();
        let diag = js.diagonal_probabilities(0);
        let center = diag.iter().find(|&&(l, _)| l == 0).unwrap().1;
        for &(l, p) in &diag {
            if l != 0 {
                assert!(p < center, "lambda({l}) = {p} should be below lambda(0) = {center}");
            }
        }
        // Monotone decay moving outward on the positive side.
        let probs: Vec<f64> = (0..=det.l_max).map(|l| {
            diag.iter().find(|&&(ls, _)| ls == l).unwrap().1
        }).collect();
        for w2 in probs.windows(2) {
            assert!(w2[1] < w2[0]);
        }
    }

    #[test]
    fn diagonal_response_ratios_follow_the_binomial_law() {
        // Response of the diagonal entry (j, j) to a unit pump component
        // l_p = 2j, at optimal waists: probability ratio to the (0, 0)
        // response equals C(2|j|, |j|) / 4^|j|.
        let (crystal, det) = reference();
        let (w, _) = optimal_waists(&crystal);
        let mut responses = Vec::new();
        for j in 0..=3 {
            let pump =
                PumpProfile::from_components(w, &[(2 * j, C64::new(1.0, 0.0))]).unwrap();
            let raw = joint_amplitude_raw(pump.coefficients(), w, &crystal, &det).unwrap();
            let idx = ((j - det.l_min) as usize, (j - det.l_min) as usize);
            responses.push(raw[idx].norm_sqr());
        }
        let expect = [1.0, 0.5, 0.375, 0.3125];
        for j in 1..=3 {
            assert_abs_diff_eq!(responses[j] / responses[0], expect[j], epsilon = 1e-6);
        }
    }

    #[test]
    fn amplitude_is_linear_in_the_pump_coefficients() {
        let (crystal, det) = reference();
        let (w, _) = optimal_waists(&crystal);
        let p1: BTreeMap<i32, C64> = [(0, C64::new(0.8, 0.1))].into_iter().collect();
        let p2: BTreeMap<i32, C64> = [(2, C64::new(-0.3, 0.4)), (-2, C64::new(0.2, 0.0))]
            .into_iter()
            .collect();
        let (a, b) = (C64::new(0.6, -0.2), C64::new(0.3, 0.7));
        let mut combo = BTreeMap::new();
        for (&l, &v) in &p1 {
            *combo.entry(l).or_insert(C64::new(0.0, 0.0)) += a * v;
        }
        for (&l, &v) in &p2 {
            *combo.entry(l).or_insert(C64::new(0.0, 0.0)) += b * v;
        }
        let r1 = joint_amplitude_raw(&p1, w, &crystal, &det).unwrap();
        let r2 = joint_amplitude_raw(&p2, w, &crystal, &det).unwrap();
        let rc = joint_amplitude_raw(&combo, w, &crystal, &det).unwrap();
        let norm: f64 = rc.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for i in 0..det.window_len() {
            for j in 0..det.window_len() {
                let expect = a * r1[(i, j)] + b * r2[(i, j)];
                assert!(
                    (rc[(i, j)] - expect).norm() <= 1e-10 * norm,
                    "nonlinearity at ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn global_pump_phase_multiplies_amplitudes_and_preserves_probabilities() {
        let (crystal, det) = reference();
        let (w, _) = optimal_waists(&crystal);
        let base = PumpProfile::from_components(
            w,
            &[(0, C64::new(0.6, 0.0)), (2, C64::new(0.0, 0.8))],
        )
        .unwrap();
        let phase = C64::from_polar(1.0, 0.7);
        let shifted = base
            .with_coefficients(
                base.coefficients()
                    .iter()
                    .map(|(&l, &c)| (l, c * phase))
                    .collect(),
            )
            .unwrap();
        let js0 = joint_amplitude(&base, &crystal, &det).unwrap();
        let js1 = joint_amplitude(&shifted, &crystal, &det).unwrap();
        for l_s in det.l_min..=det.l_max {
            for l_i in det.l_min..=det.l_max {
                let a0 = js0.amplitude(l_s, l_i).unwrap();
                let a1 = js1.amplitude(l_s, l_i).unwrap();
                assert!((a1 - a0 * phase).norm() < 1e-10);
            }
        }
        let p0 = js0.probabilities();
        let p1 = js1.probabilities();
        for (x, y) in p0.iter().zip(p1.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn rotation_covariance_of_the_joint_amplitude() {
        let (crystal, det) = reference();
        let (w, _) = optimal_waists(&crystal);
        let base = PumpProfile::from_components(
            w,
            &[
                (-2, C64::new(0.76, -0.11)),
                (0, C64::new(-0.12, 0.15)),
                (2, C64::new(0.30, -0.53)),
            ],
        )
        .unwrap();
        let theta = std::f64::consts::PI / 8.0;
        let rotated = rotate_pump(&base, theta);
        let js0 = joint_amplitude(&base, &crystal, &det).unwrap();
        let js1 = joint_amplitude(&rotated, &crystal, &det).unwrap();
        let mut kaz0 = Vec::new();
        let mut kaz1 = Vec::new();
        for l_s in det.l_min..=det.l_max {
            for l_i in det.l_min..=det.l_max {
                let a0 = js0.amplitude(l_s, l_i).unwrap();
                let a1 = js1.amplitude(l_s, l_i).unwrap();
                let expect = a0 * C64::from_polar(1.0, (l_s + l_i) as f64 * theta);
                assert!(
                    (a1 - expect).norm() < 1e-10,
                    "covariance violated at ({l_s},{l_i})"
                );
            }
        }
        // Schmidt number along each populated diagonal is rotation invariant.
        for l_p in [-2, 0, 2] {
            kaz0.push(
                azimuthal_schmidt_number(
                    &js0.diagonal_probabilities(l_p)
                        .iter()
                        .map(|&(_, p)| p)
                        .collect::<Vec<_>>(),
                )
                .unwrap(),
            );
            kaz1.push(
                azimuthal_schmidt_number(
                    &js1.diagonal_probabilities(l_p)
                        .iter()
                        .map(|&(_, p)| p)
                        .collect::<Vec<_>>(),
                )
                .unwrap(),
            );
        }
        for (k0, k1) in kaz0.iter().zip(&kaz1) {
            assert_abs_diff_eq!(k0, k1, epsilon = 1e-10);
        }
    }

    #[test]
    fn incompatible_pump_window_is_a_config_error() {
        let crystal = CrystalConfig::default();
        let (w, sigma) = optimal_waists(&crystal);
        let det = DetectionConfig::new(sigma, -1, 1).unwrap();
        let pump = PumpProfile::from_components(w, &[(4, C64::new(1.0, 0.0))]).unwrap();
        assert!(matches!(
            joint_amplitude(&pump, &crystal, &det),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn quadrature_guard_trips_on_unresolvable_sinc_oscillation() {
        // A crystal 100x longer than the reference makes the exact sinc
        // kernel oscillate far faster than the fixed radial grid can resolve;
        // the resolution-halving check must reject the result.
        let base = CrystalConfig::default();
        let crystal = CrystalConfig::new(
            100.0 * base.length_m,
            base.k_p_rad_per_m,
            PhaseMatching::Sinc,
            base.a_g,
        )
        .unwrap();
        let (w, sigma) = optimal_waists(&base);
        let det = DetectionConfig::new(sigma, -2, 2).unwrap();
        let pump = PumpProfile::gaussian(w).unwrap();
        let r = joint_amplitude(&pump, &crystal, &det);
        assert!(matches!(r, Err(Error::Numerical(_))), "got {r:?}");
    }

    #[test]
    fn truncation_leakage_is_small_and_reported() {
        let (crystal, det) = reference();
        let (w, _) = optimal_waists(&crystal);
        let js = joint_amplitude(&PumpProfile::gaussian(w).unwrap(), &crystal, &det).unwrap();
        let leak = js.truncation_leakage().expect("diagnostic present");
        assert!(leak >= 0.0 && leak < 0.05, "leakage = {leak}");
    }

    #[test]
    fn quadrature_path_matches_the_brute_force_oracle() {
        let crystal = CrystalConfig::from_vacuum_wavelength(
            15e-3,
            405e-9,
            1.8,
            PhaseMatching::Sinc,
        )
        .unwrap();
        let (w, sigma) = optimal_waists(&crystal);
        let det = DetectionConfig::new(sigma, -3, 3).unwrap();
        let pump = PumpProfile::gaussian(w).unwrap();
        let fast = joint_amplitude(&pump, &crystal, &det).unwrap();
        let slow = sinc_oracle(&pump, &crystal, &det).unwrap();
        let pf = fast.probabilities();
        let ps = slow.probabilities();
        for (a, b) in pf.iter().zip(ps.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-8);
        }
    }

    #[test]
    fn oracle_is_symmetric_under_signal_idler_exchange() {
        let crystal = CrystalConfig::default();
        let (w, sigma) = optimal_waists(&crystal);
        let det = DetectionConfig::new(sigma, -2, 2).unwrap();
        let pump = PumpProfile::from_components(
            w,
            &[(0, C64::new(0.7, 0.0)), (2, C64::new(0.5, 0.5))],
        )
        .unwrap();
        let js = sinc_oracle(&pump, &crystal, &det).unwrap();
        for l_s in det.l_min..=det.l_max {
            for l_i in det.l_min..=det.l_max {
                let a = js.amplitude(l_s, l_i).unwrap();
                let b = js.amplitude(l_i, l_s).unwrap();
                assert!((a - b).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn spectrum_record_and_csv_round_trip() {
        let (crystal, _) = reference();
        let (w, sigma) = optimal_waists(&crystal);
        let det = DetectionConfig::new(sigma, -2, 2).unwrap();
        let js = joint_amplitude(&PumpProfile::gaussian(w).unwrap(), &crystal, &det).unwrap();
        let rec = js.to_record();
        assert_eq!(rec.l_min, -2);
        assert_eq!(rec.amplitudes_re.len(), 5);
        let total: f64 = rec.probabilities.iter().flatten().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        let mut csv = Vec::new();
        js.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("l_s,re_-2,im_-2"));
        assert_eq!(text.lines().count(), 6);
    }
}
