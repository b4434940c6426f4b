//! SLM phase masks for pump shaping and detection, with a diffraction oracle.
//!
//! A phase-only spatial light modulator can imprint an arbitrary complex
//! field onto the first diffraction order of a blazed grating by locally
//! modulating both the grating depth and its phase offset. The exact
//! encoding used here is `Psi = M * mod(F + 2 pi x / Lambda, 2 pi)` with
//! `M = 1 + sinc^{-1}(A) / pi` and `F = arg(E) - pi M`, where `A` is the
//! target amplitude normalized to unit maximum and `Lambda` the grating
//! period: full-amplitude pixels carry the full-depth sawtooth, dark pixels
//! stay flat. Detection masks projected onto a finite incident Gaussian use
//! a modified Laguerre-Gauss profile with a narrowed ring factor
//! (`w / w_tilde = 1.6` by default) so that the product of mask field and
//! incident beam reproduces the intended mode; pump masks are unmodified
//! because the pump beam is much wider than the displayed profile. An FFT
//! oracle simulates the first diffraction order and validates round trips.

use std::io::Write;
use std::sync::Arc;

use ndarray::Array2;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::modes::{lg_amplitude, LgSpec};

/// Displayed beam waist used by the mask examples (0.5 mm).
pub const DEFAULT_DISPLAY_WAIST_M: f64 = 0.5e-3;

/// Default ratio between the displayed waist and the modified waist of
/// detection masks.
pub const DETECTION_WAIST_RATIO: f64 = 1.6;

/// Bisection tolerance of the inverse sinc.
pub const INVERSE_SINC_TOL: f64 = 1e-10;

/// Geometry of the SLM canvas and its carrier grating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskConfig {
    /// Canvas width in pixels (the grating runs along this axis).
    pub width: usize,
    /// Canvas height in pixels.
    pub height: usize,
    /// Pixel pitch in meters.
    pub pitch_m: f64,
    /// Blazed grating period in meters; must exceed two pixel pitches.
    pub grating_period_m: f64,
    /// Incident beam waist in meters; `None` is an ideal plane wave.
    pub incident_waist_m: Option<f64>,
}

impl MaskConfig {
    /// Validate dimensions, pitch, grating resolvability, and waist.
    pub fn new(
        width: usize,
        height: usize,
        pitch_m: f64,
        grating_period_m: f64,
        incident_waist_m: Option<f64>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Domain(format!(
                "mask canvas must be nonempty, got {width}x{height}"
            )));
        }
        if !(pitch_m > 0.0) || !pitch_m.is_finite() {
            return Err(Error::Domain(format!(
                "pixel pitch must be positive and finite, got {pitch_m}"
            )));
        }
        if !grating_period_m.is_finite() || grating_period_m <= 2.0 * pitch_m {
            return Err(Error::Config(format!(
                "grating period {grating_period_m} m is not resolvable: need more than two pixels ({} m)",
                2.0 * pitch_m
            )));
        }
        if let Some(w) = incident_waist_m {
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::Domain(format!(
                    "incident waist must be positive and finite, got {w}"
                )));
            }
        }
        Ok(Self {
            width,
            height,
            pitch_m,
            grating_period_m,
            incident_waist_m,
        })
    }

    /// 1024x1024 canvas, 8 um pitch, 8-pixel grating period, plane-wave
    /// illumination.
    pub fn standard() -> Self {
        Self::new(1024, 1024, 8e-6, 8.0 * 8e-6, None).expect("static configuration is valid")
    }

    /// Centered physical coordinate of a pixel index along an axis of `n`
    /// pixels.
    fn coord(&self, index: usize, n: usize) -> f64 {
        (index as f64 - n as f64 / 2.0) * self.pitch_m
    }

    /// Grating period in pixels.
    pub fn grating_period_px(&self) -> f64 {
        self.grating_period_m / self.pitch_m
    }
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self::standard()
    }
}

/// Phase hologram: every entry lies in `[0, 2 pi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMask {
    values: Array2<f64>,
}

impl PhaseMask {
    /// Validate the range invariant.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("phase mask must be nonempty".into()));
        }
        if !values
            .iter()
            .all(|&v| v.is_finite() && (0.0..std::f64::consts::TAU).contains(&v))
        {
            return Err(Error::Domain(
                "phase mask entries must lie in [0, 2 pi)".into(),
            ));
        }
        Ok(Self { values })
    }

    /// Phase values in radians, row-major with `(row, col) = (y, x)`.
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// Canvas shape as `(height, width)`.
    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }

    /// 8-bit binary PGM with phase mapped linearly, 0 -> 0 and 2 pi -> 255.
    pub fn write_pgm<W: Write>(&self, mut out: W) -> Result<()> {
        let (h, w) = self.values.dim();
        write!(out, "P5\n{w} {h}\n255\n")?;
        let bytes: Vec<u8> = self
            .values
            .iter()
            .map(|&v| (v / std::f64::consts::TAU * 255.0).round() as u8)
            .collect();
        out.write_all(&bytes)?;
        Ok(())
    }

    /// Raw CSV, one canvas row per line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for row in self.values.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.8e}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// `sin(x)/x` with the removable singularity filled in.
fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        x.sin() / x
    }
}

/// Inverse of `sin(x)/x` on the branch `[-pi, 0]` where it rises from 0 to
/// 1, solved by bisection to [`INVERSE_SINC_TOL`]. The amplitude must lie in
/// `[0, 1]`.
pub fn inverse_sinc(a: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::Domain(format!(
            "inverse sinc argument must lie in [0, 1], got {a}"
        )));
    }
    let mut lo = -std::f64::consts::PI;
    let mut hi = 0.0;
    while hi - lo > INVERSE_SINC_TOL {
        let mid = 0.5 * (lo + hi);
        if sinc(mid) > a {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Sample a standard LG mode (radial order 0) on the canvas.
pub fn lg_field(l: i32, waist_m: f64, cfg: &MaskConfig) -> Result<Array2<C64>> {
    let spec = LgSpec::new(l, 0, waist_m)?;
    let mut out = Array2::<C64>::zeros((cfg.height, cfg.width));
    for iy in 0..cfg.height {
        let y = cfg.coord(iy, cfg.height);
        for ix in 0..cfg.width {
            let x = cfg.coord(ix, cfg.width);
            let rho = (x * x + y * y).sqrt();
            let phi = y.atan2(x);
            out[(iy, ix)] = lg_amplitude(&spec, rho, phi);
        }
    }
    Ok(out)
}

/// Sample the modified LG profile used for detection masks:
/// `(rho / w_tilde)^{|l|} L^{|l|}_0(2 rho^2 / w_tilde^2) exp(-rho^2 / w^2)
/// e^{i l phi}` (the zeroth Laguerre polynomial is 1). The narrower ring
/// factor compensates for the finite incident Gaussian so that the product
/// of mask field and incident beam reproduces `LG(l, w_tilde)`.
pub fn modified_lg_field(
    l: i32,
    waist_m: f64,
    modified_waist_m: f64,
    cfg: &MaskConfig,
) -> Result<Array2<C64>> {
    if !(waist_m > 0.0) || !waist_m.is_finite() {
        return Err(Error::Domain(format!(
            "waist must be positive and finite, got {waist_m}"
        )));
    }
    if !(modified_waist_m > 0.0) || !modified_waist_m.is_finite() {
        return Err(Error::Domain(format!(
            "modified waist must be positive and finite, got {modified_waist_m}"
        )));
    }
    let n = l.unsigned_abs();
    let mut out = Array2::<C64>::zeros((cfg.height, cfg.width));
    for iy in 0..cfg.height {
        let y = cfg.coord(iy, cfg.height);
        for ix in 0..cfg.width {
            let x = cfg.coord(ix, cfg.width);
            let rho = (x * x + y * y).sqrt();
            let phi = y.atan2(x);
            let amp = (rho / modified_waist_m).powi(n as i32)
                * (-(rho * rho) / (waist_m * waist_m)).exp();
            out[(iy, ix)] = C64::from_polar(amp, l as f64 * phi);
        }
    }
    Ok(out)
}

/// Sample a coherent superposition of LG modes with the given coefficients.
pub fn superposition_field(
    components: &[(i32, C64)],
    waist_m: f64,
    cfg: &MaskConfig,
) -> Result<Array2<C64>> {
    if components.is_empty() {
        return Err(Error::Domain(
            "superposition needs at least one component".into(),
        ));
    }
    let mut out = Array2::<C64>::zeros((cfg.height, cfg.width));
    for &(l, c) in components {
        if c.norm_sqr() == 0.0 {
            continue;
        }
        let field = lg_field(l, waist_m, cfg)?;
        out.zip_mut_with(&field, |o, &f| *o += c * f);
    }
    Ok(out)
}

/// Encode a complex target field as an exact amplitude-and-phase hologram.
///
/// The amplitude is normalized to unit maximum, so only the shape of the
/// target matters. Pixels at full amplitude carry the full-depth blazed
/// grating; zero-amplitude pixels come out flat.
pub fn encode_mask(target: &Array2<C64>, cfg: &MaskConfig) -> Result<PhaseMask> {
    if target.dim() != (cfg.height, cfg.width) {
        return Err(Error::Domain(format!(
            "target field is {:?}, canvas is {}x{}",
            target.dim(),
            cfg.height,
            cfg.width
        )));
    }
    let max_amp = target.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
    if !(max_amp > 0.0) || !max_amp.is_finite() {
        return Err(Error::Domain(
            "target field is identically zero; nothing to encode".into(),
        ));
    }
    let tau = std::f64::consts::TAU;
    let mut values = Array2::<f64>::zeros((cfg.height, cfg.width));
    for iy in 0..cfg.height {
        for ix in 0..cfg.width {
            let z = target[(iy, ix)];
            let a = z.norm() / max_amp;
            let m = 1.0 + inverse_sinc(a)? / std::f64::consts::PI;
            let f = z.arg() - std::f64::consts::PI * m;
            let x = cfg.coord(ix, cfg.width);
            let carrier = (f + tau * x / cfg.grating_period_m).rem_euclid(tau);
            let mut psi = (m * carrier).rem_euclid(tau);
            if psi >= tau {
                // rem_euclid of a tiny negative value can round to the
                // modulus itself.
                psi = 0.0;
            }
            values[(iy, ix)] = psi;
        }
    }
    PhaseMask::new(values)
}

fn fft_axis1(a: &mut Array2<C64>, fft: &Arc<dyn Fft<f64>>) {
    for mut row in a.rows_mut() {
        fft.process(row.as_slice_mut().expect("row-major layout"));
    }
}

/// Standard-layout transpose copy (ndarray's `.t().to_owned()` would keep
/// the reversed strides, breaking the contiguous-row FFT).
fn transpose(a: &Array2<C64>) -> Array2<C64> {
    let (h, w) = a.dim();
    Array2::from_shape_fn((w, h), |(i, j)| a[(j, i)])
}

/// In-place 2D FFT (forward or inverse); the inverse includes the `1/(w h)`
/// normalization.
fn fft2(a: &mut Array2<C64>, inverse: bool) {
    let (h, w) = a.dim();
    let mut planner = FftPlanner::new();
    let along_x = if inverse {
        planner.plan_fft_inverse(w)
    } else {
        planner.plan_fft_forward(w)
    };
    fft_axis1(a, &along_x);
    let mut t = transpose(a);
    let along_y = if inverse {
        planner.plan_fft_inverse(h)
    } else {
        planner.plan_fft_forward(h)
    };
    fft_axis1(&mut t, &along_y);
    *a = transpose(&t);
    if inverse {
        let scale = 1.0 / (h as f64 * w as f64);
        a.mapv_inplace(|z| z * scale);
    }
}

/// Circular roll of a 2D array by `(dy, dx)` (positive shifts move content
/// toward larger indices).
fn roll2(a: &Array2<C64>, dy: i64, dx: i64) -> Array2<C64> {
    let (h, w) = a.dim();
    let mut out = Array2::<C64>::zeros((h, w));
    for iy in 0..h {
        let ty = (iy as i64 + dy).rem_euclid(h as i64) as usize;
        for ix in 0..w {
            let tx = (ix as i64 + dx).rem_euclid(w as i64) as usize;
            out[(ty, tx)] = a[(iy, ix)];
        }
    }
    out
}

/// Simulate the first diffraction order of a displayed mask.
///
/// The incident beam (`None` = plane wave, `Some(w)` = Gaussian of waist
/// `w`) picks up the phase `e^{i Psi}`; the Fourier plane is windowed in a
/// square of half-width `k_c / 2` around the carrier bin
/// `k_c = round(width * pitch / Lambda)`, demodulated back to zero
/// frequency, and inverse-transformed. A carrier bin below 2 means the
/// first order cannot be separated from the zeroth; a window extending past
/// the grid means the grating is too fine for the canvas. Both are
/// configuration errors.
pub fn diffraction_oracle(
    mask: &PhaseMask,
    incident_waist_m: Option<f64>,
    cfg: &MaskConfig,
) -> Result<Array2<C64>> {
    if mask.shape() != (cfg.height, cfg.width) {
        return Err(Error::Domain(format!(
            "mask is {:?}, canvas is {}x{}",
            mask.shape(),
            cfg.height,
            cfg.width
        )));
    }
    if let Some(w) = incident_waist_m {
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::Domain(format!(
                "incident waist must be positive and finite, got {w}"
            )));
        }
    }
    let kc = (cfg.width as f64 * cfg.pitch_m / cfg.grating_period_m).round() as i64;
    let half = kc / 2;
    if kc < 2 {
        return Err(Error::Config(format!(
            "carrier sits at bin {kc}: the grating period is too large for the canvas and the first order overlaps the zeroth"
        )));
    }
    let cy = cfg.height as i64 / 2;
    let cx = cfg.width as i64 / 2;
    if cy - half < 0
        || cy + half > cfg.height as i64
        || cx + kc - half < 0
        || cx + kc + half > cfg.width as i64
    {
        return Err(Error::Config(format!(
            "first-order window around bin {kc} (half-width {half}) does not fit the {}x{} Fourier grid",
            cfg.height, cfg.width
        )));
    }

    let mut field = Array2::<C64>::zeros((cfg.height, cfg.width));
    for iy in 0..cfg.height {
        let y = cfg.coord(iy, cfg.height);
        for ix in 0..cfg.width {
            let x = cfg.coord(ix, cfg.width);
            let amp = match incident_waist_m {
                None => 1.0,
                Some(w) => (-(x * x + y * y) / (w * w)).exp(),
            };
            field[(iy, ix)] = C64::from_polar(amp, mask.values()[(iy, ix)]);
        }
    }
    fft2(&mut field, false);
    // fftshift (even and odd sizes handled by the signed roll).
    let shifted = roll2(&field, cfg.height as i64 / 2, cfg.width as i64 / 2);
    let mut windowed = Array2::<C64>::zeros((cfg.height, cfg.width));
    for iy in (cy - half)..(cy + half) {
        for ix in (cx + kc - half)..(cx + kc + half) {
            windowed[(iy as usize, ix as usize)] = shifted[(iy as usize, ix as usize)];
        }
    }
    // Demodulate: move the carrier to zero frequency, undo the shift, invert.
    let demod = roll2(&windowed, 0, -kc);
    let mut out = roll2(&demod, -(cfg.height as i64 / 2), -(cfg.width as i64 / 2));
    fft2(&mut out, true);
    Ok(out)
}

/// Normalized overlap `|<a, b>| / (|a| |b|)` between two sampled fields.
pub fn field_overlap(a: &Array2<C64>, b: &Array2<C64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Domain(format!(
            "fields have different shapes {:?} and {:?}",
            a.dim(),
            b.dim()
        )));
    }
    let mut dot = C64::new(0.0, 0.0);
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        dot += x.conj() * y;
        na += x.norm_sqr();
        nb += y.norm_sqr();
    }
    if na <= 0.0 || nb <= 0.0 {
        return Err(Error::Domain(
            "field overlap is undefined for a zero field".into(),
        ));
    }
    Ok(dot.norm() / (na * nb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{PI, TAU};

    /// Coefficients of the three engineered pump superpositions used
    /// throughout the crate's examples.
    fn pump_coefficients(which: char) -> Vec<(i32, C64)> {
        match which {
            'a' => vec![
                (-2, C64::new(0.76, -0.11)),
                (0, C64::new(-0.12, 0.15)),
                (2, C64::new(0.30, -0.53)),
            ],
            'b' => vec![
                (0, C64::new(0.09, -0.02)),
                (2, C64::new(-0.02, -0.19)),
                (4, C64::new(0.57, -0.01)),
                (6, C64::new(0.77, -0.21)),
            ],
            'c' => vec![
                (-4, C64::new(-0.25, -0.73)),
                (-2, C64::new(0.19, -0.10)),
                (0, C64::new(-0.07, 0.11)),
                (2, C64::new(0.14, -0.14)),
                (4, C64::new(-0.54, 0.09)),
            ],
            _ => unreachable!(),
        }
    }

    #[test]
    fn inverse_sinc_inverts_sinc() {
        for k in 0..=10 {
            let a = k as f64 / 10.0;
            let x = inverse_sinc(a).unwrap();
            assert!((-PI..=0.0).contains(&x));
            assert_abs_diff_eq!(sinc(x), a, epsilon = 1e-10);
        }
        assert_abs_diff_eq!(inverse_sinc(0.0).unwrap(), -PI, epsilon = 1e-9);
        assert_abs_diff_eq!(inverse_sinc(1.0).unwrap(), 0.0, epsilon = 1e-9);
        assert!(matches!(inverse_sinc(1.2), Err(Error::Domain(_))));
        assert!(matches!(inverse_sinc(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn config_validation() {
        assert!(matches!(
            MaskConfig::new(0, 8, 8e-6, 64e-6, None),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            MaskConfig::new(8, 8, -1e-6, 64e-6, None),
            Err(Error::Domain(_))
        ));
        // Grating must span more than two pixels.
        assert!(matches!(
            MaskConfig::new(8, 8, 8e-6, 16e-6, None),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            MaskConfig::new(8, 8, 8e-6, 64e-6, Some(0.0)),
            Err(Error::Domain(_))
        ));
        let cfg = MaskConfig::standard();
        assert_eq!((cfg.width, cfg.height), (1024, 1024));
        assert_abs_diff_eq!(cfg.grating_period_px(), 8.0, epsilon = 1e-12);
    }

    #[test]
    fn uniform_target_is_a_pure_blazed_sawtooth() {
        let cfg = MaskConfig::new(64, 16, 8e-6, 64e-6, None).unwrap();
        let target = Array2::<C64>::from_elem((16, 64), C64::new(1.0, 0.0));
        let mask = encode_mask(&target, &cfg).unwrap();
        // M = 1, F = -pi: Psi = mod(2 pi x / Lambda - pi, 2 pi), identical
        // on every row, sawtooth of period 8 px along x.
        for iy in 0..16 {
            for ix in 0..64 {
                let x = (ix as f64 - 32.0) * 8e-6;
                let expect = (TAU * x / 64e-6 - PI).rem_euclid(TAU);
                assert_abs_diff_eq!(mask.values()[(iy, ix)], expect, epsilon = 1e-8);
            }
        }
        for ix in 0..(64 - 8) {
            assert_abs_diff_eq!(
                mask.values()[(0, ix)],
                mask.values()[(0, ix + 8)],
                epsilon = 1e-8
            );
        }
    }

    #[test]
    fn zero_amplitude_region_is_flat() {
        let cfg = MaskConfig::new(64, 64, 8e-6, 64e-6, None).unwrap();
        let mut target = lg_field(1, 1e-4, &cfg).unwrap();
        for iy in 0..64 {
            for ix in 0..32 {
                target[(iy, ix)] = C64::new(0.0, 0.0);
            }
        }
        let mask = encode_mask(&target, &cfg).unwrap();
        for iy in 0..64 {
            for ix in 0..32 {
                assert!(
                    mask.values()[(iy, ix)].abs() < 1e-8,
                    "dead pixel ({iy},{ix}) has phase {}",
                    mask.values()[(iy, ix)]
                );
            }
        }
        // Identically zero target is rejected.
        let zero = Array2::<C64>::zeros((64, 64));
        assert!(matches!(encode_mask(&zero, &cfg), Err(Error::Domain(_))));
    }

    #[test]
    fn mask_range_invariant_and_exports() {
        let cfg = MaskConfig::new(32, 32, 8e-6, 64e-6, None).unwrap();
        let target = superposition_field(
            &[(1, C64::new(0.8, 0.1)), (-1, C64::new(0.3, -0.4))],
            6e-5,
            &cfg,
        )
        .unwrap();
        let mask = encode_mask(&target, &cfg).unwrap();
        assert!(mask
            .values()
            .iter()
            .all(|&v| (0.0..TAU).contains(&v)));
        let mut pgm = Vec::new();
        mask.write_pgm(&mut pgm).unwrap();
        let header = b"P5\n32 32\n255\n";
        assert_eq!(&pgm[..header.len()], header);
        assert_eq!(pgm.len(), header.len() + 32 * 32);
        let first = (mask.values()[(0, 0)] / TAU * 255.0).round() as u8;
        assert_eq!(pgm[header.len()], first);
        let mut csv = Vec::new();
        mask.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 32);
        assert_eq!(text.lines().next().unwrap().split(',').count(), 32);
        // The JSON sidecar round-trips the configuration, including the
        // plane-wave case.
        let json = serde_json::to_string(&cfg).unwrap();
        let back: MaskConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn oracle_rejects_unseparable_orders() {
        // Carrier bin below 2: grating period too large for the canvas.
        let cfg = MaskConfig::new(64, 64, 8e-6, 400e-6, None).unwrap();
        let mask = PhaseMask::new(Array2::zeros((64, 64))).unwrap();
        assert!(matches!(
            diffraction_oracle(&mask, None, &cfg),
            Err(Error::Config(_))
        ));
        // Window past the grid edge: grating too fine.
        let cfg = MaskConfig::new(64, 64, 8e-6, 20e-6, None).unwrap();
        let mask = PhaseMask::new(Array2::zeros((64, 64))).unwrap();
        assert!(matches!(
            diffraction_oracle(&mask, None, &cfg),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn zero_mask_has_no_first_order_power() {
        let cfg = MaskConfig::new(256, 256, 8e-6, 64e-6, None).unwrap();
        let mask = PhaseMask::new(Array2::zeros((256, 256))).unwrap();
        let rec = diffraction_oracle(&mask, None, &cfg).unwrap();
        let first: f64 = rec.iter().map(|z| z.norm_sqr()).sum();
        // Plane-wave illumination with a flat mask leaves all power in the
        // zeroth order; compare against the incident total (256^2 pixels of
        // unit amplitude).
        let total = 256.0 * 256.0;
        assert!(
            first / total < 1e-6,
            "first-order fraction {}",
            first / total
        );
    }

    #[test]
    fn lg0_squared_plane_wave_round_trip() {
        let cfg = MaskConfig::standard();
        let target = lg_field(2, DEFAULT_DISPLAY_WAIST_M, &cfg).unwrap();
        let mask = encode_mask(&target, &cfg).unwrap();
        let rec = diffraction_oracle(&mask, None, &cfg).unwrap();
        let ov = field_overlap(&target, &rec).unwrap();
        assert!(ov >= 0.98, "overlap {ov}");
        assert_abs_diff_eq!(ov, 0.997762, epsilon = 1e-3);
    }

    #[test]
    fn engineered_pump_round_trips() {
        let cfg = MaskConfig::standard();
        let expected = [('a', 0.994968), ('b', 0.996732), ('c', 0.995087)];
        for (which, pin) in expected {
            let target =
                superposition_field(&pump_coefficients(which), DEFAULT_DISPLAY_WAIST_M, &cfg)
                    .unwrap();
            let mask = encode_mask(&target, &cfg).unwrap();
            let rec = diffraction_oracle(&mask, None, &cfg).unwrap();
            let ov = field_overlap(&target, &rec).unwrap();
            assert!(ov >= 0.95, "profile {which}: overlap {ov}");
            assert_abs_diff_eq!(ov, pin, epsilon = 1e-3);
        }
    }

    #[test]
    fn linear_phase_moves_the_spot_but_keeps_overlap() {
        let cfg = MaskConfig::standard();
        let target =
            superposition_field(&pump_coefficients('a'), DEFAULT_DISPLAY_WAIST_M, &cfg).unwrap();
        let base = field_overlap(
            &target,
            &diffraction_oracle(&encode_mask(&target, &cfg).unwrap(), None, &cfg).unwrap(),
        )
        .unwrap();
        // Tilt with period 64 px along y: 16 Fourier bins, well inside the
        // 64-bin window half-width.
        let mut tilted = target.clone();
        for iy in 0..cfg.height {
            let y = (iy as f64 - cfg.height as f64 / 2.0) * cfg.pitch_m;
            let ph = C64::from_polar(1.0, TAU * y / (64.0 * cfg.pitch_m));
            for ix in 0..cfg.width {
                tilted[(iy, ix)] *= ph;
            }
        }
        let rec = diffraction_oracle(&encode_mask(&tilted, &cfg).unwrap(), None, &cfg).unwrap();
        let with_tilt = field_overlap(&tilted, &rec).unwrap();
        assert!(
            (with_tilt - base).abs() <= 0.01,
            "base {base}, tilted {with_tilt}"
        );
        assert_abs_diff_eq!(with_tilt, 0.999530, epsilon = 1e-3);
        // The reconstruction carries the tilt: against the untilted target
        // the overlap collapses, i.e. the first-order spot has moved.
        let cross = field_overlap(&target, &rec).unwrap();
        assert!(cross < 0.5, "cross overlap {cross}");
        assert_abs_diff_eq!(cross, 0.067401, epsilon = 2e-3);
    }

    #[test]
    fn modified_profile_reduces_to_lg_and_gaussian() {
        let cfg = MaskConfig::new(128, 128, 8e-6, 64e-6, None).unwrap();
        let w = 2.5e-4;
        // w_tilde = w: proportional to the standard LG mode.
        let modified = modified_lg_field(1, w, w, &cfg).unwrap();
        let standard = lg_field(1, w, &cfg).unwrap();
        let ov = field_overlap(&modified, &standard).unwrap();
        assert_abs_diff_eq!(ov, 1.0, epsilon = 1e-12);
        // l = 0: a pure Gaussian no matter the modified waist.
        let g1 = modified_lg_field(0, w, 0.123 * w, &cfg).unwrap();
        let g2 = modified_lg_field(0, w, 9.0 * w, &cfg).unwrap();
        for (a, b) in g1.iter().zip(g2.iter()) {
            assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-15);
        }
        let y0 = 64usize;
        let x0 = 80usize;
        let x = (x0 as f64 - 64.0) * 8e-6;
        let expect = (-(x * x) / (w * w)).exp();
        assert_abs_diff_eq!(g1[(y0, x0)].re, expect, epsilon = 1e-12);
        assert!(matches!(
            modified_lg_field(1, -1.0, w, &cfg),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn modified_mask_recovers_detection_under_finite_incident_waist() {
        // Detection of LG(1, w/1.6) displayed at envelope waist w: the
        // incident Gaussian that exactly completes the modified profile has
        // waist w / sqrt(1.6^2 - 1) ~= 0.80 w. Without the correction the
        // reconstruction degrades monotonically as the incident waist
        // shrinks; with it, the matched case is nearly exact. Under plane
        // waves the unmodified mask is the right one.
        let cfg = MaskConfig::standard();
        let w = DEFAULT_DISPLAY_WAIST_M;
        let wt = w / DETECTION_WAIST_RATIO;
        let w_exact = w / (DETECTION_WAIST_RATIO * DETECTION_WAIST_RATIO - 1.0).sqrt();
        let true_mode = lg_field(1, wt, &cfg).unwrap();
        let mask_mod = encode_mask(&modified_lg_field(1, w, wt, &cfg).unwrap(), &cfg).unwrap();
        let mask_unm = encode_mask(&true_mode, &cfg).unwrap();
        let run = |mask: &PhaseMask, w_in: Option<f64>| {
            field_overlap(
                &true_mode,
                &diffraction_oracle(mask, w_in, &cfg).unwrap(),
            )
            .unwrap()
        };
        let unm = [
            run(&mask_unm, None),
            run(&mask_unm, Some(2.0 * w)),
            run(&mask_unm, Some(w)),
            run(&mask_unm, Some(w_exact)),
            run(&mask_unm, Some(0.6 * w)),
        ];
        for pair in unm.windows(2) {
            assert!(
                pair[1] < pair[0],
                "uncorrected overlap did not degrade: {unm:?}"
            );
        }
        assert_abs_diff_eq!(unm[0], 0.998246, epsilon = 1e-3);
        assert_abs_diff_eq!(unm[3], 0.944551, epsilon = 1e-3);
        assert_abs_diff_eq!(unm[4], 0.875352, epsilon = 1e-3);
        let matched = run(&mask_mod, Some(w_exact));
        assert!(matched >= 0.99, "matched modified overlap {matched}");
        assert_abs_diff_eq!(matched, 0.999360, epsilon = 1e-3);
        assert!(matched - unm[3] > 0.03);
        // Plane wave: the modification over-narrows the ring and loses.
        let plane_mod = run(&mask_mod, None);
        assert!(plane_mod < unm[0]);
        assert_abs_diff_eq!(plane_mod, 0.805998, epsilon = 2e-3);
    }

    #[test]
    fn field_overlap_validation() {
        let a = Array2::<C64>::from_elem((4, 4), C64::new(1.0, 0.0));
        let b = Array2::<C64>::zeros((4, 4));
        assert!(matches!(field_overlap(&a, &b), Err(Error::Domain(_))));
        let c = Array2::<C64>::from_elem((4, 5), C64::new(1.0, 0.0));
        assert!(matches!(field_overlap(&a, &c), Err(Error::Domain(_))));
        assert_abs_diff_eq!(field_overlap(&a, &a).unwrap(), 1.0, epsilon = 1e-12);
    }
}
