//! Scenario files: one human-editable TOML document describing a complete
//! experiment — crystal, pump superposition, detection, target subspace,
//! optimizer gains, tomography and Bell toggles, hologram geometry, seed and
//! output directory.
//!
//! Every section is optional and defaults to the reference configuration
//! (15 mm crystal, 405 nm pump at n = 1.8, optimal focusing, matched
//! detection on the [-6, 6] window, qutrit diagonal subspace). Lengths are
//! given in engineering units (mm, nm, um) and converted to SI on build.

use std::path::{Path, PathBuf};

use oamlab::linalg::C64;
use oamlab::{
    optimal_waists, rotate_pump, CrystalConfig, DetectionConfig, Error, FitOptions, MaskConfig,
    PhaseMatching, PumpProfile, Result, ShotMode, SpsaConfig, Subspace,
};
use serde::{Deserialize, Serialize};

const MM: f64 = 1e-3;
const UM: f64 = 1e-6;
const NM: f64 = 1e-9;

/// Standard qutrit diagonal pairs, the default target subspace.
fn default_pairs() -> Vec<(i32, i32)> {
    vec![(-1, -1), (0, 0), (1, 1)]
}

/// Complete scenario description as parsed from TOML.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    /// Seed for every stochastic stage; required whenever one is enabled.
    pub seed: Option<u64>,
    /// Default output directory; `--out` overrides.
    pub output_dir: Option<PathBuf>,
    pub crystal: CrystalSection,
    pub pump: PumpSection,
    pub detection: DetectionSection,
    pub subspace: SubspaceSection,
    pub spsa: SpsaSection,
    pub tomography: TomographySection,
    pub bell: BellSection,
    pub mask: MaskSection,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            seed: None,
            output_dir: None,
            crystal: CrystalSection::default(),
            pump: PumpSection::default(),
            detection: DetectionSection::default(),
            subspace: SubspaceSection::default(),
            spsa: SpsaSection::default(),
            tomography: TomographySection::default(),
            bell: BellSection::default(),
            mask: MaskSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrystalSection {
    pub length_mm: f64,
    pub pump_wavelength_nm: f64,
    pub refractive_index: f64,
    /// `"gaussian"` (collinear approximation) or `"sinc"` (exact kernel).
    pub phase_matching: String,
}

impl Default for CrystalSection {
    fn default() -> Self {
        Self {
            length_mm: 15.0,
            pump_wavelength_nm: 405.0,
            refractive_index: 1.8,
            phase_matching: "gaussian".into(),
        }
    }
}

/// One pump component `c_l LG_l`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub l: i32,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PumpSection {
    /// Physical pump waist; omitted means optimal `w = sqrt(L / k_p)`.
    pub waist_um: Option<f64>,
    /// Superposition coefficients; empty means a pure Gaussian (`l = 0`).
    pub components: Vec<ComponentSpec>,
    /// Rigid image rotation applied to the pump, in radians.
    pub rotation_rad: f64,
}

impl Default for PumpSection {
    fn default() -> Self {
        Self {
            waist_um: None,
            components: Vec::new(),
            rotation_rad: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionSection {
    /// Detection mode waist; omitted means matched `sigma = sqrt(2) w`.
    pub sigma_um: Option<f64>,
    pub l_min: i32,
    pub l_max: i32,
}

impl Default for DetectionSection {
    fn default() -> Self {
        Self {
            sigma_um: None,
            l_min: -6,
            l_max: 6,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubspaceSection {
    /// Measured `(l_s, l_i)` pairs; defaults to the qutrit diagonal.
    pub pairs: Vec<(i32, i32)>,
}

impl Default for SubspaceSection {
    fn default() -> Self {
        Self {
            pairs: default_pairs(),
        }
    }
}

/// Shot budget: the literal string `"exact"` or an expected total count.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ShotsSpec {
    Count(u64),
    Keyword(String),
}

impl Default for ShotsSpec {
    fn default() -> Self {
        ShotsSpec::Keyword("exact".into())
    }
}

impl ShotsSpec {
    pub fn parse(text: &str) -> Result<Self> {
        if text == "exact" {
            return Ok(ShotsSpec::Keyword("exact".into()));
        }
        text.parse::<u64>().map(ShotsSpec::Count).map_err(|_| {
            Error::Config(format!(
                "shots must be \"exact\" or a positive integer, got {text:?}"
            ))
        })
    }

    pub fn to_mode(&self) -> Result<ShotMode> {
        match self {
            ShotsSpec::Count(0) => Err(Error::Config(
                "shot count must be at least 1 (or \"exact\")".into(),
            )),
            ShotsSpec::Count(n) => Ok(ShotMode::Shots(*n)),
            ShotsSpec::Keyword(k) if k == "exact" => Ok(ShotMode::Exact),
            ShotsSpec::Keyword(k) => Err(Error::Config(format!(
                "unknown shots keyword {k:?} (expected \"exact\" or a count)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpsaSection {
    pub a: f64,
    pub c: f64,
    pub alpha: f64,
    pub gamma: f64,
    /// Stability offset `A` in the step-size denominator.
    pub stability: f64,
    pub iterations: u64,
    pub shots: ShotsSpec,
}

impl Default for SpsaSection {
    fn default() -> Self {
        let d = SpsaConfig::default();
        Self {
            a: d.a,
            c: d.c,
            alpha: d.alpha,
            gamma: d.gamma,
            stability: d.big_a,
            iterations: d.max_iterations,
            shots: ShotsSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TomographySection {
    /// Pipeline toggle; the `tomo` command itself always runs.
    pub enabled: bool,
    /// Expected total counts over the 225 settings.
    pub counts_total: f64,
    /// Bootstrap resamples for phase errors; 0 disables the bootstrap.
    pub bootstrap_resamples: usize,
    /// Random starts of the maximum-likelihood fit.
    pub fit_starts: usize,
    /// Pump rotations to sweep, in radians; each gets its own output set.
    pub rotations_rad: Vec<f64>,
}

impl Default for TomographySection {
    fn default() -> Self {
        Self {
            enabled: false,
            counts_total: 1.0e6,
            bootstrap_resamples: 0,
            fit_starts: FitOptions::default().n_starts,
            rotations_rad: vec![0.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BellSection {
    /// Pipeline toggle; the `bell` command itself always runs.
    pub enabled: bool,
    /// White-noise admixture: the state keeps weight `p` on the pure carve.
    pub noise_p: f64,
    /// Also scan the asymmetric-state family for the optimal violation.
    pub gamma_scan: bool,
    /// Analyzer phase corrections applied to both local bases.
    pub phase1_rad: f64,
    pub phase2_rad: f64,
    /// Estimate I3 from Poissonian counts with this expected total per
    /// analyzer pair instead of exact Born probabilities.
    pub shots: Option<u64>,
}

impl Default for BellSection {
    fn default() -> Self {
        Self {
            enabled: false,
            noise_p: 1.0,
            gamma_scan: false,
            phase1_rad: 0.0,
            phase2_rad: 0.0,
            shots: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskSection {
    pub width: usize,
    pub height: usize,
    pub pitch_um: f64,
    pub grating_period_um: f64,
    /// Waist of the displayed modes on the SLM plane.
    pub display_waist_um: f64,
    /// Incident beam waist used by `--verify`; omitted means a plane wave.
    pub incident_waist_um: Option<f64>,
    /// Display-to-detection waist ratio for modified detection masks.
    pub detection_ratio: f64,
}

impl Default for MaskSection {
    fn default() -> Self {
        let std = MaskConfig::standard();
        Self {
            width: std.width,
            height: std.height,
            pitch_um: std.pitch_m / UM,
            grating_period_um: std.grating_period_m / UM,
            display_waist_um: oamlab::holograms::DEFAULT_DISPLAY_WAIST_M / UM,
            incident_waist_um: None,
            detection_ratio: oamlab::holograms::DETECTION_WAIST_RATIO,
        }
    }
}

impl Scenario {
    /// Parse and validate a scenario file. Parse errors keep the TOML
    /// reporter's line/column context.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("cannot read scenario {}: {e}", path.display()),
            ))
        })?;
        let scenario: Scenario = toml::from_str(&text).map_err(|e| {
            Error::Format(format!("scenario {}: {e}", path.display()))
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    /// Cross-field consistency checks that the type system cannot express.
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for comp in &self.pump.components {
            if !comp.re.is_finite() || !comp.im.is_finite() {
                return Err(Error::Format(format!(
                    "pump component l = {}: coefficient must be finite",
                    comp.l
                )));
            }
            if !seen.insert(comp.l) {
                return Err(Error::Format(format!(
                    "pump component l = {} appears twice",
                    comp.l
                )));
            }
        }
        let subspace = self.build_subspace()?;
        // The subspace must be consistent with the pump: a pump component
        // whose OAM drives no subspace pair cannot contribute to the target
        // state and is almost certainly a typo.
        let drive = subspace.pump_components();
        for &l in &self.pump_component_ls() {
            if !drive.contains(&l) {
                return Err(Error::Config(format!(
                    "pump component l = {l} drives no subspace pair \
                     (subspace consumes pump OAM {drive:?})"
                )));
            }
        }
        if self.detection.l_min > self.detection.l_max {
            return Err(Error::Config(format!(
                "detection window is empty: l_min = {} > l_max = {}",
                self.detection.l_min, self.detection.l_max
            )));
        }
        // Every subspace leg must be visible to the detector, or the carved
        // state cannot be measured.
        let window = self.detection.l_min..=self.detection.l_max;
        for &(l_s, l_i) in subspace.pairs() {
            if !window.contains(&l_s) || !window.contains(&l_i) {
                return Err(Error::Config(format!(
                    "subspace pair ({l_s}, {l_i}) lies outside the detection window \
                     [{}, {}]",
                    self.detection.l_min, self.detection.l_max
                )));
            }
        }
        if self.tomography.enabled && self.subspace.pairs != default_pairs() {
            return Err(Error::Config(
                "tomography runs on the standard qutrit diagonal subspace \
                 [[-1,-1],[0,0],[1,1]] only"
                    .into(),
            ));
        }
        if self.bell.enabled && subspace.dimension() != 3 {
            return Err(Error::Config(format!(
                "the Bell stage needs a three-dimensional subspace, got {}",
                subspace.dimension()
            )));
        }
        if !(0.0..=1.0).contains(&self.bell.noise_p) {
            return Err(Error::Config(format!(
                "bell.noise_p must lie in [0, 1], got {}",
                self.bell.noise_p
            )));
        }
        if !(self.tomography.counts_total > 0.0) {
            return Err(Error::Config(format!(
                "tomography.counts_total must be positive, got {}",
                self.tomography.counts_total
            )));
        }
        if self.tomography.rotations_rad.is_empty() {
            return Err(Error::Config(
                "tomography.rotations_rad must not be empty (use [0.0])".into(),
            ));
        }
        if self.tomography.rotations_rad.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config(
                "tomography.rotations_rad entries must be finite".into(),
            ));
        }
        self.spsa_config(0)?;
        self.spsa.shots.to_mode()?;
        Ok(())
    }

    fn pump_component_ls(&self) -> Vec<i32> {
        if self.pump.components.is_empty() {
            vec![0]
        } else {
            self.pump.components.iter().map(|c| c.l).collect()
        }
    }

    pub fn build_crystal(&self) -> Result<CrystalConfig> {
        let model = match self.crystal.phase_matching.as_str() {
            "gaussian" => PhaseMatching::Gaussian,
            "sinc" => PhaseMatching::Sinc,
            other => {
                return Err(Error::Config(format!(
                    "crystal.phase_matching must be \"gaussian\" or \"sinc\", got {other:?}"
                )))
            }
        };
        CrystalConfig::from_vacuum_wavelength(
            self.crystal.length_mm * MM,
            self.crystal.pump_wavelength_nm * NM,
            self.crystal.refractive_index,
            model,
        )
    }

    /// Physical pump waist in meters (scenario value or optimal focusing).
    pub fn pump_waist_m(&self, crystal: &CrystalConfig) -> f64 {
        match self.pump.waist_um {
            Some(w) => w * UM,
            None => optimal_waists(crystal).0,
        }
    }

    /// Pump profile including the scenario's rigid rotation.
    pub fn build_pump(&self, crystal: &CrystalConfig) -> Result<PumpProfile> {
        let waist = self.pump_waist_m(crystal);
        let pump = if self.pump.components.is_empty() {
            PumpProfile::gaussian(waist)?
        } else {
            let comps: Vec<(i32, C64)> = self
                .pump
                .components
                .iter()
                .map(|c| (c.l, C64::new(c.re, c.im)))
                .collect();
            PumpProfile::from_components(waist, &comps)?
        };
        if self.pump.rotation_rad != 0.0 {
            Ok(rotate_pump(&pump, self.pump.rotation_rad))
        } else {
            Ok(pump)
        }
    }

    pub fn build_detection(&self, crystal: &CrystalConfig) -> Result<DetectionConfig> {
        let sigma = match self.detection.sigma_um {
            Some(s) => s * UM,
            None => optimal_waists(crystal).1,
        };
        DetectionConfig::new(sigma, self.detection.l_min, self.detection.l_max)
    }

    pub fn build_subspace(&self) -> Result<Subspace> {
        Subspace::new(self.subspace.pairs.clone())
    }

    pub fn spsa_config(&self, seed: u64) -> Result<SpsaConfig> {
        let cfg = SpsaConfig {
            a: self.spsa.a,
            c: self.spsa.c,
            alpha: self.spsa.alpha,
            gamma: self.spsa.gamma,
            big_a: self.spsa.stability,
            max_iterations: self.spsa.iterations,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Shot mode for the optimizer plant, honoring a `--shots` override.
    pub fn shot_mode(&self, flag: Option<&str>) -> Result<ShotMode> {
        match flag {
            Some(text) => ShotsSpec::parse(text)?.to_mode(),
            None => self.spsa.shots.to_mode(),
        }
    }

    pub fn fit_options(&self) -> Result<FitOptions> {
        let options = FitOptions {
            n_starts: self.tomography.fit_starts,
            ..FitOptions::default()
        };
        options.validate()?;
        Ok(options)
    }

    pub fn mask_config(&self) -> Result<MaskConfig> {
        if let Some(w) = self.mask.incident_waist_um {
            if !(w > 0.0) {
                return Err(Error::Config(format!(
                    "mask.incident_waist_um must be positive, got {w}"
                )));
            }
        }
        if !(self.mask.display_waist_um > 0.0) {
            return Err(Error::Config(format!(
                "mask.display_waist_um must be positive, got {}",
                self.mask.display_waist_um
            )));
        }
        if !(self.mask.detection_ratio.is_finite() && self.mask.detection_ratio > 1.0) {
            return Err(Error::Config(format!(
                "mask.detection_ratio must exceed 1 (detection waist smaller than display waist), got {}",
                self.mask.detection_ratio
            )));
        }
        MaskConfig::new(
            self.mask.width,
            self.mask.height,
            self.mask.pitch_um * UM,
            self.mask.grating_period_um * UM,
            self.mask.incident_waist_um.map(|w| w * UM),
        )
    }

    /// Display waist of SLM holograms in meters.
    pub fn display_waist_m(&self) -> f64 {
        self.mask.display_waist_um * UM
    }
}

/// Resolve the seed for a stochastic stage: the `--seed` flag wins over the
/// scenario's `seed` key; neither present is a configuration error.
pub fn require_seed(scenario: &Scenario, flag: Option<u64>, stage: &str) -> Result<u64> {
    flag.or(scenario.seed).ok_or_else(|| {
        Error::Config(format!(
            "{stage} is stochastic and needs a seed; add `seed = N` to the scenario \
             or pass --seed N"
        ))
    })
}
