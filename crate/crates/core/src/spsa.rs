//! Adaptive pump shaping by simultaneous perturbation stochastic
//! approximation (SPSA).
//!
//! The loop tunes the complex pump coefficients so the down-converted state
//! carries equal weight on every projector of a target qudit subspace. The
//! cost is the population variance of the subspace-normalized probabilities;
//! SPSA estimates its gradient from exactly two cost measurements per
//! iteration regardless of dimensionality, by probing the parameter vector
//! at `theta +/- c_k Delta` along a random Rademacher direction `Delta`.
//! Gains decay as `a_k = a / (A + k + 1)^alpha` and `c_k = c / (k + 1)^gamma`.
//!
//! The measured plant is a [`SpectrumLab`]: per-component joint amplitudes
//! are precomputed once, so each cost probe is a cheap linear combination —
//! the quantum optics stays exact while the loop runs thousands of probes.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::detection::{sample_poisson, ShotMode, Subspace};
use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::modes::PumpProfile;
use crate::spdc::{joint_amplitude_raw, CrystalConfig, DetectionConfig};

/// SPSA gain schedule and loop configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpsaConfig {
    /// Numerator of the step-size gain `a_k`.
    pub a: f64,
    /// Numerator of the probe-size gain `c_k`.
    pub c: f64,
    /// Step-size decay exponent.
    pub alpha: f64,
    /// Probe-size decay exponent.
    pub gamma: f64,
    /// Stability offset `A` in the step-size denominator.
    pub big_a: f64,
    /// Fixed iteration budget (no early stopping).
    pub max_iterations: u64,
    /// Seed for the Rademacher perturbation stream (the plant's counting
    /// noise, when enabled, uses a stream derived from the same seed).
    pub seed: u64,
}

impl Default for SpsaConfig {
    fn default() -> Self {
        Self {
            a: 1.0,
            c: 0.01,
            alpha: 0.6,
            gamma: 0.1,
            big_a: 0.0,
            max_iterations: 30,
            seed: 1,
        }
    }
}

impl SpsaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0) || !(self.c > 0.0) {
            return Err(Error::Config(format!(
                "gain numerators must be positive: a = {}, c = {}",
                self.a, self.c
            )));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!(
                "alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!(
                "gamma must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        if !(self.big_a >= 0.0) {
            return Err(Error::Config(format!(
                "stability offset must be nonnegative, got {}",
                self.big_a
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("iteration budget must be positive".into()));
        }
        Ok(())
    }
}

/// Gains `(a_k, c_k)` at (zero-based) iteration `k`.
pub fn spsa_gains(k: u64, cfg: &SpsaConfig) -> (f64, f64) {
    let a_k = cfg.a / (cfg.big_a + k as f64 + 1.0).powf(cfg.alpha);
    let c_k = cfg.c / (k as f64 + 1.0).powf(cfg.gamma);
    (a_k, c_k)
}

/// Population variance `(1/d) sum (p_i - mean)^2` of a probability vector.
pub fn variance_cost(probs: &[f64]) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::Domain("empty probability vector".into()));
    }
    if probs.iter().any(|&p| p < 0.0 || !p.is_finite()) {
        return Err(Error::Domain(
            "probabilities must be nonnegative and finite".into(),
        ));
    }
    let d = probs.len() as f64;
    let mean = probs.iter().sum::<f64>() / d;
    Ok(probs.iter().map(|&p| (p - mean) * (p - mean)).sum::<f64>() / d)
}

/// One SPSA update: probes the cost oracle at `params +/- c_k Delta` (exactly
/// two evaluations), forms the simultaneous-perturbation gradient estimate
/// `g_j = (y_plus - y_minus) / (2 c_k Delta_j)`, and returns
/// `(params - a_k g, y_plus, y_minus)`.
pub fn spsa_step<F, R>(
    params: &[f64],
    evaluate: &mut F,
    k: u64,
    cfg: &SpsaConfig,
    rng: &mut R,
) -> Result<(Vec<f64>, f64, f64)>
where
    F: FnMut(&[f64]) -> Result<f64>,
    R: Rng + ?Sized,
{
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::Domain("parameters must be finite".into()));
    }
    let (a_k, c_k) = spsa_gains(k, cfg);
    let delta: Vec<f64> = (0..params.len())
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect();
    let plus: Vec<f64> = params
        .iter()
        .zip(&delta)
        .map(|(p, d)| p + c_k * d)
        .collect();
    let minus: Vec<f64> = params
        .iter()
        .zip(&delta)
        .map(|(p, d)| p - c_k * d)
        .collect();
    let y_plus = evaluate(&plus)?;
    let y_minus = evaluate(&minus)?;
    let scale = (y_plus - y_minus) / (2.0 * c_k);
    let next: Vec<f64> = params
        .iter()
        .zip(&delta)
        .map(|(p, d)| p - a_k * scale / d)
        .collect();
    Ok((next, y_plus, y_minus))
}

/// Precomputed measurement plant: subspace amplitudes as a linear map from
/// pump coefficients.
///
/// For the diagonal subspaces used here, OAM conservation couples each
/// projector pair `(l_s, l_i)` to exactly one pump component
/// `l_p = l_s + l_i`, so the response matrix is effectively diagonal — but
/// the plant stores the full map and stays valid for general pair sets.
#[derive(Debug, Clone)]
pub struct SpectrumLab {
    subspace: Subspace,
    components: Vec<i32>,
    /// `response[k][m]` = amplitude at pair `k` from unit pump component `m`.
    response: Vec<Vec<C64>>,
    mode: ShotMode,
}

impl SpectrumLab {
    /// Precompute per-component joint amplitudes at the subspace pairs.
    pub fn new(
        pump_waist_m: f64,
        crystal: &CrystalConfig,
        det: &DetectionConfig,
        subspace: &Subspace,
    ) -> Result<Self> {
        let components = subspace.pump_components();
        let pairs = subspace.pairs();
        for &(l_s, l_i) in pairs {
            if l_s < det.l_min || l_s > det.l_max || l_i < det.l_min || l_i > det.l_max {
                return Err(Error::Config(format!(
                    "subspace pair ({l_s}, {l_i}) lies outside the detection window"
                )));
            }
        }
        let mut response = vec![vec![C64::new(0.0, 0.0); components.len()]; pairs.len()];
        for (m, &l_p) in components.iter().enumerate() {
            let coeffs = [(l_p, C64::new(1.0, 0.0))].into_iter().collect();
            let raw = joint_amplitude_raw(&coeffs, pump_waist_m, crystal, det)?;
            for (k, &(l_s, l_i)) in pairs.iter().enumerate() {
                response[k][m] = raw[(
                    (l_s - det.l_min) as usize,
                    (l_i - det.l_min) as usize,
                )];
            }
        }
        Ok(Self {
            subspace: subspace.clone(),
            components,
            response,
            mode: ShotMode::Exact,
        })
    }

    /// Switch between exact readout and Poissonian counting with the given
    /// expected total counts per cost evaluation.
    pub fn with_mode(mut self, mode: ShotMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn subspace(&self) -> &Subspace {
        &self.subspace
    }

    /// Pump components driving this subspace, ascending; the SPSA parameter
    /// vector is their interleaved (re, im) parts in this order.
    pub fn components(&self) -> &[i32] {
        &self.components
    }

    /// Subspace-normalized probabilities for a pump coefficient vector
    /// (ordered like [`Self::components`]).
    pub fn probabilities<R: Rng + ?Sized>(
        &self,
        coefficients: &[C64],
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if coefficients.len() != self.components.len() {
            return Err(Error::Domain(format!(
                "expected {} pump coefficients, got {}",
                self.components.len(),
                coefficients.len()
            )));
        }
        let mut raw = Vec::with_capacity(self.response.len());
        for row in &self.response {
            let amp: C64 = row
                .iter()
                .zip(coefficients)
                .map(|(g, a)| g * a)
                .sum();
            raw.push(amp.norm_sqr());
        }
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            return Err(Error::DegenerateInput(
                "pump carries no amplitude onto the subspace".into(),
            ));
        }
        let exact: Vec<f64> = raw.iter().map(|x| x / total).collect();
        match self.mode {
            ShotMode::Exact => Ok(exact),
            ShotMode::Shots(n) => {
                let mut counts = Vec::with_capacity(exact.len());
                for &p in &exact {
                    counts.push(sample_poisson(p * n as f64, rng)? as f64);
                }
                let seen: f64 = counts.iter().sum();
                if seen <= 0.0 {
                    return Err(Error::Estimation(
                        "no counts recorded on the subspace; increase shots".into(),
                    ));
                }
                Ok(counts.into_iter().map(|c| c / seen).collect())
            }
        }
    }

    /// Variance cost of the subspace probabilities.
    pub fn cost<R: Rng + ?Sized>(&self, coefficients: &[C64], rng: &mut R) -> Result<f64> {
        variance_cost(&self.probabilities(coefficients, rng)?)
    }
}

/// One iteration of the optimization trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: u64,
    /// Parameter vector after the update and renormalization.
    pub params: Vec<f64>,
    pub cost_plus: f64,
    pub cost_minus: f64,
    /// Cost measured at the accepted (renormalized) parameters.
    pub accepted_cost: f64,
}

/// Full optimization history plus best-seen tracking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub seed: u64,
    pub config: SpsaConfig,
    pub mode: ShotMode,
    pub subspace_dimension: usize,
    pub records: Vec<TraceRecord>,
    pub best_iteration: u64,
    pub best_cost: f64,
    pub best_params: Vec<f64>,
}

impl OptimizationTrace {
    /// Accepted-cost sequence in iteration order.
    pub fn accepted_costs(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.accepted_cost).collect()
    }

    /// JSON-lines export: one meta line (schema version, seed, config, mode),
    /// then one line per iteration. Deliberately carries no timestamps so
    /// replays are byte-identical.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        let meta = serde_json::json!({
            "schema_version": crate::SCHEMA_VERSION,
            "seed": self.seed,
            "config": self.config,
            "mode": self.mode,
            "subspace_dimension": self.subspace_dimension,
            "best_iteration": self.best_iteration,
            "best_cost": self.best_cost,
        });
        writeln!(out, "{meta}")?;
        for r in &self.records {
            let line = serde_json::to_string(r)
                .map_err(|e| Error::Format(format!("trace serialization: {e}")))?;
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Interleave complex coefficients as (re, im) pairs.
fn pack_params(coeffs: &[C64]) -> Vec<f64> {
    coeffs.iter().flat_map(|c| [c.re, c.im]).collect()
}

fn unpack_params(params: &[f64]) -> Vec<C64> {
    params
        .chunks_exact(2)
        .map(|ch| C64::new(ch[0], ch[1]))
        .collect()
}

/// Run the SPSA loop against a spectrum lab, starting from `initial`.
///
/// Parameters are the interleaved real/imaginary parts of the pump
/// coefficients on the subspace's pump components; after every update the
/// vector is renormalized to unit total power. The loop runs the full
/// iteration budget (no early stopping) and returns the pump built from the
/// best accepted cost seen, together with the complete trace.
pub fn run_optimization(
    initial: &PumpProfile,
    lab: &SpectrumLab,
    cfg: &SpsaConfig,
) -> Result<(PumpProfile, OptimizationTrace)> {
    cfg.validate()?;
    let comps = lab.components().to_vec();
    for l in initial.components() {
        if !comps.contains(&l) {
            return Err(Error::Config(format!(
                "initial pump component l = {l} is not addressed by the subspace \
                 (expected a subset of {comps:?})"
            )));
        }
    }
    let coeffs: Vec<C64> = comps.iter().map(|&l| initial.coefficient(l)).collect();
    let mut params = pack_params(&coeffs);

    let mut pert_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // Decorrelated stream for the plant's counting noise.
    let mut lab_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9E37_79B9_7F4A_7C15);

    let mut records = Vec::with_capacity(cfg.max_iterations as usize);
    let mut best_cost = f64::INFINITY;
    let mut best_params = params.clone();
    let mut best_iteration = 0;
    for k in 0..cfg.max_iterations {
        let mut oracle = |p: &[f64]| lab.cost(&unpack_params(p), &mut lab_rng);
        let (next, y_plus, y_minus) = spsa_step(&params, &mut oracle, k, cfg, &mut pert_rng)?;
        let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Numerical(format!(
                "parameter vector collapsed at iteration {k}"
            )));
        }
        params = next.into_iter().map(|x| x / norm).collect();
        let accepted = lab.cost(&unpack_params(&params), &mut lab_rng)?;
        if accepted < best_cost {
            best_cost = accepted;
            best_params = params.clone();
            best_iteration = k;
        }
        records.push(TraceRecord {
            iteration: k,
            params: params.clone(),
            cost_plus: y_plus,
            cost_minus: y_minus,
            accepted_cost: accepted,
        });
    }

    let best_coeffs = unpack_params(&best_params);
    let pump = initial.with_coefficients(
        comps
            .iter()
            .copied()
            .zip(best_coeffs.iter().copied())
            .collect(),
    )?;
    let trace = OptimizationTrace {
        seed: cfg.seed,
        config: *cfg,
        mode: lab.mode,
        subspace_dimension: lab.subspace.dimension(),
        records,
        best_iteration,
        best_cost,
        best_params,
    };
    Ok((pump, trace))
}

/// Least-squares exponential decay rate: fits `ln c_k ~ b - rate * k` over
/// the strictly positive entries and returns `rate` (positive = decay).
pub fn fit_exponential_rate(costs: &[f64]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = costs
        .iter()
        .enumerate()
        .filter(|&(_, &c)| c > 0.0 && c.is_finite())
        .map(|(k, &c)| (k as f64, c.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Estimation(
            "need at least two positive cost values to fit a decay rate".into(),
        ));
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-12 {
        return Err(Error::Estimation("degenerate abscissa in rate fit".into()));
    }
    let slope = (n * sxy - sx * sy) / denom;
    Ok(-slope)
}
