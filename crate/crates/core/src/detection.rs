//! The virtual measurement lab: Born-rule projection probabilities, the
//! white-noise state model, and Poissonian coincidence counting.
//!
//! Two-photon states live on a product basis labeled by OAM values: a local
//! basis `{|l_1>, ..., |l_d>}` on each side gives a `d^2`-dimensional product
//! space with composite index `idx_s * d + idx_i`. Projective coincidence
//! measurements are product projectors `|s><s| (x) |i><i|` built from local
//! vectors. Imperfect sources are modeled by the isotropic ("uncolored")
//! noise channel `rho = p |psi><psi| + (1 - p) I / d^2`, and detection is a
//! Poisson process: a projector with probability `P` under flux `R` and
//! exposure `t` fires `Poisson(P R t)` times.

use std::io::Write;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigh, C64};
use crate::spdc::JointSpectrum;

/// Tolerance on unit-norm checks for projector vectors.
const NORM_TOL: f64 = 1e-9;

/// Pure two-photon state over a product OAM basis.
///
/// `labels[k]` is the OAM value of local basis vector `k` (same basis on the
/// signal and idler sides); amplitudes are stored row-major over the
/// composite index `idx_s * d + idx_i` and kept unit-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    labels: Vec<i32>,
    amps: Vec<C64>,
}

impl StateVector {
    /// Build and normalize; `amps` must have length `labels.len()^2`.
    pub fn new(labels: Vec<i32>, amps: Vec<C64>) -> Result<Self> {
        let d = labels.len();
        if d == 0 {
            return Err(Error::DegenerateInput("empty local basis".into()));
        }
        if amps.len() != d * d {
            return Err(Error::Domain(format!(
                "amplitude vector has length {}, expected {}",
                amps.len(),
                d * d
            )));
        }
        let mut seen = labels.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != d {
            return Err(Error::Domain("duplicate local basis labels".into()));
        }
        let norm2: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if norm2 <= 0.0 || !norm2.is_finite() {
            return Err(Error::DegenerateInput("state vector has zero norm".into()));
        }
        let scale = norm2.sqrt();
        Ok(Self {
            labels,
            amps: amps.into_iter().map(|a| a / scale).collect(),
        })
    }

    /// Schmidt-diagonal state `sum_j a_j |l_j, l_j>`.
    pub fn from_schmidt_diagonal(labels: Vec<i32>, diag: Vec<C64>) -> Result<Self> {
        let d = labels.len();
        if diag.len() != d {
            return Err(Error::Domain(format!(
                "diagonal has length {}, expected {d}",
                diag.len()
            )));
        }
        let mut amps = vec![C64::new(0.0, 0.0); d * d];
        for (j, a) in diag.into_iter().enumerate() {
            amps[j * d + j] = a;
        }
        Self::new(labels, amps)
    }

    /// Maximally entangled qutrit pair with free phases:
    /// `(e^{i th1} |-1,-1> + |0,0> + e^{i th2} |1,1>) / sqrt(3)`.
    pub fn max_entangled_qutrit(theta1: f64, theta2: f64) -> Self {
        Self::from_schmidt_diagonal(
            vec![-1, 0, 1],
            vec![
                C64::from_polar(1.0, theta1),
                C64::new(1.0, 0.0),
                C64::from_polar(1.0, theta2),
            ],
        )
        .expect("static construction is valid")
    }

    /// Diagonal qudit state carved out of a joint spectrum on the given
    /// subspace pairs, renormalized within the subspace.
    pub fn from_spectrum(js: &JointSpectrum, subspace: &Subspace) -> Result<Self> {
        let d = subspace.dimension();
        let labels: Vec<i32> = subspace.pairs().iter().map(|&(l_s, _)| l_s).collect();
        let mut seen = labels.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != d {
            return Err(Error::Domain(
                "subspace signal labels are not distinct; cannot form a local basis".into(),
            ));
        }
        let mut amps = vec![C64::new(0.0, 0.0); d * d];
        for (k, &(l_s, l_i)) in subspace.pairs().iter().enumerate() {
            // Diagonal carving: pair k sits at local index k on both sides.
            amps[k * d + k] = js.amplitude(l_s, l_i)?;
        }
        Self::new(labels, amps).map_err(|e| match e {
            Error::DegenerateInput(_) => {
                Error::DegenerateInput("spectrum vanishes on the subspace".into())
            }
            other => other,
        })
    }

    pub fn dimension(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[i32] {
        &self.labels
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    /// Amplitude of the basis ket `|l_s, l_i>`.
    pub fn amplitude(&self, l_s: i32, l_i: i32) -> Result<C64> {
        let is = self.local_index(l_s)?;
        let ii = self.local_index(l_i)?;
        Ok(self.amps[is * self.labels.len() + ii])
    }

    fn local_index(&self, l: i32) -> Result<usize> {
        self.labels
            .iter()
            .position(|&x| x == l)
            .ok_or_else(|| Error::Domain(format!("label {l} not in local basis")))
    }

    /// Pure-state density matrix `|psi><psi|`.
    pub fn to_density(&self) -> DensityMatrix {
        let n = self.amps.len();
        let mut m = Array2::<C64>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = self.amps[i] * self.amps[j].conj();
            }
        }
        DensityMatrix {
            labels: self.labels.clone(),
            m,
        }
    }

    /// `<s, i | psi>` for local detection vectors.
    fn project(&self, signal: &[C64], idler: &[C64]) -> Result<C64> {
        let d = self.labels.len();
        check_projector(signal, d)?;
        check_projector(idler, d)?;
        let mut acc = C64::new(0.0, 0.0);
        for is in 0..d {
            for ii in 0..d {
                acc += signal[is].conj() * idler[ii].conj() * self.amps[is * d + ii];
            }
        }
        Ok(acc)
    }
}

fn check_projector(v: &[C64], d: usize) -> Result<()> {
    if v.len() != d {
        return Err(Error::Domain(format!(
            "projector vector has length {}, expected {d}",
            v.len()
        )));
    }
    let norm2: f64 = v.iter().map(|a| a.norm_sqr()).sum();
    if (norm2 - 1.0).abs() > NORM_TOL {
        return Err(Error::Domain(format!(
            "projector vector is not unit-normalized: |v|^2 = {norm2}"
        )));
    }
    Ok(())
}

/// Mixed two-photon state on the same product basis as [`StateVector`].
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    labels: Vec<i32>,
    m: Array2<C64>,
}

impl DensityMatrix {
    /// Validate Hermiticity (1e-12), unit trace (1e-12), and positivity
    /// (eigenvalues >= -1e-10).
    pub fn new(labels: Vec<i32>, m: Array2<C64>) -> Result<Self> {
        let d = labels.len();
        let n = d * d;
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::Domain(format!(
                "density matrix is {}x{}, expected {n}x{n}",
                m.nrows(),
                m.ncols()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                if (m[(i, j)] - m[(j, i)].conj()).norm() > 1e-12 {
                    return Err(Error::Domain(
                        "density matrix is not Hermitian within 1e-12".into(),
                    ));
                }
            }
        }
        let trace: C64 = (0..n).map(|i| m[(i, i)]).sum();
        if (trace.re - 1.0).abs() > 1e-12 || trace.im.abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "density matrix trace is {trace}, expected 1"
            )));
        }
        let (evals, _) = eigh(&m)?;
        if evals.iter().any(|&l| l < -1e-10) {
            return Err(Error::Domain(format!(
                "density matrix has a negative eigenvalue: {:?}",
                evals.iter().cloned().fold(f64::INFINITY, f64::min)
            )));
        }
        Ok(Self { labels, m })
    }

    pub fn labels(&self) -> &[i32] {
        &self.labels
    }

    pub fn dimension(&self) -> usize {
        self.labels.len()
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.m
    }

    /// Tr rho^2.
    pub fn purity(&self) -> f64 {
        let n = self.m.nrows();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += (self.m[(i, j)] * self.m[(j, i)]).re;
            }
        }
        acc
    }

    /// `<s,i| rho |s,i>` for local detection vectors.
    fn project(&self, signal: &[C64], idler: &[C64]) -> Result<f64> {
        let d = self.labels.len();
        check_projector(signal, d)?;
        check_projector(idler, d)?;
        let n = d * d;
        let mut proj = vec![C64::new(0.0, 0.0); n];
        for is in 0..d {
            for ii in 0..d {
                proj[is * d + ii] = signal[is] * idler[ii];
            }
        }
        let mut acc = C64::new(0.0, 0.0);
        for a in 0..n {
            for b in 0..n {
                acc += proj[a].conj() * self.m[(a, b)] * proj[b];
            }
        }
        Ok(acc.re.clamp(0.0, 1.0))
    }
}

/// Pure or mixed state, for call sites that accept either.
#[derive(Debug, Clone)]
pub enum QuantumState {
    Pure(StateVector),
    Mixed(DensityMatrix),
}

impl QuantumState {
    pub fn dimension(&self) -> usize {
        match self {
            QuantumState::Pure(s) => s.dimension(),
            QuantumState::Mixed(r) => r.dimension(),
        }
    }

    pub fn labels(&self) -> &[i32] {
        match self {
            QuantumState::Pure(s) => s.labels(),
            QuantumState::Mixed(r) => r.labels(),
        }
    }

    /// Density-matrix view (copies for the pure case).
    pub fn to_density(&self) -> DensityMatrix {
        match self {
            QuantumState::Pure(s) => s.to_density(),
            QuantumState::Mixed(r) => r.clone(),
        }
    }
}

/// Born probability of the product projector `|signal> (x) |idler>`:
/// `|<s,i|psi>|^2` for pure states, `<s,i|rho|s,i>` for mixed ones.
pub fn born_probability(state: &QuantumState, signal: &[C64], idler: &[C64]) -> Result<f64> {
    match state {
        QuantumState::Pure(s) => Ok(s.project(signal, idler)?.norm_sqr().clamp(0.0, 1.0)),
        QuantumState::Mixed(r) => r.project(signal, idler),
    }
}

/// Isotropic noise channel `rho = p |psi><psi| + (1 - p) I / d^2`.
pub fn apply_white_noise(psi: &StateVector, p: f64) -> Result<DensityMatrix> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!(
            "noise mixing parameter must lie in [0, 1], got {p}"
        )));
    }
    let mut rho = psi.to_density();
    let n = rho.m.nrows();
    let bg = (1.0 - p) / n as f64;
    for i in 0..n {
        for j in 0..n {
            rho.m[(i, j)] *= p;
            if i == j {
                rho.m[(i, j)] += C64::new(bg, 0.0);
            }
        }
    }
    Ok(rho)
}

/// One simulated coincidence measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    /// Projector-pair identifier (free-form, e.g. "ls=0,li=0").
    pub id: String,
    /// Observed coincidence counts.
    pub counts: u64,
    /// Exposure time in seconds.
    pub exposure_s: f64,
    /// Expected coincidence rate in Hz (`prob * flux`).
    pub expected_rate_hz: f64,
    /// Seed used to generate this record, when the caller tracks one.
    pub seed: Option<u64>,
}

impl CountRecord {
    /// Append this record as one JSON line.
    pub fn append_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        let line = serde_json::to_string(self)
            .map_err(|e| Error::Format(format!("count record serialization: {e}")))?;
        writeln!(out, "{line}")?;
        Ok(())
    }
}

/// Draw Poissonian coincidence counts for a projector with Born probability
/// `prob` under total pair flux `flux_hz` and the given exposure.
pub fn simulate_counts<R: Rng + ?Sized>(
    id: impl Into<String>,
    prob: f64,
    flux_hz: f64,
    exposure_s: f64,
    rng: &mut R,
) -> Result<CountRecord> {
    if !(0.0..=1.0).contains(&prob) {
        return Err(Error::Domain(format!(
            "probability must lie in [0, 1], got {prob}"
        )));
    }
    if !(flux_hz > 0.0) || !(exposure_s > 0.0) {
        return Err(Error::Domain(
            "flux and exposure must be positive".into(),
        ));
    }
    let lambda = prob * flux_hz * exposure_s;
    let counts = sample_poisson(lambda, rng)?;
    Ok(CountRecord {
        id: id.into(),
        counts,
        exposure_s,
        expected_rate_hz: prob * flux_hz,
        seed: None,
    })
}

/// Poisson draw that tolerates a zero rate.
pub(crate) fn sample_poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> Result<u64> {
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::Domain(format!("invalid Poisson rate {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(0);
    }
    let dist = Poisson::new(lambda)
        .map_err(|e| Error::Numerical(format!("poisson sampler construction: {e}")))?;
    Ok(dist.sample(rng) as u64)
}

/// A measured set of product-basis projectors `|l_s, l_i>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subspace {
    pairs: Vec<(i32, i32)>,
}

impl Subspace {
    pub fn new(pairs: Vec<(i32, i32)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::DegenerateInput("empty subspace".into()));
        }
        let mut seen = pairs.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != pairs.len() {
            return Err(Error::Domain("duplicate subspace pairs".into()));
        }
        Ok(Self { pairs })
    }

    /// Qutrit diagonal: (j, j) for j in {-1, 0, 1}.
    pub fn qutrit() -> Self {
        Self::diagonal(&[-1, 0, 1])
    }

    /// Ququart diagonal: (j, j) for j in {0, 1, 2, 3}.
    pub fn ququart() -> Self {
        Self::diagonal(&[0, 1, 2, 3])
    }

    /// Ququint diagonal: (j, j) for j in {-2, -1, 0, 1, 2}.
    pub fn ququint() -> Self {
        Self::diagonal(&[-2, -1, 0, 1, 2])
    }

    fn diagonal(js: &[i32]) -> Self {
        Self {
            pairs: js.iter().map(|&j| (j, j)).collect(),
        }
    }

    pub fn pairs(&self) -> &[(i32, i32)] {
        &self.pairs
    }

    pub fn dimension(&self) -> usize {
        self.pairs.len()
    }

    /// Pump OAM components addressed by this subspace: `l_p = l_s + l_i`
    /// for each pair (deduplicated, sorted).
    pub fn pump_components(&self) -> Vec<i32> {
        let mut ls: Vec<i32> = self.pairs.iter().map(|&(s, i)| s + i).collect();
        ls.sort_unstable();
        ls.dedup();
        ls
    }
}

/// Exact vs. finite-statistics readout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShotMode {
    /// Exact Born probabilities.
    Exact,
    /// Poissonian counting with the given expected total counts over the
    /// measured subspace.
    Shots(u64),
}

/// Probabilities of the subspace projectors, renormalized to unit sum within
/// the subspace. In `Shots` mode the probabilities are estimated from one
/// simulated counting run.
pub fn subspace_probabilities<R: Rng + ?Sized>(
    js: &JointSpectrum,
    subspace: &Subspace,
    mode: ShotMode,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut raw = Vec::with_capacity(subspace.dimension());
    for &(l_s, l_i) in subspace.pairs() {
        // amplitude() also validates the window bounds.
        raw.push(js.amplitude(l_s, l_i)?.norm_sqr());
    }
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateInput(
            "spectrum carries no probability on the subspace".into(),
        ));
    }
    let exact: Vec<f64> = raw.iter().map(|x| x / total).collect();
    match mode {
        ShotMode::Exact => Ok(exact),
        ShotMode::Shots(n) => {
            if n == 0 {
                return Err(Error::Domain("shot count must be positive".into()));
            }
            let mut counts = Vec::with_capacity(exact.len());
            for &pk in &exact {
                counts.push(sample_poisson(pk * n as f64, rng)? as f64);
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
