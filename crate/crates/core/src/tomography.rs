//! Full two-qutrit state tomography on the OAM subspace {-1, 0, 1}.
//!
//! Each photon is projected onto the 15 eigenvectors of the generalized
//! Gell-Mann matrices (3 basis kets plus the 12 two-mode superpositions
//! `(|j> +- |k>)/sqrt2` and `(|j> +- i|k>)/sqrt2`), giving 225 coincidence
//! projectors that are informationally complete: the 15 single-side rank-1
//! projectors span the full 9-dimensional real space of 3x3 Hermitian
//! operators. The density matrix is parametrized by a lower-triangular
//! Cholesky factor `T` through `rho = T^dag T / Tr(T^dag T)`, which is
//! Hermitian, positive semidefinite, and unit trace by construction; the 81
//! stored reals carry 80 effective parameters because the overall scale of
//! `T` cancels in the quotient. The fit minimizes a chi^2 between measured
//! and predicted probabilities, both normalized to unit sum over the full
//! projector set, using a multi-start L-BFGS with an analytic gradient.

use std::io::Write;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::detection::{born_probability, DensityMatrix, QuantumState, StateVector, Subspace};
use crate::error::{Error, Result};
use crate::linalg::{eigh, kron_vec, C64};

/// Qutrit OAM labels used by the tomography basis, in storage order.
pub const TOMOGRAPHY_LABELS: [i32; 3] = [-1, 0, 1];

/// Denominator floor applied to predicted probabilities inside the chi^2 so
/// dark projectors cannot blow up the estimator.
pub const CHI_SQUARED_FLOOR: f64 = 1e-12;

/// Eigenvalue gap below which the dominant eigenvector of a density matrix is
/// reported as ambiguous.
pub const EIGENVALUE_GAP_TOL: f64 = 1e-6;

/// Minimum magnitude of the reference amplitude for phase extraction.
pub const PHASE_REFERENCE_TOL: f64 = 1e-6;

const DIM: usize = 9;
const N_SINGLE: usize = 15;
const N_PAIR: usize = N_SINGLE * N_SINGLE;
const N_STORED: usize = 81;

/// The 15 single-qutrit analysis vectors: the computational basis
/// `|-1>, |0>, |1>` followed, for each ordered pair `j < k`, by the four
/// superpositions with relative phases `+1, -1, +i, -i`. Duplicate vectors
/// from degenerate Gell-Mann eigenspaces are already removed.
pub fn gell_mann_eigenvectors() -> Vec<Vec<C64>> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut vs: Vec<Vec<C64>> = Vec::with_capacity(N_SINGLE);
    for i in 0..3 {
        let mut v = vec![C64::new(0.0, 0.0); 3];
        v[i] = C64::new(1.0, 0.0);
        vs.push(v);
    }
    let phases = [
        C64::new(1.0, 0.0),
        C64::new(-1.0, 0.0),
        C64::new(0.0, 1.0),
        C64::new(0.0, -1.0),
    ];
    for j in 0..3 {
        for k in (j + 1)..3 {
            for ph in phases {
                let mut v = vec![C64::new(0.0, 0.0); 3];
                v[j] = C64::new(h, 0.0);
                v[k] = ph * h;
                vs.push(v);
            }
        }
    }
    vs
}

/// The 225 two-photon analysis vectors, signal-major: pair `15*a + b` is
/// `singles[a] (x) singles[b]` over the composite index `idx_s * 3 + idx_i`.
pub fn pair_projectors() -> Vec<Vec<C64>> {
    let singles = gell_mann_eigenvectors();
    let mut out = Vec::with_capacity(N_PAIR);
    for a in &singles {
        for b in &singles {
            out.push(kron_vec(a, b));
        }
    }
    out
}

/// Measurement design: 15 single-side vectors per photon and their 225
/// coincidence products.
#[derive(Debug, Clone)]
pub struct ProjectorSet {
    singles: Vec<Vec<C64>>,
    pairs: Vec<Vec<C64>>,
}

impl ProjectorSet {
    /// The standard generalized Gell-Mann design.
    pub fn gell_mann() -> Self {
        Self {
            singles: gell_mann_eigenvectors(),
            pairs: pair_projectors(),
        }
    }

    /// The 15 single-qutrit vectors (identical on both sides).
    pub fn singles(&self) -> &[Vec<C64>] {
        &self.singles
    }

    /// The 225 pair vectors in signal-major order.
    pub fn pairs(&self) -> &[Vec<C64>] {
        &self.pairs
    }

    /// Number of coincidence projectors (225).
    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }
}

/// Real parameters of the lower-triangular Cholesky factor `T`.
///
/// Storage layout: the 9 real diagonal entries first, then for each row
/// `i = 0..9` and column `j < i` the real and imaginary parts of `T[i][j]`.
/// That is 81 stored reals; the density matrix they define has 80 effective
/// degrees of freedom because `rho` is invariant under rescaling of `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyParams {
    x: Vec<f64>,
}

impl CholeskyParams {
    /// Number of stored real parameters.
    pub const STORED: usize = N_STORED;
    /// Number of effective parameters after the scale quotient.
    pub const EFFECTIVE: usize = N_STORED - 1;

    /// Validate length (81) and finiteness.
    pub fn new(x: Vec<f64>) -> Result<Self> {
        if x.len() != N_STORED {
            return Err(Error::Domain(format!(
                "Cholesky parameter vector has length {}, expected {N_STORED}",
                x.len()
            )));
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Domain(
                "Cholesky parameters must all be finite".into(),
            ));
        }
        Ok(Self { x })
    }

    /// Unit-diagonal factor; its density matrix is the maximally mixed state.
    pub fn identity() -> Self {
        let mut x = vec![0.0; N_STORED];
        for v in x.iter_mut().take(DIM) {
            *v = 1.0;
        }
        Self { x }
    }

    /// Stored parameter values.
    pub fn values(&self) -> &[f64] {
        &self.x
    }

    /// The lower-triangular 9x9 factor `T`.
    pub fn factor(&self) -> Array2<C64> {
        unpack(&self.x)
    }

    /// Pack the lower triangle of a 9x9 factor; entries above the diagonal
    /// are ignored and the diagonal imaginary parts are dropped.
    pub fn from_factor(t: &Array2<C64>) -> Result<Self> {
        if t.nrows() != DIM || t.ncols() != DIM {
            return Err(Error::Domain(format!(
                "Cholesky factor is {}x{}, expected {DIM}x{DIM}",
                t.nrows(),
                t.ncols()
            )));
        }
        Self::new(pack(t))
    }
}

fn unpack(x: &[f64]) -> Array2<C64> {
    let mut t = Array2::<C64>::zeros((DIM, DIM));
    let mut k = 0;
    for i in 0..DIM {
        t[(i, i)] = C64::new(x[k], 0.0);
        k += 1;
    }
    for i in 0..DIM {
        for j in 0..i {
            t[(i, j)] = C64::new(x[k], x[k + 1]);
            k += 2;
        }
    }
    t
}

fn pack(t: &Array2<C64>) -> Vec<f64> {
    let mut x = vec![0.0; N_STORED];
    let mut k = 0;
    for i in 0..DIM {
        x[k] = t[(i, i)].re;
        k += 1;
    }
    for i in 0..DIM {
        for j in 0..i {
            x[k] = t[(i, j)].re;
            x[k + 1] = t[(i, j)].im;
            k += 2;
        }
    }
    x
}

/// `rho = T^dag T / Tr(T^dag T)`: Hermitian, PSD, and unit trace for every
/// finite parameter vector except all-zero, which has no normalization.
pub fn density_from_cholesky(params: &CholeskyParams) -> Result<DensityMatrix> {
    let t = params.factor();
    let scale: f64 = t.iter().map(|z| z.norm_sqr()).sum();
    if scale <= 0.0 {
        return Err(Error::DegenerateInput(
            "all-zero Cholesky factor cannot be normalized".into(),
        ));
    }
    let mut m = Array2::<C64>::zeros((DIM, DIM));
    for a in 0..DIM {
        for b in a..DIM {
            let mut acc = C64::new(0.0, 0.0);
            for i in 0..DIM {
                acc += t[(i, a)].conj() * t[(i, b)];
            }
            m[(a, b)] = acc / scale;
            m[(b, a)] = (acc / scale).conj();
        }
    }
    DensityMatrix::new(TOMOGRAPHY_LABELS.to_vec(), m)
}

/// Exact detection probabilities of a two-qutrit state over the 225-projector
/// design, normalized to unit sum (the convention used for measured rates).
pub fn projector_probabilities(state: &QuantumState) -> Result<Vec<f64>> {
    if state.dimension() != 3 {
        return Err(Error::Domain(format!(
            "tomography covers the two-qutrit space; state has local dimension {}",
            state.dimension()
        )));
    }
    let singles = gell_mann_eigenvectors();
    let mut p = Vec::with_capacity(N_PAIR);
    for a in &singles {
        for b in &singles {
            p.push(born_probability(state, a, b)?);
        }
    }
    let sum: f64 = p.iter().sum();
    if sum <= 0.0 {
        return Err(Error::DegenerateInput(
            "state is dark on every tomography projector".into(),
        ));
    }
    Ok(p.into_iter().map(|v| v / sum).collect())
}

/// Poisson-sampled synthetic counts over the 225 projectors with the given
/// expected total. Deterministic under a fixed RNG state.
pub fn projector_counts<R: Rng + ?Sized>(
    state: &QuantumState,
    expected_total: f64,
    rng: &mut R,
) -> Result<Vec<u64>> {
    if !(expected_total > 0.0) || !expected_total.is_finite() {
        return Err(Error::Domain(format!(
            "expected total counts must be positive and finite, got {expected_total}"
        )));
    }
    let p = projector_probabilities(state)?;
    p.iter()
        .map(|&pi| crate::detection::sample_poisson(pi * expected_total, rng))
        .collect()
}

/// chi^2 between a measured and a predicted probability vector. Returns the
/// value and the number of predicted entries clamped to the denominator
/// floor; residuals always use the raw predicted values.
pub fn chi_squared_detailed(measured: &[f64], predicted: &[f64]) -> Result<(f64, usize)> {
    if measured.is_empty() || measured.len() != predicted.len() {
        return Err(Error::Domain(format!(
            "probability vectors have lengths {} and {}; need equal and nonempty",
            measured.len(),
            predicted.len()
        )));
    }
    if !measured.iter().all(|v| v.is_finite() && *v >= 0.0) {
        return Err(Error::Domain(
            "measured probabilities must be finite and nonnegative".into(),
        ));
    }
    if !predicted.iter().all(|v| v.is_finite()) {
        return Err(Error::Domain("predicted probabilities must be finite".into()));
    }
    let total: f64 = measured.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::Domain(format!(
            "measured probabilities must be normalized to unit sum, got {total}"
        )));
    }
    let mut acc = 0.0;
    let mut clamped = 0;
    for (&m, &p) in measured.iter().zip(predicted) {
        let denom = if p < CHI_SQUARED_FLOOR {
            clamped += 1;
            CHI_SQUARED_FLOOR
        } else {
            p
        };
        let r = m - p;
        acc += r * r / denom;
    }
    Ok((acc, clamped))
}

/// chi^2 value only; see [`chi_squared_detailed`] for the clamp count.
pub fn chi_squared(measured: &[f64], predicted: &[f64]) -> Result<f64> {
    chi_squared_detailed(measured, predicted).map(|(v, _)| v)
}

/// Predicted probabilities of the Cholesky state over the projector set,
/// normalized across all 225 entries to match the measured convention.
pub fn predicted_probabilities(params: &CholeskyParams) -> Result<Vec<f64>> {
    let engine = Engine::new();
    let t = params.factor();
    let (_, s, scale) = engine.forward(&t);
    if scale <= 0.0 {
        return Err(Error::DegenerateInput(
            "all-zero Cholesky factor cannot be normalized".into(),
        ));
    }
    Ok(s)
}

// ---------------------------------------------------------------------------
// chi^2 engine: sparse pair vectors plus the analytic gradient.
//
// With q_i = |T v_i|^2 and S = sum_j q_j, the normalized prediction is
// s_i = q_i / S, and the chain rule together with the projector closure
// sum_j |v_j><v_j| = 25 I gives
//   d chi^2 / d conj(T)_ab = ( W_ab - (sum_i g_i s_i) * 25 T_ab ) / S,
//   W_ab = sum_i g_i (T v_i)_a conj(v_i)_b,   g_i = d chi^2 / d s_i.
// Each pair vector has at most four nonzero components, which the engine
// exploits in both the forward pass and the W accumulation.
// ---------------------------------------------------------------------------

struct Engine {
    /// Nonzero components of each pair vector: (composite index, value).
    sparse: Vec<Vec<(usize, C64)>>,
}

impl Engine {
    fn new() -> Self {
        let sparse = pair_projectors()
            .into_iter()
            .map(|v| {
                v.into_iter()
                    .enumerate()
                    .filter(|(_, z)| z.norm_sqr() > 0.0)
                    .collect()
            })
            .collect();
        Self { sparse }
    }

    /// Rows `T v_i`, normalized probabilities, and the normalization `S`.
    fn forward(&self, t: &Array2<C64>) -> (Vec<[C64; DIM]>, Vec<f64>, f64) {
        let mut tv = vec![[C64::new(0.0, 0.0); DIM]; N_PAIR];
        let mut q = vec![0.0; N_PAIR];
        for (i, entries) in self.sparse.iter().enumerate() {
            let row = &mut tv[i];
            for &(b, val) in entries {
                // T is lower-triangular: column b has support on rows b..DIM.
                for a in b..DIM {
                    row[a] += t[(a, b)] * val;
                }
            }
            q[i] = row.iter().map(|z| z.norm_sqr()).sum();
        }
        let scale: f64 = q.iter().sum();
        let s = if scale > 0.0 {
            q.iter().map(|v| v / scale).collect()
        } else {
            q.clone()
        };
        (tv, s, scale)
    }

    fn chi2(&self, x: &[f64], m: &[f64]) -> f64 {
        let t = unpack(x);
        let (_, s, scale) = self.forward(&t);
        if scale <= 0.0 {
            return f64::INFINITY;
        }
        let mut acc = 0.0;
        for (&mi, &si) in m.iter().zip(&s) {
            let denom = si.max(CHI_SQUARED_FLOOR);
            let r = mi - si;
            acc += r * r / denom;
        }
        acc
    }

    fn chi2_grad(&self, x: &[f64], m: &[f64]) -> (f64, Vec<f64>) {
        let t = unpack(x);
        let (tv, s, scale) = self.forward(&t);
        if scale <= 0.0 {
            return (f64::INFINITY, vec![0.0; N_STORED]);
        }
        let mut chi = 0.0;
        let mut g = vec![0.0; N_PAIR];
        for i in 0..N_PAIR {
            let si = s[i];
            let denom = si.max(CHI_SQUARED_FLOOR);
            let r = m[i] - si;
            chi += r * r / denom;
            g[i] = if si > CHI_SQUARED_FLOOR {
                -r * (m[i] + si) / (denom * denom)
            } else {
                -2.0 * r / CHI_SQUARED_FLOOR
            };
        }
        // W on the lower triangle only; the upper triangle never reaches the
        // packed gradient because T is lower-triangular.
        let mut w = Array2::<C64>::zeros((DIM, DIM));
        let mut gs = 0.0;
        for (i, entries) in self.sparse.iter().enumerate() {
            gs += g[i] * s[i];
            let row = &tv[i];
            for &(b, val) in entries {
                let cb = val.conj() * g[i];
                for a in b..DIM {
                    w[(a, b)] += row[a] * cb;
                }
            }
        }
        let mut gx = vec![0.0; N_STORED];
        let mut k = 0;
        for i in 0..DIM {
            let d = (w[(i, i)] - gs * 25.0 * t[(i, i)]) / scale;
            gx[k] = 2.0 * d.re;
            k += 1;
        }
        for i in 0..DIM {
            for j in 0..i {
                let d = (w[(i, j)] - gs * 25.0 * t[(i, j)]) / scale;
                gx[k] = 2.0 * d.re;
                gx[k + 1] = 2.0 * d.im;
                k += 2;
            }
        }
        (chi, gx)
    }
}

// ---------------------------------------------------------------------------
// L-BFGS minimizer
// ---------------------------------------------------------------------------

/// Options for the multi-start chi^2 fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitOptions {
    /// Number of starts: the maximally mixed factor plus randomized ones.
    pub n_starts: usize,
    /// Evaluation budget per start (function and gradient calls each count).
    pub max_evaluations: u64,
    /// Relative decrease threshold for the convergence streak.
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            n_starts: 8,
            max_evaluations: 10_000,
            tolerance: 1e-10,
        }
    }
}

impl FitOptions {
    /// Check the options before a (potentially long) fit.
    pub fn validate(&self) -> Result<()> {
        if self.n_starts == 0 {
            return Err(Error::Domain("fit needs at least one start".into()));
        }
        if self.max_evaluations == 0 {
            return Err(Error::Domain(
                "fit needs a positive evaluation budget".into(),
            ));
        }
        if !(self.tolerance > 0.0) || !self.tolerance.is_finite() {
            return Err(Error::Domain(format!(
                "fit tolerance must be positive and finite, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }
}

struct FitOutcome {
    x: Vec<f64>,
    f: f64,
    evaluations: u64,
    converged: bool,
}

const LBFGS_MEMORY: usize = 10;
const ARMIJO_C1: f64 = 1e-4;
const CHI_STOP: f64 = 1e-14;
const STREAK_STOP: u32 = 5;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// L-BFGS with backtracking Armijo line search. Termination at machine-level
/// chi^2, after five consecutive relative decreases below `tol`, or when the
/// line search can no longer find a decrease (a stationary point at working
/// precision); exhausting the evaluation budget marks the start unconverged.
fn lbfgs(engine: &Engine, m: &[f64], x0: Vec<f64>, tol: f64, max_evals: u64) -> FitOutcome {
    let mut x = x0;
    let (mut f, mut g) = engine.chi2_grad(&x, m);
    let mut evals: u64 = 1;
    if f < CHI_STOP {
        return FitOutcome {
            x,
            f,
            evaluations: evals,
            converged: true,
        };
    }
    let mut mem: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::with_capacity(LBFGS_MEMORY);
    let mut streak: u32 = 0;
    let mut converged = false;
    while evals < max_evals {
        // Two-loop recursion for the quasi-Newton direction.
        let mut q = g.clone();
        let mut alpha = vec![0.0; mem.len()];
        for (idx, (s, y, rho)) in mem.iter().enumerate().rev() {
            let a = rho * dot(s, &q);
            alpha[idx] = a;
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
        }
        if let Some((s_last, y_last, _)) = mem.last() {
            let gamma = dot(s_last, y_last) / dot(y_last, y_last);
            for qi in q.iter_mut() {
                *qi *= gamma;
            }
        }
        for (idx, (s, y, rho)) in mem.iter().enumerate() {
            let b = rho * dot(y, &q);
            let a = alpha[idx];
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        let mut d: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut gd = dot(&g, &d);
        if gd >= 0.0 {
            // Not a descent direction; restart from steepest descent.
            d = g.iter().map(|v| -v).collect();
            gd = -dot(&g, &g);
            mem.clear();
        }
        let mut t = if mem.is_empty() {
            (1.0 / dot(&g, &g).sqrt().max(1e-12)).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        let mut budget_hit = false;
        for _ in 0..50 {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect();
            let fn_ = engine.chi2(&xn, m);
            evals += 1;
            if fn_ <= f + ARMIJO_C1 * t * gd {
                accepted = Some(xn);
                break;
            }
            t *= 0.5;
            if evals >= max_evals {
                budget_hit = true;
                break;
            }
        }
        let Some(xn) = accepted else {
            // A full backtracking sweep without decrease means a stationary
            // point at working precision; an aborted sweep is just an
            // exhausted budget.
            converged = f.is_finite() && !budget_hit;
            break;
        };
        let (fnew, gn) = engine.chi2_grad(&xn, m);
        evals += 1;
        if !fnew.is_finite() {
            break;
        }
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-30 {
            if mem.len() == LBFGS_MEMORY {
                mem.remove(0);
            }
            let rho = 1.0 / sy;
            mem.push((s, y, rho));
        }
        let df = f - fnew;
        x = xn;
        f = fnew;
        g = gn;
        if f < CHI_STOP {
            converged = true;
            break;
        }
        streak = if df < tol * f.abs().max(1.0) {
            streak + 1
        } else {
            0
        };
        if streak >= STREAK_STOP {
            converged = true;
            break;
        }
    }
    FitOutcome {
        x,
        f,
        evaluations: evals,
        converged,
    }
}

fn random_start<R: Rng + ?Sized>(rng: &mut R) -> Vec<f64> {
    // Random lower-triangular complex factor; the diagonal takes the modulus
    // of its draw so the factor stays comfortably nondegenerate.
    let mut t = Array2::<C64>::zeros((DIM, DIM));
    for i in 0..DIM {
        for j in 0..=i {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            t[(i, j)] = if i == j {
                C64::new((re * re + im * im).sqrt(), 0.0)
            } else {
                C64::new(re, im)
            };
        }
    }
    pack(&t)
}

/// Result of a tomographic reconstruction.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    /// Fitted density matrix.
    pub rho: DensityMatrix,
    /// Converged chi^2 of the best start.
    pub chi_squared: f64,
    /// Parameters of the best start.
    pub params: CholeskyParams,
    /// Total function/gradient evaluations across all starts.
    pub evaluations: u64,
    /// How many starts terminated by a convergence criterion.
    pub converged_starts: usize,
}

/// Reconstruct a two-qutrit density matrix from 225 projector counts with
/// default fit options (8 starts, 10^4 evaluations each, tolerance 1e-10).
pub fn reconstruct<R: Rng + ?Sized>(counts: &[u64], rng: &mut R) -> Result<Reconstruction> {
    reconstruct_with_options(counts, &FitOptions::default(), rng)
}

/// Reconstruction with explicit fit options. Counts follow the signal-major
/// projector order of [`pair_projectors`]. The first start is the maximally
/// mixed factor; the remaining ones draw random lower-triangular factors from
/// `rng`.
pub fn reconstruct_with_options<R: Rng + ?Sized>(
    counts: &[u64],
    options: &FitOptions,
    rng: &mut R,
) -> Result<Reconstruction> {
    options.validate()?;
    if counts.len() != N_PAIR {
        return Err(Error::Domain(format!(
            "tomography needs {N_PAIR} projector counts, got {}",
            counts.len()
        )));
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::Estimation(
            "tomography counts are all zero; nothing to fit".into(),
        ));
    }
    let m: Vec<f64> = counts
        .iter()
        .map(|&c| c as f64 / total as f64)
        .collect();
    let engine = Engine::new();
    let mut best: Option<FitOutcome> = None;
    let mut evaluations: u64 = 0;
    let mut converged_starts = 0;
    for start in 0..options.n_starts {
        let x0 = if start == 0 {
            CholeskyParams::identity().x
        } else {
            random_start(rng)
        };
        let out = lbfgs(&engine, &m, x0, options.tolerance, options.max_evaluations);
        evaluations += out.evaluations;
        if out.converged {
            converged_starts += 1;
            if best.as_ref().is_none_or(|b| out.f < b.f) {
                best = Some(out);
            }
        }
    }
    let best = best.ok_or_else(|| {
        Error::Estimation(format!(
            "no tomography start converged: {} starts, {} evaluations total, budget {} each",
            options.n_starts, evaluations, options.max_evaluations
        ))
    })?;
    let params = CholeskyParams::new(best.x)?;
    let rho = density_from_cholesky(&params)?;
    Ok(Reconstruction {
        rho,
        chi_squared: best.f,
        params,
        evaluations,
        converged_starts,
    })
}

// ---------------------------------------------------------------------------
// Derived quantities
// ---------------------------------------------------------------------------

/// Dominant eigenpair of a density matrix with a fixed global phase.
#[derive(Debug, Clone)]
pub struct PureEstimate {
    /// Largest eigenvalue.
    pub lambda_max: f64,
    /// Unit eigenvector over the composite basis, reference component
    /// real-positive.
    pub amplitudes: Vec<C64>,
    /// Set when the gap to the second eigenvalue is below
    /// [`EIGENVALUE_GAP_TOL`], in which case the eigenvector is arbitrary
    /// within the degenerate subspace.
    pub ambiguous: bool,
    labels: Vec<i32>,
}

impl PureEstimate {
    /// Local basis labels of the underlying density matrix.
    pub fn labels(&self) -> &[i32] {
        &self.labels
    }

    /// View as a [`StateVector`] for downstream phase extraction.
    pub fn to_state(&self) -> Result<StateVector> {
        StateVector::new(self.labels.clone(), self.amplitudes.clone())
    }
}

/// Dominant eigenpair of `rho` as the closest-pure-state estimate. The global
/// phase makes the `|0,0>` component real-positive (falling back to the
/// largest-magnitude component when that one vanishes); the `ambiguous` flag
/// reports a degenerate top eigenvalue rather than erroring, so callers can
/// still inspect the eigenvalue itself.
pub fn closest_pure_state(rho: &DensityMatrix) -> Result<PureEstimate> {
    let n = rho.matrix().nrows();
    let (vals, vecs) = eigh(rho.matrix())?;
    let lambda_max = vals[n - 1];
    let ambiguous = n < 2 || lambda_max - vals[n - 2] < EIGENVALUE_GAP_TOL;
    let mut v: Vec<C64> = (0..n).map(|i| vecs[(i, n - 1)]).collect();
    let d = rho.dimension();
    let ref_local = rho
        .labels()
        .iter()
        .position(|&l| l == 0)
        .unwrap_or(d / 2);
    let mut ref_idx = ref_local * d + ref_local;
    if v[ref_idx].norm() <= PHASE_REFERENCE_TOL {
        ref_idx = (0..n)
            .max_by(|&a, &b| v[a].norm_sqr().total_cmp(&v[b].norm_sqr()))
            .expect("nonempty vector");
    }
    let phase = C64::from_polar(1.0, v[ref_idx].arg());
    for a in v.iter_mut() {
        *a *= phase.conj();
    }
    ref_idx_realize(&mut v, ref_idx);
    Ok(PureEstimate {
        lambda_max,
        amplitudes: v,
        ambiguous,
        labels: rho.labels().to_vec(),
    })
}

fn ref_idx_realize(v: &mut [C64], ref_idx: usize) {
    // Remove residual round-off in the reference component's imaginary part.
    v[ref_idx] = C64::new(v[ref_idx].norm(), 0.0);
}

/// Wrap an angle to (-pi, pi].
fn wrap_phase(x: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let mut d = x.rem_euclid(tau);
    if d > std::f64::consts::PI {
        d -= tau;
    }
    d
}

/// Phases of the subspace amplitudes of a pure state relative to the
/// reference pair, each wrapped to (-pi, pi]. Invariant under a global phase
/// of the input. The reference amplitude must have magnitude above
/// [`PHASE_REFERENCE_TOL`].
pub fn extract_phases(
    psi: &StateVector,
    subspace: &Subspace,
    reference: (i32, i32),
) -> Result<Vec<f64>> {
    let a_ref = psi.amplitude(reference.0, reference.1)?;
    if a_ref.norm() <= PHASE_REFERENCE_TOL {
        return Err(Error::Domain(format!(
            "reference amplitude |{}, {}> has magnitude {:.3e}, below {PHASE_REFERENCE_TOL:e}",
            reference.0,
            reference.1,
            a_ref.norm()
        )));
    }
    let ref_arg = a_ref.arg();
    subspace
        .pairs()
        .iter()
        .map(|&(l_s, l_i)| Ok(wrap_phase(psi.amplitude(l_s, l_i)?.arg() - ref_arg)))
        .collect()
}

// ---------------------------------------------------------------------------
// Bootstrap error bars
// ---------------------------------------------------------------------------

/// Monte-Carlo standard deviations from Poisson-resampled reconstructions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    /// Requested number of resamples.
    pub n_resamples: usize,
    /// Resamples whose reconstruction or phase extraction failed.
    pub failures: usize,
    /// Population standard deviation of each qutrit diagonal phase, in the
    /// order `(-1,-1), (0,0), (1,1)`; the reference entry is identically 0.
    pub phase_std: Vec<f64>,
    /// Standard deviation of the largest eigenvalue.
    pub lambda_max_std: f64,
    /// Standard deviation of the purity.
    pub purity_std: f64,
}

fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Resample each observed count as Poisson(observed), re-run the full
/// reconstruction and phase extraction, and report per-quantity standard
/// deviations. Phases are treated linearly, which is valid while their
/// scatter stays well inside (-pi, pi). More than 20% failed resamples is an
/// estimation error; individual failures below that are counted and skipped.
pub fn bootstrap_errors<R: Rng + ?Sized>(
    counts: &[u64],
    n_resamples: usize,
    options: &FitOptions,
    rng: &mut R,
) -> Result<BootstrapReport> {
    if counts.len() != N_PAIR {
        return Err(Error::Domain(format!(
            "tomography needs {N_PAIR} projector counts, got {}",
            counts.len()
        )));
    }
    if n_resamples < 2 {
        return Err(Error::Domain(format!(
            "bootstrap needs at least 2 resamples, got {n_resamples}"
        )));
    }
    options.validate()?;
    let subspace = Subspace::qutrit();
    let n_pairs = subspace.dimension();
    let mut phases: Vec<Vec<f64>> = vec![Vec::new(); n_pairs];
    let mut lambdas = Vec::new();
    let mut purities = Vec::new();
    let mut failures = 0usize;
    for _ in 0..n_resamples {
        let resampled: Vec<u64> = counts
            .iter()
            .map(|&c| crate::detection::sample_poisson(c as f64, rng))
            .collect::<Result<_>>()?;
        let outcome = reconstruct_with_options(&resampled, options, rng)
            .and_then(|recon| {
                let pure = closest_pure_state(&recon.rho)?;
                let state = pure.to_state()?;
                let ph = extract_phases(&state, &subspace, (0, 0))?;
                Ok((ph, pure.lambda_max, recon.rho.purity()))
            });
        match outcome {
            Ok((ph, lam, pur)) => {
                for (acc, v) in phases.iter_mut().zip(ph) {
                    acc.push(v);
                }
                lambdas.push(lam);
                purities.push(pur);
            }
            Err(_) => failures += 1,
        }
    }
    if failures as f64 > 0.2 * n_resamples as f64 {
        return Err(Error::Estimation(format!(
            "{failures} of {n_resamples} bootstrap reconstructions failed"
        )));
    }
    Ok(BootstrapReport {
        n_resamples,
        failures,
        phase_std: phases.iter().map(|v| population_std(v)).collect(),
        lambda_max_std: population_std(&lambdas),
        purity_std: population_std(&purities),
    })
}

// ---------------------------------------------------------------------------
// Export formats
// ---------------------------------------------------------------------------

/// JSON-serializable density matrix (real and imaginary 9x9 arrays).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityRecord {
    pub schema_version: u32,
    pub labels: Vec<i32>,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl DensityRecord {
    pub fn from_density(rho: &DensityMatrix) -> Self {
        let m = rho.matrix();
        let n = m.nrows();
        let re = (0..n)
            .map(|i| (0..n).map(|j| m[(i, j)].re).collect())
            .collect();
        let im = (0..n)
            .map(|i| (0..n).map(|j| m[(i, j)].im).collect())
            .collect();
        Self {
            schema_version: crate::SCHEMA_VERSION,
            labels: rho.labels().to_vec(),
            re,
            im,
        }
    }

    /// Rebuild and re-validate the density matrix.
    pub fn to_density(&self) -> Result<DensityMatrix> {
        let n = self.labels.len() * self.labels.len();
        if self.re.len() != n
            || self.im.len() != n
            || self.re.iter().any(|r| r.len() != n)
            || self.im.iter().any(|r| r.len() != n)
        {
            return Err(Error::Format(format!(
                "density record arrays do not form a {n}x{n} matrix"
            )));
        }
        let mut m = Array2::<C64>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = C64::new(self.re[i][j], self.im[i][j]);
            }
        }
        DensityMatrix::new(self.labels.clone(), m)
    }
}

/// Write a density matrix as CSV rows `row,col,re,im` over the composite
/// index (header included).
pub fn write_density_csv<W: Write>(rho: &DensityMatrix, mut out: W) -> Result<()> {
    let m = rho.matrix();
    writeln!(out, "row,col,re,im")?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            writeln!(out, "{i},{j},{:.17e},{:.17e}", m[(i, j)].re, m[(i, j)].im)?;
        }
    }
    Ok(())
}

/// Phase of one subspace amplitude, with an optional bootstrap error bar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseEstimate {
    pub l_s: i32,
    pub l_i: i32,
    pub phase: f64,
    pub std_error: Option<f64>,
}

/// Summary of a reconstruction: fit quality, purity, closest-pure-state
/// eigenvalue, and the diagonal phases with optional error bars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographyReport {
    pub schema_version: u32,
    pub chi_squared: f64,
    pub purity: f64,
    pub lambda_max: f64,
    pub ambiguous_top_eigenvalue: bool,
    pub phases: Vec<PhaseEstimate>,
}

/// Assemble the report for a reconstruction; phases are extracted from the
/// closest pure state on the qutrit diagonal with `|0,0>` as reference, and
/// error bars are attached when a bootstrap report is supplied.
pub fn tomography_report(
    recon: &Reconstruction,
    bootstrap: Option<&BootstrapReport>,
) -> Result<TomographyReport> {
    let pure = closest_pure_state(&recon.rho)?;
    let state = pure.to_state()?;
    let subspace = Subspace::qutrit();
    let phases = extract_phases(&state, &subspace, (0, 0))?;
    if let Some(b) = bootstrap {
        if b.phase_std.len() != phases.len() {
            return Err(Error::Domain(format!(
                "bootstrap report carries {} phase errors for {} phases",
                b.phase_std.len(),
                phases.len()
            )));
        }
    }
    let estimates = subspace
        .pairs()
        .iter()
        .zip(&phases)
        .enumerate()
        .map(|(k, (&(l_s, l_i), &phase))| PhaseEstimate {
            l_s,
            l_i,
            phase,
            std_error: bootstrap.map(|b| b.phase_std[k]),
        })
        .collect();
    Ok(TomographyReport {
        schema_version: crate::SCHEMA_VERSION,
        chi_squared: recon.chi_squared,
        purity: recon.rho.purity(),
        lambda_max: pure.lambda_max,
        ambiguous_top_eigenvalue: pure.ambiguous,
        phases: estimates,
    })
}
