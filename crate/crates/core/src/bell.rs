//! CGLMP Bell test for entangled qutrits.
//!
//! The optimal measurement bases are Fourier-type: on the signal side
//! `|n>_{A,a} = (1/sqrt(3)) sum_l exp(i (2 pi / 3) l (n + alpha_a)) |l>`
//! with offsets `alpha_1 = 0`, `alpha_2 = 1/2`, and on the idler side
//! `|m>_{B,b}` with exponent `l (-m + beta_b)`, `beta_1 = 1/4`,
//! `beta_2 = -1/4`, where `l` runs over the physical OAM labels
//! {-1, 0, 1}. States prepared with nonzero phases `theta_1`, `theta_2`
//! are handled by the substitutions `|-1> -> e^{i phi_1/2} |-1>` and
//! `|1> -> e^{i phi_2/2} |1>` applied to both parties' analyzers, which
//! restores the maximal violation.
//!
//! The Bell parameter combines eight coincidence-probability sums,
//!
//! ```text
//! I3 = [P(A1=B1) + P(B1=A2+1) + P(A2=B2) + P(B2=A1)]
//!    - [P(A1=B1-1) + P(B1=A2) + P(A2=B2-1) + P(B2=A1-1)]
//! ```
//!
//! with `P(A_a = B_b + k) = sum_j P(A_a = j, B_b = (j - k) mod 3)`. The
//! modular sign convention is frozen by the requirement that the
//! maximally entangled qutrit pair reach `4 / (6 sqrt(3) - 9) ~ 2.8729`;
//! local realistic models are bounded by 2.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::detection::{born_probability, QuantumState, StateVector};
use crate::error::{Error, Result};
use crate::linalg::C64;

/// Qutrit OAM labels, in local-index order.
const LABELS: [i32; 3] = [-1, 0, 1];
/// Basis offsets for the two analyzer settings per side.
const ALPHAS: [f64; 2] = [0.0, 0.5];
const BETAS: [f64; 2] = [0.25, -0.25];

/// The four CGLMP analyzer bases (two per side), with phase corrections.
#[derive(Debug, Clone)]
pub struct BellSettings {
    phi1: f64,
    phi2: f64,
    /// `alice[a-1][n]` = analyzer vector over the local basis {-1, 0, 1}.
    alice: [[Vec<C64>; 3]; 2],
    /// `bob[b-1][m]`, same layout.
    bob: [[Vec<C64>; 3]; 2],
}

/// Build the optimal CGLMP bases with phase corrections `phi1`, `phi2`.
pub fn cglmp_bases(phi1: f64, phi2: f64) -> BellSettings {
    let omega = 2.0 * std::f64::consts::PI / 3.0;
    let sub_phase = |l: i32| -> f64 {
        match l {
            -1 => phi1 / 2.0,
            1 => phi2 / 2.0,
            _ => 0.0,
        }
    };
    let vector = |arg: f64| -> Vec<C64> {
        LABELS
            .iter()
            .map(|&l| {
                C64::from_polar(
                    1.0 / 3f64.sqrt(),
                    omega * l as f64 * arg + sub_phase(l),
                )
            })
            .collect()
    };
    let mut alice: [[Vec<C64>; 3]; 2] = Default::default();
    let mut bob: [[Vec<C64>; 3]; 2] = Default::default();
    for a in 0..2 {
        for n in 0..3 {
            alice[a][n] = vector(n as f64 + ALPHAS[a]);
        }
    }
    for b in 0..2 {
        for m in 0..3 {
            bob[b][m] = vector(-(m as f64) + BETAS[b]);
        }
    }
    BellSettings {
        phi1,
        phi2,
        alice,
        bob,
    }
}

impl BellSettings {
    pub fn phases(&self) -> (f64, f64) {
        (self.phi1, self.phi2)
    }

    /// Analyzer vector for Alice's setting `a` (1 or 2) and outcome `n`.
    pub fn alice(&self, a: usize, n: usize) -> Result<&[C64]> {
        if !(1..=2).contains(&a) || n > 2 {
            return Err(Error::Domain(format!(
                "invalid Alice setting/outcome ({a}, {n})"
            )));
        }
        Ok(&self.alice[a - 1][n])
    }

    /// Analyzer vector for Bob's setting `b` (1 or 2) and outcome `m`.
    pub fn bob(&self, b: usize, m: usize) -> Result<&[C64]> {
        if !(1..=2).contains(&b) || m > 2 {
            return Err(Error::Domain(format!(
                "invalid Bob setting/outcome ({b}, {m})"
            )));
        }
        Ok(&self.bob[b - 1][m])
    }
}

/// Joint outcome probabilities `P(A_a = n, B_b = m)`; `p[a-1][b-1][n][m]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeTable {
    p: [[[[f64; 3]; 3]; 2]; 2],
}

impl OutcomeTable {
    /// Build from a flat 36-entry vector ordered `(a, b, n, m)` row-major.
    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() != 36 {
            return Err(Error::Domain(format!(
                "outcome table needs 36 probabilities, got {}",
                flat.len()
            )));
        }
        if flat.iter().any(|&x| x < 0.0 || !x.is_finite()) {
            return Err(Error::Domain(
                "outcome probabilities must be nonnegative and finite".into(),
            ));
        }
        let mut p = [[[[0.0; 3]; 3]; 2]; 2];
        let mut it = flat.iter();
        for a in 0..2 {
            for b in 0..2 {
                for n in 0..3 {
                    for m in 0..3 {
                        p[a][b][n][m] = *it.next().expect("length checked");
                    }
                }
            }
        }
        Ok(Self { p })
    }

    pub fn probability(&self, a: usize, b: usize, n: usize, m: usize) -> f64 {
        self.p[a - 1][b - 1][n][m]
    }

    /// Flattened `(a, b, n, m)` row-major view.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(36);
        for a in 0..2 {
            for b in 0..2 {
                for n in 0..3 {
                    for m in 0..3 {
                        out.push(self.p[a][b][n][m]);
                    }
                }
            }
        }
        out
    }

    /// Sum of one setting block; 1 for exact Born tables.
    pub fn block_sum(&self, a: usize, b: usize) -> f64 {
        let mut s = 0.0;
        for n in 0..3 {
            for m in 0..3 {
                s += self.p[a - 1][b - 1][n][m];
            }
        }
        s
    }
}

fn qutrit_guard(state: &QuantumState) -> Result<()> {
    if state.labels() != LABELS {
        return Err(Error::Domain(format!(
            "CGLMP test expects the qutrit basis {:?}, got {:?}",
            LABELS,
            state.labels()
        )));
    }
    Ok(())
}

/// Exact joint outcome table under the given settings.
pub fn joint_outcome_table(state: &QuantumState, settings: &BellSettings) -> Result<OutcomeTable> {
    qutrit_guard(state)?;
    let mut p = [[[[0.0; 3]; 3]; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            for n in 0..3 {
                for m in 0..3 {
                    p[a][b][n][m] = born_probability(
                        state,
                        &settings.alice[a][n],
                        &settings.bob[b][m],
                    )?;
                }
            }
        }
    }
    Ok(OutcomeTable { p })
}

/// Outcome table estimated from Poissonian counts, normalizing each 3x3
/// setting block by its own total (the four blocks are measured as separate
/// runs, so per-block normalization mirrors the hardware).
pub fn joint_outcome_table_counts<R: Rng + ?Sized>(
    state: &QuantumState,
    settings: &BellSettings,
    flux_hz: f64,
    exposure_s: f64,
    rng: &mut R,
) -> Result<OutcomeTable> {
    if !(flux_hz > 0.0) || !(exposure_s > 0.0) {
        return Err(Error::Domain("flux and exposure must be positive".into()));
    }
    let exact = joint_outcome_table(state, settings)?;
    let mut p = [[[[0.0; 3]; 3]; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            let mut counts = [[0.0; 3]; 3];
            let mut total = 0.0;
            for n in 0..3 {
                for m in 0..3 {
                    let lambda = exact.p[a][b][n][m] * flux_hz * exposure_s;
                    let c = crate::detection::sample_poisson(lambda, rng)? as f64;
                    counts[n][m] = c;
                    total += c;
                }
            }
            if total <= 0.0 {
                return Err(Error::Estimation(format!(
                    "no counts in setting block ({}, {}); increase flux or exposure",
                    a + 1,
                    b + 1
                )));
            }
            for n in 0..3 {
                for m in 0..3 {
                    p[a][b][n][m] = counts[n][m] / total;
                }
            }
        }
    }
    Ok(OutcomeTable { p })
}

/// `P(A_a = B_b + k) = sum_j P(A_a = j, B_b = (j - k) mod 3)`.
fn p_a_eq_b_plus(table: &OutcomeTable, a: usize, b: usize, k: i32) -> f64 {
    let mut s = 0.0;
    for j in 0..3i32 {
        let m = (j - k).rem_euclid(3) as usize;
        s += table.p[a - 1][b - 1][j as usize][m];
    }
    s
}

/// `P(B_b = A_a + k) = sum_j P(A_a = j, B_b = (j + k) mod 3)`.
fn p_b_eq_a_plus(table: &OutcomeTable, a: usize, b: usize, k: i32) -> f64 {
    let mut s = 0.0;
    for j in 0..3i32 {
        let m = (j + k).rem_euclid(3) as usize;
        s += table.p[a - 1][b - 1][j as usize][m];
    }
    s
}

/// The four positive and four negative probability combinations of I3, in
/// the order of the defining sum.
pub fn i3_terms(table: &OutcomeTable) -> ([f64; 4], [f64; 4]) {
    let positive = [
        p_a_eq_b_plus(table, 1, 1, 0),
        p_b_eq_a_plus(table, 2, 1, 1),
        p_a_eq_b_plus(table, 2, 2, 0),
        p_b_eq_a_plus(table, 1, 2, 0),
    ];
    let negative = [
        p_a_eq_b_plus(table, 1, 1, -1),
        p_b_eq_a_plus(table, 2, 1, 0),
        p_a_eq_b_plus(table, 2, 2, -1),
        p_b_eq_a_plus(table, 1, 2, -1),
    ];
    (positive, negative)
}

/// CGLMP Bell parameter of a complete outcome table.
pub fn bell_i3(table: &OutcomeTable) -> f64 {
    let (pos, neg) = i3_terms(table);
    pos.iter().sum::<f64>() - neg.iter().sum::<f64>()
}

/// I3 of a state under the given settings.
pub fn i3_value(state: &QuantumState, settings: &BellSettings) -> Result<f64> {
    Ok(bell_i3(&joint_outcome_table(state, settings)?))
}

/// I3 with analyzers corrected for the state's phases: for a state prepared
/// with phases `phi1`, `phi2`, this restores the phase-zero violation.
pub fn i3_phase_corrected(state: &QuantumState, phi1: f64, phi2: f64) -> Result<f64> {
    i3_value(state, &cglmp_bases(phi1, phi2))
}

/// `(|-1,-1> + gamma |0,0> + |1,1>) / sqrt(2 + gamma^2)`.
pub fn gamma_state(gamma: f64) -> Result<StateVector> {
    if !gamma.is_finite() {
        return Err(Error::Domain(format!("gamma must be finite, got {gamma}")));
    }
    StateVector::from_schmidt_diagonal(
        LABELS.to_vec(),
        vec![
            C64::new(1.0, 0.0),
            C64::new(gamma, 0.0),
            C64::new(1.0, 0.0),
        ],
    )
}

/// Scan the asymmetric-state family over gamma in [0.5, 1.2] (step 0.005)
/// with phase-zero settings; returns `(gamma_max, i3_max)`.
pub fn gamma_scan() -> Result<(f64, f64)> {
    let settings = cglmp_bases(0.0, 0.0);
    let mut best = (0.0, f64::NEG_INFINITY);
    let steps = ((1.2 - 0.5) / 0.005_f64).round() as usize;
    for i in 0..=steps {
        let g = 0.5 + 0.005 * i as f64;
        let v = i3_value(&QuantumState::Pure(gamma_state(g)?), &settings)?;
        if v > best.1 {
            best = (g, v);
        }
    }
    Ok(best)
}

/// JSON-serializable I3 evaluation report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct I3Report {
    pub schema_version: u32,
    pub phi1: f64,
    pub phi2: f64,
    pub alpha_offsets: [f64; 2],
    pub beta_offsets: [f64; 2],
    /// Flattened `(a, b, n, m)` row-major probabilities (36 entries).
    pub probabilities: Vec<f64>,
    pub positive_terms: [f64; 4],
    pub negative_terms: [f64; 4],
    pub i3: f64,
}

/// Evaluate I3 and package settings, table, and terms for export.
pub fn i3_report(state: &QuantumState, settings: &BellSettings) -> Result<I3Report> {
    let table = joint_outcome_table(state, settings)?;
    let (positive_terms, negative_terms) = i3_terms(&table);
    Ok(I3Report {
        schema_version: crate::SCHEMA_VERSION,
        phi1: settings.phi1,
        phi2: settings.phi2,
        alpha_offsets: ALPHAS,
        beta_offsets: BETAS,
        probabilities: table.to_flat(),
        positive_terms,
        negative_terms,
        i3: bell_i3(&table),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::apply_white_noise;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Exact maximal I3 for the maximally entangled qutrit pair.
    fn i3_maxent_exact() -> f64 {
        4.0 / (6.0 * 3f64.sqrt() - 9.0)
    }

    fn maxent() -> QuantumState {
        QuantumState::Pure(StateVector::max_entangled_qutrit(0.0, 0.0))
    }

    #[test]
    fn bases_are_orthonormal() {
        let s = cglmp_bases(0.37, -1.21);
        for (party, bases) in [("A", &s.alice), ("B", &s.bob)] {
            for (set, basis) in bases.iter().enumerate() {
                for i in 0..3 {
                    for j in 0..3 {
                        let dot: C64 = basis[i]
                            .iter()
                            .zip(&basis[j])
                            .map(|(x, y)| x.conj() * y)
                            .sum();
                        let expect = if i == j { 1.0 } else { 0.0 };
                        assert!(
                            (dot.norm() - expect).abs() < 1e-12,
                            "{party}{set}: <{i}|{j}> = {dot}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn cross_setting_overlap_pattern() {
        // The two settings differ by the half-integer offset 1/2, so they
        // are not mutually unbiased: each overlap is exactly 4/9 or 1/9
        // (|1 + 2 cos((2 pi / 3)(n' - n + 1/2))|^2 / 9), with exactly one
        // 1/9 per row and rows summing to 1.
        let s = cglmp_bases(0.0, 0.0);
        for bases in [&s.alice, &s.bob] {
            for n in 0..3 {
                let mut row = Vec::new();
                for np in 0..3 {
                    let dot: C64 = bases[0][n]
                        .iter()
                        .zip(&bases[1][np])
                        .map(|(x, y)| x.conj() * y)
                        .sum();
                    row.push(dot.norm_sqr());
                }
                let total: f64 = row.iter().sum();
                assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
                let small = row
                    .iter()
                    .filter(|&&x| (x - 1.0 / 9.0).abs() < 1e-12)
                    .count();
                let large = row
                    .iter()
                    .filter(|&&x| (x - 4.0 / 9.0).abs() < 1e-12)
                    .count();
                assert_eq!((small, large), (1, 2), "row {n}: {row:?}");
            }
        }
    }

    #[test]
    fn thirty_six_distinct_projector_pairs() {
        let s = cglmp_bases(0.0, 0.0);
        let mut pairs = Vec::new();
        for a in 1..=2usize {
            for b in 1..=2usize {
                for n in 0..3usize {
                    for m in 0..3usize {
                        let av = s.alice(a, n).unwrap();
                        let bv = s.bob(b, m).unwrap();
                        let mut v = Vec::new();
                        for x in av {
                            for y in bv {
                                v.push(x * y);
                            }
                        }
                        pairs.push(v);
                    }
                }
            }
        }
        assert_eq!(pairs.len(), 36);
        // Pairwise distinct up to global phase: overlap magnitude < 1.
        for i in 0..pairs.len() {
            for j in (i + 1)..pairs.len() {
                let dot: C64 = pairs[i]
                    .iter()
                    .zip(&pairs[j])
                    .map(|(x, y)| x.conj() * y)
                    .sum();
                assert!(
                    dot.norm() < 1.0 - 1e-9,
                    "projectors {i} and {j} coincide"
                );
            }
        }
    }

    #[test]
    fn outcome_blocks_are_normalized() {
        let s = cglmp_bases(0.0, 0.0);
        for state in [
            maxent(),
            QuantumState::Pure(StateVector::max_entangled_qutrit(1.1, -0.3)),
            QuantumState::Mixed(
                apply_white_noise(&StateVector::max_entangled_qutrit(0.0, 0.0), 0.5).unwrap(),
            ),
        ] {
            let t = joint_outcome_table(&state, &s).unwrap();
            for a in 1..=2 {
                for b in 1..=2 {
                    assert_abs_diff_eq!(t.block_sum(a, b), 1.0, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn maximally_mixed_state_is_flat_and_scores_zero() {
        let psi = StateVector::max_entangled_qutrit(0.0, 0.0);
        let rho = apply_white_noise(&psi, 0.0).unwrap();
        let state = QuantumState::Mixed(rho);
        let t = joint_outcome_table(&state, &cglmp_bases(0.0, 0.0)).unwrap();
        for x in t.to_flat() {
            assert_abs_diff_eq!(x, 1.0 / 9.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(bell_i3(&t), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn product_basis_state_is_flat() {
        // |0> (x) |0>: each analyzer basis is unbiased w.r.t. |0>.
        let mut amps = vec![C64::new(0.0, 0.0); 9];
        amps[1 * 3 + 1] = C64::new(1.0, 0.0);
        let psi = StateVector::new(vec![-1, 0, 1], amps).unwrap();
        let t = joint_outcome_table(&QuantumState::Pure(psi), &cglmp_bases(0.0, 0.0)).unwrap();
        for x in t.to_flat() {
            assert_abs_diff_eq!(x, 1.0 / 9.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn maxent_violation_matches_the_closed_form() {
        let v = i3_value(&maxent(), &cglmp_bases(0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(v, i3_maxent_exact(), epsilon = 1e-12);
        assert_abs_diff_eq!(v, 2.8729, epsilon = 1e-3);
    }

    #[test]
    fn gamma_scan_finds_the_stronger_asymmetric_violation() {
        let (g, v) = gamma_scan().unwrap();
        assert_abs_diff_eq!(g, 0.79, epsilon = 0.02);
        // Closed-form optimum: gamma* = (sqrt(11) - sqrt(3)) / 2,
        // I3(gamma*) = 1 + sqrt(11/3).
        assert_abs_diff_eq!(v, 1.0 + (11.0 / 3.0f64).sqrt(), epsilon = 1e-2);
        assert!((v - 2.91).abs() < 0.01);
        let at_one = i3_value(
            &QuantumState::Pure(gamma_state(1.0).unwrap()),
            &cglmp_bases(0.0, 0.0),
        )
        .unwrap();
        assert_abs_diff_eq!(at_one, i3_maxent_exact(), epsilon = 1e-12);
        assert!(v > at_one);
    }

    #[test]
    fn white_noise_scales_i3_linearly() {
        let psi = StateVector::max_entangled_qutrit(0.0, 0.0);
        let settings = cglmp_bases(0.0, 0.0);
        let pure = i3_value(&maxent(), &settings).unwrap();
        for p in [0.25, 0.5, 0.88, 0.91, 1.0] {
            let rho = apply_white_noise(&psi, p).unwrap();
            let v = i3_value(&QuantumState::Mixed(rho), &settings).unwrap();
            assert_abs_diff_eq!(v, p * pure, epsilon = 1e-10);
        }
        // The quoted experimental operating point.
        let rho = apply_white_noise(&psi, 0.91).unwrap();
        let v = i3_value(&QuantumState::Mixed(rho), &settings).unwrap();
        assert_abs_diff_eq!(v, 2.614, epsilon = 1e-3);
    }

    #[test]
    fn mixture_linearity_of_i3() {
        let settings = cglmp_bases(0.0, 0.0);
        let r1 = StateVector::max_entangled_qutrit(0.3, 0.9).to_density();
        let r2 = gamma_state(0.7).unwrap().to_density();
        let p = 0.37;
        let mut mixed = r1.matrix() * C64::new(p, 0.0);
        mixed = mixed + r2.matrix() * C64::new(1.0 - p, 0.0);
        let rho = crate::detection::DensityMatrix::new(vec![-1, 0, 1], mixed).unwrap();
        let v_mix = i3_value(&QuantumState::Mixed(rho), &settings).unwrap();
        let v1 = i3_value(&QuantumState::Mixed(r1), &settings).unwrap();
        let v2 = i3_value(&QuantumState::Mixed(r2), &settings).unwrap();
        assert_abs_diff_eq!(v_mix, p * v1 + (1.0 - p) * v2, epsilon = 1e-10);
    }

    #[test]
    fn phase_corrections_restore_the_violation() {
        let (th1, th2, th) = (0.4, -0.9, std::f64::consts::FRAC_PI_8);
        let (phi1, phi2) = (th1 - 2.0 * th, th2 + 2.0 * th);
        let state = QuantumState::Pure(StateVector::max_entangled_qutrit(phi1, phi2));
        let corrected = i3_phase_corrected(&state, phi1, phi2).unwrap();
        assert_abs_diff_eq!(corrected, i3_maxent_exact(), epsilon = 1e-10);
        // Uncorrected analyzers miss the violation for generic phases.
        let uncorrected = i3_value(&state, &cglmp_bases(0.0, 0.0)).unwrap();
        assert!(
            uncorrected < corrected - 0.1,
            "uncorrected {uncorrected} vs corrected {corrected}"
        );
        // theta = 0: corrected equals uncorrected.
        let flat = QuantumState::Pure(StateVector::max_entangled_qutrit(0.0, 0.0));
        let a = i3_phase_corrected(&flat, 0.0, 0.0).unwrap();
        let b = i3_value(&flat, &cglmp_bases(0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-15);
    }

    #[test]
    fn rotation_with_matching_correction_is_invariant() {
        let (th1, th2) = (0.2, 0.6);
        let base = QuantumState::Pure(StateVector::max_entangled_qutrit(th1, th2));
        let reference = i3_phase_corrected(&base, th1, th2).unwrap();
        for th in [0.1, 0.8, 2.2] {
            let (p1, p2) = (th1 - 2.0 * th, th2 + 2.0 * th);
            let rotated = QuantumState::Pure(StateVector::max_entangled_qutrit(p1, p2));
            let v = i3_phase_corrected(&rotated, p1, p2).unwrap();
            assert_abs_diff_eq!(v, reference, epsilon = 1e-10);
        }
    }

    #[test]
    fn random_product_states_respect_the_classical_bound() {
        let settings = cglmp_bases(0.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut worst = f64::NEG_INFINITY;
        for _ in 0..100 {
            let mut local = || -> Vec<C64> {
                let v: Vec<C64> = (0..3)
                    .map(|_| {
                        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
                    })
                    .collect();
                let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                v.into_iter().map(|z| z / norm).collect()
            };
            let a = local();
            let b = local();
            let mut amps = vec![C64::new(0.0, 0.0); 9];
            for i in 0..3 {
                for j in 0..3 {
                    amps[i * 3 + j] = a[i] * b[j];
                }
            }
            let psi = StateVector::new(vec![-1, 0, 1], amps).unwrap();
            let v = i3_value(&QuantumState::Pure(psi), &settings).unwrap();
            worst = worst.max(v);
        }
        assert!(
            worst <= 2.0 + 1e-9,
            "classical bound violated by a product state: {worst}"
        );
    }

    #[test]
    fn counts_mode_estimates_approach_exact_values() {
        let state = maxent();
        let settings = cglmp_bases(0.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let t = joint_outcome_table_counts(&state, &settings, 1e6, 1.0, &mut rng).unwrap();
        for a in 1..=2 {
            for b in 1..=2 {
                assert_abs_diff_eq!(t.block_sum(a, b), 1.0, epsilon = 1e-12);
            }
        }
        let v = bell_i3(&t);
        assert!((v - i3_maxent_exact()).abs() < 0.02, "counts-mode I3 = {v}");
        // Determinism.
        let mut rng2 = ChaCha8Rng::seed_from_u64(23);
        let t2 = joint_outcome_table_counts(&state, &settings, 1e6, 1.0, &mut rng2).unwrap();
        assert_eq!(t, t2);
    }

    #[test]
    fn from_flat_validates() {
        assert!(matches!(
            OutcomeTable::from_flat(&[0.1; 35]),
            Err(Error::Domain(_))
        ));
        let mut flat = vec![1.0 / 9.0; 36];
        flat[3] = -0.2;
        assert!(matches!(
            OutcomeTable::from_flat(&flat),
            Err(Error::Domain(_))
        ));
        let t = OutcomeTable::from_flat(&vec![1.0 / 9.0; 36]).unwrap();
        assert_abs_diff_eq!(bell_i3(&t), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn report_round_trips_and_is_consistent() {
        let state = maxent();
        let settings = cglmp_bases(0.1, -0.2);
        let rep = i3_report(&state, &settings).unwrap();
        assert_eq!(rep.probabilities.len(), 36);
        let pos: f64 = rep.positive_terms.iter().sum();
        let neg: f64 = rep.negative_terms.iter().sum();
        assert_abs_diff_eq!(rep.i3, pos - neg, epsilon = 1e-12);
        let json = serde_json::to_string(&rep).unwrap();
        let back: I3Report = serde_json::from_str(&json).unwrap();
        assert_abs_diff_eq!(back.i3, rep.i3, epsilon = 0.0);
        // The report's table reproduces the value through from_flat.
        let t = OutcomeTable::from_flat(&rep.probabilities).unwrap();
        assert_abs_diff_eq!(bell_i3(&t), rep.i3, epsilon = 1e-12);
    }

    #[test]
    fn wrong_local_basis_is_rejected() {
        let psi = StateVector::from_schmidt_diagonal(
            vec![0, 1, 2],
            vec![C64::new(1.0, 0.0); 3],
        )
        .unwrap();
        assert!(matches!(
            i3_value(&QuantumState::Pure(psi), &cglmp_bases(0.0, 0.0)),
            Err(Error::Domain(_))
        ));
    }
}
