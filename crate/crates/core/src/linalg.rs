//! Small dense complex linear algebra.
//!
//! The state spaces in this crate are tiny (9x9 density matrices, 15-element
//! projector families), so a dependency-free cyclic Jacobi eigensolver for
//! Hermitian matrices is both sufficient and fully deterministic. Each
//! off-diagonal element is annihilated by a phase rotation composed with a
//! real 2x2 Jacobi rotation; convergence is quadratic once the off-diagonal
//! mass is small.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Complex double-precision scalar used throughout the crate.
pub type C64 = Complex64;

/// Kronecker product of two vectors (row-major: `out[i*nb + j] = a[i] * b[j]`).
pub fn kron_vec(a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &ai in a {
        for &bj in b {
            out.push(ai * bj);
        }
    }
    out
}

/// Frobenius norm of a complex matrix.
pub fn frobenius_norm(a: &Array2<C64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn off_diagonal_norm(a: &Array2<C64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// Eigendecomposition of a Hermitian matrix: eigenvalues ascending, matching
/// orthonormal eigenvectors as the columns of the returned matrix.
///
/// The input must be Hermitian to within `1e-8 * ||A||`; it is symmetrized
/// internally before iterating so round-off asymmetry cannot accumulate.
pub fn eigh(a: &Array2<C64>) -> Result<(Vec<f64>, Array2<C64>)> {
    let n = a.nrows();
    if a.ncols() != n || n == 0 {
        return Err(Error::Domain(format!(
            "eigh expects a nonempty square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let norm = frobenius_norm(a).max(f64::MIN_POSITIVE);
    let mut herm_defect: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            herm_defect = herm_defect.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    if herm_defect > 1e-8 * norm.max(1.0) {
        return Err(Error::Domain(format!(
            "eigh input is not Hermitian (defect {herm_defect:e})"
        )));
    }

    let mut m = Array2::<C64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = 0.5 * (a[(i, j)] + a[(j, i)].conj());
        }
    }
    let mut v = Array2::<C64>::eye(n);

    let tol = 1e-14 * norm;
    for _sweep in 0..64 {
        if off_diagonal_norm(&m) <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                let r = apq.norm();
                if r <= tol / (n as f64) {
                    continue;
                }
                let phase = apq / r; // e^{i theta}
                let app = m[(p, p)].re;
                let aqq = m[(q, q)].re;
                let tau = (aqq - app) / (2.0 * r);
                // Smaller-magnitude root of t^2 - 2*tau*t - 1 = 0.
                let t = if tau >= 0.0 {
                    -1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let sp = s * phase; // s * e^{i theta}
                let spc = sp.conj(); // s * e^{-i theta}

                // Update rows/columns p and q of the Hermitian matrix.
                for i in 0..n {
                    if i == p || i == q {
                        continue;
                    }
                    let aip = m[(i, p)];
                    let aiq = m[(i, q)];
                    m[(i, p)] = c * aip + spc * aiq;
                    m[(i, q)] = -sp * aip + c * aiq;
                    m[(p, i)] = m[(i, p)].conj();
                    m[(q, i)] = m[(i, q)].conj();
                }
                let new_pp = c * c * app + 2.0 * c * s * r + s * s * aqq;
                let new_qq = s * s * app - 2.0 * c * s * r + c * c * aqq;
                m[(p, p)] = C64::new(new_pp, 0.0);
                m[(q, q)] = C64::new(new_qq, 0.0);
                m[(p, q)] = C64::new(0.0, 0.0);
                m[(q, p)] = C64::new(0.0, 0.0);

                // Accumulate the rotation into the eigenvector columns.
                for i in 0..n {
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = c * vip + spc * viq;
                    v[(i, q)] = -sp * vip + c * viq;
                }
            }
        }
    }
    if off_diagonal_norm(&m) > 1e-10 * norm.max(1.0) {
        return Err(Error::Numerical(
            "Jacobi eigensolver failed to converge".into(),
        ));
    }

    let mut order: Vec<usize> = (0..n).collect();
    let evals: Vec<f64> = (0..n).map(|i| m[(i, i)].re).collect();
    order.sort_by(|&i, &j| evals[i].total_cmp(&evals[j]));
    let sorted_vals: Vec<f64> = order.iter().map(|&i| evals[i]).collect();
    let mut sorted_vecs = Array2::<C64>::zeros((n, n));
    for (new_col, &old_col) in order.iter().enumerate() {
        for i in 0..n {
            sorted_vecs[(i, new_col)] = v[(i, old_col)];
        }
    }
    Ok((sorted_vals, sorted_vecs))
}

/// Hermitian square root via the eigendecomposition, with negative round-off
/// eigenvalues clamped to zero.
pub fn sqrtm_psd(a: &Array2<C64>) -> Result<Array2<C64>> {
    let n = a.nrows();
    let (vals, vecs) = eigh(a)?;
    let mut out = Array2::<C64>::zeros((n, n));
    for k in 0..n {
        let s = vals[k].max(0.0).sqrt();
        if s == 0.0 {
            continue;
        }
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += s * vecs[(i, k)] * vecs[(j, k)].conj();
            }
        }
    }
    Ok(out)
}

/// Uhlmann fidelity F(rho, sigma) = (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2
/// between two density matrices. Symmetric in its arguments and equal to
/// |<psi|phi>|^2 for pure states.
pub fn fidelity(rho: &Array2<C64>, sigma: &Array2<C64>) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::Domain(
            "fidelity requires equally sized matrices".into(),
        ));
    }
    let sr = sqrtm_psd(rho)?;
    let inner = sr.dot(sigma).dot(&sr);
    let (vals, _) = eigh(&inner)?;
    let tr: f64 = vals.iter().map(|&l| l.max(0.0).sqrt()).sum();
    Ok((tr * tr).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(n: usize, seed: u64) -> Array2<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Array2::<C64>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                b[(i, j)] = C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
            }
        }
        let mut h = Array2::<C64>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                h[(i, j)] = 0.5 * (b[(i, j)] + b[(j, i)].conj());
            }
        }
        h
    }

    #[test]
    fn two_by_two_analytic_case() {
        let a = array![
            [C64::new(1.0, 0.0), C64::new(0.0, 1.0)],
            [C64::new(0.0, -1.0), C64::new(1.0, 0.0)]
        ];
        let (vals, vecs) = eigh(&a).unwrap();
        assert_abs_diff_eq!(vals[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[1], 2.0, epsilon = 1e-12);
        // Residual check A v = lambda v for both pairs.
        for k in 0..2 {
            for i in 0..2 {
                let av: C64 = (0..2).map(|j| a[(i, j)] * vecs[(j, k)]).sum();
                assert_abs_diff_eq!((av - vals[k] * vecs[(i, k)]).norm(), 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn random_hermitian_decomposition_residuals() {
        for seed in 0..5 {
            let a = random_hermitian(9, seed);
            let (vals, vecs) = eigh(&a).unwrap();
            // Ascending order.
            for w in vals.windows(2) {
                assert!(w[0] <= w[1] + 1e-12);
            }
            // A v_k = lambda_k v_k.
            for k in 0..9 {
                for i in 0..9 {
                    let av: C64 = (0..9).map(|j| a[(i, j)] * vecs[(j, k)]).sum();
                    assert_abs_diff_eq!(
                        (av - vals[k] * vecs[(i, k)]).norm(),
                        0.0,
                        epsilon = 1e-10
                    );
                }
            }
            // Orthonormal columns.
            for k in 0..9 {
                for l in 0..9 {
                    let dot: C64 = (0..9).map(|i| vecs[(i, k)].conj() * vecs[(i, l)]).sum();
                    let expect = if k == l { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!(dot.norm(), expect, epsilon = 1e-10);
                }
            }
            // Trace identity.
            let tr_a: f64 = (0..9).map(|i| a[(i, i)].re).sum();
            let tr_l: f64 = vals.iter().sum();
            assert_abs_diff_eq!(tr_a, tr_l, epsilon = 1e-10);
        }
    }

    #[test]
    fn rejects_non_hermitian_input() {
        let a = array![
            [C64::new(1.0, 0.0), C64::new(2.0, 0.0)],
            [C64::new(0.0, 0.0), C64::new(1.0, 0.0)]
        ];
        assert!(matches!(eigh(&a), Err(Error::Domain(_))));
    }

    #[test]
    fn sqrtm_squares_back() {
        let a = random_hermitian(5, 11);
        // Make it PSD by squaring.
        let psd = a.dot(&a);
        let s = sqrtm_psd(&psd).unwrap();
        let back = s.dot(&s);
        for i in 0..5 {
            for j in 0..5 {
                assert_abs_diff_eq!((back[(i, j)] - psd[(i, j)]).norm(), 0.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn fidelity_pure_states_is_overlap_squared() {
        let psi = [C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)];
        let inv3 = 1.0 / 3f64.sqrt();
        let phi = [
            C64::new(inv3, 0.0),
            C64::new(0.0, inv3),
            C64::new(-inv3, 0.0),
        ];
        let proj = |v: &[C64]| {
            let mut m = Array2::<C64>::zeros((3, 3));
            for i in 0..3 {
                for j in 0..3 {
                    m[(i, j)] = v[i] * v[j].conj();
                }
            }
            m
        };
        let f = fidelity(&proj(&psi), &proj(&phi)).unwrap();
        assert_abs_diff_eq!(f, 1.0 / 3.0, epsilon = 1e-10);
        let same = fidelity(&proj(&phi), &proj(&phi)).unwrap();
        assert_abs_diff_eq!(same, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn fidelity_is_symmetric() {
        let a = random_hermitian(4, 3);
        let rho = {
            let sq = a.dot(&a);
            let tr: f64 = (0..4).map(|i| sq[(i, i)].re).sum();
            sq.mapv(|z| z / tr)
        };
        let b = random_hermitian(4, 4);
        let sigma = {
            let sq = b.dot(&b);
            let tr: f64 = (0..4).map(|i| sq[(i, i)].re).sum();
            sq.mapv(|z| z / tr)
        };
        let f1 = fidelity(&rho, &sigma).unwrap();
        let f2 = fidelity(&sigma, &rho).unwrap();
        assert_abs_diff_eq!(f1, f2, epsilon = 1e-9);
    }

    #[test]
    fn kron_vec_ordering() {
        let a = [C64::new(1.0, 0.0), C64::new(2.0, 0.0)];
        let b = [C64::new(3.0, 0.0), C64::new(0.0, 1.0)];
        let k = kron_vec(&a, &b);
        assert_eq!(k.len(), 4);
        assert_abs_diff_eq!((k[0] - C64::new(3.0, 0.0)).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!((k[3] - C64::new(0.0, 2.0)).norm(), 0.0, epsilon = 1e-15);
    }
}
