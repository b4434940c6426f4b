//! Gauss-Legendre quadrature.
//!
//! Nodes and weights are generated by Newton iteration on the Legendre
//! polynomial recurrence, which is exact to machine precision for the orders
//! used here (tens to low hundreds of nodes). A doubling wrapper provides the
//! adaptive radial integrals used by the mode-overlap routines: Laguerre-Gauss
//! fields decay like a Gaussian, so integrating over [0, 6·w] and doubling the
//! node count until two successive estimates agree bounds the truncation and
//! discretization error together.

use crate::error::{Error, Result};

/// Gauss-Legendre nodes and weights on [-1, 1], ascending node order.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature order must be at least 1");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi-style initial guess for the i-th root from the upper end.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Evaluate P_n(x) and P_n'(x) by upward recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = w;
        nodes[i] = -x;
        weights[i] = w;
    }
    if n % 2 == 1 {
        // The middle node of an odd rule is exactly zero.
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Gauss-Legendre nodes and weights mapped to [a, b].
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let c = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (
        x.iter().map(|&t| mid + c * t).collect(),
        w.iter().map(|&wi| wi * c).collect(),
    )
}

/// Integrate `f` over [a, b], doubling the node count from `n0` until two
/// successive estimates differ by less than `tol` (absolute). Errors when the
/// node budget is exhausted without convergence.
pub fn integrate_adaptive<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    n0: usize,
    tol: f64,
    max_nodes: usize,
) -> Result<f64> {
    let mut n = n0.max(2);
    let mut prev = None;
    while n <= max_nodes {
        let (x, w) = gauss_legendre_on(n, a, b);
        let est: f64 = x.iter().zip(&w).map(|(&xi, &wi)| wi * f(xi)).sum();
        if let Some(p) = prev {
            if (est - p as f64).abs() < tol {
                return Ok(est);
            }
        }
        prev = Some(est);
        n *= 2;
    }
    Err(Error::Numerical(format!(
        "quadrature did not converge below {tol:e} within {max_nodes} nodes"
    )))
}
