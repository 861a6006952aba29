//! Gauss rules and grid interpolants shared by the solvers.

use nalgebra::{DMatrix, SymmetricEigen};

/// Gauss–Hermite rule for E[f(Z)], Z ~ N(0, 1): nodes ascending, weights summing to 1.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    // Jacobi matrix of the orthonormal probabilists' Hermite polynomials.
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64).sqrt();
        j[(k, k - 1)] = b;
        j[(k - 1, k)] = b;
    }
    let mut nodes: Vec<f64> = SymmetricEigen::new(j).eigenvalues.iter().copied().collect();
    nodes.sort_by(f64::total_cmp);
    let mut weights = Vec::with_capacity(n);
    for x in &mut nodes {
        for _ in 0..3 {
            let (p, pm1, _) = orthonormal_hermite(n, *x);
            // p_n' = √n p_{n-1}
            *x -= p / ((n as f64).sqrt() * pm1);
        }
        let (_, _, sumsq) = orthonormal_hermite(n, *x);
        weights.push(1.0 / sumsq);
    }
    // Symmetrize to remove rounding asymmetry.
    for k in 0..n / 2 {
        let (a, b) = (nodes[k], nodes[n - 1 - k]);
        let s = 0.5 * (b - a);
        nodes[k] = -s;
        nodes[n - 1 - k] = s;
        let w = 0.5 * (weights[k] + weights[n - 1 - k]);
        weights[k] = w;
        weights[n - 1 - k] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    (nodes, weights)
}

/// Returns (p_n(x), p_{n-1}(x), Σ_{k<n} p_k(x)²) for orthonormal He polynomials.
fn orthonormal_hermite(n: usize, x: f64) -> (f64, f64, f64) {
    let mut pm1 = 0.0;
    let mut p = 1.0;
    let mut sumsq = 0.0;
    for k in 0..n {
        sumsq += p * p;
        let next = (x * p - (k as f64).sqrt() * pm1) / ((k + 1) as f64).sqrt();
        pm1 = p;
        p = next;
    }
    (p, pm1, sumsq)
}

/// Gauss–Legendre rule on [a, b].
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j - 1) as f64 * x * p2 - (j - 1) as f64 * p3) / j as f64;
            }
            dp = n as f64 * (x * p1 - p2) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes.push(0.5 * (a + b) - 0.5 * (b - a) * x);
        weights.push((b - a) / ((1.0 - x * x) * dp * dp));
    }
    (nodes, weights)
}

/// Quintic Hermite interpolation on [x_i, x_i + h] at fraction s from
/// values, first and second derivatives at both ends.
#[inline]
pub fn quintic(s: f64, h: f64, f0: [f64; 3], f1: [f64; 3]) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    let s4 = s3 * s;
    let s5 = s4 * s;
    let h0 = 1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5;
    let h1 = s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5;
    let h2 = 0.5 * (s2 - 3.0 * s3 + 3.0 * s4 - s5);
    let h4 = -4.0 * s3 + 7.0 * s4 - 3.0 * s5;
    let h5 = 0.5 * (s3 - 2.0 * s4 + s5);
    f0[0] * h0
        + h * f0[1] * h1
        + h * h * f0[2] * h2
        + f1[0] * (1.0 - h0)
        + h * f1[1] * h4
        + h * h * f1[2] * h5
}

/// Cubic Hermite interpolation from values and slopes at both ends.
#[inline]
pub fn cubic(s: f64, h: f64, f0: [f64; 2], f1: [f64; 2]) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    f0[0] * h00 + h * f0[1] * h10 + f1[0] * h01 + h * f1[1] * h11
}

/// Four-point Lagrange weights for nodes at offsets −1, 0, 1, 2 evaluated at s ∈ [0, 1].
#[inline]
pub fn lagrange4(s: f64) -> [f64; 4] {
    [
        -s * (s - 1.0) * (s - 2.0) / 6.0,
        (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0,
        -(s + 1.0) * s * (s - 2.0) / 2.0,
        (s + 1.0) * s * (s - 1.0) / 6.0,
    ]
}
