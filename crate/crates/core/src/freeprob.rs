//! Free convolution of an atomic measure μ on ℝ with the semicircle law σ_t.
//!
//! Everything goes through the subordination function ω = ω_{μ,t}, the inverse of
//! H_t(z) = z + tG_μ(z). On the real line H_t is increasing exactly where
//! Σ w_i/(x_i − ω)² ≤ 1/t; elsewhere ω leaves the axis into the upper half-plane.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;

/// Atoms closer than this are merged.
const DEDUP_TOL: f64 = 1e-12;

/// Finitely-atomic probability measure on ℝ.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMeasure {
    x: Vec<f64>,
    w: Vec<f64>,
}

impl SpectralMeasure {
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.iter().any(|&(x, w)| !x.is_finite() || w.is_nan() || w <= 0.0) {
            return Err(Error::Construction(
                "atoms need finite locations and positive weights".into(),
            ));
        }
        let mut a = atoms;
        if a.is_empty() {
            return Err(Error::Construction("measure has no atoms".into()));
        }
        a.sort_by(|p, q| p.0.total_cmp(&q.0));
        let total: f64 = a.iter().map(|p| p.1).sum();
        let mut x: Vec<f64> = Vec::with_capacity(a.len());
        let mut w: Vec<f64> = Vec::with_capacity(a.len());
        for (xi, wi) in a {
            match x.last() {
                Some(&l) if xi - l < DEDUP_TOL => *w.last_mut().unwrap() += wi / total,
                _ => {
                    x.push(xi);
                    w.push(wi / total);
                }
            }
        }
        Ok(Self { x, w })
    }

    pub fn dirac(a: f64) -> Self {
        Self {
            x: vec![a],
            w: vec![1.0],
        }
    }

    /// Uniform weights on the given points.
    pub fn empirical(points: &[f64]) -> Result<Self> {
        Self::new(points.iter().map(|&p| (p, 1.0)).collect())
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.x.iter().copied().zip(self.w.iter().copied())
    }

    pub fn min(&self) -> f64 {
        self.x[0]
    }

    pub fn max(&self) -> f64 {
        *self.x.last().unwrap()
    }

    /// Σ w_i / |x_i − z|².
    fn inv_sq(&self, z: Complex64) -> f64 {
        self.atoms().map(|(x, w)| w / (z - x).norm_sqr()).sum()
    }

    /// (G, G') at z without the pole check.
    #[inline]
    fn g_dg(&self, z: Complex64) -> (Complex64, Complex64) {
        let mut g = Complex64::new(0.0, 0.0);
        let mut dg = Complex64::new(0.0, 0.0);
        for (x, w) in self.atoms() {
            let r = 1.0 / (z - x);
            g += w * r;
            dg -= w * r * r;
        }
        (g, dg)
    }

    fn real_f(&self, u: f64) -> (f64, f64) {
        let mut f = 0.0;
        let mut df = 0.0;
        for (x, w) in self.atoms() {
            let d = x - u;
            f += w / (d * d);
            df += 2.0 * w / (d * d * d);
        }
        (f, df)
    }
}

/// G_μ(z) = Σ w_i/(z − x_i).
pub fn stieltjes(mu: &SpectralMeasure, z: Complex64) -> Result<Complex64> {
    if let Some((x, _)) = mu.atoms().find(|(x, _)| (z - x).norm() < DEDUP_TOL) {
        return Err(Error::Pole(format!("z = {z} sits on the atom at {x}")));
    }
    Ok(mu.g_dg(z).0)
}

/// H_t(z) = z + tG_μ(z).
pub fn h_map(mu: &SpectralMeasure, t: f64, z: Complex64) -> Complex64 {
    z + t * mu.g_dg(z).0
}

/// Output of [`subordinate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubordinationResult {
    pub omega: Complex64,
    /// ℓ(μ ⊞ σ_t).
    pub edge_left: f64,
    /// Σ w_i/|x_i − ω|² − 1/t; at most 0 up to rounding on the closure of the domain.
    pub domain_check: f64,
    /// |H_t(ω) − x|.
    pub residual: f64,
    pub t: f64,
}

/// Increasing-function root on [lo, hi] by Newton with a bisection safeguard.
fn bracketed<F: Fn(f64) -> (f64, f64)>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    let mut x = 0.5 * (lo + hi);
    for _ in 0..300 {
        let (v, d) = f(x);
        if v == 0.0 {
            return x;
        }
        if v > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let nx = x - v / d;
        x = if d > 0.0 && nx > lo && nx < hi {
            nx
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 4.0 * f64::EPSILON * x.abs().max(1e-300) {
            break;
        }
    }
    x
}

/// Real intervals where H_t is increasing and their images.
#[derive(Debug, Clone)]
struct Branches {
    /// ω_L and ω_R: shocks of the left and right edges.
    left: f64,
    right: f64,
    /// Gap intervals [a_j, b_j] strictly between atoms.
    gaps: Vec<(f64, f64)>,
}

fn branches(mu: &SpectralMeasure, t: f64) -> Branches {
    let inv_t = 1.0 / t;
    let (x0, w0) = (mu.x[0], mu.w[0]);
    let left = bracketed(
        |u| {
            let (f, df) = mu.real_f(u);
            (f - inv_t, df)
        },
        x0 - t.sqrt(),
        x0 - (t * w0).sqrt(),
    );
    let n = mu.x.len();
    let (xn, wn) = (mu.x[n - 1], mu.w[n - 1]);
    // On the right f decreases; flip the sign to keep the root finder's convention.
    let right = bracketed(
        |u| {
            let (f, df) = mu.real_f(u);
            (inv_t - f, -df)
        },
        xn + (t * wn).sqrt(),
        xn + t.sqrt(),
    );
    let mut gaps = Vec::new();
    for j in 0..n - 1 {
        let (a, b) = (mu.x[j], mu.x[j + 1]);
        // The two neighbouring atoms alone bound f below on the gap.
        let c = mu.w[j].cbrt() + mu.w[j + 1].cbrt();
        if c * c * c / ((b - a) * (b - a)) >= inv_t {
            continue;
        }
        let pad = (b - a) * 1e-12;
        // f is convex between poles; f' is increasing there.
        let m = bracketed(
            |u| {
                let mut d1 = 0.0;
                let mut d2 = 0.0;
                for (x, w) in mu.atoms() {
                    let d = x - u;
                    d1 += 2.0 * w / (d * d * d);
                    d2 += 6.0 * w / (d * d * d * d);
                }
                (d1, d2)
            },
            a + pad,
            b - pad,
        );
        if mu.real_f(m).0 < inv_t {
            let lo = bracketed(
                |u| {
                    let (f, df) = mu.real_f(u);
                    (inv_t - f, -df)
                },
                a + pad,
                m,
            );
            let hi = bracketed(
                |u| {
                    let (f, df) = mu.real_f(u);
                    (f - inv_t, df)
                },
                m,
                b - pad,
            );
            gaps.push((lo, hi));
        }
    }
    Branches { left, right, gaps }
}

fn hr(mu: &SpectralMeasure, t: f64, u: f64) -> f64 {
    h_map(mu, t, Complex64::new(u, 0.0)).re
}

/// ℓ(μ ⊞ σ_t) and the shock point ω with Σw/(x_i − ω)² = 1/t.
pub fn left_edge(mu: &SpectralMeasure, t: f64) -> Result<(f64, f64)> {
    check_t(t)?;
    let b = branches(mu, t);
    Ok((hr(mu, t, b.left), b.left))
}

/// Support of μ ⊞ σ_t as a union of closed intervals.
pub fn support_intervals(mu: &SpectralMeasure, t: f64) -> Result<Vec<(f64, f64)>> {
    check_t(t)?;
    let b = branches(mu, t);
    let mut edges = vec![hr(mu, t, b.left)];
    for &(a, c) in &b.gaps {
        edges.push(hr(mu, t, a));
        edges.push(hr(mu, t, c));
    }
    edges.push(hr(mu, t, b.right));
    Ok(edges.chunks(2).map(|c| (c[0], c[1])).collect())
}

fn check_t(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!(
            "semicircle variance t = {t} must be positive"
        )));
    }
    Ok(())
}

/// v_t(u) = inf{v ≥ 0 : Σ w_i/(|x_i − u|² + v²) ≤ 1/t}.
pub fn v_t(mu: &SpectralMeasure, t: f64, u: f64) -> f64 {
    let inv_t = 1.0 / t;
    let f = |v: f64| mu.inv_sq(Complex64::new(u, v));
    if f(0.0) <= inv_t {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, t.sqrt());
    while f(hi) > inv_t {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > inv_t {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * hi {
            break;
        }
    }
    hi
}

fn complex_newton(
    mu: &SpectralMeasure,
    t: f64,
    x: Complex64,
    start: Complex64,
) -> Option<Complex64> {
    let mut w = start;
    for _ in 0..200 {
        let (g, dg) = mu.g_dg(w);
        let f = w + t * g - x;
        if f.norm() < 1e-15 * (1.0 + x.norm()) {
            return Some(w);
        }
        let mut step = f / (1.0 + t * dg);
        if !step.re.is_finite() || !step.im.is_finite() {
            return None;
        }
        let mut tries = 0;
        while (w - step).im <= 0.0 || (w - step + t * mu.g_dg(w - step).0 - x).norm() > f.norm() {
            step *= 0.5;
            tries += 1;
            if tries > 60 {
                return None;
            }
        }
        w -= step;
    }
    let f = w + t * mu.g_dg(w).0 - x;
    (f.norm() < 1e-12 * (1.0 + x.norm())).then_some(w)
}

/// ω_{μ,t}(x) for x in ℂ⁺ ∪ ℝ.
pub fn subordinate(mu: &SpectralMeasure, t: f64, x: Complex64) -> Result<SubordinationResult> {
    check_t(t)?;
    subordinate_with(mu, t, x, &branches(mu, t))
}

fn subordinate_with(
    mu: &SpectralMeasure,
    t: f64,
    x: Complex64,
    b: &Branches,
) -> Result<SubordinationResult> {
    if x.im < 0.0 {
        return Err(Error::Domain(format!(
            "query {x} lies in the lower half-plane"
        )));
    }
    let edge_left = hr(mu, t, b.left);
    let mut omega = None;
    if x.im == 0.0 {
        let xr = x.re;
        let solve = |lo: f64, hi: f64| {
            bracketed(
                |u| {
                    let (g, dg) = mu.g_dg(Complex64::new(u, 0.0));
                    (u + t * g.re - xr, 1.0 + t * dg.re)
                },
                lo,
                hi,
            )
        };
        let edge_right = hr(mu, t, b.right);
        if xr <= edge_left {
            omega = Some(Complex64::new(solve(xr.min(b.left), b.left), 0.0));
        } else if xr >= edge_right {
            omega = Some(Complex64::new(solve(b.right, xr.max(b.right)), 0.0));
        } else if let Some(&(a, c)) = b
            .gaps
            .iter()
            .find(|&&(a, c)| xr >= hr(mu, t, a) && xr <= hr(mu, t, c))
        {
            omega = Some(Complex64::new(solve(a, c), 0.0));
        }
    }
    let omega = match omega {
        Some(w) => w,
        None => {
            let st = Complex64::new(x.re, x.im + t.sqrt());
            match complex_newton(mu, t, x, st) {
                Some(w) => w,
                None => {
                    // Continuation in the imaginary part from far above the axis.
                    let mut w = st;
                    let mut eta = 4.0 * t.sqrt();
                    loop {
                        let target = Complex64::new(x.re, x.im + eta);
                        w = complex_newton(mu, t, target, w).ok_or_else(|| {
                            Error::NonConvergence(format!(
                                "subordination at {x}: no admissible root; v_t(Re x) = {}",
                                v_t(mu, t, x.re)
                            ))
                        })?;
                        if eta == 0.0 {
                            break w;
                        }
                        eta = if eta < 1e-6 { 0.0 } else { eta * 0.5 };
                    }
                }
            }
        }
    };
    let residual = (h_map(mu, t, omega) - x).norm();
    Ok(SubordinationResult {
        omega,
        edge_left,
        domain_check: mu.inv_sq(omega) - 1.0 / t,
        residual,
        t,
    })
}

/// ∫ log|λ − x| d(μ ⊞ σ_t)(λ) = ∫ log|λ − ω| dμ + ((Re ω − x)² − (Im ω)²)/(2t).
pub fn log_potential(mu: &SpectralMeasure, t: f64, x: f64) -> Result<f64> {
    let w = subordinate(mu, t, Complex64::new(x, 0.0))?.omega;
    Ok(hopf_lax_objective(mu, t, x, w.re, w.im))
}

/// ∫ log|λ − (u + iv)| dμ + ((x − u)² − v²)/(2t).
pub fn hopf_lax_objective(mu: &SpectralMeasure, t: f64, x: f64, u: f64, v: f64) -> f64 {
    let z = Complex64::new(u, v);
    let lp: f64 = mu.atoms().map(|(l, w)| w * (z - l).norm().ln()).sum();
    lp + ((x - u) * (x - u) - v * v) / (2.0 * t)
}

/// Density of μ ⊞ σ_t at each grid point, Im ω/(πt).
pub fn freeconv_density(mu: &SpectralMeasure, t: f64, grid: &[f64]) -> Result<Vec<f64>> {
    let sup = support_intervals(mu, t)?;
    let b = branches(mu, t);
    grid.iter()
        .map(|&x| {
            if !sup.iter().any(|&(a, b)| x > a && x < b) {
                return Ok(0.0);
            }
            Ok(subordinate_with(mu, t, Complex64::new(x, 0.0), &b)?
                .omega
                .im
                .max(0.0)
                / (std::f64::consts::PI * t))
        })
        .collect()
}

/// Nodes and weights integrating against μ ⊞ σ_t: per support interval, x = a + (b − a)(1 − cos θ)/2
/// with Gauss–Legendre in θ, which removes the square-root edge behaviour.
pub fn freeconv_quadrature(mu: &SpectralMeasure, t: f64, nodes: usize) -> Result<Vec<(f64, f64)>> {
    let (gn, gw) = gauss_legendre(nodes, 0.0, std::f64::consts::PI);
    let mut out = Vec::new();
    for (a, b) in support_intervals(mu, t)? {
        let half = 0.5 * (b - a);
        let xs: Vec<f64> = gn.iter().map(|th| a + half * (1.0 - th.cos())).collect();
        let dens = freeconv_density(mu, t, &xs)?;
        for ((x, d), (th, w)) in xs.iter().zip(dens).zip(gn.iter().zip(&gw)) {
            out.push((*x, w * d * half * th.sin()));
        }
    }
    Ok(out)
}
