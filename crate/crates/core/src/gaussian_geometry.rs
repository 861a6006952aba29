//! Covariance geometry of (∇F_TAP, F_TAP): the Γ block algebra, the convex-dual form of
//! Gaussian log-densities, closed-form SUSY log-densities and the hierarchical
//! quadratic forms along a skeleton of nested states.
//!
//! Γ is handled matrix-free as ξ'(q)I plus rank-one terms. Dense matrices appear only in
//! [`GammaBlocks::dense`] and [`skeleton_covariance`], which exist to serve as oracles.

use crate::error::{Error, Result};
use crate::functionals::{u_zeta, EmpiricalMu};
use crate::measures::{AtomicMeasure, MERGE_TOL};
use crate::mixture::Mixture;
use crate::parisi_pde::{Legendre, ParisiSolution};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a)
}

/// Γ = Cov(∇H(m), H(m)) = [[A, b], [bᵀ, c]] with A = ξ'(q)I + (ξ''(q)/N)mmᵀ, b = ξ'(q)m, c = Nξ(q).
#[derive(Debug, Clone)]
pub struct GammaBlocks {
    q: f64,
    xi0: f64,
    xi1: f64,
    xi2: f64,
    m: Vec<f64>,
}

impl GammaBlocks {
    /// Blocks with the overlap q given separately from m.
    pub fn new(mix: &Mixture, q: f64, m: &[f64]) -> Result<Self> {
        if m.is_empty() {
            return Err(Error::Domain("magnetization vector is empty".into()));
        }
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::Domain(format!("overlap q = {q} must lie in (0, 1]")));
        }
        Ok(Self {
            q,
            xi0: mix.xi(q),
            xi1: mix.d1(q),
            xi2: mix.d2(q),
            m: m.to_vec(),
        })
    }

    /// Blocks at q = ‖m‖²/N, the covariance of the field itself.
    pub fn at(mix: &Mixture, m: &[f64]) -> Result<Self> {
        Self::new(mix, norm2(m) / m.len() as f64, m)
    }

    pub fn n(&self) -> usize {
        self.m.len()
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    fn nf(&self) -> f64 {
        self.m.len() as f64
    }

    /// ‖m‖²/N, which equals q for the field covariance.
    fn r(&self) -> f64 {
        norm2(&self.m) / self.nf()
    }

    /// Eigenvalue of A along m.
    fn a_long(&self) -> f64 {
        self.xi1 + self.xi2 * self.r()
    }

    pub fn a_apply(&self, x: &[f64]) -> Vec<f64> {
        let s = self.xi2 * dot(&self.m, x) / self.nf();
        x.iter()
            .zip(&self.m)
            .map(|(xi, mi)| self.xi1 * xi + s * mi)
            .collect()
    }

    /// A⁻¹x by Sherman–Morrison.
    pub fn a_solve(&self, x: &[f64]) -> Vec<f64> {
        let s = self.xi2 / self.nf() / (self.xi1 * self.a_long()) * dot(&self.m, x);
        x.iter()
            .zip(&self.m)
            .map(|(xi, mi)| xi / self.xi1 - s * mi)
            .collect()
    }

    /// log det A = (N−1) log ξ' + log(ξ' + ξ''‖m‖²/N).
    pub fn logdet_a(&self) -> f64 {
        (self.nf() - 1.0) * self.xi1.ln() + self.a_long().ln()
    }

    /// S = c − bᵀA⁻¹b; equals N·D(q)/(ξ'(q) + qξ''(q)) at q = ‖m‖²/N.
    pub fn schur(&self) -> f64 {
        let r = self.r();
        self.nf() * (self.xi0 * self.a_long() - r * self.xi1 * self.xi1) / self.a_long()
    }

    fn checked_schur(&self) -> Result<f64> {
        let s = self.schur();
        if s <= 1e-13 * self.nf() * self.xi0 {
            return Err(Error::Degenerate(format!(
                "Schur complement {s:.3e} is not positive: D(q) = ξ(ξ'+qξ'') − qξ'² vanishes, as for a pure mixture"
            )));
        }
        Ok(s)
    }

    /// log det Γ = log det A + log S.
    pub fn logdet(&self) -> Result<f64> {
        Ok(self.logdet_a() + self.checked_schur()?.ln())
    }

    /// Γw for w = (x, v).
    pub fn apply(&self, w: &[f64]) -> Vec<f64> {
        let n = self.n();
        let (x, v) = (&w[..n], w[n]);
        let mut out = self.a_apply(x);
        for (o, mi) in out.iter_mut().zip(&self.m) {
            *o += v * self.xi1 * mi;
        }
        out.push(self.xi1 * dot(&self.m, x) + self.nf() * self.xi0 * v);
        out
    }

    /// Γ⁻¹z from the block-inversion formula.
    pub fn solve(&self, z: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        let s = self.checked_schur()?;
        let (zx, zv) = (&z[..n], z[n]);
        let b: Vec<f64> = self.m.iter().map(|mi| self.xi1 * mi).collect();
        let ainv_b = self.a_solve(&b);
        let ainv_z = self.a_solve(zx);
        // Scalar component: (zv − bᵀA⁻¹zx)/S.
        let v = (zv - dot(&b, &ainv_z)) / s;
        let mut out: Vec<f64> = ainv_z.iter().zip(&ainv_b).map(|(a, c)| a - v * c).collect();
        out.push(v);
        Ok(out)
    }

    /// Dense (N+1)×(N+1) matrix.
    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let nf = self.nf();
        DMatrix::from_fn(n + 1, n + 1, |i, j| match (i == n, j == n) {
            (false, false) => {
                self.xi2 * self.m[i] * self.m[j] / nf + if i == j { self.xi1 } else { 0.0 }
            }
            (false, true) => self.xi1 * self.m[i],
            (true, false) => self.xi1 * self.m[j],
            (true, true) => nf * self.xi0,
        })
    }

    /// (−⟨z,Γ⁻¹z⟩, ⟨w,Γw⟩ − 2⟨w,z⟩); the first never exceeds the second.
    pub fn dual_bound(&self, z: &[f64], w: &[f64]) -> Result<(f64, f64)> {
        let exact = -dot(z, &self.solve(z)?);
        let bound = dot(w, &self.apply(w)) - 2.0 * dot(w, z);
        Ok((exact, bound))
    }

    /// Log-density at 0 of a Gaussian with covariance Γ and mean −z.
    pub fn log_density(&self, z: &[f64]) -> Result<f64> {
        let quad = dot(z, &self.solve(z)?);
        Ok(-0.5 * quad - 0.5 * ((self.nf() + 1.0) * (2.0 * PI).ln() + self.logdet()?))
    }
}

/// G⁻¹x for the pure p-spin gradient covariance G = ξ'(q)I + (ξ''(q)/N)mmᵀ, q = ‖m‖²/N:
/// G⁻¹ = I/ξ'(q) − (p−1)/(pξ'(q)q)·mmᵀ/N.
pub fn ginv_pure(mix: &Mixture, m: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let p = mix
        .is_pure()
        .ok_or_else(|| Error::Domain("the closed-form inverse needs a pure mixture".into()))?
        as f64;
    let nf = m.len() as f64;
    let q = norm2(m) / nf;
    let xi1 = mix.d1(q);
    let s = (p - 1.0) / (p * xi1 * q) * dot(m, x) / nf;
    Ok(x.iter().zip(m).map(|(xi, mi)| xi / xi1 - s * mi).collect())
}

/// Closed form of inf{ξ'‖x‖² − 2⟨g, x⟩ : ⟨x, m⟩ = N(∫₀¹ζ − uq)} with g = ∂m h − uξ'm and q = ‖m‖²/N:
/// −‖g‖²/ξ' + N/(ξ'q)·(⟨∂m h, m⟩/N − ξ'∫₀¹ζ)².
pub fn quadra(xi1: f64, m: &[f64], dh: &[f64], u: f64, int_all: f64) -> f64 {
    let nf = m.len() as f64;
    let q = norm2(m) / nf;
    let g2: f64 = dh
        .iter()
        .zip(m)
        .map(|(d, mi)| (d - u * xi1 * mi).powi(2))
        .sum();
    let a = dot(dh, m) / nf - xi1 * int_all;
    -g2 / xi1 + nf / (xi1 * q) * a * a
}

/// Legendre data of every coordinate at overlap q.
fn legendre_all(sol: &ParisiSolution, mu: &EmpiricalMu, q: f64) -> Result<Vec<Legendre>> {
    let k = sol.index_of(q)?;
    mu.points().iter().map(|&m| sol.legendre_at(k, m)).collect()
}

/// Quantities shared by the SUSY log-density forms, all per spin except `dh`.
struct SusyParts {
    xi0: f64,
    xi1: f64,
    xi2: f64,
    tail: f64,
    mean_h: f64,
    u_term: f64,
    dh: Vec<f64>,
}

fn susy_parts(sol: &ParisiSolution, mu: &EmpiricalMu, q: f64) -> Result<SusyParts> {
    let mix = sol.mixture();
    let leg = legendre_all(sol, mu, q)?;
    let n = mu.n() as f64;
    Ok(SusyParts {
        xi0: mix.xi(q),
        xi1: mix.d1(q),
        xi2: mix.d2(q),
        tail: sol.measure().int_cdf(q, 1.0),
        mean_h: leg.iter().map(|l| l.h).sum::<f64>() / n,
        u_term: u_zeta(sol.measure(), mix, q),
        dh: leg.iter().map(|l| l.dh).collect(),
    })
}

impl SusyParts {
    /// ½ξu² − ½ξ''(∫_q^1ζ)² − ‖∂m h − uξ'm‖²/(2Nξ') − ½log(2πξ') − u(Σh/N + U + f).
    fn base(&self, m: &[f64], u: f64, f: f64) -> f64 {
        let n = m.len() as f64;
        let g2: f64 = self
            .dh
            .iter()
            .zip(m)
            .map(|(d, mi)| (d - u * self.xi1 * mi).powi(2))
            .sum();
        0.5 * self.xi0 * u * u
            - 0.5 * self.xi2 * self.tail * self.tail
            - g2 / (2.0 * n * self.xi1)
            - 0.5 * (2.0 * PI * self.xi1).ln()
            - u * (self.mean_h + self.u_term + f)
    }

    /// (⟨∂m h, m⟩/N − ξ'∫₀¹ζ)²/(2ξ'q) with ∫₀¹ζ = uq + ∫_q^1ζ.
    fn penalty(&self, m: &[f64], u: f64, q: f64) -> f64 {
        let n = m.len() as f64;
        let a = dot(&self.dh, m) / n - self.xi1 * (u * q + self.tail);
        a * a / (2.0 * self.xi1 * q)
    }
}

/// Per-spin SUSY log-density of Z(m) at (0, Nf) for ζ ∈ Prefix₂(u, q); `sol` must have q as a boundary.
pub fn susy_logdensity_mixed(
    sol: &ParisiSolution,
    mu: &EmpiricalMu,
    u: f64,
    q: f64,
    f: f64,
) -> Result<f64> {
    Ok(susy_parts(sol, mu, q)?.base(mu.points(), u, f))
}

/// Per-spin squared penalty (⟨∂m h, m⟩/N − ξ'(q)∫₀¹ζ)²/(2ξ'(q)q), zero on constraint-satisfying inputs.
pub fn susy_penalty(sol: &ParisiSolution, mu: &EmpiricalMu, u: f64, q: f64) -> Result<f64> {
    Ok(susy_parts(sol, mu, q)?.penalty(mu.points(), u, q))
}

/// Per-spin upper bound: the SUSY log-density plus the penalty.
pub fn susy_upper_bound(
    sol: &ParisiSolution,
    mu: &EmpiricalMu,
    u: f64,
    q: f64,
    f: f64,
) -> Result<f64> {
    let p = susy_parts(sol, mu, q)?;
    Ok(p.base(mu.points(), u, f) + p.penalty(mu.points(), u, q))
}

/// Exact per-spin Gaussian log-density of Z(m) at (0, Nf) when ∇F_TAP has mean −k_ζ(q, m), q = ‖m‖²/N.
pub fn exact_logdensity(sol: &ParisiSolution, mu: &EmpiricalMu, f: f64) -> Result<f64> {
    let q = mu.q();
    let p = susy_parts(sol, mu, q)?;
    let m = mu.points();
    let n = m.len() as f64;
    let mut z: Vec<f64> =
        p.dh.iter()
            .zip(m)
            .map(|(d, mi)| d + p.xi2 * p.tail * mi)
            .collect();
    z.push(n * (f + p.mean_h + p.u_term));
    Ok(GammaBlocks::at(sol.mixture(), m)?.log_density(&z)? / n)
}

/// Pure p-spin density forms, per spin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PureDensity {
    /// Closed form including the (p−1)/p squared term.
    pub rhs: f64,
    /// log φ_∇F(0) + u((1/p)⟨m,k⟩ − Σh − NU − Nf) from the exact Gaussian density.
    pub exact: f64,
    /// R^ex = (1/p)⟨m,k⟩ − Σh − NU, the value of F_TAP at a critical point.
    pub r_ex: f64,
}

/// Pure p-spin tilted gradient density; `exact − rhs` is −log(p)/(2N) when q = ‖m‖²/N.
pub fn susy_logdensity_pure(
    sol: &ParisiSolution,
    mu: &EmpiricalMu,
    u: f64,
    q: f64,
    f: f64,
    p: u32,
) -> Result<PureDensity> {
    let mix = sol.mixture();
    match mix.is_pure() {
        Some(pp) if pp == p => {}
        _ => {
            return Err(Error::Domain(format!(
                "susy_logdensity_pure needs the pure {p}-spin mixture"
            )))
        }
    }
    let parts = susy_parts(sol, mu, q)?;
    let m = mu.points();
    let n = m.len() as f64;
    let pf = p as f64;
    let rhs = parts.base(m, u, f) + (pf - 1.0) / pf * parts.penalty(m, u, q);

    let qm = mu.q();
    let k: Vec<f64> = parts
        .dh
        .iter()
        .zip(m)
        .map(|(d, mi)| d + parts.xi2 * parts.tail * mi)
        .collect();
    let ginv_k = ginv_pure(mix, m, &k)?;
    // log det G = (N−1) log ξ' + log(pξ').
    let logdet = n * mix.d1(qm).ln() + pf.ln();
    let log_phi = -0.5 * dot(&k, &ginv_k) - 0.5 * (n * (2.0 * PI).ln() + logdet);
    let r_ex = dot(m, &k) / pf - n * (parts.mean_h + parts.u_term);
    let exact = log_phi + u * (r_ex - n * f);
    Ok(PureDensity {
        rhs,
        exact: exact / n,
        r_ex: r_ex / n,
    })
}

/// S_ζ(m) = Σh(q, m_i) + NU_ζ(q) and its gradient, q = ‖m‖²/N, with ζ held fixed.
/// `sol` must have q as a boundary and ζ supported on [q, 1].
pub fn entropy_term(sol: &ParisiSolution, m: &[f64]) -> Result<(f64, Vec<f64>)> {
    let n = m.len() as f64;
    let q = norm2(m) / n;
    let k = sol.index_of(q)?;
    let mix = sol.mixture();
    let z = sol.measure();
    let mut value = n * u_zeta(z, mix, q);
    let mut dq = -0.5 * n * q * mix.d2(q) * z.cdf(q);
    let mut dh = Vec::with_capacity(m.len());
    for &mi in m {
        let l = sol.legendre_at(k, mi)?;
        value += l.h;
        dq += sol.dq_h(q, mi)?;
        dh.push(l.dh);
    }
    let grad = dh
        .iter()
        .zip(m)
        .map(|(d, mi)| d + 2.0 * mi / n * dq)
        .collect();
    Ok((value, grad))
}

/// Weights Δ_k = −ζ({q_k}) for k < n and Δ_n = ζ([0, q_n)) of a prefix {0, q_1, …, q_n}.
pub fn prefix_deltas(z: &AtomicMeasure, q: &[f64]) -> Result<Vec<f64>> {
    let n = q.len();
    if n == 0 || !q.windows(2).all(|w| w[0] < w[1]) || q[0] <= 0.0 || q[n - 1] >= 1.0 {
        return Err(Error::Domain(
            "overlaps must be strictly increasing in (0, 1)".into(),
        ));
    }
    let mut prev = 0.0;
    for &qk in q {
        if (z.cdf_left(qk) - z.cdf(prev)).abs() > MERGE_TOL {
            return Err(Error::Domain(format!(
                "ζ charges ({prev}, {qk}); it must have prefix {{0, q_1, …, q_n}}"
            )));
        }
        prev = qk;
    }
    let mut d: Vec<f64> = q[..n - 1].iter().map(|&t| -z.mass_at(t)).collect();
    d.push(z.cdf_left(q[n - 1]));
    Ok(d)
}

/// A skeleton of nested states m^(1..n) with overlaps q_k and their per-state data.
#[derive(Debug, Clone)]
pub struct HierData {
    q: Vec<f64>,
    m: Vec<Vec<f64>>,
    dh: Vec<Vec<f64>>,
    hsum: Vec<f64>,
    f: Vec<f64>,
}

impl HierData {
    /// `dh[k]` holds ∂m h(q_k, m^(k)) per coordinate, `hsum[k]` holds Σ_i h(q_k, m_i^(k)).
    pub fn new(
        q: Vec<f64>,
        m: Vec<Vec<f64>>,
        dh: Vec<Vec<f64>>,
        hsum: Vec<f64>,
        f: Vec<f64>,
    ) -> Result<Self> {
        let n = q.len();
        if n == 0 || m.len() != n || dh.len() != n || hsum.len() != n || f.len() != n {
            return Err(Error::Domain(
                "hierarchy arrays must all have n entries".into(),
            ));
        }
        let dim = m[0].len();
        if m.iter().chain(&dh).any(|v| v.len() != dim) {
            return Err(Error::Domain("all vectors must share one dimension".into()));
        }
        let nf = dim as f64;
        for k in 0..n {
            let r = norm2(&m[k]) / nf;
            if (r - q[k]).abs() > 1e-10 {
                return Err(Error::Domain(format!(
                    "‖m^({})‖²/N = {r} differs from q = {}",
                    k + 1,
                    q[k]
                )));
            }
            for j in 0..k {
                let diff: Vec<f64> = m[k].iter().zip(&m[k - 1]).map(|(a, b)| a - b).collect();
                let ip = dot(&m[j], &diff) / nf;
                if ip.abs() > 1e-10 {
                    return Err(Error::Domain(format!(
                        "⟨m^({}), m^({}) − m^({})⟩/N = {ip:.3e} breaks hierarchical orthogonality",
                        j + 1,
                        k + 1,
                        k
                    )));
                }
            }
        }
        Ok(Self { q, m, dh, hsum, f })
    }

    /// Exact witness: orthogonal bands, gradients solving the compression identities,
    /// random h sums and free energies meeting the energy constraints of every level.
    pub fn synthetic(
        mix: &Mixture,
        z: &AtomicMeasure,
        q: &[f64],
        dim: usize,
        seed: u64,
    ) -> Result<Self> {
        let delta = prefix_deltas(z, q)?;
        let n = q.len();
        if dim < n + 1 {
            return Err(Error::Domain(format!(
                "dimension {dim} must exceed the number of levels {n}"
            )));
        }
        let nf = dim as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gauss = |len: usize| -> Vec<f64> {
            (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
        };

        let mut basis: Vec<Vec<f64>> = Vec::new();
        while basis.len() < n {
            let mut v = gauss(dim);
            for e in &basis {
                let c = dot(&v, e);
                v.iter_mut().zip(e).for_each(|(a, b)| *a -= c * b);
            }
            let s = norm2(&v).sqrt();
            if s > 1e-8 {
                basis.push(v.into_iter().map(|a| a / s).collect());
            }
        }
        let mut m = Vec::with_capacity(n);
        let mut acc = vec![0.0; dim];
        let mut prev = 0.0;
        for (k, e) in basis.iter().enumerate() {
            let s = (nf * (q[k] - prev)).sqrt();
            acc.iter_mut().zip(e).for_each(|(a, b)| *a += s * b);
            m.push(acc.clone());
            prev = q[k];
        }

        let qij = |i: usize, j: usize| q[i.min(j)];
        let tails: Vec<f64> = q.iter().map(|&t| z.int_cdf(t, 1.0)).collect();
        let gram = DMatrix::from_fn(n, n, |j, l| nf * qij(j, l));
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::Degenerate("skeleton Gram matrix".into()))?;
        let mut dh = Vec::with_capacity(n);
        for i in 0..n {
            let r = gauss(dim);
            let rhs = DVector::from_fn(n, |j, _| {
                let shift: f64 = (0..n)
                    .map(|k| mix.d1(qij(i, k)) * delta[k] * nf * qij(k, j))
                    .sum();
                nf * mix.d1(qij(i, j)) * tails[j] + shift - dot(&r, &m[j])
            });
            let alpha = chol.solve(&rhs);
            let mut g = r;
            for (l, ml) in m.iter().enumerate() {
                g.iter_mut().zip(ml).for_each(|(a, b)| *a += alpha[l] * b);
            }
            dh.push(g);
        }

        let hsum: Vec<f64> = (0..n)
            .map(|i| dot(&dh[i], &m[i]) + nf * 0.3 * gauss(1)[0])
            .collect();
        let all = z.int_t_d2_cdf(mix, 0.0, 1.0);
        let f = (0..n)
            .map(|k| {
                -(hsum[k] - dot(&dh[k], &m[k])) / nf
                    - 0.5 * all
                    - 0.5 * z.int_t_d2_cdf(mix, 0.0, q[k])
            })
            .collect();
        Self::new(q.to_vec(), m, dh, hsum, f)
    }

    pub fn levels(&self) -> usize {
        self.q.len()
    }

    pub fn dim(&self) -> usize {
        self.m[0].len()
    }

    pub fn overlaps(&self) -> &[f64] {
        &self.q
    }

    pub fn free_energies(&self) -> &[f64] {
        &self.f
    }

    /// The first `levels` states.
    pub fn truncated(&self, levels: usize) -> Self {
        Self {
            q: self.q[..levels].to_vec(),
            m: self.m[..levels].to_vec(),
            dh: self.dh[..levels].to_vec(),
            hsum: self.hsum[..levels].to_vec(),
            f: self.f[..levels].to_vec(),
        }
    }
}

/// Entry (value, target) of a checked identity.
pub type Pair = (f64, f64);

/// Identities of the hierarchical quadratic forms.
#[derive(Debug, Clone)]
pub struct HierReport {
    /// ⟨z^(i) + ∂m h(q_i, m^(i)), m^(j)⟩ against Nξ'(q_ij)∫_{q_j}^1 ζ, row-major over (i, j).
    pub compression: Vec<Pair>,
    /// Σξ(q_ij)Δ_iΔ_j against Σ(ξ(q_i) − ξ(q_{i−1}))ζ([0, q_i))².
    pub telescoping: Pair,
    /// Dense det ξ'(Q) against Π(ξ'(q_i) − ξ'(q_{i−1})).
    pub det_xi1: Pair,
    /// ⟨x_n^(k), m^(j)⟩ against N·1{j=k}∫_{q_k}^1 ζ, row-major over (k, j).
    pub ladder: Vec<Pair>,
    /// Energy line of the saddle conditions against Nf_k.
    pub energy: Vec<Pair>,
    /// Minimizer x_n^(k) of the constrained quadratic.
    pub x: Vec<Vec<f64>>,
    /// −⟨a_n, Γ_n'^{-1} a_n⟩ from the closed form reached at the saddle point.
    pub quad_closed: f64,
}

impl HierReport {
    pub fn max_error(&self) -> f64 {
        let rel = |&(a, b): &Pair| (a - b).abs() / (1.0 + b.abs());
        self.compression
            .iter()
            .chain(&self.ladder)
            .chain(&self.energy)
            .chain([&self.telescoping, &self.det_xi1])
            .map(rel)
            .fold(0.0, f64::max)
    }
}

/// Evaluates the ladder y_n → z_n → x_n and the identities it relies on.
pub fn hier_forms(h: &HierData, mix: &Mixture, z: &AtomicMeasure) -> Result<HierReport> {
    let n = h.levels();
    let nf = h.dim() as f64;
    let q = &h.q;
    let delta = prefix_deltas(z, q)?;
    let qij = |i: usize, j: usize| q[i.min(j)];
    let tails: Vec<f64> = q.iter().map(|&t| z.int_cdf(t, 1.0)).collect();
    let xi1_inc = |k: usize| mix.d1(q[k]) - if k == 0 { 0.0 } else { mix.d1(q[k - 1]) };

    let mut y = Vec::with_capacity(n);
    let mut compression = Vec::with_capacity(n * n);
    for i in 0..n {
        let mut yi = h.dh[i].clone();
        for (k, mk) in h.m.iter().enumerate() {
            let c = mix.d1(qij(i, k)) * delta[k];
            yi.iter_mut().zip(mk).for_each(|(a, b)| *a -= c * b);
        }
        for j in 0..n {
            compression.push((dot(&yi, &h.m[j]), nf * mix.d1(qij(i, j)) * tails[j]));
        }
        y.push(yi);
    }

    let zn: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            let inc = xi1_inc(k);
            (0..h.dim())
                .map(|a| (y[k][a] - if k == 0 { 0.0 } else { y[k - 1][a] }) / inc)
                .collect()
        })
        .collect();
    let x: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            (0..h.dim())
                .map(|a| zn[k][a] - if k + 1 < n { zn[k + 1][a] } else { 0.0 })
                .collect()
        })
        .collect();
    let mut ladder = Vec::with_capacity(n * n);
    for k in 0..n {
        for j in 0..n {
            ladder.push((
                dot(&x[k], &h.m[j]),
                if j == k { nf * tails[k] } else { 0.0 },
            ));
        }
    }

    let energy = (0..n)
        .map(|k| {
            let s: f64 = (0..n).map(|j| mix.xi(qij(k, j)) * delta[j]).sum();
            let lhs =
                mix.d1(q[k]) * dot(&x[k], &h.m[k]) + nf * s - h.hsum[k] - nf * u_zeta(z, mix, q[k]);
            (lhs, nf * h.f[k])
        })
        .collect();

    let tel_lhs: f64 = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| mix.xi(qij(i, j)) * delta[i] * delta[j])
        .sum();
    let tel_rhs: f64 = (0..n)
        .map(|i| {
            let below: f64 = delta[i..].iter().sum();
            (mix.xi(q[i]) - if i == 0 { 0.0 } else { mix.xi(q[i - 1]) }) * below * below
        })
        .sum();
    let dense = DMatrix::from_fn(n, n, |i, j| mix.d1(qij(i, j)));
    let det_xi1 = (dense.determinant(), (0..n).map(xi1_inc).product());

    let mut quad = nf * tel_rhs;
    for i in 0..n {
        quad -= 2.0 * delta[i] * (h.hsum[i] + nf * u_zeta(z, mix, q[i]) + nf * h.f[i]);
        quad -= nf * mix.d2(q[i]) * tails[i] * tails[i];
        let prev: &[f64] = if i == 0 { &[] } else { &y[i - 1] };
        let d2: f64 = (0..h.dim())
            .map(|a| (y[i][a] - prev.get(a).copied().unwrap_or(0.0)).powi(2))
            .sum();
        quad -= d2 / xi1_inc(i);
    }

    Ok(HierReport {
        compression,
        telescoping: (tel_lhs, tel_rhs),
        det_xi1,
        ladder,
        energy,
        x,
        quad_closed: quad,
    })
}

/// Dense Cov(Skel_n) over the blocks (∇F(m^(k)), F(m^(k))), k = 1..n.
pub fn skeleton_covariance(h: &HierData, mix: &Mixture) -> DMatrix<f64> {
    let (n, dim) = (h.levels(), h.dim());
    let nf = dim as f64;
    let b = dim + 1;
    let ov: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| dot(&h.m[i], &h.m[j]) / nf).collect())
        .collect();
    DMatrix::from_fn(n * b, n * b, |r, c| {
        let (i, a) = (r / b, r % b);
        let (j, e) = (c / b, c % b);
        let t = ov[i][j];
        match (a == dim, e == dim) {
            (false, false) => {
                mix.d2(t) * h.m[j][a] * h.m[i][e] / nf + if a == e { mix.d1(t) } else { 0.0 }
            }
            (false, true) => mix.d1(t) * h.m[j][a],
            (true, false) => mix.d1(t) * h.m[i][e],
            (true, true) => nf * mix.xi(t),
        }
    })
}

/// Target a_n: blocks (k_ζ(q_k, m^(k)), Nf_k + Σh + NU_ζ(q_k)).
pub fn skeleton_target(h: &HierData, mix: &Mixture, z: &AtomicMeasure) -> DVector<f64> {
    let nf = h.dim() as f64;
    let mut out = Vec::with_capacity(h.levels() * (h.dim() + 1));
    for k in 0..h.levels() {
        let c = mix.d2(h.q[k]) * z.int_cdf(h.q[k], 1.0);
        out.extend(h.dh[k].iter().zip(&h.m[k]).map(|(d, mi)| d + c * mi));
        out.push(nf * h.f[k] + h.hsum[k] + nf * u_zeta(z, mix, h.q[k]));
    }
    DVector::from_vec(out)
}

/// Saddle point w = (x_n^(1), Δ_1, …, x_n^(n), Δ_n).
pub fn skeleton_saddle(report: &HierReport, z: &AtomicMeasure, q: &[f64]) -> Result<DVector<f64>> {
    let delta = prefix_deltas(z, q)?;
    let mut out = Vec::new();
    for (x, d) in report.x.iter().zip(delta) {
        out.extend_from_slice(x);
        out.push(d);
    }
    Ok(DVector::from_vec(out))
}

/// Quadratic part of the conditional log-density of level n given levels 1..n−1, closed form.
pub fn conditional_quadratic(h: &HierData, mix: &Mixture, z: &AtomicMeasure) -> Result<f64> {
    let n = h.levels();
    if n < 2 {
        return Err(Error::Domain(
            "conditioning needs at least two levels".into(),
        ));
    }
    let nf = h.dim() as f64;
    let q = &h.q;
    let dn = prefix_deltas(z, q)?[n - 1];
    let (a, b) = (n - 1, n - 2);
    let inc = mix.d1(q[a]) - mix.d1(q[b]);
    let gap: f64 = h.dh[a]
        .iter()
        .zip(&h.dh[b])
        .map(|(x, y)| (x - y).powi(2))
        .sum();
    let legendre = |k: usize| h.hsum[k] - dot(&h.dh[k], &h.m[k]);
    let tail = z.int_cdf(q[a], 1.0);
    Ok(
        -0.5 * nf * mix.d2(q[a]) * tail * tail - gap / (2.0 * inc) - dn * legendre(a)
            + dn * legendre(b)
            - nf * dn * (h.f[a] - h.f[b]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::PrefixSpec;
    use crate::parisi_pde::{solve_with_splits, GridSpec};
    use proptest::prelude::*;

    fn mixed() -> Mixture {
        Mixture::new(&[(2, 1.0), (4, 1.0)]).unwrap()
    }

    fn random_m(dim: usize, q: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let s = (dim as f64 * q / norm2(&v)).sqrt();
        v.into_iter().map(|a| a * s).collect()
    }

    fn dense_logdet(m: &DMatrix<f64>) -> f64 {
        let c = m.clone().cholesky().unwrap();
        2.0 * c.l().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    #[test]
    fn logdet_matches_dense() {
        let mix = mixed();
        for (dim, seed) in [(10, 1), (25, 2), (50, 3)] {
            let m = random_m(dim, 0.5, seed);
            let g = GammaBlocks::at(&mix, &m).unwrap();
            let closed = g.logdet().unwrap();
            let dense = dense_logdet(&g.dense());
            assert!(
                (closed - dense).abs() < 1e-10 * (1.0 + dense.abs()),
                "{closed} vs {dense}"
            );
            let d = mix.discriminant(0.5).unwrap();
            let s = dim as f64 * d / (mix.d1(0.5) + 0.5 * mix.d2(0.5));
            assert!((g.schur() - s).abs() < 1e-12 * s);
        }
    }

    #[test]
    fn zero_magnetization_edge() {
        let mix = mixed();
        let g = GammaBlocks::new(&mix, 0.5, &[0.0; 10]).unwrap();
        assert!((g.logdet_a() - 10.0 * mix.d1(0.5).ln()).abs() < 1e-14);
    }

    #[test]
    fn pure_mixture_is_degenerate_but_a_block_is_not() {
        let mix = Mixture::new(&[(4, 1.0)]).unwrap();
        let m = random_m(10, 0.4, 4);
        let g = GammaBlocks::at(&mix, &m).unwrap();
        assert!(matches!(g.logdet(), Err(Error::Degenerate(_))));
        // A has eigenvalue ξ' on m⊥ and pξ' along m.
        let am = g.a_apply(&m);
        let p_xi1 = 4.0 * mix.d1(0.4);
        assert!(am
            .iter()
            .zip(&m)
            .all(|(a, b)| (a - p_xi1 * b).abs() < 1e-12));
        assert!((g.logdet_a() - (9.0 * mix.d1(0.4).ln() + p_xi1.ln())).abs() < 1e-12);
    }

    #[test]
    fn block_inverse_matches_dense() {
        let mix = mixed();
        let dim = 30;
        let g = GammaBlocks::at(&mix, &random_m(dim, 0.6, 5)).unwrap();
        let inv = g.dense().try_inverse().unwrap();
        for c in 0..=dim {
            let mut e = vec![0.0; dim + 1];
            e[c] = 1.0;
            let col = g.solve(&e).unwrap();
            for r in 0..=dim {
                assert!((col[r] - inv[(r, c)]).abs() < 1e-10 * (1.0 + inv[(r, c)].abs()));
            }
        }
    }

    #[test]
    fn pure_inverse_matches_dense() {
        let mix = Mixture::new(&[(3 * 2, 0.7)]).unwrap();
        let m = random_m(10, 0.35, 6);
        let g = GammaBlocks::at(&mix, &m).unwrap();
        let dense = g
            .dense()
            .view((0, 0), (10, 10))
            .into_owned()
            .try_inverse()
            .unwrap();
        for c in 0..10 {
            let mut e = vec![0.0; 10];
            e[c] = 1.0;
            let col = ginv_pure(&mix, &m, &e).unwrap();
            for r in 0..10 {
                assert!((col[r] - dense[(r, c)]).abs() < 1e-10);
            }
        }
        assert!(ginv_pure(&mixed(), &m, &m).is_err());
    }

    #[test]
    fn dual_bound_optimality_and_gap() {
        let mix = mixed();
        let dim = 20;
        let g = GammaBlocks::at(&mix, &random_m(dim, 0.45, 7)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let z: Vec<f64> = (0..=dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let opt = g.solve(&z).unwrap();
        let (exact, at_opt) = g.dual_bound(&z, &opt).unwrap();
        assert!((exact - at_opt).abs() < 1e-10 * (1.0 + exact.abs()));
        let w: Vec<f64> = (0..=dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let (_, bound) = g.dual_bound(&z, &w).unwrap();
        let d: Vec<f64> = w.iter().zip(&opt).map(|(a, b)| a - b).collect();
        assert!(bound > exact);
        assert!((bound - exact - dot(&d, &g.apply(&d))).abs() < 1e-9 * (1.0 + bound.abs()));
        // Doubling the optimum costs exactly ⟨z, Γ⁻¹z⟩.
        let twice: Vec<f64> = opt.iter().map(|a| 2.0 * a).collect();
        let (_, b2) = g.dual_bound(&z, &twice).unwrap();
        assert!(((b2 - exact) + exact).abs() < 1e-9 * (1.0 + exact.abs()));
    }

    #[test]
    fn quadra_matches_lagrange_solution() {
        let mix = mixed();
        let dim = 40;
        let q = 0.55;
        let m = random_m(dim, q, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let dh: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let (u, tail) = (0.3, 0.27);
        let int_all = u * q + tail;
        let xi1 = mix.d1(q);
        let nf = dim as f64;
        // KKT system [2ξ'I m; mᵀ 0][x; λ] = [2g; N·tail].
        let kkt = DMatrix::from_fn(dim + 1, dim + 1, |i, j| match (i == dim, j == dim) {
            (false, false) => {
                if i == j {
                    2.0 * xi1
                } else {
                    0.0
                }
            }
            (false, true) => m[i],
            (true, false) => m[j],
            (true, true) => 0.0,
        });
        let rhs = DVector::from_fn(dim + 1, |i, _| {
            if i == dim {
                nf * tail
            } else {
                2.0 * (dh[i] - u * xi1 * m[i])
            }
        });
        let sol = kkt.lu().solve(&rhs).unwrap();
        let x: Vec<f64> = sol.iter().take(dim).copied().collect();
        let g: Vec<f64> = dh.iter().zip(&m).map(|(d, mi)| d - u * xi1 * mi).collect();
        let direct = xi1 * norm2(&x) - 2.0 * dot(&g, &x);
        let closed = quadra(xi1, &m, &dh, u, int_all);
        assert!(
            (direct - closed).abs() < 1e-9 * (1.0 + closed.abs()),
            "{direct} vs {closed}"
        );
    }

    fn prefix2(u: f64, q: f64) -> AtomicMeasure {
        PrefixSpec::new(
            vec![u],
            vec![q],
            AtomicMeasure::new(vec![(q, 0.4), (0.85, 0.6)]).unwrap(),
        )
        .unwrap()
        .assemble()
        .unwrap()
    }

    fn grid() -> GridSpec {
        GridSpec {
            half_width: 24.0,
            points: 2001,
            quad_nodes: 64,
        }
    }

    /// Coordinates tanh(σg) with σ chosen so that q is roughly the requested value.
    fn scaled_mu(dim: usize, q: f64, seed: u64) -> EmpiricalMu {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sigma = (q / (1.0 - q)).sqrt();
        let pts = (0..dim)
            .map(|_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                (sigma * g).tanh()
            })
            .collect();
        EmpiricalMu::new(pts).unwrap()
    }

    #[test]
    fn pure_density_identity_is_exact() {
        let mix = Mixture::new(&[(4, 1.5)]).unwrap();
        for (dim, seed) in [(12, 11), (40, 12)] {
            let mu = scaled_mu(dim, 0.4, seed);
            let q = mu.q();
            let u = 0.35;
            let z = prefix2(u, q);
            let sol = solve_with_splits(&z, &mix, &grid(), &[q]).unwrap();
            let d = susy_logdensity_pure(&sol, &mu, u, q, -0.2, 4).unwrap();
            let expect = d.rhs - 4f64.ln() / (2.0 * dim as f64);
            assert!((d.exact - expect).abs() < 1e-11, "{} vs {expect}", d.exact);
        }
        let mu = scaled_mu(12, 0.4, 11);
        let sol = solve_with_splits(&prefix2(0.3, mu.q()), &mixed(), &grid(), &[mu.q()]).unwrap();
        assert!(susy_logdensity_pure(&sol, &mu, 0.3, mu.q(), 0.0, 4).is_err());
    }

    #[test]
    fn mixed_density_bounded_by_upper_form() {
        let mix = mixed();
        let dim = 30;
        let mu = scaled_mu(dim, 0.5, 13);
        let q = mu.q();
        let u = 0.4;
        let z = prefix2(u, q);
        let sol = solve_with_splits(&z, &mix, &grid(), &[q]).unwrap();
        let nf = dim as f64;
        for f in [-0.6, -0.1, 0.3] {
            let exact = exact_logdensity(&sol, &mu, f).unwrap();
            let upper = susy_upper_bound(&sol, &mu, u, q, f).unwrap();
            // The closed forms replace log det(2πΓ) by N log(2πξ').
            let g = GammaBlocks::at(&mix, mu.points()).unwrap();
            let det_fix = 0.5
                * (nf * (2.0 * PI * mix.d1(q)).ln()
                    - (nf + 1.0) * (2.0 * PI).ln()
                    - g.logdet().unwrap())
                / nf;
            assert!(
                exact <= upper + det_fix + 1e-12,
                "f={f}: {exact} > {}",
                upper + det_fix
            );
        }
        let no_tilt = susy_logdensity_mixed(&sol, &mu, 0.0, q, 0.7).unwrap();
        let parts = susy_parts(&sol, &mu, q).unwrap();
        let expect = -0.5 * mix.d2(q) * parts.tail.powi(2)
            - norm2(&parts.dh) / (2.0 * nf * mix.d1(q))
            - 0.5 * (2.0 * PI * mix.d1(q)).ln();
        assert!((no_tilt - expect).abs() < 1e-12);
        assert!(susy_penalty(&sol, &mu, u, q).unwrap() >= 0.0);
    }

    #[test]
    fn entropy_gradient_matches_finite_differences() {
        let mix = mixed();
        let mu = scaled_mu(6, 0.45, 14);
        let m = mu.points().to_vec();
        let q = mu.q();
        let z0 = AtomicMeasure::new(vec![(0.0, 0.3), (0.8, 0.7)]).unwrap();
        let z = z0.project_at(q).unwrap();
        let sol = solve_with_splits(&z, &mix, &grid(), &[q]).unwrap();
        let (_, grad) = entropy_term(&sol, &m).unwrap();
        // Moving m_i changes q; the family π_{q_ε}ζ₀ keeps ζ([0,t]) fixed on [q_ε, 1].
        let eps = 1e-5;
        for i in 0..m.len() {
            let mut val = [0.0; 2];
            for (s, sign) in [1.0, -1.0].iter().enumerate() {
                let mut mp = m.clone();
                mp[i] += sign * eps;
                let qq = norm2(&mp) / mp.len() as f64;
                let zz = z0.project_at(qq).unwrap();
                let ss = solve_with_splits(&zz, &mix, &grid(), &[qq]).unwrap();
                val[s] = entropy_term(&ss, &mp).unwrap().0;
            }
            let fd = (val[0] - val[1]) / (2.0 * eps);
            assert!(
                (fd - grad[i]).abs() < 1e-5 * (1.0 + fd.abs()),
                "i={i}: fd {fd} vs {}",
                grad[i]
            );
        }
    }

    fn skeleton_measure() -> (AtomicMeasure, Vec<f64>) {
        let q = vec![0.2, 0.45, 0.7];
        let z = PrefixSpec::new(
            vec![0.15, 0.35, 0.6],
            q.clone(),
            AtomicMeasure::new(vec![(0.7, 0.3), (0.9, 0.7)]).unwrap(),
        )
        .unwrap()
        .assemble()
        .unwrap();
        (z, q)
    }

    #[test]
    fn hierarchical_identities_on_witness() {
        let mix = mixed();
        let (z, q) = skeleton_measure();
        let h = HierData::synthetic(&mix, &z, &q, 12, 21).unwrap();
        let r = hier_forms(&h, &mix, &z).unwrap();
        assert!(r.max_error() < 1e-9, "max error {}", r.max_error());
        assert!((r.telescoping.0 - r.telescoping.1).abs() < 1e-12);
        assert!((r.det_xi1.0 - r.det_xi1.1).abs() < 1e-12);
    }

    #[test]
    fn saddle_solves_skeleton_system() {
        let mix = mixed();
        let (z, q) = skeleton_measure();
        let h = HierData::synthetic(&mix, &z, &q, 10, 22).unwrap();
        let r = hier_forms(&h, &mix, &z).unwrap();
        let gam = skeleton_covariance(&h, &mix);
        let a = skeleton_target(&h, &mix, &z);
        let w = skeleton_saddle(&r, &z, &q).unwrap();
        let res = (&gam * &w - &a).amax();
        assert!(res < 1e-9 * (1.0 + a.amax()), "residual {res}");
        let exact = -a.dot(&gam.clone().cholesky().unwrap().solve(&a));
        let dual = w.dot(&(&gam * &w)) - 2.0 * w.dot(&a);
        assert!((exact - dual).abs() < 1e-8 * (1.0 + exact.abs()));
        assert!(
            (exact - r.quad_closed).abs() < 1e-8 * (1.0 + exact.abs()),
            "{exact} vs {}",
            r.quad_closed
        );
    }

    #[test]
    fn conditional_density_by_dense_conditioning() {
        let mix = mixed();
        let (z, q) = skeleton_measure();
        let h = HierData::synthetic(&mix, &z, &q, 10, 23).unwrap();
        let n = h.levels();
        let dense_quad = |hh: &HierData| {
            let gam = skeleton_covariance(hh, &mix);
            let a = skeleton_target(hh, &mix, &z);
            -0.5 * a.dot(&gam.cholesky().unwrap().solve(&a))
        };
        let parent = h.truncated(n - 1);
        let dense = dense_quad(&h) - dense_quad(&parent);
        // Dual pathway at the saddle of each level; the parent uses the merged weight Δ̃.
        let dual = |hh: &HierData| {
            let r = hier_forms(hh, &mix, &z).unwrap();
            let w = skeleton_saddle(&r, &z, hh.overlaps()).unwrap();
            let gam = skeleton_covariance(hh, &mix);
            let a = skeleton_target(hh, &mix, &z);
            0.5 * (w.dot(&(&gam * &w)) - 2.0 * w.dot(&a))
        };
        let via_dual = dual(&h) - dual(&parent);
        let closed = conditional_quadratic(&h, &mix, &z).unwrap();
        assert!(
            (dense - via_dual).abs() < 1e-8 * (1.0 + dense.abs()),
            "{dense} vs {via_dual}"
        );
        assert!(
            (dense - closed).abs() < 1e-8 * (1.0 + dense.abs()),
            "{dense} vs {closed}"
        );
    }

    #[test]
    fn hierarchy_validation() {
        let m = vec![vec![1.0, 0.0], vec![1.0, 1.0]];
        let ok = HierData::new(
            vec![0.5, 1.0 - 1e-3],
            m.clone(),
            m.clone(),
            vec![0.0; 2],
            vec![0.0; 2],
        );
        assert!(ok.is_err());
        let bad = vec![vec![1.0, 0.0], vec![1.2, 0.6]];
        assert!(
            HierData::new(vec![0.5, 0.9], bad.clone(), bad, vec![0.0; 2], vec![0.0; 2]).is_err()
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn telescoping_and_determinant(
            raw_q in prop::collection::vec(0.02f64..0.95, 1..=6),
            raw_u in prop::collection::vec(0.02f64..0.95, 1..=6),
            b2 in 0.1f64..2.0, b4 in 0.0f64..2.0,
        ) {
            let mut q = raw_q.clone();
            q.sort_by(f64::total_cmp);
            q.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
            let mut u = raw_u.clone();
            u.sort_by(f64::total_cmp);
            u.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
            let n = q.len().min(u.len());
            let (q, u) = (q[..n].to_vec(), u[..n].to_vec());
            let tail = AtomicMeasure::new(vec![(q[n - 1], 0.5), ((q[n - 1] + 1.0) / 2.0, 0.5)]).unwrap();
            let z = PrefixSpec::new(u, q.clone(), tail).unwrap().assemble().unwrap();
            let mix = Mixture::new(&[(2, b2), (4, b4)]).unwrap();
            let h = HierData::synthetic(&mix, &z, &q, n + 3, 31).unwrap();
            let r = hier_forms(&h, &mix, &z).unwrap();
            prop_assert!((r.telescoping.0 - r.telescoping.1).abs() < 1e-12);
            prop_assert!((r.det_xi1.0 - r.det_xi1.1).abs() < 1e-12 * (1.0 + r.det_xi1.1.abs()));
            prop_assert!(r.max_error() < 1e-9);
        }
    }
}
