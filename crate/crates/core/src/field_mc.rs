//! Small-N Monte Carlo over the mixed p-spin field H on [-1, 1]^N and deformed-GOE
//! determinant experiments.
//!
//! A degree-p component Σ_{i₁…i_p} J_{i₁…i_p} m_{i₁}⋯m_{i_p} with i.i.d. standard normal J
//! has the same law as Σ over sorted index tuples of √M·g·m_{i₁}⋯m_{i_p}, where M is the
//! number of orderings of the tuple and g is standard normal. The sampler draws the latter,
//! which cuts the number of coefficients by roughly p!.

use crate::error::{Error, Result};
use crate::freeprob::{log_potential, stieltjes, subordinate, SpectralMeasure};
use crate::functionals::EmpiricalMu;
use crate::mixture::Mixture;
use crate::parisi_pde::ParisiSolution;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::sync::Arc;

/// Coefficient budget of one field: 2^24 monomials.
pub const MONOMIAL_BUDGET: usize = 1 << 24;

/// Evaluates f(0..n) on scoped worker threads; the output order is the index order.
pub(crate) fn par_map<T: Send, F: Fn(usize) -> T + Sync>(n: usize, f: F) -> Vec<T> {
    let workers = std::thread::available_parallelism()
        .map_or(1, |w| w.get())
        .min(n.max(1));
    if workers <= 1 {
        return (0..n).map(f).collect();
    }
    let chunk = n.div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let f = &f;
                s.spawn(move || {
                    (w * chunk..((w + 1) * chunk).min(n))
                        .map(f)
                        .collect::<Vec<T>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug)]
struct Block {
    p: usize,
    idx: Vec<u16>,
    scale: Vec<f64>,
}

#[derive(Debug)]
struct Layout {
    dim: usize,
    blocks: Vec<Block>,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Draws fields of a fixed mixture and dimension.
#[derive(Debug, Clone)]
pub struct FieldSampler {
    layout: Arc<Layout>,
}

impl FieldSampler {
    pub fn new(mix: &Mixture, dim: usize) -> Result<Self> {
        if dim == 0 || dim > u16::MAX as usize {
            return Err(Error::Domain(format!("dimension {dim} out of range")));
        }
        let needed: f64 = mix
            .coeffs()
            .map(|(p, _)| binomial(dim + p as usize - 1, p as usize))
            .sum();
        if needed > MONOMIAL_BUDGET as f64 {
            return Err(Error::Domain(format!(
                "N = {dim} needs {needed:.3e} coefficients, above the budget of {MONOMIAL_BUDGET}; lower N or the largest p"
            )));
        }
        let nf = dim as f64;
        let mut blocks = Vec::new();
        for (p, b2) in mix.coeffs() {
            let p = p as usize;
            let base = b2.sqrt() * nf.powf(-(p as f64 - 1.0) / 2.0);
            let fact = |k: usize| (1..=k).map(|i| i as f64).product::<f64>();
            let mut idx = Vec::new();
            let mut scale = Vec::new();
            let mut t = vec![0u16; p];
            loop {
                idx.extend_from_slice(&t);
                let mut orderings = fact(p);
                let mut run = 1;
                for a in 1..=p {
                    if a < p && t[a] == t[a - 1] {
                        run += 1;
                    } else {
                        orderings /= fact(run);
                        run = 1;
                    }
                }
                scale.push(base * orderings.sqrt());
                // Next non-decreasing tuple.
                let mut a = p;
                while a > 0 && t[a - 1] as usize == dim - 1 {
                    a -= 1;
                }
                if a == 0 {
                    break;
                }
                let v = t[a - 1] + 1;
                t[a - 1..].iter_mut().for_each(|x| *x = v);
            }
            blocks.push(Block { p, idx, scale });
        }
        Ok(Self {
            layout: Arc::new(Layout { dim, blocks }),
        })
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    /// Replica `replica` of the stream family `seed`.
    pub fn draw(&self, seed: u64, replica: u64) -> FieldSample {
        let mut rng = stream_rng(seed, replica);
        let coef = self
            .layout
            .blocks
            .iter()
            .map(|b| {
                b.scale
                    .iter()
                    .map(|s| {
                        let g: f64 = StandardNormal.sample(&mut rng);
                        s * g
                    })
                    .collect()
            })
            .collect();
        FieldSample {
            layout: self.layout.clone(),
            coef,
        }
    }
}

/// One realization of H with exact derivatives.
#[derive(Debug, Clone)]
pub struct FieldSample {
    layout: Arc<Layout>,
    coef: Vec<Vec<f64>>,
}

/// H, ∇H and ∇²H at one point.
#[derive(Debug, Clone)]
pub struct FieldEval {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: DMatrix<f64>,
}

/// Field of mixture `mix` in dimension N, replica 0 of `seed`.
pub fn sample_field(mix: &Mixture, dim: usize, seed: u64) -> Result<FieldSample> {
    Ok(FieldSampler::new(mix, dim)?.draw(seed, 0))
}

impl FieldSample {
    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    fn check(&self, m: &[f64]) {
        assert_eq!(m.len(), self.dim(), "point has the wrong dimension");
    }

    pub fn value(&self, m: &[f64]) -> f64 {
        self.check(m);
        let mut h = 0.0;
        for (b, c) in self.layout.blocks.iter().zip(&self.coef) {
            for (t, &cj) in b.idx.chunks_exact(b.p).zip(c) {
                h += cj * t.iter().map(|&i| m[i as usize]).product::<f64>();
            }
        }
        h
    }

    pub fn gradient(&self, m: &[f64]) -> Vec<f64> {
        self.check(m);
        let mut g = vec![0.0; self.dim()];
        for (b, c) in self.layout.blocks.iter().zip(&self.coef) {
            for (t, &cj) in b.idx.chunks_exact(b.p).zip(c) {
                for a in 0..b.p {
                    let rest: f64 = (0..b.p)
                        .filter(|&x| x != a)
                        .map(|x| m[t[x] as usize])
                        .product();
                    g[t[a] as usize] += cj * rest;
                }
            }
        }
        g
    }

    pub fn eval(&self, m: &[f64]) -> FieldEval {
        self.check(m);
        let n = self.dim();
        let mut value = 0.0;
        let mut grad = vec![0.0; n];
        let mut hess = DMatrix::zeros(n, n);
        let mut v = [0.0; 16];
        for (b, c) in self.layout.blocks.iter().zip(&self.coef) {
            let p = b.p;
            for (t, &cj) in b.idx.chunks_exact(p).zip(c) {
                for a in 0..p {
                    v[a] = m[t[a] as usize];
                }
                value += cj * v[..p].iter().product::<f64>();
                for a in 0..p {
                    let ia = t[a] as usize;
                    let mut ra = cj;
                    for (x, vx) in v[..p].iter().enumerate() {
                        if x != a {
                            ra *= vx;
                        }
                    }
                    grad[ia] += ra;
                    for bb in a + 1..p {
                        let ib = t[bb] as usize;
                        let mut rab = cj;
                        for (x, vx) in v[..p].iter().enumerate() {
                            if x != a && x != bb {
                                rab *= vx;
                            }
                        }
                        hess[(ia, ib)] += rab;
                        hess[(ib, ia)] += rab;
                    }
                }
            }
        }
        FieldEval { value, grad, hess }
    }
}

/// One Monte Carlo comparison row.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub quantity: String,
    pub estimate: f64,
    pub se: f64,
    pub target: f64,
    pub pass: bool,
}

impl CheckRow {
    fn from_samples(quantity: &str, v: &[f64], target: f64) -> Self {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        Self {
            quantity: quantity.to_string(),
            estimate: mean,
            se,
            target,
            pass: (mean - target).abs() <= 3.0 * se,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Orthonormal basis e_1 = m/‖m‖, e_2..e_N ⊥ m, as matrix columns.
fn adapted_basis(m: &[f64]) -> DMatrix<f64> {
    let n = m.len();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let s = dot(m, m).sqrt();
    cols.push(m.iter().map(|x| x / s).collect());
    for k in 0..n {
        if cols.len() == n {
            break;
        }
        let mut v = vec![0.0; n];
        v[k] = 1.0;
        for _ in 0..2 {
            for c in &cols {
                let d = dot(&v, c);
                v.iter_mut().zip(c).for_each(|(a, b)| *a -= d * b);
            }
        }
        let s = dot(&v, &v).sqrt();
        if s > 1e-6 {
            cols.push(v.into_iter().map(|x| x / s).collect());
        }
    }
    DMatrix::from_fn(n, n, |i, j| cols[j][i])
}

/// Covariance identities of H at m and m': Cov(H(m), H(m')) = Nξ(R), Cov(∂_iH, H) = ξ'(q)m_i and
/// representative entries of the Hessian–Hessian, Hessian–gradient and Hessian–value covariances.
pub fn covariance_check(
    sampler: &FieldSampler,
    mix: &Mixture,
    m: &[f64],
    m2: &[f64],
    samples: usize,
    seed: u64,
) -> Vec<CheckRow> {
    let n = sampler.dim();
    assert!(n >= 2 && m.len() == n && m2.len() == n);
    let nf = n as f64;
    let q = dot(m, m) / nf;
    let r = dot(m, m2) / nf;
    let (x1, x2, x3, x4) = (mix.d1(q), mix.d2(q), mix.d3(q), mix.d4(q));
    let stats = par_map(samples, |s| {
        let f = sampler.draw(seed, s as u64);
        let e = f.eval(m);
        let h2 = f.value(m2);
        [
            e.value * h2,
            e.grad[0] * e.value,
            e.grad[1] * e.value,
            e.hess[(0, 0)] * e.hess[(0, 0)],
            e.hess[(0, 1)] * e.hess[(0, 1)],
            e.hess[(0, 1)] * e.grad[0],
            e.hess[(0, 1)] * e.value,
        ]
    });
    let col = |j: usize| stats.iter().map(|s| s[j]).collect::<Vec<f64>>();
    let (s0, s1) = (m[0], m[1]);
    vec![
        CheckRow::from_samples("cov H(m) H(m')", &col(0), nf * mix.xi(r)),
        CheckRow::from_samples("cov d1H H", &col(1), x1 * s0),
        CheckRow::from_samples("cov d2H H", &col(2), x1 * s1),
        CheckRow::from_samples(
            "var d11H",
            &col(3),
            x4 / nf.powi(3) * s0.powi(4) + x3 / (nf * nf) * 4.0 * s0 * s0 + 2.0 * x2 / nf,
        ),
        CheckRow::from_samples(
            "var d12H",
            &col(4),
            x4 / nf.powi(3) * s0 * s0 * s1 * s1 + x3 / (nf * nf) * (s1 * s1 + s0 * s0) + x2 / nf,
        ),
        CheckRow::from_samples(
            "cov d12H d1H",
            &col(5),
            x3 / (nf * nf) * s0 * s0 * s1 + x2 / nf * s1,
        ),
        CheckRow::from_samples("cov d12H H", &col(6), x2 / nf * s0 * s1),
    ]
}

/// Block law of ∇²H(m) in the basis (m/√(Nq), m⊥) given (H(m), ∇H(m)).
pub fn hessian_blocks_check(
    sampler: &FieldSampler,
    mix: &Mixture,
    m: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Vec<CheckRow>> {
    let n = sampler.dim();
    if n < 3 || m.len() != n {
        return Err(Error::Domain(
            "the block check needs N ≥ 3 and a matching point".into(),
        ));
    }
    let nf = n as f64;
    let q = dot(m, m) / nf;
    if q <= 0.0 {
        return Err(Error::Domain("q = ‖m‖²/N must be positive".into()));
    }
    let (x0, x1, x2, x3, x4) = (mix.xi(q), mix.d1(q), mix.d2(q), mix.d3(q), mix.d4(q));
    let e = adapted_basis(m);
    let rq = (q / nf).sqrt();
    // Regression of A on X = (H, x_∥).
    let sig_x = nalgebra::Matrix2::new(
        nf * x0,
        x1 * (nf * q).sqrt(),
        x1 * (nf * q).sqrt(),
        x1 + q * x2,
    );
    let sig_ax = nalgebra::RowVector2::new(x2 * q, (x3 * q + 2.0 * x2) * rq);
    let sig_x_inv = sig_x
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("Σ_X is singular; the mixture is pure".into()))?;
    let beta = sig_ax * sig_x_inv;
    let var_a = 2.0 * x2 / nf + 4.0 * x3 * q / nf + x4 * q * q / nf;
    let var_a_cond = var_a - (beta * sig_ax.transpose())[(0, 0)];
    let kappa = x2 / x1 * rq;
    let var_b_cond = (x2 + q * x3 - x2 * x2 * q / x1) / nf;
    let t = n - 1;
    let pairs = (t * (t - 1) / 2) as f64;

    let stats = par_map(samples, |s| {
        let f = sampler.draw(seed, s as u64);
        let ev = f.eval(m);
        let x = e.transpose() * nalgebra::DVector::from_column_slice(&ev.grad);
        let hr = e.transpose() * &ev.hess * &e;
        let a = hr[(0, 0)];
        let h = ev.value;
        let ra = a - beta[(0, 0)] * h - beta[(0, 1)] * x[0];
        let mut off2 = 0.0;
        let mut diag2 = 0.0;
        for i in 1..n {
            diag2 += hr[(i, i)].powi(2);
            for j in i + 1..n {
                off2 += hr[(i, j)].powi(2);
            }
        }
        let mut bx = 0.0;
        let mut rb2 = 0.0;
        let mut rab = 0.0;
        let mut xperp2 = 0.0;
        for r in 1..n {
            let b = hr[(r, 0)];
            bx += b * x[r];
            let rb = b - kappa * x[r];
            rb2 += rb * rb;
            rab += ra * rb;
            xperp2 += x[r] * x[r];
        }
        let tf = t as f64;
        [
            off2 / pairs,
            diag2 / tf,
            hr[(1, 2)] * h,
            hr[(1, 2)] * x[1],
            hr[(1, 1)] * x[0],
            bx / tf,
            rb2 / tf,
            a * a,
            a * h,
            a * x[0],
            ra * ra,
            rab / tf,
            xperp2 / tf,
            x[0] * h,
        ]
    });
    let col = |j: usize| stats.iter().map(|s| s[j]).collect::<Vec<f64>>();
    Ok(vec![
        CheckRow::from_samples("tangent offdiag var", &col(0), x2 / nf),
        CheckRow::from_samples("tangent diag var", &col(1), 2.0 * x2 / nf),
        CheckRow::from_samples("cov C23 H", &col(2), 0.0),
        CheckRow::from_samples("cov C23 x2", &col(3), 0.0),
        CheckRow::from_samples("cov C22 xpar", &col(4), 0.0),
        CheckRow::from_samples("cov B xperp", &col(5), x2 * rq),
        CheckRow::from_samples("B conditional var", &col(6), var_b_cond),
        CheckRow::from_samples("var A", &col(7), var_a),
        CheckRow::from_samples("cov A H", &col(8), sig_ax[0]),
        CheckRow::from_samples("cov A xpar", &col(9), sig_ax[1]),
        CheckRow::from_samples("A conditional var", &col(10), var_a_cond),
        CheckRow::from_samples("A B conditional cov", &col(11), 0.0),
        CheckRow::from_samples("var xperp", &col(12), x1),
        CheckRow::from_samples("cov xpar H", &col(13), x1 * (nf * q).sqrt()),
    ])
}

/// √t·GOE_N/√N + diag(D), with GOE off-diagonal variance 1 and diagonal variance 2.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformedGOE {
    pub t: f64,
    pub diag: Vec<f64>,
    pub seed: u64,
}

/// Per-sample (1/N) log|det| statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct GoeLogdet {
    pub mean: f64,
    pub se: f64,
    pub values: Vec<f64>,
    /// Smallest |eigenvalue| of each sample.
    pub min_abs_eig: Vec<f64>,
    /// Samples redrawn because an eigenvalue was exactly zero.
    pub resampled: usize,
}

impl DeformedGOE {
    pub fn n(&self) -> usize {
        self.diag.len()
    }

    /// Spectrum of one sample drawn from stream `stream`.
    pub fn spectrum(&self, stream: u64) -> Vec<f64> {
        let n = self.n();
        let mut rng = stream_rng(self.seed, stream);
        let s = (self.t / n as f64).sqrt();
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            let g: f64 = StandardNormal.sample(&mut rng);
            a[(i, i)] = self.diag[i] + s * std::f64::consts::SQRT_2 * g;
            for j in i + 1..n {
                let g: f64 = StandardNormal.sample(&mut rng);
                a[(i, j)] = s * g;
                a[(j, i)] = s * g;
            }
        }
        a.symmetric_eigenvalues().iter().copied().collect()
    }
}

/// Mean of (1/N) log|det(√t·GOE_N/√N + D)| over `samples` independent draws.
pub fn goe_logdet(d: &DeformedGOE, samples: usize) -> Result<GoeLogdet> {
    let n = d.n();
    if n == 0 || n > 2000 || samples < 2 || d.t.is_nan() || d.t < 0.0 {
        return Err(Error::Domain(format!(
            "deformed GOE needs 1 ≤ N ≤ 2000, t ≥ 0 and ≥ 2 samples (N = {n})"
        )));
    }
    let per = par_map(samples, |s| {
        let mut retries = 0;
        loop {
            let stream = s as u64 + (retries as u64) * (1u64 << 32);
            let eig = d.spectrum(stream);
            if eig.iter().all(|&l| l != 0.0) {
                let v = eig.iter().map(|l| l.abs().ln()).sum::<f64>() / n as f64;
                let mn = eig.iter().map(|l| l.abs()).fold(f64::INFINITY, f64::min);
                return (v, mn, retries);
            }
            retries += 1;
        }
    });
    let values: Vec<f64> = per.iter().map(|p| p.0).collect();
    let row = CheckRow::from_samples("", &values, 0.0);
    Ok(GoeLogdet {
        mean: row.estimate,
        se: row.se,
        min_abs_eig: per.iter().map(|p| p.1).collect(),
        resampled: per.iter().map(|p| p.2).sum(),
        values,
    })
}

/// Three-way determinant comparison per spin at a TAP-optimal ζ.
#[derive(Debug, Clone, PartialEq)]
pub struct DetReport {
    /// (a) deformed GOE Monte Carlo.
    pub goe: GoeLogdet,
    /// (b) ∫ log|x| d(T#μ ⊞ σ_{ξ''(q)}).
    pub free: f64,
    /// (c) (1/N)Σ log ∂mm h(q, m_i) + ½ξ''(q)(∫_q^1 ζ)².
    pub closed: f64,
    /// ω' = ξ''(q)∫_q^1 ζ([0,t]) dt.
    pub omega_prime: f64,
    /// Subordination function of T#μ at 0.
    pub omega: Complex64,
    /// ω' + ξ''(q)G_{T#μ}(ω').
    pub stieltjes_residual: f64,
    /// (1/N)Σ(∂mm h)^{-2}; ω' is admissible when this is at most 1/ξ''(q).
    pub domain_lhs: f64,
    pub domain_rhs: f64,
    /// Fraction of GOE samples whose smallest |eigenvalue| exceeds 1e-3.
    pub gapped_fraction: f64,
}

impl DetReport {
    /// ξ''(q)E[(∂xxΦ)²] ≤ 1, the second-order condition.
    pub fn second_order_ok(&self) -> bool {
        self.domain_lhs <= self.domain_rhs * (1.0 + 1e-12)
    }
}

/// Runs the comparison for ζ = `sol.measure()` on [q, 1]; q must be a boundary of `sol`, normally q_μ.
pub fn det_asymp_check(
    sol: &ParisiSolution,
    mu: &EmpiricalMu,
    q: f64,
    samples: usize,
    seed: u64,
) -> Result<DetReport> {
    let k = sol.index_of(q)?;
    let mix = sol.mixture();
    let t = mix.d2(q);
    let tail = sol.measure().int_cdf(q, 1.0);
    let omega_prime = t * tail;
    let ddh: Vec<f64> = mu
        .points()
        .iter()
        .map(|&m| Ok(sol.legendre_at(k, m)?.ddh))
        .collect::<Result<_>>()?;
    let nf = ddh.len() as f64;
    let tvals: Vec<f64> = ddh.iter().map(|d| d + omega_prime).collect();
    let pushed = SpectralMeasure::empirical(&tvals)?;
    let g = stieltjes(&pushed, Complex64::new(omega_prime, 0.0))?;
    let stieltjes_residual = (omega_prime + t * g.re).abs() + (t * g.im).abs();
    let omega = subordinate(&pushed, t, Complex64::new(0.0, 0.0))?.omega;
    let free = log_potential(&pushed, t, 0.0)?;
    let closed = ddh.iter().map(|d| d.ln()).sum::<f64>() / nf + 0.5 * t * tail * tail;
    let domain_lhs = ddh.iter().map(|d| d.powi(-2)).sum::<f64>() / nf;
    let goe = goe_logdet(
        &DeformedGOE {
            t,
            diag: tvals,
            seed,
        },
        samples,
    )?;
    let gapped = goe.min_abs_eig.iter().filter(|&&e| e > 1e-3).count() as f64 / samples as f64;
    Ok(DetReport {
        goe,
        free,
        closed,
        omega_prime,
        omega,
        stieltjes_residual,
        domain_lhs,
        domain_rhs: 1.0 / t,
        gapped_fraction: gapped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian_geometry::entropy_term;
    use crate::measures::AtomicMeasure;
    use crate::parisi_pde::{solve_with_splits, GridSpec};

    fn mixed() -> Mixture {
        Mixture::new(&[(2, 1.0), (4, 1.0)]).unwrap()
    }

    #[test]
    fn monomial_layout_counts_and_budget() {
        let s = FieldSampler::new(&mixed(), 8).unwrap();
        let sizes: Vec<usize> = s.layout.blocks.iter().map(|b| b.scale.len()).collect();
        assert_eq!(sizes, vec![36, 330]);
        // Σ over sorted tuples of M equals N^p.
        for b in &s.layout.blocks {
            let base2 = b.scale[0].powi(2);
            let total: f64 = b.scale.iter().map(|x| x * x / base2).sum();
            assert!((total - 8f64.powi(b.p as i32)).abs() < 1e-9);
        }
        let big = Mixture::new(&[(6, 1.0)]).unwrap();
        assert!(matches!(FieldSampler::new(&big, 64), Err(Error::Domain(_))));
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mix = Mixture::new(&[(2, 0.5), (4, 0.7), (6, 0.2)]).unwrap();
        let f = sample_field(&mix, 5, 3).unwrap();
        let m = [0.3, -0.5, 0.1, 0.7, -0.2];
        let e = f.eval(&m);
        assert!((e.value - f.value(&m)).abs() < 1e-12);
        let g = f.gradient(&m);
        let h = 1e-6;
        for i in 0..5 {
            assert!((g[i] - e.grad[i]).abs() < 1e-12);
            let mut mp = m;
            mp[i] += h;
            let mut mm = m;
            mm[i] -= h;
            let fd = (f.value(&mp) - f.value(&mm)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-7, "grad {i}");
            let gp = f.gradient(&mp);
            let gm = f.gradient(&mm);
            for j in 0..5 {
                let fd2 = (gp[j] - gm[j]) / (2.0 * h);
                assert!((fd2 - e.hess[(i, j)]).abs() < 1e-6, "hess {i},{j}");
            }
        }
    }

    #[test]
    fn pure_euler_identity_per_sample() {
        for p in [2u32, 4, 6] {
            let mix = Mixture::new(&[(p, 1.3)]).unwrap();
            let sampler = FieldSampler::new(&mix, 6).unwrap();
            let m = [0.4, -0.3, 0.8, 0.1, -0.6, 0.25];
            for s in 0..10 {
                let f = sampler.draw(5, s);
                let h = f.value(&m);
                let euler = dot(&m, &f.gradient(&m)) / p as f64;
                assert!(
                    (h - euler).abs() <= 8.0 * f64::EPSILON * (1.0 + h.abs()),
                    "p={p}: {h} vs {euler}"
                );
            }
        }
    }

    #[test]
    fn tap_euler_reduction_for_pure_model() {
        let p = 4;
        let mix = Mixture::new(&[(p, 1.0)]).unwrap();
        let m = vec![0.5, -0.4, 0.7, 0.2, -0.6, 0.3];
        let q = dot(&m, &m) / m.len() as f64;
        let z = AtomicMeasure::new(vec![(q, 0.4), (0.9, 0.6)]).unwrap();
        let sol = solve_with_splits(
            &z,
            &mix,
            &GridSpec {
                half_width: 20.0,
                points: 1601,
                quad_nodes: 48,
            },
            &[q],
        )
        .unwrap();
        let (s_val, s_grad) = entropy_term(&sol, &m).unwrap();
        let r_ex = dot(&m, &s_grad) / p as f64 - s_val;
        let f = sample_field(&mix, m.len(), 9).unwrap();
        let ftap = f.value(&m) - s_val;
        let grad: Vec<f64> = f
            .gradient(&m)
            .iter()
            .zip(&s_grad)
            .map(|(a, b)| a - b)
            .collect();
        let rhs = dot(&m, &grad) / p as f64 + r_ex;
        assert!(
            (ftap - rhs).abs() <= 32.0 * f64::EPSILON * (1.0 + ftap.abs()),
            "{ftap} vs {rhs}"
        );
    }

    #[test]
    fn covariances_small_run() {
        let mix = mixed();
        let sampler = FieldSampler::new(&mix, 6).unwrap();
        let m = [0.5, -0.3, 0.6, 0.2, -0.4, 0.1];
        let m2 = [0.1, 0.4, -0.2, 0.5, 0.3, -0.6];
        let rows = covariance_check(&sampler, &mix, &m, &m2, 20_000, 1);
        for r in rows {
            assert!((r.estimate - r.target).abs() <= 4.5 * r.se, "{r:?}");
        }
    }

    #[test]
    fn replicas_are_reproducible_and_distinct() {
        let sampler = FieldSampler::new(&mixed(), 4).unwrap();
        let m = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(sampler.draw(1, 2).value(&m), sampler.draw(1, 2).value(&m));
        assert_ne!(sampler.draw(1, 2).value(&m), sampler.draw(1, 3).value(&m));
    }

    #[test]
    fn goe_semicircle_and_shift() {
        let d = DeformedGOE {
            t: 1.0,
            diag: vec![0.0; 400],
            seed: 4,
        };
        let r = goe_logdet(&d, 20).unwrap();
        assert!((r.mean + 0.5).abs() < 0.02, "{}", r.mean);
        let c = 3.0;
        let shifted = goe_logdet(
            &DeformedGOE {
                t: 1.0,
                diag: vec![c; 400],
                seed: 4,
            },
            20,
        )
        .unwrap();
        let oracle = log_potential(&SpectralMeasure::dirac(c), 1.0, 0.0).unwrap();
        assert!(
            (shifted.mean - oracle).abs() < 0.01,
            "{} vs {oracle}",
            shifted.mean
        );
        let neg = goe_logdet(
            &DeformedGOE {
                t: 1.0,
                diag: vec![-c; 400],
                seed: 5,
            },
            20,
        )
        .unwrap();
        assert!((neg.mean - shifted.mean).abs() < 3.0 * (neg.se.hypot(shifted.se)) + 1e-3);
    }

    #[test]
    fn goe_concentration_improves_with_n() {
        let var = |n: usize| {
            let r = goe_logdet(
                &DeformedGOE {
                    t: 1.0,
                    diag: vec![1.5; n],
                    seed: 6,
                },
                40,
            )
            .unwrap();
            r.se * r.se * 40.0
        };
        assert!(var(200) < var(50));
    }

    #[test]
    fn replica_symmetric_determinant_identity() {
        // With ζ = δ_q on [q, 1], ∂mm h = 1/(1 − m²) and the Stieltjes identity holds for every μ.
        let mix = Mixture::new(&[(2, 0.3), (4, 0.2)]).unwrap();
        let pts: Vec<f64> = (0..200)
            .map(|i| 0.8 * ((i as f64 + 0.5) / 200.0 * 2.0 - 1.0))
            .collect();
        let mu = EmpiricalMu::new(pts).unwrap();
        let q = mu.q();
        let z = AtomicMeasure::dirac(q).unwrap();
        let sol = solve_with_splits(
            &z,
            &mix,
            &GridSpec {
                half_width: 20.0,
                points: 1601,
                quad_nodes: 48,
            },
            &[q],
        )
        .unwrap();
        let r = det_asymp_check(&sol, &mu, q, 10, 7).unwrap();
        assert!(r.second_order_ok());
        assert!(r.stieltjes_residual < 1e-8, "{}", r.stieltjes_residual);
        assert!(
            (r.omega.re - r.omega_prime).abs() < 1e-7 && r.omega.im.abs() < 1e-9,
            "{:?} vs {}",
            r.omega,
            r.omega_prime
        );
        assert!(
            (r.free - r.closed).abs() < 1e-8,
            "{} vs {}",
            r.free,
            r.closed
        );
        assert!((r.goe.mean - r.free).abs() < 0.03);
    }
}
