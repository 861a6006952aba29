//! The verification suite: one group of checks per acceptance criterion.
//!
//! Every check reports a nonnegative discrepancy `value` and passes when it does not exceed
//! `tolerance`. Monte Carlo checks report |estimate − target| against 3 SE.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use taplab::ac_sde::{
    identity_residuals, ks_distance, sample_transition, simulate, transition_cdf, McOptions, Scheme,
};
use taplab::field_mc::{
    covariance_check, det_asymp_check, hessian_blocks_check, CheckRow, FieldSampler,
};
use taplab::freeprob::{left_edge, log_potential, subordinate, SpectralMeasure};
use taplab::functionals::{
    law_quantile_mu, optimality_report, parisi_value, solve_for, tap_gradient, tap_value,
    EmpiricalMu,
};
use taplab::gaussian_geometry::{hier_forms, quadra, GammaBlocks, HierData};
use taplab::quadrature::gauss_legendre;
use taplab::transition::xxphi_representation;
use taplab::variational::{
    complexity_closed_form, lambda_curve, parisi_inf, stationary_uq, tangency_self_test,
    CurveOptions, OptOptions, StationaryOptions, Variant,
};
use taplab::{dist, solve, AtomicMeasure, GridSpec, Mixture, PrefixSpec, Result};

/// Problem sizes: `Quick` keeps the whole suite to well under a minute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Quick,
    Full,
}

impl Level {
    fn pick<T>(self, quick: T, full: T) -> T {
        match self {
            Level::Quick => quick,
            Level::Full => full,
        }
    }
}

/// One row of the pass/fail table.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub criterion: u8,
    pub module: &'static str,
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn new(
        criterion: u8,
        module: &'static str,
        name: impl Into<String>,
        value: f64,
        tolerance: f64,
    ) -> Self {
        Self {
            criterion,
            module,
            name: name.into(),
            value,
            tolerance,
            pass: value <= tolerance,
        }
    }

    fn from_row(criterion: u8, module: &'static str, prefix: &str, r: &CheckRow) -> Self {
        Self::new(
            criterion,
            module,
            format!("{prefix}{}", r.quantity),
            (r.estimate - r.target).abs(),
            3.0 * r.se,
        )
    }
}

/// Number of criteria covered by [`criterion`]; criterion 0 holds the basic mixture and measure invariants.
pub const CRITERIA: std::ops::RangeInclusive<u8> = 0..=13;

/// Runs one criterion group.
pub fn criterion(k: u8, level: Level, seed: u64) -> Result<Vec<Check>> {
    match k {
        0 => basics(seed),
        1 => replica_symmetric(),
        2 => parisi_equals_tap(level, seed),
        3 => layer_identity(level, seed),
        4 => xxphi(seed),
        5 => sde_identities(level, seed),
        6 => law_match(seed),
        7 => tap_gradient_fd(seed),
        8 => free_probability(seed),
        9 => determinant(level, seed),
        10 => geometry(seed),
        11 => field(level, seed),
        12 => complexity(level),
        13 => lambda_endpoint(level),
        _ => Err(taplab::Error::Domain(format!("no criterion {k}"))),
    }
}

/// Every criterion group in order.
pub fn suite(level: Level, seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for k in CRITERIA {
        out.extend(criterion(k, level, seed)?);
    }
    Ok(out)
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + b.abs())
}

fn mixed() -> Mixture {
    Mixture::new(&[(2, 1.0), (4, 1.0)]).expect("valid mixture")
}

fn random_mixture(r: &mut ChaCha8Rng) -> Result<Mixture> {
    Mixture::new(&[
        (2, r.random_range(0.2..1.5)),
        (4, r.random_range(0.05..1.0)),
        (6, r.random_range(0.05..0.5)),
    ])
}

/// `n` increasing values in (lo, hi) with gaps of at least 0.03.
fn increasing(r: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..n).map(|_| r.random_range(lo..hi)).collect();
        v.sort_by(f64::total_cmp);
        if v.windows(2).all(|w| w[1] - w[0] > 0.03) {
            return v;
        }
    }
}

/// A prefix measure with 1 to 3 prefix atoms and a one- or two-atom tail.
fn random_prefix(r: &mut ChaCha8Rng) -> Result<PrefixSpec> {
    let n = r.random_range(1..=3);
    let u = increasing(r, n, 0.05, 0.9);
    let q = increasing(r, n, 0.05, 0.8);
    let qn = q[n - 1];
    let tail = if r.random_bool(0.5) {
        AtomicMeasure::dirac(qn)?
    } else {
        let w = r.random_range(0.2..0.8);
        AtomicMeasure::new(vec![(qn, w), (r.random_range(qn + 0.03..0.99), 1.0 - w)])?
    };
    PrefixSpec::new(u, q, tail)
}

fn basics(seed: u64) -> Result<Vec<Check>> {
    let mut r = rng(seed, 0);
    let mut fd_err: f64 = 0.0;
    let mut disc_err: f64 = 0.0;
    let mut round_trip: f64 = 0.0;
    let mut dist_err: f64 = 0.0;
    for _ in 0..10 {
        let mix = random_mixture(&mut r)?;
        let t = r.random_range(0.1..0.9);
        let h = 1e-5;
        for order in 0..3 {
            let fd = (mix.deriv(t + h, order) - mix.deriv(t - h, order)) / (2.0 * h);
            fd_err = fd_err.max(rel(fd, mix.deriv(t, order + 1)));
        }
        disc_err = disc_err.max(rel(mix.discriminant(t)?, mix.discriminant_expanded(t)));
        let spec = random_prefix(&mut r)?;
        let back = PrefixSpec::from_measure(&spec.assemble()?, spec.n())?;
        let diff = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        };
        round_trip = round_trip
            .max(diff(&spec.u, &back.u))
            .max(diff(&spec.q, &back.q))
            .max(dist(&spec.tail, &back.tail));
        let other = random_prefix(&mut r)?.assemble()?;
        let z = spec.assemble()?;
        dist_err = dist_err
            .max(dist(&z, &z))
            .max((dist(&z, &other) - dist(&other, &z)).abs());
    }
    Ok(vec![
        Check::new(
            0,
            "mixture",
            "derivatives vs central differences",
            fd_err,
            1e-8,
        ),
        Check::new(
            0,
            "mixture",
            "discriminant vs expanded form",
            disc_err,
            1e-12,
        ),
        Check::new(
            0,
            "measures",
            "prefix assemble/recover round trip",
            round_trip,
            1e-12,
        ),
        Check::new(
            0,
            "measures",
            "distance symmetry and identity",
            dist_err,
            1e-15,
        ),
    ])
}

fn replica_symmetric() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for beta in [0.25, 0.5, 1.0] {
        let mix = Mixture::sk(beta)?;
        let v = parisi_value(
            &AtomicMeasure::dirac(0.0)?,
            &mix,
            &GridSpec::for_mixture(&mix),
        )?;
        let exact = std::f64::consts::LN_2 + beta * beta / 2.0;
        out.push(Check::new(
            1,
            "parisi_pde",
            format!("delta_0 value beta={beta}"),
            (v - exact).abs(),
            1e-8,
        ));
    }
    Ok(out)
}

fn parisi_equals_tap(level: Level, seed: u64) -> Result<Vec<Check>> {
    let mut r = rng(seed, 2);
    let count = level.pick(5, 20);
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let mix = random_mixture(&mut r)?;
        let z = random_prefix(&mut r)?.assemble()?;
        let g = GridSpec::for_mixture(&mix);
        let dim = r.random_range(1..50);
        worst = worst.max(
            (parisi_value(&z, &mix, &g)? - tap_value(&EmpiricalMu::zero(dim), &z, &mix, &g)?).abs(),
        );
    }
    Ok(vec![Check::new(
        2,
        "functionals",
        format!("parisi vs tap at zero magnetization ({count} measures)"),
        worst,
        1e-9,
    )])
}

/// (1/u) log ∫ N(y − x; var) e^{uΦ(q, y)} dy by composite Gauss–Legendre, for the layer [0, q].
fn layer_oracle(sol: &taplab::ParisiSolution, kq: usize, u: f64, var: f64, x: f64) -> f64 {
    let s = var.sqrt();
    let (lo, hi) = (x - 12.0 * s - u * var, x + 12.0 * s + u * var);
    let panels = 400;
    let ph = (hi - lo) / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let (ns, ws) = gauss_legendre(8, lo + p as f64 * ph, lo + (p + 1) as f64 * ph);
        for (y, w) in ns.iter().zip(&ws) {
            let d = y - x;
            acc += w * (-d * d / (2.0 * var) + u * sol.eval_at(kq, *y)[0]).exp();
        }
    }
    (acc / (2.0 * std::f64::consts::PI * var).sqrt()).ln() / u
}

fn layer_identity(level: Level, seed: u64) -> Result<Vec<Check>> {
    let mut r = rng(seed, 3);
    let count = level.pick(4, 10);
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let mix = random_mixture(&mut r)?;
        let u = r.random_range(0.05..0.95);
        let q = r.random_range(0.05..0.9);
        let tail = AtomicMeasure::new(vec![(q, 0.5), ((q + 1.0) / 2.0, 0.5)])?;
        let z = PrefixSpec::new(vec![u], vec![q], tail)?.assemble()?;
        let sol = solve(&z, &mix, &GridSpec::for_mixture(&mix))?;
        let kq = sol.index_of(q)?;
        let var = mix.d1(q) - mix.d1(0.0);
        for x in [0.0, 0.8, -2.3] {
            worst = worst.max((sol.phi(0.0, x)? - layer_oracle(&sol, kq, u, var, x)).abs());
        }
    }
    Ok(vec![Check::new(
        3,
        "parisi_pde",
        format!("two-atom prefix layer identity ({count} pairs)"),
        worst,
        1e-6,
    )])
}

fn xxphi(seed: u64) -> Result<Vec<Check>> {
    let mut r = rng(seed, 4);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let mix = random_mixture(&mut r)?;
        let z = random_prefix(&mut r)?.assemble()?;
        let sol = solve(&z, &mix, &GridSpec::for_mixture(&mix))?;
        let layers = sol.layer_times().len() - 1;
        for _ in 0..4 {
            let k = r.random_range(0..layers);
            let x = r.random_range(-3.0..3.0);
            let rep = xxphi_representation(&sol, k, &[x])?[0];
            worst = worst.max((rep - sol.eval_at(k, x)[2]).abs());
        }
    }
    Ok(vec![Check::new(
        4,
        "transition",
        "xxphi plateau-kernel representation (20 pairs)",
        worst,
        1e-4,
    )])
}

fn sde_solution() -> Result<taplab::ParisiSolution> {
    let z = PrefixSpec::new(
        vec![0.4],
        vec![0.45],
        AtomicMeasure::new(vec![(0.45, 0.3), (0.8, 0.7)])?,
    )?
    .assemble()?;
    solve(
        &z,
        &mixed(),
        &GridSpec {
            half_width: 24.0,
            points: 1201,
            quad_nodes: 64,
        },
    )
}

fn sde_identities(level: Level, seed: u64) -> Result<Vec<Check>> {
    let sol = sde_solution()?;
    let paths = level.pick(20_000, 100_000);
    let e = simulate(
        &sol,
        Scheme::PlateauExact,
        McOptions {
            paths,
            seed,
            antithetic: false,
        },
    )?;
    let res = identity_residuals(&e, &sol)?;
    let mut out = Vec::new();
    let mut push = |name: String, est: taplab::ac_sde::Estimate| {
        out.push(Check::new(5, "ac_sde", name, est.mean.abs(), 3.0 * est.se))
    };
    for (s, t, est) in &res.delta_m_x {
        push(format!("E[(M_t - M_s) X_s] s={s} t={t}"), *est);
    }
    for (s, t, est) in &res.delta_x_m {
        push(format!("E[(X_t - X_s) M_s] s={s} t={t}"), *est);
    }
    for (t, est) in &res.xt_mt {
        push(format!("E[X_t M_t] t={t}"), *est);
    }
    for (t, est) in &res.flatness {
        push(format!("E[M_t - M_1] t={t}"), *est);
    }
    Ok(out)
}

fn law_match(seed: u64) -> Result<Vec<Check>> {
    let sol = sde_solution()?;
    let mut out = Vec::new();
    for (k, x) in [(0, 0.0), (1, 0.4), (2, -1.1)] {
        let draws = sample_transition(&sol, k, x, 100_000, seed.wrapping_add(k as u64));
        let (ys, cdf) = transition_cdf(&sol, k, x);
        out.push(Check::new(
            6,
            "ac_sde",
            format!("KS plateau-exact vs kernel layer={k} x={x}"),
            ks_distance(&draws, &ys, &cdf),
            0.01,
        ));
    }
    Ok(out)
}

fn tap_gradient_fd(seed: u64) -> Result<Vec<Check>> {
    let mut r = rng(seed, 7);
    let pts: Vec<f64> = (0..10)
        .map(|_| if r.random_bool(0.5) { 1.0 } else { -1.0 } * r.random_range(0.3..0.9))
        .collect();
    let mu = EmpiricalMu::new(pts)?;
    let mix = mixed();
    let g = GridSpec {
        half_width: 24.0,
        points: 2001,
        quad_nodes: 64,
    };
    // q_μ ∈ [0.09, 0.81] stays strictly inside the plateau (0.05, 0.85), so the projected family is smooth in m.
    let z0 = AtomicMeasure::new(vec![(0.0, 0.3), (0.05, 0.2), (0.85, 0.5)])?;
    let total = |mu: &EmpiricalMu| -> Result<f64> {
        Ok(mu.n() as f64 * tap_value(mu, &z0.project_at(mu.q())?, &mix, &g)?)
    };
    let sol = solve_for(&mu, &z0.project_at(mu.q())?, &mix, &g)?;
    let grad = tap_gradient(&sol, &mu)?;
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for (i, g) in grad.iter().enumerate() {
        let m = mu.points()[i];
        let fd = (total(&mu.with_point(i, m + eps)?)? - total(&mu.with_point(i, m - eps)?)?)
            / (2.0 * eps)
            / mu.n() as f64;
        worst = worst.max((fd - g).abs() / g.abs());
    }
    Ok(vec![Check::new(
        7,
        "functionals",
        "TAP gradient vs central differences at N=10 (relative)",
        worst,
        1e-4,
    )])
}

/// ∫ log|λ| dσ_1(λ) with λ = 2 sin φ and φ = (π/2)e^{−y}, which removes the logarithmic singularity.
fn semicircle_log_oracle() -> f64 {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut acc = 0.0;
    for p in 0..90 {
        let (ns, ws) = gauss_legendre(12, p as f64 * 0.5, (p + 1) as f64 * 0.5);
        for (y, w) in ns.iter().zip(&ws) {
            let phi = half_pi * (-y).exp();
            let c = phi.cos();
            acc += w * phi * (2.0 * phi.sin()).ln() * 4.0 * c * c / std::f64::consts::PI;
        }
    }
    acc
}

fn free_probability(seed: u64) -> Result<Vec<Check>> {
    let mut edge: f64 = 0.0;
    for t in [0.1, 0.5, 1.0, 2.0, 4.0] {
        edge = edge.max((left_edge(&SpectralMeasure::dirac(0.0), t)?.0 + 2.0 * t.sqrt()).abs());
    }
    let oracle = semicircle_log_oracle();
    let lp = log_potential(&SpectralMeasure::dirac(0.0), 1.0, 0.0)?;
    let mut r = rng(seed, 8);
    let mut residual: f64 = 0.0;
    let mut domain: f64 = 0.0;
    for _ in 0..100 {
        let k = r.random_range(1..6);
        let atoms: Vec<(f64, f64)> = (0..k)
            .map(|_| (r.random_range(-2.0..2.0), r.random_range(0.1..1.0)))
            .collect();
        let mu = SpectralMeasure::new(atoms)?;
        let t = r.random_range(0.05..3.0);
        let im = if r.random_bool(0.3) {
            0.0
        } else {
            r.random_range(0.0..2.0)
        };
        let res = subordinate(&mu, t, Complex64::new(r.random_range(-5.0..5.0), im))?;
        residual = residual.max(res.residual);
        domain = domain.max(res.domain_check * t / (1.0 + t));
    }
    Ok(vec![
        Check::new(
            8,
            "freeprob",
            "left edge of semicircle vs -2 sqrt(t)",
            edge,
            1e-10,
        ),
        Check::new(
            8,
            "freeprob",
            "quadrature oracle for log potential vs -1/2",
            (oracle + 0.5).abs(),
            1e-10,
        ),
        Check::new(
            8,
            "freeprob",
            "log_potential(delta_0, 1, 0) vs quadrature oracle",
            (lp - oracle).abs(),
            1e-6,
        ),
        Check::new(
            8,
            "freeprob",
            "subordination residual (100 random queries)",
            residual,
            1e-10,
        ),
        Check::new(
            8,
            "freeprob",
            "subordination domain condition (scaled)",
            domain,
            1e-10,
        ),
    ])
}

fn determinant(level: Level, seed: u64) -> Result<Vec<Check>> {
    let mix = mixed();
    let mut o = OptOptions::for_mixture(&mix);
    o.starts = level.pick(3, 8);
    let best = parisi_inf(&mix, 2, &o)?.best;
    let z = best.measure;
    let q = z.locations()[z.len() - 1];
    let sol = solve(&z, &mix, &o.grid)?;
    let (n, samples) = level.pick((200, 10), (500, 50));
    let mu = law_quantile_mu(&sol, q, n, true)?;
    let rep = det_asymp_check(&sol, &mu, q, samples, seed)?;
    Ok(vec![
        Check::new(
            9,
            "variational",
            "2-atom optimizer first-order residual",
            best.residual,
            1e-6,
        ),
        Check::new(
            9,
            "field_mc",
            "closed form vs free-convolution integral",
            (rep.closed - rep.free).abs(),
            1e-6,
        ),
        Check::new(
            9,
            "field_mc",
            format!("GOE Monte Carlo (N={n}, {samples} samples) vs free-convolution integral"),
            (rep.goe.mean - rep.free).abs(),
            0.02,
        ),
        Check::new(
            9,
            "field_mc",
            "second-order condition xi''(q) E[(dxx Phi)^2] <= 1",
            rep.domain_lhs * rep.domain_rhs.recip(),
            1.0 + 1e-12,
        ),
    ])
}

fn random_m(r: &mut ChaCha8Rng, dim: usize, q: f64) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(r)).collect();
    let s = (dim as f64 * q / v.iter().map(|x| x * x).sum::<f64>()).sqrt();
    v.into_iter().map(|a| a * s).collect()
}

fn dense_logdet(m: &DMatrix<f64>) -> Option<f64> {
    let c = m.clone().cholesky()?;
    Some(2.0 * c.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

fn geometry(seed: u64) -> Result<Vec<Check>> {
    let mix = mixed();
    let mut r = rng(seed, 10);
    let (mut logdet, mut inverse, mut quad, mut dual) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for dim in [10, 25, 50] {
        let q = r.random_range(0.2..0.8);
        let m = random_m(&mut r, dim, q);
        let g = GammaBlocks::at(&mix, &m)?;
        let dense = g.dense();
        let dl = dense_logdet(&dense).ok_or_else(|| {
            taplab::Error::Degenerate("dense covariance not positive definite".into())
        })?;
        logdet = logdet.max(rel(g.logdet()?, dl));
        let inv = dense
            .clone()
            .try_inverse()
            .ok_or_else(|| taplab::Error::Degenerate("dense covariance singular".into()))?;
        for c in 0..=dim {
            let mut e = vec![0.0; dim + 1];
            e[c] = 1.0;
            let col = g.solve(&e)?;
            for (row, v) in col.iter().enumerate() {
                inverse = inverse.max(rel(*v, inv[(row, c)]));
            }
        }
        // quadra against the Lagrange system [2ξ'I m; mᵀ 0][x; λ] = [2g; N·tail].
        let dh: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut r)).collect();
        let (u, tail) = (r.random_range(0.1..0.9), r.random_range(0.05..0.5));
        let xi1 = mix.d1(q);
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
        let grad: Vec<f64> = dh.iter().zip(&m).map(|(d, mi)| d - u * xi1 * mi).collect();
        let rhs = DVector::from_fn(dim + 1, |i, _| {
            if i == dim {
                dim as f64 * tail
            } else {
                2.0 * grad[i]
            }
        });
        let sol = kkt
            .lu()
            .solve(&rhs)
            .ok_or_else(|| taplab::Error::Degenerate("Lagrange system singular".into()))?;
        let x: Vec<f64> = sol.iter().take(dim).copied().collect();
        let direct = xi1 * x.iter().map(|a| a * a).sum::<f64>()
            - 2.0 * grad.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
        quad = quad.max(rel(quadra(xi1, &m, &dh, u, u * q + tail), direct));
        let z: Vec<f64> = (0..=dim).map(|_| StandardNormal.sample(&mut r)).collect();
        let w: Vec<f64> = (0..=dim).map(|_| StandardNormal.sample(&mut r)).collect();
        let opt = g.solve(&z)?;
        let (exact, at_opt) = g.dual_bound(&z, &opt)?;
        let (_, bound) = g.dual_bound(&z, &w)?;
        let d: Vec<f64> = w.iter().zip(&opt).map(|(a, b)| a - b).collect();
        let gap: f64 = d.iter().zip(g.apply(&d)).map(|(a, b)| a * b).sum();
        dual = dual.max(rel(at_opt, exact)).max(rel(bound - exact, gap));
    }
    let mut hier: f64 = 0.0;
    let mut tele: f64 = 0.0;
    for n in 1..=6 {
        let q = increasing(&mut r, n, 0.05, 0.9);
        let u = increasing(&mut r, n, 0.05, 0.9);
        let tail = AtomicMeasure::new(vec![(q[n - 1], 0.5), ((q[n - 1] + 1.0) / 2.0, 0.5)])?;
        let z = PrefixSpec::new(u, q.clone(), tail)?.assemble()?;
        let h = HierData::synthetic(&mix, &z, &q, n + 6, seed.wrapping_add(n as u64))?;
        let rep = hier_forms(&h, &mix, &z)?;
        hier = hier.max(rep.max_error());
        tele = tele
            .max(rel(rep.telescoping.0, rep.telescoping.1))
            .max(rel(rep.det_xi1.0, rep.det_xi1.1));
    }
    Ok(vec![
        Check::new(
            10,
            "gaussian_geometry",
            "log det Gamma vs dense Cholesky (N<=50)",
            logdet,
            1e-9,
        ),
        Check::new(
            10,
            "gaussian_geometry",
            "block inverse vs dense inverse (N<=50)",
            inverse,
            1e-9,
        ),
        Check::new(
            10,
            "gaussian_geometry",
            "quadra closed form vs Lagrange solve",
            quad,
            1e-9,
        ),
        Check::new(
            10,
            "gaussian_geometry",
            "dual bound: optimum and quadratic gap",
            dual,
            1e-9,
        ),
        Check::new(
            10,
            "gaussian_geometry",
            "telescoping and det xi'(Q) (n<=6)",
            tele,
            1e-9,
        ),
        Check::new(
            10,
            "gaussian_geometry",
            "hierarchical compression targets (n<=6)",
            hier,
            1e-9,
        ),
    ])
}

fn field(level: Level, seed: u64) -> Result<Vec<Check>> {
    let mix = Mixture::new(&[(2, 1.0), (4, 0.8), (6, 0.4)])?;
    let dim = 8;
    let sampler = FieldSampler::new(&mix, dim)?;
    let m = [0.5, -0.3, 0.6, 0.2, -0.4, 0.1, 0.7, -0.2];
    let m2 = [0.1, 0.4, -0.2, 0.5, 0.3, -0.6, 0.2, 0.35];
    let samples = level.pick(20_000, 100_000);
    let mut out: Vec<Check> = covariance_check(&sampler, &mix, &m, &m2, samples, seed)
        .iter()
        .map(|r| Check::from_row(11, "field_mc", "", r))
        .collect();
    for r in hessian_blocks_check(&sampler, &mix, &m, samples, seed.wrapping_add(1))? {
        out.push(Check::from_row(11, "field_mc", "hessian law: ", &r));
    }
    let mut euler: f64 = 0.0;
    for p in [2u32, 4, 6] {
        let pure = Mixture::new(&[(p, 1.3)])?;
        let ps = FieldSampler::new(&pure, dim)?;
        for s in 0..50 {
            let f = ps.draw(seed, s);
            let h = f.value(&m);
            let e: f64 = m
                .iter()
                .zip(f.gradient(&m))
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / p as f64;
            euler = euler.max((h - e).abs() / (f64::EPSILON * (1.0 + h.abs())));
        }
    }
    out.push(Check::new(
        11,
        "field_mc",
        "pure-p Euler identity per sample (units of eps)",
        euler,
        16.0,
    ));
    Ok(out)
}

fn complexity(level: Level) -> Result<Vec<Check>> {
    let mix = Mixture::sk(1.5)?;
    let so = StationaryOptions::for_mixture(&mix);
    let mut o = so.opt.clone();
    o.starts = level.pick(3, 8);
    let inf = parisi_inf(&mix, 2, &o)?.best.value;
    let f = inf + 0.02;
    let st = stationary_uq(&mix, f, 1, &so)?;
    let closed = complexity_closed_form(&mix, &st.spec, f, &so.opt.grid)?;
    let c_at = |level: f64| st.spec.u[st.spec.n() - 1] * (st.parisi - level);
    let at_p = c_at(st.parisi);
    let z = st.spec.assemble()?;
    let rep = optimality_report(&z, &mix, &so.opt.grid, f, 1, &[0.25, 0.5, 0.75])?;
    let stationarity = st.residuals.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    Ok(vec![
        Check::new(
            12,
            "variational",
            "stationary point converged",
            if st.converged { 0.0 } else { 1.0 },
            0.0,
        ),
        Check::new(
            12,
            "variational",
            "C_f vs closed form",
            (closed - st.c_value).abs(),
            1e-6,
        ),
        Check::new(
            12,
            "variational",
            "C_f at f = Parisi value",
            at_p.abs(),
            0.0,
        ),
        Check::new(
            12,
            "variational",
            "stationarity residuals (u, q, energy)",
            stationarity,
            1e-3,
        ),
        Check::new(
            12,
            "functionals",
            "energy constraint residual",
            rep.energy.abs(),
            1e-3,
        ),
        Check::new(
            12,
            "functionals",
            "E[M_q^2] - q residual",
            rep.max_residual(&st.spec.q),
            1e-3,
        ),
    ])
}

fn lambda_endpoint(level: Level) -> Result<Vec<Check>> {
    let mix = Mixture::sk(1.5)?;
    let mut o = OptOptions::for_mixture(&mix);
    o.starts = level.pick(2, 8);
    let thetas: Vec<f64> = (1..=20).map(|i| i as f64 / 20.0).collect();
    let curve = lambda_curve(
        &mix,
        &thetas,
        Variant::Annealed,
        &CurveOptions { opt: o, atoms: 1 },
    )?;
    let end = curve.points.last().map(|p| p.value).unwrap_or(f64::NAN);
    let exact = std::f64::consts::LN_2 + mix.xi(1.0) / 2.0;
    let mut out = vec![Check::new(
        13,
        "variational",
        "Lambda(1) vs log 2 + xi(1)/2",
        (end - exact).abs(),
        1e-6,
    )];
    for (theta, f, argmin, pass) in tangency_self_test(&curve, 5)? {
        let mut c = Check::new(
            13,
            "variational",
            format!("Legendre tangency theta={theta:.2} slope={f:.6}"),
            (argmin - theta).abs(),
            0.025,
        );
        c.pass = pass;
        out.push(c);
    }
    Ok(out)
}
