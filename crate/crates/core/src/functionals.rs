//! Parisi and TAP functionals, the defect, the TAP gradient, the H profile, and
//! optimality residuals for prefix measures.
//!
//! Expectations over the Auffinger–Chen process use the plateau transition kernels
//! of [`crate::transition`] unless a Monte Carlo estimator is requested.

use crate::ac_sde::{law_match_start, Estimate, McOptions, Scheme};
use crate::error::{Error, Result};
use crate::measures::{AtomicMeasure, MERGE_TOL};
use crate::mixture::Mixture;
use crate::parisi_pde::{solve, solve_with_splits, GridSpec, ParisiSolution};
use crate::quadrature::gauss_legendre;
use crate::transition::ForwardLaw;

/// Gauss–Legendre nodes per sub-interval of the H profile.
const H_NODES: usize = 8;

/// Empirical law (1/N) Σ δ_{m_i} of a magnetization vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMu {
    points: Vec<f64>,
    q: f64,
}

impl EmpiricalMu {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Domain(
                "empirical measure needs at least one point".into(),
            ));
        }
        if let Some(m) = points.iter().find(|m| m.is_nan() || m.abs() >= 1.0) {
            return Err(Error::Domain(format!(
                "magnetization {m} must satisfy |m| < 1"
            )));
        }
        let q = points.iter().map(|m| m * m).sum::<f64>() / points.len() as f64;
        Ok(Self { points, q })
    }

    /// δ_0 with N copies.
    pub fn zero(n: usize) -> Self {
        Self {
            points: vec![0.0; n],
            q: 0.0,
        }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    /// q_μ = ∫ m² dμ.
    pub fn q(&self) -> f64 {
        self.q
    }

    /// Invariant under m ↦ −m.
    pub fn is_symmetric(&self) -> bool {
        let mut a = self.points.clone();
        a.sort_by(f64::total_cmp);
        let n = a.len();
        (0..n).all(|i| a[i] == -a[n - 1 - i])
    }

    /// Copy with coordinate i replaced.
    pub fn with_point(&self, i: usize, m: f64) -> Result<Self> {
        let mut p = self.points.clone();
        p[i] = m;
        Self::new(p)
    }
}

/// 𝒫arisi(ζ) = Φ_ζ(0,0) − ½∫₀¹ tξ''(t)ζ([0,t]) dt.
pub fn parisi_value(z: &AtomicMeasure, m: &Mixture, g: &GridSpec) -> Result<f64> {
    Ok(solve(z, m, g)?.parisi_value())
}

/// U_ζ(q) = ½∫_q^1 tξ''(t)ζ([0,t]) dt.
pub fn u_zeta(z: &AtomicMeasure, m: &Mixture, q: f64) -> f64 {
    0.5 * z.int_t_d2_cdf(m, q, 1.0)
}

fn check_support(z: &AtomicMeasure, q: f64) -> Result<()> {
    if z.min_support() < q - MERGE_TOL {
        return Err(Error::Domain(format!(
            "measure charges {} below q = {q}; project it onto [q, 1] first",
            z.min_support()
        )));
    }
    Ok(())
}

/// Solves the PDE for ζ on [q_μ, 1] with q_μ as a boundary.
pub fn solve_for(
    mu: &EmpiricalMu,
    z: &AtomicMeasure,
    m: &Mixture,
    g: &GridSpec,
) -> Result<ParisiSolution> {
    check_support(z, mu.q())?;
    solve_with_splits(z, m, g, &[mu.q()])
}

/// TAP(μ, ζ) = −∫h_ζ(q, m) dμ − U_ζ(q) with q = q_μ.
pub fn tap_value(mu: &EmpiricalMu, z: &AtomicMeasure, m: &Mixture, g: &GridSpec) -> Result<f64> {
    tap_value_on(&solve_for(mu, z, m, g)?, mu)
}

/// TAP(μ, ζ) from a solution that has q_μ as a boundary.
pub fn tap_value_on(sol: &ParisiSolution, mu: &EmpiricalMu) -> Result<f64> {
    let q = mu.q();
    check_support(sol.measure(), q)?;
    let k = sol.index_of(q)?;
    let mut acc = 0.0;
    for &mi in mu.points() {
        acc += sol.legendre_at(k, mi)?.h;
    }
    Ok(-acc / mu.n() as f64 - u_zeta(sol.measure(), sol.mixture(), q))
}

/// k_ζ(q, m) = ∂m h_ζ(q, m) + m ξ''(q) ∫_q^1 ζ([0,t]) dt.
pub fn k_field(sol: &ParisiSolution, q: f64, mval: f64) -> Result<f64> {
    let l = sol.legendre_h(q, mval)?;
    Ok(l.dh + mval * sol.mixture().d2(q) * sol.measure().int_cdf(q, 1.0))
}

/// Expectation estimator for the law-matched process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Estimator {
    Quadrature,
    Mc { paths: usize, seed: u64 },
}

/// Law-matched start (x_i, 1/N) with ∂xΦ(q, x_i) = m_i.
pub fn law_match_points(
    sol: &ParisiSolution,
    mu: &EmpiricalMu,
) -> Result<(usize, Vec<(f64, f64)>)> {
    let k = sol.index_of(mu.q())?;
    let w = 1.0 / mu.n() as f64;
    let pts = mu
        .points()
        .iter()
        .map(|&m| Ok((sol.invert_dx(k, m)?, w)))
        .collect::<Result<Vec<_>>>()?;
    Ok((k, pts))
}

/// N-point quantile discretization of Law(∂xΦ(q, X_q)) for the process started at the origin.
///
/// Each node mass of the law of X_q is spread uniformly over its grid cell; point i sits at the
/// (i + ½)/N quantile x_i. With `match_q` the quantiles are rescaled to s·x_i, with s chosen so
/// that (1/N)Σ ∂xΦ(q, s x_i)² = q exactly.
pub fn law_quantile_mu(
    sol: &ParisiSolution,
    q: f64,
    n: usize,
    match_q: bool,
) -> Result<EmpiricalMu> {
    if n == 0 {
        return Err(Error::Domain("need at least one point".into()));
    }
    let k = sol.index_of(q)?;
    if k == 0 {
        return Ok(EmpiricalMu::zero(n));
    }
    let law = ForwardLaw::from_origin(sol)?;
    let g = sol.grid();
    let h = g.step();
    let mass = law.nodal(k);
    let total: f64 = mass.iter().sum();
    let mut xs = Vec::with_capacity(n);
    let mut j = 0;
    let mut below = 0.0;
    for i in 0..n {
        let tau = (i as f64 + 0.5) / n as f64 * total;
        while j + 1 < mass.len() && below + mass[j] < tau {
            below += mass[j];
            j += 1;
        }
        let frac = if mass[j] > 0.0 {
            ((tau - below) / mass[j]).clamp(0.0, 1.0)
        } else {
            0.5
        };
        xs.push(g.x(j) - 0.5 * h + frac * h);
    }
    let points = |s: f64| -> Vec<f64> { xs.iter().map(|&x| sol.eval_at(k, s * x)[1]).collect() };
    let second = |s: f64| points(s).iter().map(|m| m * m).sum::<f64>() / n as f64 - q;
    let mut scale = 1.0;
    if match_q {
        let (mut a, mut b) = (0.25, 4.0);
        if second(a) > 0.0 || second(b) < 0.0 {
            return Err(Error::NonConvergence(format!(
                "no rescaling in [{a}, {b}] matches q = {q}"
            )));
        }
        for _ in 0..200 {
            scale = 0.5 * (a + b);
            if second(scale) < 0.0 {
                a = scale;
            } else {
                b = scale;
            }
            if b - a < 1e-15 {
                break;
            }
        }
    }
    EmpiricalMu::new(points(scale))
}

/// Δ_ζ^μ = ∫_{[q,1]} (E[u(t, X_t)²] − t) ζ(dt) for the law-matched process.
pub fn defect(sol: &ParisiSolution, mu: &EmpiricalMu, est: Estimator) -> Result<Estimate> {
    let q = mu.q();
    check_support(sol.measure(), q)?;
    let z = sol.measure();
    let times = sol.layer_times();
    match est {
        Estimator::Quadrature => {
            let (k, pts) = law_match_points(sol, mu)?;
            let law = ForwardLaw::new(sol, k, pts)?;
            let mut d = 0.0;
            for (kk, &t) in times.iter().enumerate().skip(k) {
                let w = z.mass_at(t);
                if w > 0.0 {
                    d += w * (law.expect(sol, kk, |_, v| v[1] * v[1]) - t);
                }
            }
            Ok(Estimate { mean: d, se: 0.0 })
        }
        Estimator::Mc { paths, seed } => {
            let e = law_match_start(
                sol,
                mu,
                Scheme::PlateauExact,
                McOptions {
                    paths,
                    seed,
                    antithetic: true,
                },
            )?;
            let o = e.observables(sol)?;
            let mut vals = vec![0.0; e.paths()];
            for (b, &t) in e.times.iter().enumerate() {
                let w = z.mass_at(t);
                if w > 0.0 {
                    for (v, u) in vals.iter_mut().zip(&o.m[b]) {
                        *v += w * (u * u - t);
                    }
                }
            }
            Ok(e.estimate(&vals))
        }
    }
}

/// ∂_i TAP(μ, ζ) = −(k_ζ(q, m_i) − m_i ξ''(q) Δ)/N for every coordinate, using the quadrature defect.
pub fn tap_gradient(sol: &ParisiSolution, mu: &EmpiricalMu) -> Result<Vec<f64>> {
    let q = mu.q();
    let d = defect(sol, mu, Estimator::Quadrature)?.mean;
    let xi2 = sol.mixture().d2(q);
    let n = mu.n() as f64;
    mu.points()
        .iter()
        .map(|&mi| Ok(-(k_field(sol, q, mi)? - mi * xi2 * d) / n))
        .collect()
}

/// E[M_r²] and ½∫ ξ''(E[M_r²] − r) dr tabulated on sub-intervals.
#[derive(Debug, Clone)]
pub struct HProfile {
    /// Breakpoints from q to 1.
    pub breaks: Vec<f64>,
    /// H at each breakpoint.
    pub h: Vec<f64>,
    /// q of the law-matched start (0 for the process started at the origin).
    pub q: f64,
}

impl HProfile {
    /// Ĥ(s): H(s) on [q, 1], H(q) below q. Off-breakpoint s is an error.
    pub fn at(&self, s: f64) -> Result<f64> {
        if s < self.q {
            return Ok(self.h[0]);
        }
        let i = self.breaks.partition_point(|&b| b < s - MERGE_TOL);
        if i < self.breaks.len() && (self.breaks[i] - s).abs() < MERGE_TOL {
            Ok(self.h[i])
        } else {
            Err(Error::NotABoundary(s))
        }
    }
}

/// H profile from a start law at boundary `start`, resolved at the boundaries and at `s_grid`.
fn h_profile_from(
    sol: &ParisiSolution,
    start: usize,
    points: Vec<(f64, f64)>,
    s_grid: &[f64],
) -> Result<HProfile> {
    let times = sol.layer_times();
    let q = times[start];
    let mut breaks: Vec<f64> = times[start..].to_vec();
    breaks.extend(s_grid.iter().copied().filter(|&s| s > q && s < 1.0));
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() < MERGE_TOL);
    let mut splits = Vec::new();
    let mut nodes = Vec::new();
    for w in breaks.windows(2) {
        let (gn, gw) = gauss_legendre(H_NODES, w[0], w[1]);
        splits.extend_from_slice(&gn);
        nodes.push((gn, gw));
    }
    let mut all = splits.clone();
    all.extend_from_slice(&breaks);
    let fine = sol.refined(&all)?;
    let k0 = fine.index_of(q)?;
    let law = ForwardLaw::new(&fine, k0, points)?;
    let mix = sol.mixture();
    let mut pieces = Vec::with_capacity(nodes.len());
    for (gn, gw) in &nodes {
        let mut acc = 0.0;
        for (&r, &w) in gn.iter().zip(gw) {
            let k = fine.index_of(r)?;
            let m2 = law.expect(&fine, k, |_, v| v[1] * v[1]);
            acc += w * mix.d2(r) * (m2 - r);
        }
        pieces.push(0.5 * acc);
    }
    let mut h = vec![0.0; breaks.len()];
    for i in (0..pieces.len()).rev() {
        h[i] = h[i + 1] + pieces[i];
    }
    Ok(HProfile { breaks, h, q })
}

/// Ĥ_ζ^μ for the law-matched process.
pub fn h_profile(sol: &ParisiSolution, mu: &EmpiricalMu, s_grid: &[f64]) -> Result<HProfile> {
    let (k, pts) = law_match_points(sol, mu)?;
    h_profile_from(sol, k, pts, s_grid)
}

/// H_ζ for the process started at X_0 = 0.
pub fn h_profile_origin(sol: &ParisiSolution, s_grid: &[f64]) -> Result<HProfile> {
    h_profile_from(sol, 0, vec![(0.0, 1.0)], s_grid)
}

/// Optimality residuals of a prefix measure for the process started at the origin.
#[derive(Debug, Clone)]
pub struct OptimalityReport {
    /// Support points of ζ.
    pub support: Vec<f64>,
    /// E[M_s²] − s per support point.
    pub first_order: Vec<f64>,
    /// ξ''(s) E[(∂xxΦ)²] − 1 per support point.
    pub second_order: Vec<f64>,
    /// −E[Φ(q_n, X)] + ½∫₀¹ + ½∫₀^{q_n} (tξ''ζ) + f.
    pub energy: f64,
    /// The same expression at q_k (k < n) plus 𝒫arisi(ζ).
    pub breaking: Vec<f64>,
    /// max over supp(ζ) ∩ [q_n, 1] of H − min over [q_n, 1] of H.
    pub h_gap: f64,
    /// Sampled H profile on [0, 1].
    pub h_profile: HProfile,
    pub parisi: f64,
}

impl OptimalityReport {
    /// Largest absolute first-order, energy, breaking and H-gap residual over the prefix atoms q_1..q_n.
    pub fn max_residual(&self, prefix: &[f64]) -> f64 {
        let mut r = self.energy.abs().max(self.h_gap.abs());
        for b in &self.breaking {
            r = r.max(b.abs());
        }
        for (s, v) in self.support.iter().zip(&self.first_order) {
            if prefix.iter().any(|q| (q - s).abs() < MERGE_TOL) {
                r = r.max(v.abs());
            }
        }
        r
    }
}

/// Residuals of the prefix optimality conditions at level f; `n` is the number of prefix atoms q_1..q_n.
pub fn optimality_report(
    z: &AtomicMeasure,
    m: &Mixture,
    g: &GridSpec,
    f: f64,
    n: usize,
    s_grid: &[f64],
) -> Result<OptimalityReport> {
    let support: Vec<f64> = z.locations().to_vec();
    if n == 0 || support.len() < n + 1 || support[0] != 0.0 {
        return Err(Error::Domain(format!(
            "measure lacks an {}-atom prefix",
            n + 1
        )));
    }
    let sol = solve(z, m, g)?;
    let law = ForwardLaw::from_origin(&sol)?;
    let mut first_order = Vec::new();
    let mut second_order = Vec::new();
    let mut phi_mean = Vec::new();
    for &s in &support {
        let k = sol.index_of(s)?;
        first_order.push(law.expect(&sol, k, |_, v| v[1] * v[1]) - s);
        second_order.push(m.d2(s) * law.expect(&sol, k, |_, v| v[2] * v[2]) - 1.0);
        phi_mean.push(law.expect(&sol, k, |_, v| v[0]));
    }
    let full = z.int_t_d2_cdf(m, 0.0, 1.0);
    let parisi = sol.parisi_value();
    let lhs = |i: usize| -phi_mean[i] + 0.5 * full + 0.5 * z.int_t_d2_cdf(m, 0.0, support[i]);
    let energy = lhs(n) + f;
    let breaking = (1..n).map(|i| lhs(i) + parisi).collect();
    let h_profile = h_profile_origin(&sol, s_grid)?;
    let qn = support[n];
    let top: Vec<f64> = h_profile
        .breaks
        .iter()
        .zip(&h_profile.h)
        .filter(|(b, _)| **b >= qn - MERGE_TOL)
        .map(|(_, h)| *h)
        .collect();
    let hmin = top.iter().copied().fold(f64::INFINITY, f64::min);
    let mut h_gap: f64 = 0.0;
    for &s in &support[n..] {
        h_gap = h_gap.max(h_profile.at(s)? - hmin);
    }
    Ok(OptimalityReport {
        support,
        first_order,
        second_order,
        energy,
        breaking,
        h_gap,
        h_profile,
        parisi,
    })
}

/// Both sides of the change-of-variables identity at boundary q (per spin):
/// log ∫ ∂mm h · exp(uΦ(q, ∂m h) − (∂m h)²/(2ξ'(q))) dm − ½log(2πξ'(q)), computed in m,
/// and log ∫ exp(uΦ(q, y) − y²/(2ξ'(q))) dy − ½log(2πξ'(q)), computed in y.
pub fn change_of_variables(sol: &ParisiSolution, q: f64, u: f64) -> Result<(f64, f64)> {
    let k = sol.index_of(q)?;
    let v = sol.mixture().d1(q);
    if v <= 0.0 {
        return Err(Error::Domain("the identity needs ξ'(q) > 0".into()));
    }
    // Beyond |y| = X the integrand is below e^{-40} of its peak.
    let x_max = u * v + (80.0 * v).sqrt() + 2.0;
    let expo = |y: f64, phi: f64| u * phi - y * y / (2.0 * v);
    let peak = expo(0.0, sol.eval_at(k, 0.0)[0]);
    // m-side: substitute m = tanh(s) and use the trapezoid rule in s.
    let s_lo = sol.eval_at(k, -x_max)[1].atanh();
    let s_hi = sol.eval_at(k, x_max)[1].atanh();
    let nodes = 6000;
    let ds = (s_hi - s_lo) / nodes as f64;
    let mut lhs = 0.0;
    for i in 0..=nodes {
        let s = s_lo + i as f64 * ds;
        let mv = s.tanh();
        let l = sol.legendre_at(k, mv)?;
        let jac = 1.0 - mv * mv;
        let w = if i == 0 || i == nodes { 0.5 } else { 1.0 };
        lhs += w * l.ddh * jac * (expo(l.dh, l.dh * mv - l.h) - peak).exp();
    }
    lhs *= ds;
    // y-side: composite Gauss–Legendre.
    let panels = 400;
    let (gn, gw) = gauss_legendre(10, 0.0, 1.0);
    let width = 2.0 * x_max / panels as f64;
    let mut rhs = 0.0;
    for p in 0..panels {
        let a = -x_max + p as f64 * width;
        for (&t, &c) in gn.iter().zip(&gw) {
            let y = a + t * width;
            rhs += c * width * (expo(y, sol.eval_at(k, y)[0]) - peak).exp();
        }
    }
    let norm = 0.5 * (2.0 * std::f64::consts::PI * v).ln();
    Ok((lhs.ln() + peak - norm, rhs.ln() + peak - norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::PrefixSpec;

    fn grid() -> GridSpec {
        GridSpec {
            half_width: 24.0,
            points: 2001,
            quad_nodes: 64,
        }
    }

    fn mix() -> Mixture {
        Mixture::new(&[(2, 1.0), (4, 1.0)]).unwrap()
    }

    fn prefix(u: f64, q: f64, tail: &[(f64, f64)]) -> AtomicMeasure {
        PrefixSpec::new(vec![u], vec![q], AtomicMeasure::new(tail.to_vec()).unwrap())
            .unwrap()
            .assemble()
            .unwrap()
    }

    #[test]
    fn replica_symmetric_value() {
        for beta in [0.25f64, 0.5, 1.0] {
            let m = Mixture::sk(beta).unwrap();
            let v = parisi_value(
                &AtomicMeasure::dirac(0.0).unwrap(),
                &m,
                &GridSpec::for_mixture(&m),
            )
            .unwrap();
            assert!(
                (v - (2f64.ln() + beta * beta / 2.0)).abs() < 1e-10,
                "beta={beta}: {v}"
            );
        }
    }

    #[test]
    fn trivial_state_equals_parisi() {
        let z = prefix(0.3, 0.5, &[(0.5, 0.6), (0.9, 0.4)]);
        let p = parisi_value(&z, &mix(), &grid()).unwrap();
        let t = tap_value(&EmpiricalMu::zero(1), &z, &mix(), &grid()).unwrap();
        assert!((p - t).abs() < 1e-12, "{p} vs {t}");
    }

    #[test]
    fn tap_value_rejects_low_support() {
        let mu = EmpiricalMu::new(vec![0.5, -0.5]).unwrap();
        let z = AtomicMeasure::new(vec![(0.1, 0.5), (0.6, 0.5)]).unwrap();
        assert!(tap_value(&mu, &z, &mix(), &grid()).is_err());
        assert!(EmpiricalMu::new(vec![1.0]).is_err());
    }

    #[test]
    fn tap_value_is_even_in_mu() {
        let mu = EmpiricalMu::new(vec![0.3, -0.6, 0.1]).unwrap();
        let neg = EmpiricalMu::new(mu.points().iter().map(|m| -m).collect()).unwrap();
        let z = AtomicMeasure::new(vec![(mu.q(), 0.5), (0.8, 0.5)]).unwrap();
        let a = tap_value(&mu, &z, &mix(), &grid()).unwrap();
        let b = tap_value(&neg, &z, &mix(), &grid()).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn k_field_vanishes_at_zero_and_constant_cdf() {
        let z = AtomicMeasure::dirac(0.4).unwrap();
        let sol = solve(&z, &mix(), &grid()).unwrap();
        assert!(k_field(&sol, 0.4, 0.0).unwrap().abs() < 1e-13);
        let m = 0.35;
        let expect = sol.legendre_h(0.4, m).unwrap().dh + m * mix().d2(0.4) * 0.6;
        assert!((k_field(&sol, 0.4, m).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn defect_bounds_and_estimators_agree() {
        let mu = EmpiricalMu::new(vec![0.2, -0.5, 0.7, 0.1, -0.3]).unwrap();
        let z = AtomicMeasure::new(vec![(mu.q(), 0.4), (0.7, 0.6)]).unwrap();
        let sol = solve_for(&mu, &z, &mix(), &grid()).unwrap();
        let dq = defect(&sol, &mu, Estimator::Quadrature).unwrap().mean;
        assert!(dq.abs() <= 1.0);
        let dm = defect(
            &sol,
            &mu,
            Estimator::Mc {
                paths: 20_000,
                seed: 3,
            },
        )
        .unwrap();
        assert!(dm.within(dq, 3.5), "quadrature {dq} vs mc {dm:?}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        // ζ_m = π_{q_m} ζ0 keeps q_m inside a plateau of ζ0, so TAP(μ_m, ζ_m) is smooth in m.
        let z0 = AtomicMeasure::new(vec![(0.0, 0.3), (0.55, 0.3), (0.85, 0.4)]).unwrap();
        let mu = EmpiricalMu::new(vec![0.5, -0.4, 0.8, 0.2]).unwrap();
        let g = grid();
        let f = |mu: &EmpiricalMu| {
            let z = z0.project_at(mu.q()).unwrap();
            mu.n() as f64 * tap_value(mu, &z, &mix(), &g).unwrap()
        };
        let sol = solve_for(&mu, &z0.project_at(mu.q()).unwrap(), &mix(), &g).unwrap();
        let grad = tap_gradient(&sol, &mu).unwrap();
        let eps = 1e-5;
        for i in 0..mu.n() {
            let p = mu.with_point(i, mu.points()[i] + eps).unwrap();
            let m = mu.with_point(i, mu.points()[i] - eps).unwrap();
            let fd = (f(&p) - f(&m)) / (2.0 * eps) / mu.n() as f64;
            let rel = (fd - grad[i]).abs() / grad[i].abs();
            assert!(rel < 1e-4, "i={i}: fd {fd} vs {}, rel {rel}", grad[i]);
        }
    }

    #[test]
    fn h_profile_matches_gateaux_derivative() {
        let mu = EmpiricalMu::new(vec![0.3, -0.5, 0.6]).unwrap();
        let q = mu.q();
        let z = AtomicMeasure::new(vec![(q, 0.5), (0.8, 0.5)]).unwrap();
        let sol = solve_for(&mu, &z, &mix(), &grid()).unwrap();
        let (s, s2) = (0.8, 0.6);
        let prof = h_profile(&sol, &mu, &[s2, s]).unwrap();
        assert_eq!(prof.at(1.0).unwrap(), 0.0);
        let eps = 1e-4;
        let moved = z.shift_mass(s, s2, eps).unwrap();
        let base = tap_value(&mu, &z, &mix(), &grid()).unwrap();
        let bumped = tap_value(&mu, &moved, &mix(), &grid()).unwrap();
        let predicted = eps * (prof.at(s2).unwrap() - prof.at(s).unwrap());
        assert!(
            (bumped - base - predicted).abs() < 5e-3 * predicted.abs() + 1e-9,
            "{} vs {predicted}",
            bumped - base
        );
        assert_eq!(prof.at(0.0).unwrap(), prof.at(q).unwrap());
    }

    #[test]
    fn change_of_variables_identity() {
        let (u, q) = (0.45, 0.4);
        let z = prefix(u, q, &[(q, 1.0)]);
        let sol = solve(&z, &mix(), &grid()).unwrap();
        let (lhs, rhs) = change_of_variables(&sol, q, u).unwrap();
        assert!((lhs - rhs).abs() < 1e-8, "{lhs} vs {rhs}");
        assert!(
            (rhs - u * sol.phi00()).abs() < 1e-8,
            "{rhs} vs {}",
            u * sol.phi00()
        );
    }

    #[test]
    fn report_detects_non_optimality() {
        let z = prefix(0.3, 0.2, &[(0.2, 1.0)]);
        let r = optimality_report(&z, &mix(), &grid(), 0.0, 1, &[0.5]).unwrap();
        // At small q the breaking-point residual E[M_q²] − q has a definite sign.
        assert!(r.first_order[1].abs() > 1e-3);
        assert!(r.first_order[0].abs() < 1e-20);
        assert!(r.h_profile.at(1.0).unwrap() == 0.0);
    }

    #[test]
    fn law_quantiles_track_the_second_moment() {
        let z = prefix(0.4, 0.6, &[(0.6, 1.0)]);
        let sol = solve(&z, &mix(), &grid()).unwrap();
        let k = sol.index_of(0.6).unwrap();
        let law = ForwardLaw::from_origin(&sol).unwrap();
        let exact = law.expect(&sol, k, |_, v| v[1] * v[1]);
        let raw = law_quantile_mu(&sol, 0.6, 400, false).unwrap();
        assert!((raw.q() - exact).abs() < 2e-3);
        let p = raw.points();
        assert!(p.windows(2).all(|w| w[0] <= w[1]));
        assert!((0..400).all(|i| (p[i] + p[399 - i]).abs() < 1e-9));
        let matched = law_quantile_mu(&sol, 0.6, 400, true).unwrap();
        assert!((matched.q() - 0.6).abs() < 1e-13);
        assert_eq!(
            law_quantile_mu(&sol, 0.0, 3, true).unwrap().points(),
            &[0.0; 3]
        );
    }
}
