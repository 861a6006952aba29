//! Monte Carlo for the Auffinger–Chen diffusion
//! dX_t = ζ([0,t]) ξ''(t) ∂xΦ(t, X_t) dt + √ξ''(t) dB_t.
//!
//! Two schemes are provided. `PlateauExact` samples the exact plateau transition
//! density φ_σ(y − x)·exp(α(Φ(t_{k+1}, y) − Φ(t_k, x))) by rejection from a
//! two-sided shifted Gaussian. `Euler` steps the SDE on a refined time grid whose
//! slices come from re-solving the PDE with every step time as a split point.
//!
//! Every pair of paths draws from its own ChaCha8 stream keyed by (seed, pair index),
//! so results do not depend on how the work is scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::functionals::EmpiricalMu;
use crate::parisi_pde::ParisiSolution;

/// Time discretization of the diffusion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    PlateauExact,
    Euler { dt: f64 },
}

/// Path count, seed, and whether adjacent paths form antithetic pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    pub paths: usize,
    pub seed: u64,
    pub antithetic: bool,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            paths: 100_000,
            seed: 0,
            antithetic: true,
        }
    }
}

/// Mean and standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    /// |mean − target| ≤ k·se.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.se
    }
}

/// Simulated X at the plateau boundaries of a solution, from `times[0]` to 1.
#[derive(Debug, Clone)]
pub struct ACEnsemble {
    pub scheme: Scheme,
    pub seed: u64,
    /// Recorded boundary times.
    pub times: Vec<f64>,
    /// `samples[b][p]` is X at `times[b]` on path p.
    pub samples: Vec<Vec<f64>>,
    /// Paths 2i and 2i+1 are antithetic partners.
    pub paired: bool,
}

/// X, M = ∂xΦ and Φ along each path at each recorded boundary.
#[derive(Debug, Clone)]
pub struct Observables {
    pub x: Vec<Vec<f64>>,
    pub m: Vec<Vec<f64>>,
    pub phi: Vec<Vec<f64>>,
    pub dxx: Vec<Vec<f64>>,
}

/// Moments for one pair of boundaries s < t.
#[derive(Debug, Clone, Copy)]
pub struct PairMoments {
    pub s: f64,
    pub t: f64,
    /// E[(X_t − X_s) M_s].
    pub dx_ms: Estimate,
    /// E[(M_t − M_s) X_s].
    pub dm_xs: Estimate,
    /// E[(M_t − M_s)(X_t − X_s)].
    pub dm_dx: Estimate,
}

#[derive(Debug, Clone)]
pub struct MomentTable {
    pub times: Vec<f64>,
    pub m: Vec<Estimate>,
    pub m2: Vec<Estimate>,
    pub xm: Vec<Estimate>,
    pub phi: Vec<Estimate>,
    pub pairs: Vec<PairMoments>,
}

fn pair_rng(seed: u64, pair: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(pair as u64);
    r
}

impl ACEnsemble {
    pub fn paths(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    /// Mean and standard error of per-path values, averaging antithetic partners first.
    pub fn estimate(&self, values: &[f64]) -> Estimate {
        let v: Vec<f64> = if self.paired {
            values
                .chunks(2)
                .map(|c| c.iter().sum::<f64>() / c.len() as f64)
                .collect()
        } else {
            values.to_vec()
        };
        mean_se(&v)
    }

    pub fn boundary(&self, t: f64) -> Result<usize> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() < crate::measures::MERGE_TOL)
            .ok_or(Error::NotABoundary(t))
    }

    pub fn observables(&self, sol: &ParisiSolution) -> Result<Observables> {
        let mut o = Observables {
            x: vec![],
            m: vec![],
            phi: vec![],
            dxx: vec![],
        };
        for (b, &t) in self.times.iter().enumerate() {
            let k = sol.index_of(t)?;
            let xs = &self.samples[b];
            let vals: Vec<[f64; 4]> = xs.iter().map(|&x| sol.eval_at(k, x)).collect();
            o.x.push(xs.clone());
            o.m.push(vals.iter().map(|v| v[1]).collect());
            o.phi.push(vals.iter().map(|v| v[0]).collect());
            o.dxx.push(vals.iter().map(|v| v[2]).collect());
        }
        Ok(o)
    }
}

/// Sample mean and standard error.
pub fn mean_se(v: &[f64]) -> Estimate {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Estimate {
        mean,
        se: (var / n).sqrt(),
    }
}

/// Draws X_{t_{k+1}} given X_{t_k} = x by rejection from the plateau density.
fn plateau_draw<R: Rng>(sol: &ParisiSolution, k: usize, x: f64, rng: &mut R) -> f64 {
    let var = sol.layer_variance(k);
    if var <= 0.0 {
        return x;
    }
    let sigma = var.sqrt();
    let alpha = sol.plateau_mass(k);
    let g = sol.grid();
    let next = sol.slice(k + 1);
    if alpha == 0.0 {
        let z: f64 = rng.sample(StandardNormal);
        return x + sigma * z;
    }
    // Proposal ∝ φ_σ(d)·e^{α|d|}: a random sign times N(ασ², σ²) restricted to d > 0.
    let phi_x = next.phi_at(g, x);
    loop {
        let z: f64 = rng.sample(StandardNormal);
        let d0 = alpha * var + sigma * z;
        let side: bool = rng.random();
        let u: f64 = rng.random();
        if d0 <= 0.0 {
            continue;
        }
        let y = if side { x + d0 } else { x - d0 };
        let log_acc = alpha * (next.phi_at(g, y) - phi_x - d0);
        if u.ln() < log_acc {
            return y;
        }
    }
}

/// Samples `count` draws of X_{t_{k+1}} given X_{t_k} = x.
pub fn sample_transition(
    sol: &ParisiSolution,
    k: usize,
    x: f64,
    count: usize,
    seed: u64,
) -> Vec<f64> {
    let mut rng = pair_rng(seed, 0);
    (0..count)
        .map(|_| plateau_draw(sol, k, x, &mut rng))
        .collect()
}

/// CDF of the plateau transition law from x at boundary k, on a mesh spanning ±12σ around the mode.
pub fn transition_cdf(sol: &ParisiSolution, k: usize, x: f64) -> (Vec<f64>, Vec<f64>) {
    let var = sol.layer_variance(k);
    let sigma = var.sqrt();
    let alpha = sol.plateau_mass(k);
    let g = sol.grid();
    let next = sol.slice(k + 1);
    let lo = x - alpha * var - 12.0 * sigma;
    let hi = x + alpha * var + 12.0 * sigma;
    let panels = 4000;
    let (gn, gw) = crate::quadrature::gauss_legendre(8, 0.0, 1.0);
    let phi_x = next.phi_at(g, x);
    let dens =
        |y: f64| (-(y - x) * (y - x) / (2.0 * var) + alpha * (next.phi_at(g, y) - phi_x)).exp();
    let w = (hi - lo) / panels as f64;
    let mut ys = vec![lo];
    let mut cdf = vec![0.0];
    let mut acc = 0.0;
    for p in 0..panels {
        let a = lo + p as f64 * w;
        acc += gn
            .iter()
            .zip(&gw)
            .map(|(&s, &c)| c * w * dens(a + s * w))
            .sum::<f64>();
        ys.push(a + w);
        cdf.push(acc);
    }
    let total = acc;
    cdf.iter_mut().for_each(|c| *c /= total);
    (ys, cdf)
}

/// Kolmogorov–Smirnov distance between samples and a tabulated CDF (linear between mesh points).
pub fn ks_distance(samples: &[f64], ys: &[f64], cdf: &[f64]) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let f = |y: f64| {
        let i = ys.partition_point(|&v| v < y);
        if i == 0 {
            return 0.0;
        }
        if i >= ys.len() {
            return 1.0;
        }
        let r = (y - ys[i - 1]) / (ys[i] - ys[i - 1]);
        cdf[i - 1] + r * (cdf[i] - cdf[i - 1])
    };
    s.iter()
        .enumerate()
        .map(|(i, &y)| {
            let c = f(y);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max)
}

/// Simulates from X_0 = 0 at every boundary of the solution.
pub fn simulate(sol: &ParisiSolution, scheme: Scheme, opts: McOptions) -> Result<ACEnsemble> {
    let starts = vec![0.0; opts.paths];
    let symmetric = is_even(sol);
    run(sol, 0, &starts, scheme, opts, symmetric)
}

/// Starts at X_q = (∂xΦ(q,·))⁻¹(m_i) with q = q_μ and the points of μ cycled over paths, then continues to t = 1.
pub fn law_match_start(
    sol: &ParisiSolution,
    mu: &EmpiricalMu,
    scheme: Scheme,
    opts: McOptions,
) -> Result<ACEnsemble> {
    let k = sol.index_of(mu.q())?;
    let xs: Vec<f64> = mu
        .points()
        .iter()
        .map(|&m| sol.invert_dx(k, m))
        .collect::<Result<_>>()?;
    let starts: Vec<f64> = (0..opts.paths).map(|p| xs[p % xs.len()]).collect();
    let symmetric = is_even(sol) && mu.is_symmetric();
    run(sol, k, &starts, scheme, opts, symmetric)
}

/// Starts from explicit positions at boundary k.
pub fn simulate_from(
    sol: &ParisiSolution,
    k: usize,
    starts: &[f64],
    scheme: Scheme,
    opts: McOptions,
) -> Result<ACEnsemble> {
    run(
        sol,
        k,
        starts,
        scheme,
        McOptions {
            paths: starts.len(),
            ..opts
        },
        false,
    )
}

/// Whether Φ(t, ·) is numerically even at every boundary.
fn is_even(sol: &ParisiSolution) -> bool {
    let n = sol.grid().points;
    (0..sol.layer_times().len()).all(|k| {
        let p = &sol.slice(k).phi;
        (0..n / 2).all(|j| (p[j] - p[n - 1 - j]).abs() <= 1e-12 * (1.0 + p[j].abs()))
    })
}

fn run(
    sol: &ParisiSolution,
    start: usize,
    starts: &[f64],
    scheme: Scheme,
    opts: McOptions,
    symmetric: bool,
) -> Result<ACEnsemble> {
    let paths = starts.len();
    if paths == 0 {
        return Err(Error::Domain("path count must be positive".into()));
    }
    let times: Vec<f64> = sol.layer_times()[start..].to_vec();
    let nb = times.len();
    let mut samples = vec![vec![0.0; paths]; nb];
    match scheme {
        Scheme::PlateauExact => {
            // Reflection pairs are valid only when the dynamics and the start are symmetric.
            let paired = opts.antithetic && symmetric && paths.is_multiple_of(2);
            let step = if paired { 2 } else { 1 };
            for p in (0..paths).step_by(step) {
                let mut rng = pair_rng(opts.seed, p / step);
                let mut x = starts[p];
                samples[0][p] = x;
                if paired {
                    samples[0][p + 1] = -x;
                }
                for b in 1..nb {
                    x = plateau_draw(sol, start + b - 1, x, &mut rng);
                    samples[b][p] = x;
                    if paired {
                        samples[b][p + 1] = -x;
                    }
                }
            }
            Ok(ACEnsemble {
                scheme,
                seed: opts.seed,
                times,
                samples,
                paired,
            })
        }
        Scheme::Euler { dt } => {
            let grid = EulerGrid::new(sol, start, dt)?;
            let paired = opts.antithetic && paths.is_multiple_of(2);
            let step = if paired { 2 } else { 1 };
            for p in (0..paths).step_by(step) {
                let mut rng = pair_rng(opts.seed, p / step);
                let zs: Vec<f64> = (0..grid.steps())
                    .map(|_| rng.sample(StandardNormal))
                    .collect();
                let lanes: &[f64] = if paired { &[1.0, -1.0] } else { &[1.0] };
                for (l, &sign) in lanes.iter().enumerate() {
                    let path = grid.walk(starts[p + l], &zs, sign);
                    for (b, &i) in grid.record.iter().enumerate() {
                        samples[b][p + l] = path[i].0;
                    }
                }
            }
            Ok(ACEnsemble {
                scheme,
                seed: opts.seed,
                times,
                samples,
                paired,
            })
        }
    }
}

/// Refined solution and step bookkeeping for the Euler scheme.
struct EulerGrid {
    fine: ParisiSolution,
    first: usize,
    /// Fine indices of the original boundaries, from the start.
    record: Vec<usize>,
}

impl EulerGrid {
    fn new(sol: &ParisiSolution, start: usize, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt <= 1e-2) {
            return Err(Error::Domain(format!(
                "Euler step {dt} must lie in (0, 1e-2]"
            )));
        }
        let t = sol.layer_times();
        let mut splits = Vec::new();
        for k in start..t.len() - 1 {
            let n = ((t[k + 1] - t[k]) / dt).ceil().max(1.0) as usize;
            let h = (t[k + 1] - t[k]) / n as f64;
            splits.extend((1..n).map(|i| t[k] + i as f64 * h));
        }
        let fine = sol.refined(&splits)?;
        let first = fine.index_of(t[start])?;
        let record = t[start..]
            .iter()
            .map(|&s| fine.index_of(s))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            fine,
            first,
            record,
        })
    }

    fn steps(&self) -> usize {
        self.fine.layer_times().len() - 1 - self.first
    }

    /// Positions and the increments' normal draws along one path; index i is fine boundary `first + i`.
    fn walk(&self, x0: f64, zs: &[f64], sign: f64) -> Vec<(f64, [f64; 4])> {
        let t = self.fine.layer_times();
        let mix = self.fine.mixture();
        let mut x = x0;
        let mut out = Vec::with_capacity(zs.len() + 1);
        for (i, &z) in zs.iter().enumerate() {
            let k = self.first + i;
            let v = self.fine.eval_at(k, x);
            out.push((x, v));
            let h = t[k + 1] - t[k];
            let d2 = mix.d2(t[k]);
            x += self.fine.plateau_mass(k) * d2 * v[1] * h + (d2 * h).sqrt() * sign * z;
        }
        let last = self.fine.layer_times().len() - 1;
        out.push((x, self.fine.eval_at(last, x)));
        out
    }
}

/// Boundary means of M, M², XM, Φ and the pairwise increment moments.
pub fn moments(e: &ACEnsemble, sol: &ParisiSolution) -> Result<MomentTable> {
    let o = e.observables(sol)?;
    let nb = e.times.len();
    let prod = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x * y).collect() };
    let mut t = MomentTable {
        times: e.times.clone(),
        m: vec![],
        m2: vec![],
        xm: vec![],
        phi: vec![],
        pairs: vec![],
    };
    for b in 0..nb {
        t.m.push(e.estimate(&o.m[b]));
        t.m2.push(e.estimate(&prod(&o.m[b], &o.m[b])));
        t.xm.push(e.estimate(&prod(&o.x[b], &o.m[b])));
        t.phi.push(e.estimate(&o.phi[b]));
    }
    for s in 0..nb {
        for u in s + 1..nb {
            let dx: Vec<f64> = o.x[u].iter().zip(&o.x[s]).map(|(a, b)| a - b).collect();
            let dm: Vec<f64> = o.m[u].iter().zip(&o.m[s]).map(|(a, b)| a - b).collect();
            t.pairs.push(PairMoments {
                s: e.times[s],
                t: e.times[u],
                dx_ms: e.estimate(&prod(&dx, &o.m[s])),
                dm_xs: e.estimate(&prod(&dm, &o.x[s])),
                dm_dx: e.estimate(&prod(&dm, &dx)),
            });
        }
    }
    Ok(t)
}

/// Per-path residuals of the three expectation identities, as estimates that should vanish.
#[derive(Debug, Clone)]
pub struct IdentityResiduals {
    /// (s, t, E[(X_t − X_s)M_s − M_s² ∫_s^t ζ([0,u])ξ''(u)du]).
    pub delta_x_m: Vec<(f64, f64, Estimate)>,
    /// (s, t, E[(M_t − M_s)X_s]).
    pub delta_m_x: Vec<(f64, f64, Estimate)>,
    /// (t, E[X_t M_t − ξ'(t) + Σ_u ζ({u}) ξ'(min(t,u)) M_u²]).
    pub xt_mt: Vec<(f64, Estimate)>,
    /// (t, E[M_t − M_1]).
    pub flatness: Vec<(f64, Estimate)>,
}

/// Residual estimators for an ensemble started at X_0 = 0.
pub fn identity_residuals(e: &ACEnsemble, sol: &ParisiSolution) -> Result<IdentityResiduals> {
    if e.times.first() != Some(&0.0) {
        return Err(Error::Domain(
            "identities need an ensemble started at t = 0".into(),
        ));
    }
    let o = e.observables(sol)?;
    let z = sol.measure();
    let mix = sol.mixture();
    let nb = e.times.len();
    let np = e.paths();
    let mut r = IdentityResiduals {
        delta_x_m: vec![],
        delta_m_x: vec![],
        xt_mt: vec![],
        flatness: vec![],
    };
    for s in 0..nb {
        for t in s + 1..nb {
            let (ts, tt) = (e.times[s], e.times[t]);
            let c = z.int_d2_cdf(mix, ts, tt);
            let a: Vec<f64> = (0..np)
                .map(|p| (o.x[t][p] - o.x[s][p]) * o.m[s][p] - o.m[s][p] * o.m[s][p] * c)
                .collect();
            let b: Vec<f64> = (0..np)
                .map(|p| (o.m[t][p] - o.m[s][p]) * o.x[s][p])
                .collect();
            r.delta_x_m.push((ts, tt, e.estimate(&a)));
            r.delta_m_x.push((ts, tt, e.estimate(&b)));
        }
    }
    let atoms: Vec<(usize, f64)> = e
        .times
        .iter()
        .enumerate()
        .filter_map(|(b, &u)| {
            let w = z.mass_at(u);
            (w > 0.0).then_some((b, w))
        })
        .collect();
    for t in 0..nb {
        let tt = e.times[t];
        let v: Vec<f64> = (0..np)
            .map(|p| {
                let corr: f64 = atoms
                    .iter()
                    .map(|&(b, w)| w * mix.d1(tt.min(e.times[b])) * o.m[b][p] * o.m[b][p])
                    .sum();
                o.x[t][p] * o.m[t][p] - mix.d1(tt) + corr
            })
            .collect();
        r.xt_mt.push((tt, e.estimate(&v)));
        let f: Vec<f64> = (0..np).map(|p| o.m[t][p] - o.m[nb - 1][p]).collect();
        r.flatness.push((tt, e.estimate(&f)));
    }
    Ok(r)
}

/// RMS over paths of the discretized pathwise Itô residual Y_1 from X_0 = 0.
///
/// The stochastic integral is discretized with the realized quadratic-variation
/// correction ½ξ''∂xxΦ(ΔB² − Δt), which makes the residual first order in dt.
pub fn ito_residual_rms(sol: &ParisiSolution, dt: f64, paths: usize, seed: u64) -> Result<f64> {
    let grid = EulerGrid::new(sol, 0, dt)?;
    let t = grid.fine.layer_times().to_vec();
    let mix = grid.fine.mixture().clone();
    let mut acc = 0.0;
    for p in 0..paths {
        let mut rng = pair_rng(seed, p);
        let zs: Vec<f64> = (0..grid.steps())
            .map(|_| rng.sample(StandardNormal))
            .collect();
        let path = grid.walk(0.0, &zs, 1.0);
        let mut y = path.last().unwrap().1[0] - path[0].1[0];
        for (i, &z) in zs.iter().enumerate() {
            let h = t[i + 1] - t[i];
            let d2 = mix.d2(t[i]);
            let v = path[i].1;
            let alpha = grid.fine.plateau_mass(i);
            y -= 0.5 * d2 * alpha * v[1] * v[1] * h
                + v[1] * (d2 * h).sqrt() * z
                + 0.5 * d2 * v[2] * h * (z * z - 1.0);
        }
        acc += y * y;
    }
    Ok((acc / paths as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{AtomicMeasure, PrefixSpec};
    use crate::mixture::Mixture;
    use crate::parisi_pde::{solve, GridSpec};

    fn sol() -> ParisiSolution {
        let m = Mixture::new(&[(2, 1.0), (4, 1.0)]).unwrap();
        let z = PrefixSpec::new(
            vec![0.4],
            vec![0.45],
            AtomicMeasure::new(vec![(0.45, 0.3), (0.8, 0.7)]).unwrap(),
        )
        .unwrap()
        .assemble()
        .unwrap();
        solve(
            &z,
            &m,
            &GridSpec {
                half_width: 24.0,
                points: 1201,
                quad_nodes: 64,
            },
        )
        .unwrap()
    }

    #[test]
    fn reproducible_and_paired() {
        let s = sol();
        let o = McOptions {
            paths: 200,
            seed: 7,
            antithetic: true,
        };
        let a = simulate(&s, Scheme::PlateauExact, o).unwrap();
        let b = simulate(&s, Scheme::PlateauExact, o).unwrap();
        assert_eq!(a.samples, b.samples);
        assert!(a.paired);
        assert_eq!(a.samples[2][0], -a.samples[2][1]);
        let c = simulate(&s, Scheme::PlateauExact, McOptions { seed: 8, ..o }).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn frozen_when_variance_vanishes() {
        // ξ'' ≡ 0 never happens for valid mixtures, but a zero-length plateau has zero variance.
        let s = sol();
        let mut rng = pair_rng(1, 0);
        let k = s.layer_times().len() - 2;
        let x = plateau_draw(&s, k, 0.3, &mut rng);
        assert!(x.is_finite());
        assert_eq!(sample_transition(&s, 0, 0.0, 3, 1).len(), 3);
    }

    #[test]
    fn kernel_matches_samples() {
        let s = sol();
        let draws = sample_transition(&s, 1, 0.4, 20_000, 3);
        let (ys, cdf) = transition_cdf(&s, 1, 0.4);
        let ks = ks_distance(&draws, &ys, &cdf);
        assert!(ks < 0.015, "ks = {ks}");
    }

    #[test]
    fn identities_hold_within_three_se() {
        let s = sol();
        let e = simulate(
            &s,
            Scheme::PlateauExact,
            McOptions {
                paths: 20_000,
                seed: 11,
                antithetic: false,
            },
        )
        .unwrap();
        let r = identity_residuals(&e, &s).unwrap();
        for (a, b, est) in r.delta_x_m.iter().chain(&r.delta_m_x) {
            assert!(est.within(0.0, 3.5), "({a},{b}): {est:?}");
        }
        for (t, est) in r.xt_mt.iter().chain(&r.flatness) {
            assert!(est.within(0.0, 3.5), "{t}: {est:?}");
        }
    }

    #[test]
    fn ks_of_exact_cdf_is_small() {
        let ys: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
        let samples: Vec<f64> = (0..500).map(|i| (i as f64 + 0.5) / 500.0).collect();
        assert!(ks_distance(&samples, &ys, &ys) <= 1.0 / 500.0 + 1e-12);
    }

    #[test]
    fn ito_residual_is_first_order() {
        let m = Mixture::new(&[(2, 1.0), (4, 1.0)]).unwrap();
        let z = AtomicMeasure::new(vec![(0.0, 0.4), (0.45, 0.6)]).unwrap();
        let s = solve(
            &z,
            &m,
            &GridSpec {
                half_width: 24.0,
                points: 601,
                quad_nodes: 64,
            },
        )
        .unwrap();
        let r1 = ito_residual_rms(&s, 4e-3, 400, 5).unwrap();
        let r2 = ito_residual_rms(&s, 2e-3, 400, 5).unwrap();
        let ratio = r1 / r2;
        assert!((ratio - 2.0).abs() < 0.4, "ratio = {ratio} ({r1}, {r2})");
    }
}
