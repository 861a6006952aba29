//! Minimization of the Parisi functional over prefix classes, stationary points of the
//! complexity functionals, and the Λ curves with their Legendre transforms.
//!
//! Every objective is evaluated on a finitely atomic ζ = Σ w_i δ_{a_i}. Its first variation is
//! analytic: moving mass to a changes 𝒫arisi at rate H(a), and moving an atom of mass w at rate
//! −½ w ξ''(a)(E[M_a²] − a), where M_t = ∂xΦ(t, X_t) along the process started at the origin.
//! H is obtained exactly between consecutive atoms from the Itô identity
//! E[Φ(b, X_b)] − E[Φ(a, X_a)] = ½ c ∫_a^b ξ''(r) E[M_r²] dr, with c = ζ([0, a]) on [a, b).

use crate::error::{Error, Result};
use crate::field_mc::par_map;
use crate::measures::{AtomicMeasure, PrefixSpec};
use crate::mixture::Mixture;
use crate::parisi_pde::{solve, GridSpec};
use crate::transition::ForwardLaw;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Coordinates used for the weight simplex.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coords {
    StickBreaking,
    Softmax,
}

/// Settings shared by the optimizers.
#[derive(Debug, Clone, PartialEq)]
pub struct OptOptions {
    /// Grid for the simplex phase.
    pub coarse: GridSpec,
    /// Grid for Newton refinement and reported values.
    pub grid: GridSpec,
    pub starts: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Iterations without improvement of the best vertex before the simplex gives up.
    pub stall: usize,
    pub coords: Coords,
    /// Newton stops once every first-order residual is below this.
    pub grad_tol: f64,
}

impl OptOptions {
    pub fn for_mixture(m: &Mixture) -> Self {
        let hw = GridSpec::for_mixture(m).half_width;
        Self {
            coarse: GridSpec {
                half_width: hw,
                points: 801,
                quad_nodes: 32,
            },
            grid: GridSpec {
                half_width: hw,
                points: 1601,
                quad_nodes: 48,
            },
            starts: 8,
            seed: 0,
            max_iter: 2000,
            stall: 200,
            coords: Coords::StickBreaking,
            grad_tol: 1e-9,
        }
    }
}

/// Value and first variation of 𝒫arisi at an atomic ζ.
#[derive(Debug, Clone)]
pub struct Probe {
    pub value: f64,
    pub atoms: Vec<(f64, f64)>,
    /// ∂𝒫arisi/∂a_i.
    pub d_loc: Vec<f64>,
    /// H(a_i).
    pub d_w: Vec<f64>,
    /// Breakpoints 0, support points, 1.
    pub times: Vec<f64>,
    /// H at `times`.
    pub h: Vec<f64>,
    /// E[M_t²] at `times`.
    pub m2: Vec<f64>,
    /// E[Φ(t, X_t)] at `times`.
    pub phi_mean: Vec<f64>,
}

impl Probe {
    fn lookup(&self, v: &[f64], t: f64) -> f64 {
        let i = self.times.partition_point(|&s| s < t - 1e-12);
        v[i.min(self.times.len() - 1)]
    }

    pub fn h_at(&self, t: f64) -> f64 {
        self.lookup(&self.h, t)
    }

    pub fn m2_at(&self, t: f64) -> f64 {
        self.lookup(&self.m2, t)
    }

    pub fn phi_mean_at(&self, t: f64) -> f64 {
        self.lookup(&self.phi_mean, t)
    }
}

/// Evaluates 𝒫arisi and its first variation at Σ w_i δ_{a_i}; repeated locations are allowed.
pub fn probe(mix: &Mixture, atoms: &[(f64, f64)], grid: &GridSpec) -> Result<Probe> {
    let z = AtomicMeasure::new(atoms.to_vec())?;
    if z.locations()[0] > 0.0 {
        return Err(Error::Degenerate(
            "ζ must charge the origin for the plateau identity".into(),
        ));
    }
    let sol = solve(&z, mix, grid)?;
    let law = ForwardLaw::from_origin(&sol)?;
    let mut times: Vec<f64> = z.locations().to_vec();
    if *times.last().unwrap() < 1.0 {
        times.push(1.0);
    }
    let mut phi_mean = Vec::with_capacity(times.len());
    let mut m2 = Vec::with_capacity(times.len());
    for &t in &times {
        let k = sol.index_of(t)?;
        phi_mean.push(law.expect(&sol, k, |_, v| v[0]));
        m2.push(law.expect(&sol, k, |_, v| v[1] * v[1]));
    }
    let mut h = vec![0.0; times.len()];
    for j in (0..times.len() - 1).rev() {
        let (a, b) = (times[j], times[j + 1]);
        let c = z.cdf(a);
        h[j] = h[j + 1] + (phi_mean[j + 1] - phi_mean[j]) / c - 0.5 * mix.int_t_d2(a, b);
    }
    let mut p = Probe {
        value: sol.parisi_value(),
        atoms: atoms.to_vec(),
        d_loc: vec![],
        d_w: vec![],
        times,
        h,
        m2,
        phi_mean,
    };
    for &(a, w) in atoms {
        p.d_loc.push(-0.5 * w * mix.d2(a) * (p.m2_at(a) - a));
        p.d_w.push(p.h_at(a));
    }
    Ok(p)
}

/// Prefix problem: ζ ∈ Prefix_{n+1}(u; q) with a tail of `tail_atoms` atoms; `None` marks a free coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixProblem {
    pub u: Vec<Option<f64>>,
    pub q: Vec<Option<f64>>,
    pub tail_atoms: usize,
}

impl PrefixProblem {
    pub fn free(n: usize, tail_atoms: usize) -> Self {
        Self {
            u: vec![None; n],
            q: vec![None; n],
            tail_atoms,
        }
    }

    pub fn fixed(u: &[f64], q: &[f64], tail_atoms: usize) -> Self {
        Self {
            u: u.iter().map(|&x| Some(x)).collect(),
            q: q.iter().map(|&x| Some(x)).collect(),
            tail_atoms,
        }
    }
}

/// A parametrized family of atomic measures: x ∈ ℝ^d ↦ raw coordinates r ↦ atoms.
#[derive(Debug, Clone, PartialEq)]
enum Family {
    Prefix(PrefixProblem),
    /// ζ = Σ_j w_j δ_{l_j} + (1 − θ)δ_top with l_1 = 0 < l_2 < … < top and Σ w_j = θ.
    Top {
        theta: f64,
        lower: usize,
    },
}

/// Sequentially fills the free entries of an increasing sequence in (0, 1).
fn fill_increasing(spec: &[Option<f64>], x: &mut impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(spec.len());
    for (k, s) in spec.iter().enumerate() {
        let v = match s {
            Some(v) => *v,
            None => {
                let lo = out.last().copied().unwrap_or(0.0);
                let hi = spec[k + 1..]
                    .iter()
                    .flatten()
                    .next()
                    .copied()
                    .unwrap_or(1.0);
                lo + (hi - lo) * sigmoid(x.next().unwrap())
            }
        };
        out.push(v);
    }
    out
}

/// Inverse of `fill_increasing` on the free entries.
fn unfill_increasing(spec: &[Option<f64>], vals: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for (k, s) in spec.iter().enumerate() {
        if s.is_none() {
            let lo = if k == 0 { 0.0 } else { vals[k - 1] };
            let hi = spec[k + 1..]
                .iter()
                .flatten()
                .next()
                .copied()
                .unwrap_or(1.0);
            out.push(logit(
                ((vals[k] - lo) / (hi - lo)).clamp(1e-12, 1.0 - 1e-12),
            ));
        }
    }
    out
}

fn simplex_weights(coords: Coords, y: &[f64]) -> Vec<f64> {
    match coords {
        Coords::StickBreaking => {
            let mut w = Vec::with_capacity(y.len() + 1);
            let mut rest = 1.0;
            for &v in y {
                let piece = rest * sigmoid(v);
                w.push(piece);
                rest -= piece;
            }
            w.push(rest);
            w
        }
        Coords::Softmax => {
            let mx = y.iter().copied().fold(0.0, f64::max);
            let e: Vec<f64> = std::iter::once(0.0)
                .chain(y.iter().copied())
                .map(|v| (v - mx).exp())
                .collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|v| v / s).collect()
        }
    }
}

fn simplex_coords(coords: Coords, w: &[f64]) -> Vec<f64> {
    let w: Vec<f64> = w.iter().map(|v| v.max(1e-12)).collect();
    match coords {
        Coords::StickBreaking => {
            let mut rest = 1.0;
            let mut y = Vec::new();
            for &v in &w[..w.len() - 1] {
                y.push(logit((v / rest).clamp(1e-12, 1.0 - 1e-12)));
                rest -= v;
            }
            y
        }
        Coords::Softmax => w[1..].iter().map(|v| (v / w[0]).ln()).collect(),
    }
}

impl Family {
    fn validate(&self) -> Result<()> {
        match self {
            Family::Prefix(p) => {
                if p.u.is_empty() || p.u.len() != p.q.len() || p.tail_atoms == 0 {
                    return Err(Error::Domain(
                        "prefix needs n ≥ 1, matching u and q, and ≥ 1 tail atom".into(),
                    ));
                }
                for v in [&p.u, &p.q] {
                    let fixed: Vec<f64> = v.iter().flatten().copied().collect();
                    if fixed.iter().any(|&x| !(x > 0.0 && x < 1.0))
                        || fixed.windows(2).any(|w| w[0] >= w[1])
                    {
                        return Err(Error::Domain(
                            "fixed u and q must be strictly increasing in (0, 1)".into(),
                        ));
                    }
                }
                Ok(())
            }
            Family::Top { theta, lower } => {
                if !(*theta > 0.0 && *theta < 1.0) || *lower == 0 {
                    return Err(Error::Domain(format!(
                        "θ = {theta} must lie in (0, 1) with ≥ 1 lower atom"
                    )));
                }
                Ok(())
            }
        }
    }

    fn dim(&self) -> usize {
        match self {
            Family::Prefix(p) => {
                p.u.iter().filter(|v| v.is_none()).count()
                    + p.q.iter().filter(|v| v.is_none()).count()
                    + 2 * (p.tail_atoms - 1)
            }
            Family::Top { lower, .. } => 2 * lower - 1,
        }
    }

    /// Raw coordinates: Prefix [free u, free q, s_2..s_K, w_2..w_K]; Top [l_2..l_K, top, w_2..w_K].
    fn raw(&self, coords: Coords, x: &[f64]) -> Vec<f64> {
        let mut it = x.iter().copied();
        match self {
            Family::Prefix(p) => {
                let u = fill_increasing(&p.u, &mut it);
                let q = fill_increasing(&p.q, &mut it);
                let mut r: Vec<f64> =
                    p.u.iter()
                        .zip(&u)
                        .filter(|(s, _)| s.is_none())
                        .map(|(_, v)| *v)
                        .collect();
                r.extend(
                    p.q.iter()
                        .zip(&q)
                        .filter(|(s, _)| s.is_none())
                        .map(|(_, v)| *v),
                );
                let mut s = *q.last().unwrap();
                for _ in 1..p.tail_atoms {
                    s += (1.0 - s) * sigmoid(it.next().unwrap());
                    r.push(s);
                }
                let y: Vec<f64> = it.collect();
                r.extend_from_slice(&simplex_weights(coords, &y)[1..]);
                r
            }
            Family::Top { theta, lower } => {
                let mut r = Vec::new();
                let mut s = 0.0;
                for _ in 0..*lower {
                    s += (1.0 - s) * sigmoid(it.next().unwrap());
                    r.push(s);
                }
                let y: Vec<f64> = it.collect();
                r.extend(simplex_weights(coords, &y)[1..].iter().map(|w| w * theta));
                r
            }
        }
    }

    fn full_uq(&self, r: &[f64]) -> (Vec<f64>, Vec<f64>, usize) {
        let Family::Prefix(p) = self else {
            unreachable!()
        };
        let mut i = 0;
        let mut take = |spec: &[Option<f64>]| -> Vec<f64> {
            spec.iter()
                .map(|s| {
                    s.unwrap_or_else(|| {
                        i += 1;
                        r[i - 1]
                    })
                })
                .collect()
        };
        let u = take(&p.u);
        let q = take(&p.q);
        (u, q, i)
    }

    fn atoms(&self, r: &[f64]) -> Vec<(f64, f64)> {
        match self {
            Family::Prefix(p) => {
                let (u, q, i) = self.full_uq(r);
                let n = u.len();
                let k = p.tail_atoms;
                let mut atoms = vec![(0.0, u[0])];
                for j in 0..n - 1 {
                    atoms.push((q[j], u[j + 1] - u[j]));
                }
                let rest = 1.0 - u[n - 1];
                let locs = &r[i..i + k - 1];
                let ws = &r[i + k - 1..];
                atoms.push((q[n - 1], rest * (1.0 - ws.iter().sum::<f64>())));
                for (l, w) in locs.iter().zip(ws) {
                    atoms.push((*l, rest * w));
                }
                atoms
            }
            Family::Top { theta, lower } => {
                let locs = &r[..lower - 1];
                let top = r[lower - 1];
                let ws = &r[*lower..];
                let mut atoms = vec![(0.0, theta - ws.iter().sum::<f64>())];
                atoms.extend(locs.iter().zip(ws).map(|(l, w)| (*l, *w)));
                atoms.push((top, 1.0 - theta));
                atoms
            }
        }
    }

    /// Inverse of `raw` ∘ `atoms` for a starting guess.
    fn encode(&self, coords: Coords, z: &AtomicMeasure) -> Option<Vec<f64>> {
        let Family::Prefix(p) = self else { return None };
        let n = p.u.len();
        let spec = PrefixSpec::from_measure(z, n).ok()?;
        if spec.tail.len() != p.tail_atoms {
            return None;
        }
        let mut x = unfill_increasing(&p.u, &spec.u);
        x.extend(unfill_increasing(&p.q, &spec.q));
        let mut s = spec.q[n - 1];
        for &l in &spec.tail.locations()[1..] {
            x.push(logit(((l - s) / (1.0 - s)).clamp(1e-12, 1.0 - 1e-12)));
            s = l;
        }
        x.extend(simplex_coords(coords, spec.tail.weights()));
        Some(x)
    }
}

fn fd_jacobian<F: Fn(&[f64]) -> Vec<f64>>(f: F, x: &[f64], h: f64) -> DMatrix<f64> {
    let m = f(x).len();
    let mut j = DMatrix::zeros(m, x.len());
    for i in 0..x.len() {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += h;
        xm[i] -= h;
        let (fp, fm) = (f(&xp), f(&xm));
        for r in 0..m {
            j[(r, i)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    j
}

/// Value, gradient in raw coordinates, gradient in x.
struct Eval {
    value: f64,
    raw_grad: Vec<f64>,
    x_grad: Vec<f64>,
    probe: Probe,
}

fn evaluate(
    fam: &Family,
    coords: Coords,
    mix: &Mixture,
    x: &[f64],
    grid: &GridSpec,
) -> Result<Eval> {
    let r = fam.raw(coords, x);
    let atoms = fam.atoms(&r);
    let probe = probe(mix, &atoms, grid)?;
    let ja = fd_jacobian(
        |rr| {
            let a = fam.atoms(rr);
            a.iter().map(|v| v.0).chain(a.iter().map(|v| v.1)).collect()
        },
        &r,
        1e-7,
    );
    let dv: Vec<f64> = probe.d_loc.iter().chain(&probe.d_w).copied().collect();
    let raw_grad: Vec<f64> = (0..r.len())
        .map(|i| (0..dv.len()).map(|a| dv[a] * ja[(a, i)]).sum())
        .collect();
    let jx = fd_jacobian(|xx| fam.raw(coords, xx), x, 1e-6);
    let x_grad = (0..x.len())
        .map(|i| (0..r.len()).map(|a| raw_grad[a] * jx[(a, i)]).sum())
        .collect();
    Ok(Eval {
        value: probe.value,
        raw_grad,
        x_grad,
        probe,
    })
}

fn value_at(fam: &Family, coords: Coords, mix: &Mixture, x: &[f64], grid: &GridSpec) -> f64 {
    let r = fam.raw(coords, x);
    AtomicMeasure::new(fam.atoms(&r))
        .and_then(|z| solve(&z, mix, grid))
        .map(|s| s.parisi_value())
        .unwrap_or(f64::INFINITY)
}

/// Result of a Nelder–Mead run.
#[derive(Debug, Clone)]
struct SimplexOut {
    x: Vec<f64>,
    value: f64,
    converged: bool,
}

fn nelder_mead<F: Fn(&[f64]) -> f64>(
    f: F,
    x0: &[f64],
    step: f64,
    max_iter: usize,
    stall: usize,
) -> SimplexOut {
    let d = x0.len();
    let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..d {
        let mut p = x0.to_vec();
        p[i] += step;
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| f(p)).collect();
    let mut best = f64::INFINITY;
    let mut since = 0;
    let mut converged = false;
    for _ in 0..max_iter {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        if vals[0] < best - 1e-14 {
            best = vals[0];
            since = 0;
        } else {
            since += 1;
            if since >= stall {
                break;
            }
        }
        let size = pts[1..]
            .iter()
            .map(|p| {
                p.iter()
                    .zip(&pts[0])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if (vals[d] - vals[0]).abs() < 1e-12 && size < 1e-6 {
            converged = true;
            break;
        }
        let centroid: Vec<f64> = (0..d)
            .map(|j| pts[..d].iter().map(|p| p[j]).sum::<f64>() / d as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&pts[d])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let xr = along(1.0);
        let fr = f(&xr);
        if fr < vals[0] {
            let xe = along(2.0);
            let fe = f(&xe);
            if fe < fr {
                pts[d] = xe;
                vals[d] = fe;
            } else {
                pts[d] = xr;
                vals[d] = fr;
            }
        } else if fr < vals[d - 1] {
            pts[d] = xr;
            vals[d] = fr;
        } else {
            let (xc, fc) = if fr < vals[d] {
                let xc = along(0.5);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(-0.5);
                let fc = f(&xc);
                (xc, fc)
            };
            if fc < vals[d].min(fr) {
                pts[d] = xc;
                vals[d] = fc;
            } else {
                for i in 1..=d {
                    pts[i] = pts[i]
                        .iter()
                        .zip(&pts[0])
                        .map(|(p, b)| b + 0.5 * (p - b))
                        .collect();
                    vals[i] = f(&pts[i]);
                }
            }
        }
    }
    let i = (0..=d)
        .min_by(|&a, &b| vals[a].total_cmp(&vals[b]))
        .unwrap();
    SimplexOut {
        x: pts[i].clone(),
        value: vals[i],
        converged,
    }
}

/// Levenberg–Marquardt-damped Newton on ∇_x 𝒫arisi = 0, accepting steps that lower the value.
fn newton_polish(
    fam: &Family,
    mix: &Mixture,
    opts: &OptOptions,
    x0: &[f64],
) -> Result<(Vec<f64>, Eval, bool)> {
    let coords = opts.coords;
    let mut x = x0.to_vec();
    let mut cur = evaluate(fam, coords, mix, &x, &opts.grid)?;
    let mut lambda = 1e-6;
    let d = x.len();
    for _ in 0..40 {
        if cur.raw_grad.iter().all(|g| g.abs() < opts.grad_tol) {
            return Ok((x, cur, true));
        }
        let hess = fd_jacobian(
            |xx| {
                evaluate(fam, coords, mix, xx, &opts.grid)
                    .map(|e| e.x_grad)
                    .unwrap_or_else(|_| vec![f64::NAN; d])
            },
            &x,
            1e-5,
        );
        if hess.iter().any(|v| !v.is_finite()) {
            break;
        }
        let hs = (&hess + hess.transpose()) * 0.5;
        let g = DVector::from_column_slice(&cur.x_grad);
        let mut accepted = false;
        for _ in 0..12 {
            let scale = hs.diagonal().iter().map(|v| v.abs()).fold(1e-12, f64::max);
            let a = &hs + DMatrix::identity(d, d) * (lambda * scale);
            if let Some(ch) = a.clone().cholesky() {
                let step = ch.solve(&(-&g));
                let xn: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
                if let Ok(e) = evaluate(fam, coords, mix, &xn, &opts.grid) {
                    if e.value <= cur.value + 1e-13 * cur.value.abs().max(1.0) {
                        x = xn;
                        cur = e;
                        lambda = (lambda * 0.1).max(1e-12);
                        accepted = true;
                        break;
                    }
                }
            }
            lambda *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    let ok = cur.raw_grad.iter().all(|g| g.abs() < opts.grad_tol);
    Ok((x, cur, ok))
}

/// A local minimizer found by one or more starts.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalMin {
    pub measure: AtomicMeasure,
    pub value: f64,
    /// Largest |∂𝒫arisi/∂r| over the free raw coordinates (weights, locations).
    pub residual: f64,
    pub converged: bool,
    /// Number of starts that ended here.
    pub hits: usize,
}

/// Outcome of a constrained minimization; `found` lists every distinct local minimizer, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct MinResult {
    pub best: LocalMin,
    pub found: Vec<LocalMin>,
}

impl MinResult {
    /// The best minimizer as a prefix spec with n atoms before the tail.
    pub fn spec(&self, n: usize) -> Result<PrefixSpec> {
        PrefixSpec::from_measure(&self.best.measure, n)
    }
}

fn merge_atoms(atoms: Vec<(f64, f64)>) -> Result<AtomicMeasure> {
    AtomicMeasure::new(atoms)
}

fn minimize_family(
    fam: &Family,
    mix: &Mixture,
    opts: &OptOptions,
    hint: Option<&AtomicMeasure>,
) -> Result<MinResult> {
    fam.validate()?;
    let d = fam.dim();
    let coords = opts.coords;
    if d == 0 {
        let e = evaluate(fam, coords, mix, &[], &opts.grid)?;
        let lm = LocalMin {
            measure: merge_atoms(e.probe.atoms)?,
            value: e.value,
            residual: 0.0,
            converged: true,
            hits: 1,
        };
        return Ok(MinResult {
            best: lm.clone(),
            found: vec![lm],
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let normal = Normal::new(0.0, 1.5).unwrap();
    let mut starts: Vec<Vec<f64>> = Vec::new();
    if let Some(x) = hint.and_then(|z| fam.encode(coords, z)) {
        starts.push(x);
    }
    starts.push(vec![0.0; d]);
    while starts.len() < opts.starts.max(1) {
        starts.push((0..d).map(|_| normal.sample(&mut rng)).collect());
    }
    starts.truncate(opts.starts.max(1));
    let mut ends: Vec<SimplexOut> = starts
        .iter()
        .map(|x0| {
            nelder_mead(
                |x| value_at(fam, coords, mix, x, &opts.coarse),
                x0,
                0.5,
                opts.max_iter,
                opts.stall,
            )
        })
        .collect();
    ends.sort_by(|a, b| a.value.total_cmp(&b.value));
    let mut found: Vec<(LocalMin, Vec<f64>)> = Vec::new();
    let mut pending: Vec<(SimplexOut, usize)> = Vec::new();
    for e in ends {
        let r = fam.raw(coords, &e.x);
        match pending.iter_mut().find(|(p, _)| {
            let rp = fam.raw(coords, &p.x);
            rp.iter().zip(&r).all(|(a, b)| (a - b).abs() < 1e-3) && (p.value - e.value).abs() < 1e-7
        }) {
            Some(p) => p.1 += 1,
            None => pending.push((e, 1)),
        }
    }
    for (s, hits) in pending {
        let (x, ev, newton_ok) = newton_polish(fam, mix, opts, &s.x)?;
        let r = fam.raw(coords, &x);
        let residual = ev.raw_grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        let lm = LocalMin {
            measure: merge_atoms(ev.probe.atoms)?,
            value: ev.value,
            residual,
            converged: newton_ok && (s.converged || residual < opts.grad_tol),
            hits,
        };
        match found.iter_mut().find(|(f, rf)| {
            rf.iter().zip(&r).all(|(a, b)| (a - b).abs() < 1e-5)
                && (f.value - lm.value).abs() < 1e-9
        }) {
            Some((f, _)) => f.hits += hits,
            None => found.push((lm, r)),
        }
    }
    found.sort_by(|a, b| a.0.value.total_cmp(&b.0.value));
    let found: Vec<LocalMin> = found.into_iter().map(|f| f.0).collect();
    Ok(MinResult {
        best: found[0].clone(),
        found,
    })
}

/// Minimizes 𝒫arisi over Prefix_{n+1}(u; q) with at most `tail_atoms` tail atoms.
pub fn minimize_parisi_prefix(
    mix: &Mixture,
    problem: &PrefixProblem,
    opts: &OptOptions,
) -> Result<MinResult> {
    minimize_family(&Family::Prefix(problem.clone()), mix, opts, None)
}

/// As `minimize_parisi_prefix`, with an extra start encoded from `hint`.
pub fn minimize_parisi_prefix_from(
    mix: &Mixture,
    problem: &PrefixProblem,
    opts: &OptOptions,
    hint: &AtomicMeasure,
) -> Result<MinResult> {
    minimize_family(&Family::Prefix(problem.clone()), mix, opts, Some(hint))
}

/// Unconstrained 𝒫arisi minimizer among (n+1)-atom measures with an atom at 0.
pub fn parisi_inf(mix: &Mixture, atoms: usize, opts: &OptOptions) -> Result<MinResult> {
    if atoms < 2 {
        let z = AtomicMeasure::dirac(0.0)?;
        let value = solve(&z, mix, &opts.grid)?.parisi_value();
        let lm = LocalMin {
            measure: z,
            value,
            residual: 0.0,
            converged: true,
            hits: 1,
        };
        return Ok(MinResult {
            best: lm.clone(),
            found: vec![lm],
        });
    }
    minimize_parisi_prefix(mix, &PrefixProblem::free(1, atoms - 1), opts)
}

/// Prefix free energy 𝒫^{(n)}(u; q): the tail minimization alone.
pub fn prefix_free_energy(
    mix: &Mixture,
    u: &[f64],
    q: &[f64],
    tail_atoms: usize,
    opts: &OptOptions,
) -> Result<MinResult> {
    minimize_parisi_prefix(mix, &PrefixProblem::fixed(u, q, tail_atoms), opts)
}

/// The closed form u_n(Φ_ζ(0, 0) − ½∫₀¹ tξ''ζ − f).
pub fn complexity_closed_form(
    mix: &Mixture,
    spec: &PrefixSpec,
    f: f64,
    grid: &GridSpec,
) -> Result<f64> {
    let z = spec.assemble()?;
    let sol = solve(&z, mix, grid)?;
    Ok(spec.u[spec.n() - 1] * (sol.phi00() - 0.5 * z.int_t_d2_cdf(mix, 0.0, 1.0) - f))
}

/// A critical point of (u, q) ↦ u_n(𝒫^{(n)}(u; q) − f).
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryPoint {
    pub spec: PrefixSpec,
    /// 𝒫arisi(ζ) at the tail-optimal ζ.
    pub parisi: f64,
    pub f: f64,
    /// C_f^{(n)} = u_n(𝒫arisi(ζ) − f).
    pub c_value: f64,
    /// [∂u_k 𝒫 (k < n), 𝒫 + u_n ∂u_n 𝒫 − f, E[M_{q_k}²] − q_k (k ≤ n)].
    pub residuals: Vec<f64>,
    pub converged: bool,
    /// ‖residual‖∞ per iteration.
    pub trace: Vec<f64>,
    pub method: &'static str,
}

/// Settings for `stationary_uq`.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryOptions {
    pub opt: OptOptions,
    pub tail_atoms: usize,
    /// Initial (u, q); defaults to evenly spread values.
    pub start: Option<(Vec<f64>, Vec<f64>)>,
    pub tol: f64,
    pub max_iter: usize,
}

impl StationaryOptions {
    pub fn for_mixture(m: &Mixture) -> Self {
        Self {
            opt: OptOptions::for_mixture(m),
            tail_atoms: 1,
            start: None,
            tol: 1e-9,
            max_iter: 60,
        }
    }
}

/// Tail-optimal ζ and the stationarity residuals at (u, q).
fn stationarity(
    mix: &Mixture,
    u: &[f64],
    q: &[f64],
    f: f64,
    so: &StationaryOptions,
) -> Result<(PrefixSpec, f64, Vec<f64>)> {
    let n = u.len();
    let z = if so.tail_atoms == 1 {
        PrefixSpec::new(u.to_vec(), q.to_vec(), AtomicMeasure::dirac(q[n - 1])?)?.assemble()?
    } else {
        let mut o = so.opt.clone();
        o.starts = o.starts.min(3);
        prefix_free_energy(mix, u, q, so.tail_atoms, &o)?
            .best
            .measure
    };
    let spec = PrefixSpec::from_measure(&z, n)?;
    let pr = probe(mix, &z.atoms(), &so.opt.grid)?;
    let mut res = Vec::with_capacity(2 * n);
    let qq = |k: usize| if k == 0 { 0.0 } else { q[k - 1] };
    for k in 0..n - 1 {
        res.push(pr.h_at(qq(k)) - pr.h_at(q[k]));
    }
    let tail_h: f64 = spec.tail.atoms().iter().map(|&(s, w)| w * pr.h_at(s)).sum();
    res.push(pr.value + u[n - 1] * (pr.h_at(qq(n - 1)) - tail_h) - f);
    for &qk in q {
        res.push(pr.m2_at(qk) - qk);
    }
    Ok((spec, pr.value, res))
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn uq_from_x(x: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let free = vec![None; n];
    let mut it = x.iter().copied();
    let u = fill_increasing(&free, &mut it);
    let q = fill_increasing(&free, &mut it);
    (u, q)
}

/// Damped Newton on the stationarity system of C_f^{(n)}; for n = 1 a nested bisection on
/// the residual signs takes over when Newton fails.
pub fn stationary_uq(
    mix: &Mixture,
    f: f64,
    n: usize,
    so: &StationaryOptions,
) -> Result<StationaryPoint> {
    if n == 0 {
        return Err(Error::Domain("n must be at least 1".into()));
    }
    let free = vec![None; n];
    let (u0, q0) = so.start.clone().unwrap_or_else(|| {
        let u = (1..=n).map(|k| k as f64 / (n + 1) as f64).collect();
        let q = (1..=n).map(|k| k as f64 / (n + 1) as f64).collect();
        (u, q)
    });
    let mut x = unfill_increasing(&free, &u0);
    x.extend(unfill_increasing(&free, &q0));
    let resid = |x: &[f64]| -> Result<Vec<f64>> {
        let (u, q) = uq_from_x(x, n);
        Ok(stationarity(mix, &u, &q, f, so)?.2)
    };
    let mut trace = Vec::new();
    let mut r = resid(&x)?;
    trace.push(inf_norm(&r));
    let mut newton_ok = false;
    for _ in 0..so.max_iter {
        if inf_norm(&r) < so.tol {
            newton_ok = true;
            break;
        }
        let j = fd_jacobian(
            |xx| resid(xx).unwrap_or_else(|_| vec![f64::NAN; 2 * n]),
            &x,
            1e-5,
        );
        let Some(step) = j.clone().lu().solve(&(-DVector::from_column_slice(&r))) else {
            break;
        };
        if step.iter().any(|v| !v.is_finite()) {
            break;
        }
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-4 {
            let xn: Vec<f64> = x
                .iter()
                .zip(step.iter())
                .map(|(a, b)| a + t * b.clamp(-2.0, 2.0))
                .collect();
            if let Ok(rn) = resid(&xn) {
                if inf_norm(&rn) < inf_norm(&r) {
                    x = xn;
                    r = rn;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        trace.push(inf_norm(&r));
        if !moved {
            break;
        }
    }
    let method;
    if newton_ok {
        method = "newton";
    } else if n == 1 {
        method = "bisection";
        if let Some((u, q)) = bisect_uq(mix, f, so, &mut trace)? {
            x = unfill_increasing(&free, &[u]);
            x.extend(unfill_increasing(&free, &[q]));
        }
    } else {
        method = "newton";
    }
    let (u, q) = uq_from_x(&x, n);
    let (spec, parisi, residuals) = stationarity(mix, &u, &q, f, so)?;
    let converged = inf_norm(&residuals) < so.tol.max(1e-7);
    Ok(StationaryPoint {
        c_value: u[n - 1] * (parisi - f),
        spec,
        parisi,
        f,
        residuals,
        converged,
        trace,
        method,
    })
}

fn bisect<F: FnMut(f64) -> Result<f64>>(
    mut g: F,
    mut a: f64,
    mut b: f64,
    ga: f64,
    tol: f64,
) -> Result<f64> {
    let sa = ga.signum();
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if b - a < tol {
            return Ok(m);
        }
        if g(m)?.signum() == sa {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Largest root in q of E[M_q²] − q for fixed u, located by scanning and bisection.
fn q_root(mix: &Mixture, u: f64, so: &StationaryOptions) -> Result<Option<f64>> {
    let g = |q: f64| -> Result<f64> { Ok(stationarity(mix, &[u], &[q], 0.0, so)?.2[1]) };
    let grid: Vec<f64> = (1..40).map(|i| i as f64 / 40.0).collect();
    let vals: Vec<f64> = grid.iter().map(|&q| g(q)).collect::<Result<_>>()?;
    for i in (0..grid.len() - 1).rev() {
        if vals[i].signum() != vals[i + 1].signum() {
            return Ok(Some(bisect(g, grid[i], grid[i + 1], vals[i], 1e-13)?));
        }
    }
    Ok(None)
}

fn bisect_uq(
    mix: &Mixture,
    f: f64,
    so: &StationaryOptions,
    trace: &mut Vec<f64>,
) -> Result<Option<(f64, f64)>> {
    let mut last_q = 0.5;
    let mut g = |u: f64| -> Result<f64> {
        match q_root(mix, u, so)? {
            Some(q) => {
                last_q = q;
                let r = stationarity(mix, &[u], &[q], f, so)?.2;
                trace.push(inf_norm(&r));
                Ok(r[0])
            }
            None => Ok(f64::NAN),
        }
    };
    let us: Vec<f64> = (1..20).map(|i| i as f64 / 20.0).collect();
    let mut prev: Option<(f64, f64)> = None;
    for &u in &us {
        let v = g(u)?;
        if let (Some((pu, pv)), true) = (prev, v.is_finite()) {
            if pv.signum() != v.signum() {
                let ur = bisect(&mut g, pu, u, pv, 1e-13)?;
                g(ur)?;
                return Ok(Some((ur, last_q)));
            }
        }
        if v.is_finite() {
            prev = Some((u, v));
        }
    }
    Ok(None)
}

/// Which mass the Λ constraint fixes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// ζ({0}) = θ.
    Annealed,
    /// ζ([0, sup supp ζ)) = θ.
    Quenched,
}

/// One tabulated point of a complexity curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub axis: f64,
    pub value: f64,
    pub minimizer: Option<AtomicMeasure>,
    pub converged: bool,
    pub residual_max: f64,
    /// θ achieving the infimum (Legendre output only).
    pub argmin: Option<f64>,
    /// The infimum sits on the boundary of the tabulated θ range.
    pub extrapolated: bool,
}

/// Tabulated (θ, Λ(θ)) or (f, −Λ*(f)); values in nats per spin.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityCurve {
    pub points: Vec<CurvePoint>,
}

impl ComplexityCurve {
    pub fn axis(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.axis).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    /// Re-evaluates each stored minimizer; returns the largest deviation of θ·𝒫arisi from the value.
    pub fn reevaluation_gap(
        &self,
        mix: &Mixture,
        grid: &GridSpec,
        variant: Variant,
    ) -> Result<f64> {
        let mut gap: f64 = 0.0;
        for p in &self.points {
            if let Some(z) = &p.minimizer {
                let theta = match variant {
                    Variant::Annealed => z.mass_at(0.0),
                    Variant::Quenched => 1.0 - z.weights().last().copied().unwrap_or(0.0),
                };
                let v = theta * solve(z, mix, grid)?.parisi_value();
                gap = gap.max((v - p.value).abs());
            }
        }
        Ok(gap)
    }

    /// Rows (axis, value, converged, residual_max, spec) with the spec as `loc:weight` pairs.
    pub fn records(&self) -> Vec<[String; 5]> {
        self.points
            .iter()
            .map(|p| {
                let spec = p
                    .minimizer
                    .as_ref()
                    .map(|z| {
                        z.atoms()
                            .iter()
                            .map(|(t, w)| format!("{t:.12}:{w:.12}"))
                            .collect::<Vec<_>>()
                            .join(";")
                    })
                    .unwrap_or_default();
                [
                    format!("{:.12}", p.axis),
                    format!("{:.12}", p.value),
                    p.converged.to_string(),
                    format!("{:.3e}", p.residual_max),
                    spec,
                ]
            })
            .collect()
    }
}

/// Settings for `lambda_curve`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveOptions {
    pub opt: OptOptions,
    /// Tail atoms (annealed) or lower atoms (quenched).
    pub atoms: usize,
}

/// Λ(θ) = θ inf{𝒫arisi(ζ): ζ({0}) = θ} or Λ̃(θ) = θ inf{𝒫arisi(ζ): ζ([0, sup supp ζ)) = θ}.
pub fn lambda_curve(
    mix: &Mixture,
    thetas: &[f64],
    variant: Variant,
    co: &CurveOptions,
) -> Result<ComplexityCurve> {
    if thetas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("θ values must be strictly increasing".into()));
    }
    if thetas.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
        return Err(Error::Domain("θ values must lie in (0, 1]".into()));
    }
    let points = par_map(thetas.len(), |i| -> Result<CurvePoint> {
        let theta = thetas[i];
        if theta == 1.0 {
            if variant == Variant::Quenched {
                return Err(Error::Domain(
                    "the quenched constraint is empty at θ = 1".into(),
                ));
            }
            let z = AtomicMeasure::dirac(0.0)?;
            let v = solve(&z, mix, &co.opt.grid)?.parisi_value();
            return Ok(CurvePoint {
                axis: 1.0,
                value: v,
                minimizer: Some(z),
                converged: true,
                residual_max: 0.0,
                argmin: None,
                extrapolated: false,
            });
        }
        let fam = match variant {
            Variant::Annealed => Family::Prefix(PrefixProblem {
                u: vec![Some(theta)],
                q: vec![None],
                tail_atoms: co.atoms,
            }),
            Variant::Quenched => Family::Top {
                theta,
                lower: co.atoms,
            },
        };
        let r = minimize_family(&fam, mix, &co.opt, None)?;
        Ok(CurvePoint {
            axis: theta,
            value: theta * r.best.value,
            minimizer: Some(r.best.measure.clone()),
            converged: r.best.converged,
            residual_max: r.best.residual,
            argmin: None,
            extrapolated: false,
        })
    });
    Ok(ComplexityCurve {
        points: points.into_iter().collect::<Result<_>>()?,
    })
}

/// −Λ*(f) = inf_θ (Λ(θ) − θf) over the tabulated range, refined by a local parabola.
pub fn legendre_transform(curve: &ComplexityCurve, fs: &[f64]) -> Result<ComplexityCurve> {
    let th = curve.axis();
    let lam = curve.values();
    let n = th.len();
    if n < 20 {
        return Err(Error::Domain(format!(
            "the curve has {n} points; at least 20 are needed"
        )));
    }
    if th.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain(
            "curve axis must be strictly increasing".into(),
        ));
    }
    let scale = lam.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let points = fs
        .iter()
        .map(|&f| {
            let g: Vec<f64> = th.iter().zip(&lam).map(|(t, l)| l - t * f).collect();
            let i = (0..n).min_by(|&a, &b| g[a].total_cmp(&g[b])).unwrap();
            let (mut value, mut argmin, mut extrapolated) = (g[i], th[i], false);
            if i == 0 || i == n - 1 {
                let j = if i == 0 { 1 } else { n - 2 };
                extrapolated = (g[j] - g[i]).abs() > 1e-12 * scale;
            } else {
                let (x0, x1, x2) = (th[i - 1], th[i], th[i + 1]);
                let (y0, y1, y2) = (g[i - 1], g[i], g[i + 1]);
                let d01 = (y1 - y0) / (x1 - x0);
                let d12 = (y2 - y1) / (x2 - x1);
                let a = (d12 - d01) / (x2 - x0);
                if a > 0.0 {
                    let b = d01 - a * (x0 + x1);
                    let xv = (-b / (2.0 * a)).clamp(x0, x2);
                    let yv = y0 + d01 * (xv - x0) + a * (xv - x0) * (xv - x1);
                    if yv <= y1 {
                        value = yv;
                        argmin = xv;
                    }
                }
            }
            CurvePoint {
                axis: f,
                value,
                minimizer: curve.points[i].minimizer.clone(),
                converged: !extrapolated,
                residual_max: curve.points[i].residual_max,
                argmin: Some(argmin),
                extrapolated,
            }
        })
        .collect();
    Ok(ComplexityCurve { points })
}

/// Tangency self-test at `count` interior nodes: f = centered secant slope should return argmin θ_i.
/// Returns (θ_i, f, argmin, pass) with pass meaning |argmin − θ_i| ≤ half the local spacing.
pub fn tangency_self_test(
    curve: &ComplexityCurve,
    count: usize,
) -> Result<Vec<(f64, f64, f64, bool)>> {
    let th = curve.axis();
    let lam = curve.values();
    let n = th.len();
    if n < 20 || count == 0 {
        return Err(Error::Domain(
            "tangency test needs ≥ 20 points and count ≥ 1".into(),
        ));
    }
    let idx: Vec<usize> = (1..=count).map(|k| 1 + k * (n - 3) / (count + 1)).collect();
    let fs: Vec<f64> = idx
        .iter()
        .map(|&i| (lam[i + 1] - lam[i - 1]) / (th[i + 1] - th[i - 1]))
        .collect();
    let lt = legendre_transform(curve, &fs)?;
    Ok(idx
        .iter()
        .zip(&fs)
        .zip(&lt.points)
        .map(|((&i, &f), p)| {
            let a = p.argmin.unwrap();
            let h = 0.5
                * (th[i + 1] - th[i - 1])
                    .min(2.0 * (th[i] - th[i - 1]))
                    .min(2.0 * (th[i + 1] - th[i]));
            (
                th[i],
                f,
                a,
                !p.extrapolated && (a - th[i]).abs() <= 0.5 * h + 1e-12,
            )
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{h_profile_origin, optimality_report};

    fn sk(beta: f64) -> Mixture {
        Mixture::sk(beta).unwrap()
    }

    #[test]
    fn probe_matches_h_profile_and_finite_differences() {
        let mix = Mixture::new(&[(2, 1.0), (4, 0.5)]).unwrap();
        let g = OptOptions::for_mixture(&mix).grid;
        let atoms = vec![(0.0, 0.3), (0.4, 0.3), (0.7, 0.4)];
        let p = probe(&mix, &atoms, &g).unwrap();
        let z = AtomicMeasure::new(atoms.clone()).unwrap();
        let sol = solve(&z, &mix, &g).unwrap();
        let hp = h_profile_origin(&sol, &[]).unwrap();
        for &t in &[0.0, 0.4, 0.7, 1.0] {
            assert!(
                (p.h_at(t) - hp.at(t).unwrap()).abs() < 1e-8,
                "H({t}): {} vs {}",
                p.h_at(t),
                hp.at(t).unwrap()
            );
        }
        let val = |a: &[(f64, f64)]| {
            solve(&AtomicMeasure::new(a.to_vec()).unwrap(), &mix, &g)
                .unwrap()
                .parisi_value()
        };
        let e = 1e-5;
        let mut ap = atoms.clone();
        let mut am = atoms.clone();
        ap[1].0 += e;
        am[1].0 -= e;
        let fd = (val(&ap) - val(&am)) / (2.0 * e);
        assert!((fd - p.d_loc[1]).abs() < 1e-7, "{fd} vs {}", p.d_loc[1]);
        let mut ap = atoms.clone();
        let mut am = atoms.clone();
        ap[1].1 += e;
        ap[2].1 -= e;
        am[1].1 -= e;
        am[2].1 += e;
        let fd = (val(&ap) - val(&am)) / (2.0 * e);
        assert!((fd - (p.d_w[1] - p.d_w[2])).abs() < 1e-7);
    }

    #[test]
    fn coordinates_round_trip() {
        let fam = Family::Prefix(PrefixProblem {
            u: vec![None, Some(0.6)],
            q: vec![None, None],
            tail_atoms: 3,
        });
        for coords in [Coords::StickBreaking, Coords::Softmax] {
            let x = vec![0.3, -0.2, 0.5, 0.1, -0.4, 0.7, 0.2];
            assert_eq!(fam.dim(), x.len());
            let z = AtomicMeasure::new(fam.atoms(&fam.raw(coords, &x))).unwrap();
            let back = fam.encode(coords, &z).unwrap();
            for (a, b) in x.iter().zip(&back) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn replica_symmetric_regime_collapses_to_the_origin() {
        let mix = sk(0.5);
        let mut o = OptOptions::for_mixture(&mix);
        o.starts = 3;
        let r = minimize_parisi_prefix(&mix, &PrefixProblem::free(1, 1), &o).unwrap();
        let rs = std::f64::consts::LN_2 + 0.125;
        assert!((r.best.value - rs).abs() < 1e-6, "{}", r.best.value);
        assert!(
            r.best.measure.mass_at(0.0) > 0.99
                || r.best.measure.locations().last().unwrap() < &1e-3
        );
    }

    #[test]
    fn tail_minimum_is_start_independent_and_nested() {
        let mix = Mixture::new(&[(2, 1.0), (4, 1.0)]).unwrap();
        let mut o = OptOptions::for_mixture(&mix);
        o.starts = 3;
        let mut vals = Vec::new();
        for k in 1..=3 {
            vals.push(prefix_free_energy(&mix, &[0.3], &[0.5], k, &o).unwrap());
        }
        assert!(vals[1].best.value <= vals[0].best.value + 1e-10);
        assert!(vals[2].best.value <= vals[1].best.value + 1e-10);
        for seed in [1, 2, 3] {
            let mut os = o.clone();
            os.seed = seed;
            let v = prefix_free_energy(&mix, &[0.3], &[0.5], 2, &os).unwrap();
            assert!((v.best.value - vals[1].best.value).abs() < 1e-5);
        }
        let mut soft = o.clone();
        soft.coords = Coords::Softmax;
        let v = prefix_free_energy(&mix, &[0.3], &[0.5], 2, &soft).unwrap();
        assert!((v.best.value - vals[1].best.value).abs() < 1e-6);
    }

    #[test]
    fn legendre_of_linear_and_quadratic_curves() {
        let pts = |f: &dyn Fn(f64) -> f64| ComplexityCurve {
            points: (0..25)
                .map(|i| {
                    let t = 0.02 + 0.04 * i as f64;
                    CurvePoint {
                        axis: t,
                        value: f(t),
                        minimizer: None,
                        converged: true,
                        residual_max: 0.0,
                        argmin: None,
                        extrapolated: false,
                    }
                })
                .collect(),
        };
        let lin = pts(&|t| 0.7 * t);
        let lt = legendre_transform(&lin, &[0.5, 0.7, 0.9]).unwrap();
        assert!(lt.points[0].extrapolated && lt.points[2].extrapolated);
        assert!(!lt.points[1].extrapolated && lt.points[1].value.abs() < 1e-12);
        let quad = pts(&|t| (t - 0.5).powi(2) + 0.3 * t);
        for (t, _, a, ok) in tangency_self_test(&quad, 5).unwrap() {
            assert!(ok && (a - t).abs() < 1e-9, "{t} {a}");
        }
        // −Λ*(f) for Λ = (θ − ½)² + 0.3θ at f = 0.3 + 2(θ₀ − ½) is −(θ₀ − ½)² + ... exactly at the nodes.
        let f = 0.3 + 2.0 * (0.42 - 0.5);
        let v = legendre_transform(&quad, &[f]).unwrap().points[0].value;
        let exact = (0.42f64 - 0.5).powi(2) + 0.3 * 0.42 - 0.42 * f;
        assert!((v - exact).abs() < 1e-12);
        assert!(legendre_transform(
            &ComplexityCurve {
                points: lin.points[..10].to_vec()
            },
            &[0.1]
        )
        .is_err());
    }

    #[test]
    fn annealed_endpoint_and_lower_bound() {
        let mix = sk(0.8);
        let mut o = OptOptions::for_mixture(&mix);
        o.starts = 2;
        let co = CurveOptions {
            opt: o.clone(),
            atoms: 1,
        };
        let c = lambda_curve(&mix, &[0.5, 1.0], Variant::Annealed, &co).unwrap();
        let rs = std::f64::consts::LN_2 + 0.32;
        assert!((c.points[1].value - rs).abs() < 1e-8);
        let inf = parisi_inf(&mix, 2, &o).unwrap().best.value;
        assert!(c.points[0].value / 0.5 >= inf - 1e-9);
        assert!(
            c.reevaluation_gap(&mix, &o.grid, Variant::Annealed)
                .unwrap()
                < 1e-6
        );
    }

    #[test]
    fn stationary_point_identities() {
        let mix = sk(1.5);
        let so = StationaryOptions::for_mixture(&mix);
        let mut o = so.opt.clone();
        o.starts = 3;
        let inf = parisi_inf(&mix, 2, &o).unwrap().best.value;
        let f = inf + 0.02;
        let st = stationary_uq(&mix, f, 1, &so).unwrap();
        assert!(st.converged, "{st:?}");
        let closed = complexity_closed_form(&mix, &st.spec, f, &so.opt.grid).unwrap();
        assert!((closed - st.c_value).abs() < 1e-6);
        assert_eq!(st.spec.u[0] * (st.parisi - st.parisi), 0.0);
        let z = st.spec.assemble().unwrap();
        let rep = optimality_report(&z, &mix, &so.opt.grid, f, 1, &[0.5, 0.9]).unwrap();
        assert!(
            rep.energy.abs() < 1e-3 && rep.first_order[1].abs() < 1e-3,
            "{rep:?}"
        );
        assert_eq!(st.c_value > 0.0, f < st.parisi);
    }
}
