//! Backward Parisi PDE for atomic order parameters, solved exactly plateau by plateau.
//!
//! On a plateau [a, b] where ζ([0, t]) = α, the Hopf–Cole transform gives
//! Φ(a, x) = α⁻¹ log E[exp(α Φ(b, x + σZ))] with σ² = ξ'(b) − ξ'(a).
//! The x-derivatives follow from the same expectation under the tilted law, so
//! Φ, ∂xΦ, ∂xxΦ and ∂xxxΦ are carried exactly from layer to layer.

use crate::error::{Error, Result};
use crate::measures::{AtomicMeasure, MERGE_TOL};
use crate::mixture::Mixture;
use crate::quadrature::{cubic, gauss_hermite, quintic};

/// Grid widths below this multiple of the step use Gauss–Hermite instead of the lattice rule.
const LATTICE_MIN_SIGMA: f64 = 1.5;
/// Gaussian tail cut in standard deviations.
const TAIL_SIGMAS: f64 = 9.0;
/// Allowed tilted mass beyond the grid at x = 0.
const TAIL_TOL: f64 = 1e-10;

/// Uniform x-grid on [−L, L] and the Gauss–Hermite order for thin layers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub half_width: f64,
    pub points: usize,
    pub quad_nodes: usize,
}

impl GridSpec {
    /// L = 10 + 6√ξ'(1), 4001 points, 64 nodes.
    pub fn for_mixture(m: &Mixture) -> Self {
        Self {
            half_width: 10.0 + 6.0 * m.d1(1.0).sqrt(),
            points: 4001,
            quad_nodes: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(Error::Domain(format!(
                "grid half-width {} must be positive",
                self.half_width
            )));
        }
        if self.points < 257 || self.points.is_multiple_of(2) {
            return Err(Error::Domain(format!(
                "grid points {} must be odd and >= 257",
                self.points
            )));
        }
        if self.quad_nodes < 32 {
            return Err(Error::Domain(format!(
                "quad_nodes {} must be >= 32",
                self.quad_nodes
            )));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        2.0 * self.half_width / (self.points - 1) as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.step()
    }

    /// Index of x = 0.
    pub fn center(&self) -> usize {
        (self.points - 1) / 2
    }
}

/// Φ(t, ·) and its first three x-derivatives at the grid nodes.
#[derive(Debug, Clone)]
pub struct Slice {
    pub phi: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub d3: Vec<f64>,
    terminal: bool,
}

/// (log 2cosh x and its first three derivatives).
pub fn log2cosh(x: f64) -> [f64; 4] {
    let a = x.abs();
    let e = (-2.0 * a).exp();
    let th = x.signum() * (1.0 - e) / (1.0 + e);
    let sech2 = 4.0 * e / ((1.0 + e) * (1.0 + e));
    [a + e.ln_1p(), th, sech2, -2.0 * th * sech2]
}

impl Slice {
    fn terminal(g: &GridSpec) -> Self {
        let n = g.points;
        let mut s = Self {
            phi: vec![0.0; n],
            d1: vec![0.0; n],
            d2: vec![0.0; n],
            d3: vec![0.0; n],
            terminal: true,
        };
        for j in 0..n {
            let v = log2cosh(g.x(j));
            s.phi[j] = v[0];
            s.d1[j] = v[1];
            s.d2[j] = v[2];
            s.d3[j] = v[3];
        }
        s
    }

    /// Values at node j, or beyond the grid by the slope-one asymptote.
    #[inline]
    fn at_index(&self, g: &GridSpec, idx: isize) -> [f64; 4] {
        let n = g.points as isize;
        if (0..n).contains(&idx) {
            let i = idx as usize;
            return [self.phi[i], self.d1[i], self.d2[i], self.d3[i]];
        }
        let x = -g.half_width + idx as f64 * g.step();
        self.extend(g, x)
    }

    #[inline]
    fn extend(&self, g: &GridSpec, x: f64) -> [f64; 4] {
        if self.terminal {
            return log2cosh(x);
        }
        let l = g.half_width;
        if x > 0.0 {
            let e = g.points - 1;
            [self.phi[e] + (x - l), 1.0, 0.0, 0.0]
        } else {
            [self.phi[0] + (-x - l), -1.0, 0.0, 0.0]
        }
    }

    /// Interpolated (Φ, ∂x, ∂xx, ∂xxx) at any x.
    #[inline]
    pub fn eval(&self, g: &GridSpec, x: f64) -> [f64; 4] {
        if self.terminal {
            return log2cosh(x);
        }
        let l = g.half_width;
        if !(x >= -l && x <= l) {
            return self.extend(g, x);
        }
        let h = g.step();
        let u = (x + l) / h;
        let i = (u.floor() as usize).min(g.points - 2);
        let s = u - i as f64;
        let j = i + 1;
        let phi = quintic(
            s,
            h,
            [self.phi[i], self.d1[i], self.d2[i]],
            [self.phi[j], self.d1[j], self.d2[j]],
        );
        let d1 = quintic(
            s,
            h,
            [self.d1[i], self.d2[i], self.d3[i]],
            [self.d1[j], self.d2[j], self.d3[j]],
        );
        let d2 = cubic(s, h, [self.d2[i], self.d3[i]], [self.d2[j], self.d3[j]]);
        let d3 = cubic(
            s,
            h,
            [self.d3[i], self.slope3(g, i)],
            [self.d3[j], self.slope3(g, j)],
        );
        [phi, d1, d2, d3]
    }

    /// Interpolated Φ alone.
    #[inline]
    pub fn phi_at(&self, g: &GridSpec, x: f64) -> f64 {
        if self.terminal {
            return log2cosh(x)[0];
        }
        let l = g.half_width;
        if !(x >= -l && x <= l) {
            return self.extend(g, x)[0];
        }
        let h = g.step();
        let u = (x + l) / h;
        let i = (u.floor() as usize).min(g.points - 2);
        let j = i + 1;
        quintic(
            u - i as f64,
            h,
            [self.phi[i], self.d1[i], self.d2[i]],
            [self.phi[j], self.d1[j], self.d2[j]],
        )
    }

    #[inline]
    fn slope3(&self, g: &GridSpec, i: usize) -> f64 {
        let h = g.step();
        let n = g.points;
        if i == 0 {
            (self.d3[1] - self.d3[0]) / h
        } else if i == n - 1 {
            (self.d3[n - 1] - self.d3[n - 2]) / h
        } else {
            (self.d3[i + 1] - self.d3[i - 1]) / (2.0 * h)
        }
    }
}

/// Quadrature used for one plateau.
#[derive(Debug, Clone)]
pub(crate) enum Rule {
    /// Trapezoid rule on grid nodes j + k·stride, |k| ≤ kmax, with Gaussian weights `g[k + kmax]`.
    Lattice {
        stride: usize,
        kmax: usize,
        g: Vec<f64>,
        total: f64,
    },
    /// Gauss–Hermite nodes σ z_k with interpolation between grid nodes.
    Hermite {
        offsets: Vec<f64>,
        weights: Vec<f64>,
    },
}

impl Rule {
    pub(crate) fn new(grid: &GridSpec, gh: &(Vec<f64>, Vec<f64>), alpha: f64, var: f64) -> Self {
        let h = grid.step();
        let sigma = var.max(0.0).sqrt();
        if sigma >= LATTICE_MIN_SIGMA * h {
            let stride = (((sigma / LATTICE_MIN_SIGMA).min(0.25) / h).floor() as usize).max(1);
            let delta = stride as f64 * h;
            let kmax = ((alpha * var + TAIL_SIGMAS * sigma) / delta).ceil() as usize;
            let g: Vec<f64> = (0..=2 * kmax)
                .map(|i| {
                    let d = (i as f64 - kmax as f64) * delta;
                    (-d * d / (2.0 * var)).exp()
                })
                .collect();
            let total = g.iter().sum();
            Rule::Lattice {
                stride,
                kmax,
                g,
                total,
            }
        } else {
            Rule::Hermite {
                offsets: gh.0.iter().map(|z| sigma * z).collect(),
                weights: gh.1.clone(),
            }
        }
    }
}

/// Where a quadrature node lands relative to the grid.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Target {
    Node(isize),
    Point(f64),
}

/// Solution of the Parisi PDE at every plateau boundary.
#[derive(Debug, Clone)]
pub struct ParisiSolution {
    measure: AtomicMeasure,
    mixture: Mixture,
    grid: GridSpec,
    times: Vec<f64>,
    masses: Vec<f64>,
    slices: Vec<Slice>,
    gh: (Vec<f64>, Vec<f64>),
}

/// Legendre transform h(q, m) = sup_x (xm − Φ(q, x)) and its m-derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Legendre {
    pub h: f64,
    pub dh: f64,
    pub ddh: f64,
}

/// Solves with plateau boundaries at the atoms of ζ and {0, 1}.
pub fn solve(z: &AtomicMeasure, m: &Mixture, g: &GridSpec) -> Result<ParisiSolution> {
    solve_with_splits(z, m, g, &[])
}

/// Solves with additional boundaries at `splits`.
pub fn solve_with_splits(
    z: &AtomicMeasure,
    m: &Mixture,
    g: &GridSpec,
    splits: &[f64],
) -> Result<ParisiSolution> {
    g.validate()?;
    let mut times: Vec<f64> = vec![0.0, 1.0];
    times.extend(z.locations().iter().copied());
    for &s in splits {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::Domain(format!("split point {s} outside [0, 1]")));
        }
        times.push(s);
    }
    times.sort_by(f64::total_cmp);
    let mut merged: Vec<f64> = Vec::with_capacity(times.len());
    for t in times {
        match merged.last() {
            Some(&l) if t - l < MERGE_TOL => {
                // Keep exact atom locations over nearby split points.
                if z.mass_at(t) > 0.0 && t != 1.0 {
                    *merged.last_mut().unwrap() = t;
                }
            }
            _ => merged.push(t),
        }
    }
    if *merged.last().unwrap() != 1.0 {
        *merged.last_mut().unwrap() = 1.0;
    }
    merged[0] = 0.0;
    let times = merged;
    let masses: Vec<f64> = times.iter().map(|&t| z.cdf(t)).collect();
    let gh = gauss_hermite(g.quad_nodes);
    let nb = times.len();
    let mut slices: Vec<Option<Slice>> = vec![None; nb];
    slices[nb - 1] = Some(Slice::terminal(g));
    for k in (0..nb - 1).rev() {
        let var = m.d1(times[k + 1]) - m.d1(times[k]);
        let next = slices[k + 1].as_ref().unwrap();
        let s = layer_step(g, &gh, next, masses[k], var)?;
        slices[k] = Some(s);
    }
    Ok(ParisiSolution {
        measure: z.clone(),
        mixture: m.clone(),
        grid: *g,
        times,
        masses,
        slices: slices.into_iter().map(Option::unwrap).collect(),
        gh,
    })
}

/// Sums returned by [`visit_row`].
#[derive(Debug, Clone, Copy)]
pub(crate) struct RowSums {
    /// Σ w over the row (the weights passed to the visitor are divided by this to normalize).
    pub total: f64,
    /// r with Φ(a, x_j) = Φ(b, x_j) + log1p(r)/α, or Φ(b, x_j) + r when α = 0.
    pub ratio: f64,
}

/// Visits the unnormalized transition weights from node j across one plateau.
///
/// `f(target, weight, values_at_target)` receives Gaussian weight × exp(α(Φ(b,y) − Φ(b,x_j))).
#[inline]
pub(crate) fn visit_row<F: FnMut(Target, f64, [f64; 4])>(
    grid: &GridSpec,
    rule: &Rule,
    next: &Slice,
    alpha: f64,
    j: usize,
    mut f: F,
) -> RowSums {
    let x = grid.x(j);
    let g0 = next.phi[j];
    let mut sum_em = 0.0;
    let mut sum_lin = 0.0;
    let mut visit = |t: Target, gk: f64, v: [f64; 4]| {
        let em = (alpha * (v[0] - g0)).exp_m1();
        sum_em += gk * em;
        sum_lin += gk * (v[0] - g0);
        f(t, gk * (1.0 + em), v);
    };
    let norm = match rule {
        Rule::Lattice {
            stride,
            kmax,
            g,
            total,
        } => {
            let base = j as isize - (*kmax as isize) * (*stride as isize);
            for (i, &gk) in g.iter().enumerate() {
                let idx = base + (i * stride) as isize;
                visit(Target::Node(idx), gk, next.at_index(grid, idx));
            }
            *total
        }
        Rule::Hermite { offsets, weights } => {
            for (&d, &wk) in offsets.iter().zip(weights) {
                visit(Target::Point(x + d), wk, next.eval(grid, x + d));
            }
            1.0
        }
    };
    RowSums {
        total: norm + sum_em,
        ratio: if alpha > 0.0 {
            sum_em / norm
        } else {
            sum_lin / norm
        },
    }
}

fn layer_step(
    grid: &GridSpec,
    gh: &(Vec<f64>, Vec<f64>),
    next: &Slice,
    alpha: f64,
    var: f64,
) -> Result<Slice> {
    let n = grid.points;
    if var <= 0.0 {
        let mut s = next.clone();
        s.terminal = false;
        if next.terminal {
            return Ok(Slice::terminal(grid));
        }
        return Ok(s);
    }
    let rule = Rule::new(grid, gh, alpha, var);
    let mut out = Slice {
        phi: vec![0.0; n],
        d1: vec![0.0; n],
        d2: vec![0.0; n],
        d3: vec![0.0; n],
        terminal: false,
    };
    let center = grid.center();
    let mut tail_center = 0.0;
    for j in 0..n {
        let g1j = next.d1[j];
        let (mut ec, mut ec2, mut ec3, mut e2, mut ecg2, mut e3) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let mut outside = 0.0;
        let sums = visit_row(grid, &rule, next, alpha, j, |t, w, v| {
            let c = v[1] - g1j;
            ec += w * c;
            ec2 += w * c * c;
            ec3 += w * c * c * c;
            e2 += w * v[2];
            ecg2 += w * c * v[2];
            e3 += w * v[3];
            let out_of_grid = match t {
                Target::Node(i) => i < 0 || i >= n as isize,
                Target::Point(x) => x.abs() > grid.half_width,
            };
            if out_of_grid {
                outside += w;
            }
        });
        let inv = 1.0 / sums.total;
        for s in [
            &mut ec,
            &mut ec2,
            &mut ec3,
            &mut e2,
            &mut ecg2,
            &mut e3,
            &mut outside,
        ] {
            *s *= inv;
        }
        if j == center {
            tail_center = outside;
        }
        let r = sums.ratio;
        out.phi[j] = next.phi[j] + if alpha > 0.0 { r.ln_1p() / alpha } else { r };
        out.d1[j] = g1j + ec;
        let var1 = ec2 - ec * ec;
        out.d2[j] = e2 + alpha * var1;
        let cov12 = ecg2 - ec * e2;
        let k3 = ec3 - 3.0 * ec * ec2 + 2.0 * ec * ec * ec;
        out.d3[j] = e3 + 3.0 * alpha * cov12 + alpha * alpha * k3;
    }
    if !next.terminal && tail_center > TAIL_TOL {
        let sigma = var.sqrt();
        return Err(Error::GridTooNarrow {
            current: grid.half_width,
            required: (grid.half_width + alpha * var + TAIL_SIGMAS * sigma)
                .max(1.25 * grid.half_width),
            tail: tail_center,
        });
    }
    Ok(out)
}

impl ParisiSolution {
    pub fn measure(&self) -> &AtomicMeasure {
        &self.measure
    }

    pub fn mixture(&self) -> &Mixture {
        &self.mixture
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Plateau boundaries, ascending from 0 to 1.
    pub fn layer_times(&self) -> &[f64] {
        &self.times
    }

    /// ζ([0, t_k]) for the plateau starting at boundary k.
    pub fn plateau_mass(&self, k: usize) -> f64 {
        self.masses[k]
    }

    pub fn slice(&self, k: usize) -> &Slice {
        &self.slices[k]
    }

    /// σ² = ξ'(t_{k+1}) − ξ'(t_k) for the plateau starting at boundary k.
    pub fn layer_variance(&self, k: usize) -> f64 {
        self.mixture.d1(self.times[k + 1]) - self.mixture.d1(self.times[k])
    }

    pub(crate) fn layer_rule(&self, k: usize) -> Rule {
        Rule::new(&self.grid, &self.gh, self.masses[k], self.layer_variance(k))
    }

    /// Index of a stored boundary.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let i = self.times.partition_point(|&s| s < t - MERGE_TOL);
        if i < self.times.len() && (self.times[i] - t).abs() < MERGE_TOL {
            Ok(i)
        } else {
            Err(Error::NotABoundary(t))
        }
    }

    /// Re-solves with extra split points.
    pub fn refined(&self, splits: &[f64]) -> Result<Self> {
        let mut all: Vec<f64> = self.times.clone();
        all.extend_from_slice(splits);
        solve_with_splits(&self.measure, &self.mixture, &self.grid, &all)
    }

    /// (Φ, ∂xΦ, ∂xxΦ, ∂xxxΦ) at boundary index k.
    #[inline]
    pub fn eval_at(&self, k: usize, x: f64) -> [f64; 4] {
        self.slices[k].eval(&self.grid, x)
    }

    pub fn phi(&self, t: f64, x: f64) -> Result<f64> {
        Ok(self.eval_at(self.index_of(t)?, x)[0])
    }

    pub fn dx_phi(&self, t: f64, x: f64) -> Result<f64> {
        Ok(self.eval_at(self.index_of(t)?, x)[1])
    }

    pub fn dxx_phi(&self, t: f64, x: f64) -> Result<f64> {
        Ok(self.eval_at(self.index_of(t)?, x)[2])
    }

    /// Φ(0, 0).
    pub fn phi00(&self) -> f64 {
        self.slices[0].phi[self.grid.center()]
    }

    /// 𝒫(ζ) = Φ(0,0) − ½∫₀¹ tξ''(t)ζ([0,t]) dt.
    pub fn parisi_value(&self) -> f64 {
        self.phi00() - 0.5 * self.measure.int_t_d2_cdf(&self.mixture, 0.0, 1.0)
    }

    /// Solves ∂xΦ(t_k, x) = m for x.
    pub fn invert_dx(&self, k: usize, m: f64) -> Result<f64> {
        if m.is_nan() || m.abs() >= 1.0 {
            return Err(Error::Domain(format!(
                "|m| = {} must be < 1 (the Legendre derivative diverges)",
                m.abs()
            )));
        }
        if k == self.times.len() - 1 {
            return Ok(m.atanh());
        }
        let l = self.grid.half_width;
        let (mut lo, mut hi) = (-l, l);
        let flo = self.eval_at(k, lo)[1] - m;
        let fhi = self.eval_at(k, hi)[1] - m;
        if flo >= 0.0 || fhi <= 0.0 {
            return Err(Error::Domain(format!(
                "m = {m} is beyond the range of the grid; increase L"
            )));
        }
        let mut x = m.atanh().clamp(lo, hi);
        for _ in 0..200 {
            let v = self.eval_at(k, x);
            let f = v[1] - m;
            if f.abs() < 1e-14 {
                return Ok(x);
            }
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let newton = x - f / v[2];
            x = if newton > lo && newton < hi && v[2] > 0.0 {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo < 1e-15 * (1.0 + x.abs()) {
                break;
            }
        }
        let f = self.eval_at(k, x)[1] - m;
        if f.abs() < 1e-12 {
            Ok(x)
        } else {
            Err(Error::NonConvergence(format!(
                "Legendre inversion at m = {m}: residual {f:.3e}"
            )))
        }
    }

    /// h(q, m), ∂m h = x(m), ∂mm h = 1/∂xxΦ(q, x(m)).
    pub fn legendre_h(&self, q: f64, m: f64) -> Result<Legendre> {
        let k = self.index_of(q)?;
        self.legendre_at(k, m)
    }

    pub fn legendre_at(&self, k: usize, m: f64) -> Result<Legendre> {
        let x = self.invert_dx(k, m)?;
        let v = self.eval_at(k, x);
        Ok(Legendre {
            h: x * m - v[0],
            dh: x,
            ddh: 1.0 / v[2],
        })
    }

    /// Right q-derivative (ξ''(q)/2)(∂xxΦ(q, x(m)) + ζ([0,q]) m²).
    pub fn dq_h(&self, q: f64, m: f64) -> Result<f64> {
        let k = self.index_of(q)?;
        let x = self.invert_dx(k, m)?;
        let v = self.eval_at(k, x);
        Ok(0.5 * self.mixture.d2(q) * (v[2] + self.measure.cdf(q) * m * m))
    }
}
