//! Plateau transition kernels of the Auffinger–Chen diffusion on the solver grid.
//!
//! Across a plateau [t_k, t_{k+1}] with mass α the law of X_{t_{k+1}} given X_{t_k} = x
//! has density φ_σ(y − x)·exp(α(Φ(t_{k+1}, y) − Φ(t_k, x))). The weights of that density
//! at quadrature nodes are exactly the ones the PDE solver uses, so the forward law
//! and the conditional expectations below are consistent with the stored Φ.

use crate::error::{Error, Result};
use crate::parisi_pde::{visit_row, GridSpec, ParisiSolution, Target};
use crate::quadrature::lagrange4;

/// Node weights for an off-grid point: (first index, four weights).
#[inline]
fn spread(g: &GridSpec, y: f64) -> (isize, [f64; 4]) {
    let u = (y + g.half_width) / g.step();
    let i = u.floor();
    (i as isize - 1, lagrange4(u - i))
}

/// Law of X at plateau boundaries, started from weighted points at boundary `start`.
#[derive(Debug, Clone)]
pub struct ForwardLaw {
    start: usize,
    points: Vec<(f64, f64)>,
    nodal: Vec<Vec<f64>>,
    lost: f64,
}

impl ForwardLaw {
    /// X_0 = 0.
    pub fn from_origin(sol: &ParisiSolution) -> Result<Self> {
        Self::new(sol, 0, vec![(0.0, 1.0)])
    }

    /// Starts from Σ w_i δ_{x_i} at boundary `start`; weights must sum to 1.
    pub fn new(sol: &ParisiSolution, start: usize, points: Vec<(f64, f64)>) -> Result<Self> {
        let times = sol.layer_times();
        if start >= times.len() {
            return Err(Error::Domain(format!(
                "start boundary {start} out of range"
            )));
        }
        let total: f64 = points.iter().map(|p| p.1).sum();
        if points.is_empty() || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!(
                "start weights sum to {total}, expected 1"
            )));
        }
        let g = *sol.grid();
        let n = g.points;
        let mut lost = 0.0;
        let mut first = vec![0.0; n];
        for &(x, w) in &points {
            let (i0, lw) = spread(&g, x);
            for (d, &c) in lw.iter().enumerate() {
                let i = i0 + d as isize;
                if (0..n as isize).contains(&i) {
                    first[i as usize] += w * c;
                } else {
                    lost += (w * c).abs();
                }
            }
        }
        let mut nodal = vec![first];
        for k in start..times.len() - 1 {
            let rule = sol.layer_rule(k);
            let alpha = sol.plateau_mass(k);
            let next = sol.slice(k + 1);
            let cur = nodal.last().unwrap();
            let mut out = vec![0.0; n];
            if sol.layer_variance(k) <= 0.0 {
                out.clone_from(cur);
            } else {
                for j in 0..n {
                    let p = cur[j];
                    if p == 0.0 {
                        continue;
                    }
                    // Two passes: the row total is needed to normalize.
                    let sums = visit_row(&g, &rule, next, alpha, j, |_, _, _| {});
                    let scale = p / sums.total;
                    visit_row(&g, &rule, next, alpha, j, |t, w, _| {
                        let w = w * scale;
                        match t {
                            Target::Node(i) => {
                                if (0..n as isize).contains(&i) {
                                    out[i as usize] += w;
                                } else {
                                    lost += w.abs();
                                }
                            }
                            Target::Point(y) => {
                                let (i0, lw) = spread(&g, y);
                                for (d, &c) in lw.iter().enumerate() {
                                    let i = i0 + d as isize;
                                    if (0..n as isize).contains(&i) {
                                        out[i as usize] += w * c;
                                    } else {
                                        lost += (w * c).abs();
                                    }
                                }
                            }
                        }
                    });
                }
            }
            nodal.push(out);
        }
        Ok(Self {
            start,
            points,
            nodal,
            lost,
        })
    }

    pub fn start(&self) -> usize {
        self.start
    }

    /// Mass that left the grid, summed over all layers.
    pub fn lost_mass(&self) -> f64 {
        self.lost
    }

    /// E[f(Φ, ∂xΦ, ∂xxΦ, ∂xxxΦ)(t_k, X_{t_k})] for k ≥ start. The start boundary uses the exact points.
    pub fn expect<F: Fn(f64, [f64; 4]) -> f64>(&self, sol: &ParisiSolution, k: usize, f: F) -> f64 {
        assert!(
            k >= self.start,
            "boundary {k} precedes the start {}",
            self.start
        );
        if k == self.start {
            return self
                .points
                .iter()
                .map(|&(x, w)| w * f(x, sol.eval_at(k, x)))
                .sum();
        }
        let g = sol.grid();
        let s = sol.slice(k);
        self.nodal[k - self.start]
            .iter()
            .enumerate()
            .filter(|(_, &p)| p != 0.0)
            .map(|(j, &p)| p * f(g.x(j), [s.phi[j], s.d1[j], s.d2[j], s.d3[j]]))
            .sum()
    }

    /// Node masses at boundary k > start.
    pub fn nodal(&self, k: usize) -> &[f64] {
        &self.nodal[k - self.start]
    }
}

/// Pulls nodal values of g at boundary `to` back to E[g(X_to) | X_from = x_j] at every node j.
pub fn pull_back(sol: &ParisiSolution, from: usize, to: usize, values: Vec<f64>) -> Vec<f64> {
    assert!(from <= to && to < sol.layer_times().len());
    let g = *sol.grid();
    let n = g.points;
    let mut cur = values;
    for k in (from..to).rev() {
        if sol.layer_variance(k) <= 0.0 {
            continue;
        }
        let rule = sol.layer_rule(k);
        let alpha = sol.plateau_mass(k);
        let next = sol.slice(k + 1);
        let at = |i: isize| cur[i.clamp(0, n as isize - 1) as usize];
        let out: Vec<f64> = (0..n)
            .map(|j| {
                let mut acc = 0.0;
                let sums = visit_row(&g, &rule, next, alpha, j, |t, w, _| {
                    let v = match t {
                        Target::Node(i) => at(i),
                        Target::Point(y) => {
                            let (i0, lw) = spread(&g, y);
                            (0..4).map(|d| lw[d] * at(i0 + d as isize)).sum()
                        }
                    };
                    acc += w * v;
                });
                acc / sums.total
            })
            .collect();
        cur = out;
    }
    cur
}

/// Interpolates nodal values at x with four-point Lagrange weights.
pub fn interpolate(g: &GridSpec, values: &[f64], x: f64) -> f64 {
    let n = values.len() as isize;
    let (i0, lw) = spread(g, x);
    (0..4)
        .map(|d| lw[d] * values[(i0 + d as isize).clamp(0, n - 1) as usize])
        .sum()
}

/// ∂xxΦ(t_k, x) from the representation 1 − ζ([0,t_k))u² − ∫_{[t_k,1]} E[u(t,X_t)² | X_{t_k} = x] ζ(dt).
pub fn xxphi_representation(sol: &ParisiSolution, k: usize, xs: &[f64]) -> Result<Vec<f64>> {
    let times = sol.layer_times();
    let z = sol.measure();
    let q = times[k];
    let g = *sol.grid();
    let mut nodal_sum = vec![0.0; g.points];
    for (kk, &t) in times.iter().enumerate().skip(k + 1) {
        let w = z.mass_at(t);
        if w == 0.0 {
            continue;
        }
        let s = sol.slice(kk);
        let u2: Vec<f64> = s.d1.iter().map(|u| u * u).collect();
        let back = pull_back(sol, k, kk, u2);
        for (a, b) in nodal_sum.iter_mut().zip(back) {
            *a += w * b;
        }
    }
    let below = z.cdf(q);
    Ok(xs
        .iter()
        .map(|&x| {
            let u = sol.eval_at(k, x)[1];
            1.0 - below * u * u - interpolate(&g, &nodal_sum, x)
        })
        .collect())
}
