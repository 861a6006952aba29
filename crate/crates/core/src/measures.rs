//! Finitely-atomic probability measures on [0, 1] and prefix measures.

use crate::error::{Error, Result};
use crate::mixture::Mixture;

/// Locations closer than this are merged at construction.
pub const MERGE_TOL: f64 = 1e-12;
/// Weights below this are dropped (and the rest renormalized).
pub const DROP_TOL: f64 = 1e-14;

/// A probability measure on [0, 1] with finitely many atoms.
///
/// The cumulative masses are stored alongside the weights so that
/// `cdf` at an atom returns the value the measure was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicMeasure {
    locs: Vec<f64>,
    weights: Vec<f64>,
    cum: Vec<f64>,
}

impl AtomicMeasure {
    /// Builds a measure from `(location, weight)` pairs in any order.
    ///
    /// Total weight must be 1 within 1e-9; it is then renormalized exactly.
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        let mut atoms = atoms;
        for &(t, w) in &atoms {
            if !t.is_finite() || !(-1e-15..=1.0 + 1e-15).contains(&t) {
                return Err(Error::Construction(format!(
                    "atom location {t} outside [0, 1]"
                )));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Construction(format!(
                    "atom weight {w} must be finite and >= 0"
                )));
            }
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (t, w) in atoms {
            let t = t.clamp(0.0, 1.0);
            match merged.last_mut() {
                Some(last) if t - last.0 < MERGE_TOL => last.1 += w,
                _ => merged.push((t, w)),
            }
        }
        let total: f64 = merged.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Construction(format!("total mass {total} is not 1")));
        }
        merged.retain(|a| a.1 >= DROP_TOL);
        let total: f64 = merged.iter().map(|a| a.1).sum();
        let mut cum = Vec::with_capacity(merged.len());
        let mut run = 0.0;
        for a in &merged {
            run += a.1;
            cum.push(run / total);
        }
        if let Some(last) = cum.last_mut() {
            *last = 1.0;
        }
        Self::from_parts(merged.iter().map(|a| a.0).collect(), cum)
    }

    /// Builds a measure from `(location, ζ([0, location]))` breakpoints.
    ///
    /// The final cumulative value must be 1 within 1e-9.
    pub fn from_cdf(points: &[(f64, f64)]) -> Result<Self> {
        let mut locs = Vec::with_capacity(points.len());
        let mut cum: Vec<f64> = Vec::with_capacity(points.len());
        for &(t, c) in points {
            if !(0.0..=1.0).contains(&t) || !c.is_finite() {
                return Err(Error::Construction(format!("bad breakpoint ({t}, {c})")));
            }
            if let Some(&lt) = locs.last() {
                if t <= lt {
                    return Err(Error::Construction(
                        "breakpoint locations must increase".into(),
                    ));
                }
            }
            if c < cum.last().copied().unwrap_or(0.0) {
                return Err(Error::Construction(
                    "cumulative masses must be nondecreasing".into(),
                ));
            }
            locs.push(t);
            cum.push(c);
        }
        match cum.last() {
            Some(&c) if (c - 1.0).abs() <= 1e-9 => {}
            _ => return Err(Error::Construction("cumulative mass must end at 1".into())),
        }
        *cum.last_mut().unwrap() = 1.0;
        // Merge and drop on the cumulative representation.
        let mut l2: Vec<f64> = Vec::new();
        let mut c2: Vec<f64> = Vec::new();
        for (t, c) in locs.into_iter().zip(cum) {
            let prev = c2.last().copied().unwrap_or(0.0);
            if let Some(&lt) = l2.last() {
                if t - lt < MERGE_TOL {
                    *c2.last_mut().unwrap() = c;
                    continue;
                }
            }
            if c - prev < DROP_TOL {
                continue;
            }
            l2.push(t);
            c2.push(c);
        }
        let total = c2.last().copied().unwrap_or(0.0);
        if total <= 0.0 {
            return Err(Error::Construction("measure has no mass".into()));
        }
        if total != 1.0 {
            for c in &mut c2 {
                *c /= total;
            }
            *c2.last_mut().unwrap() = 1.0;
        }
        Self::from_parts(l2, c2)
    }

    fn from_parts(locs: Vec<f64>, cum: Vec<f64>) -> Result<Self> {
        if locs.is_empty() {
            return Err(Error::Construction("measure has no atoms".into()));
        }
        let mut weights = Vec::with_capacity(cum.len());
        let mut prev = 0.0;
        for &c in &cum {
            weights.push(c - prev);
            prev = c;
        }
        Ok(Self { locs, weights, cum })
    }

    /// Unit mass at t.
    pub fn dirac(t: f64) -> Result<Self> {
        Self::new(vec![(t, 1.0)])
    }

    /// `(location, weight)` pairs in increasing location.
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        self.locs
            .iter()
            .copied()
            .zip(self.weights.iter().copied())
            .collect()
    }

    pub fn locations(&self) -> &[f64] {
        &self.locs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.locs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locs.is_empty()
    }

    pub fn min_support(&self) -> f64 {
        self.locs[0]
    }

    pub fn max_support(&self) -> f64 {
        *self.locs.last().unwrap()
    }

    /// ζ([0, t]), right-continuous.
    pub fn cdf(&self, t: f64) -> f64 {
        let k = self.locs.partition_point(|&s| s <= t);
        if k == 0 {
            0.0
        } else {
            self.cum[k - 1]
        }
    }

    /// ζ([0, t)).
    pub fn cdf_left(&self, t: f64) -> f64 {
        let k = self.locs.partition_point(|&s| s < t);
        if k == 0 {
            0.0
        } else {
            self.cum[k - 1]
        }
    }

    /// Weight of the atom at t (within the merge tolerance), else 0.
    pub fn mass_at(&self, t: f64) -> f64 {
        self.locs
            .iter()
            .position(|&s| (s - t).abs() < MERGE_TOL)
            .map_or(0.0, |i| self.weights[i])
    }

    /// Pieces `(l, r, c)` covering [a, b] on which ζ([0, t]) = c for t ∈ [l, r).
    pub fn pieces(&self, a: f64, b: f64) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::new();
        if b <= a {
            return out;
        }
        let mut l = a;
        for &s in &self.locs {
            if s > a && s < b {
                out.push((l, s, self.cdf(l)));
                l = s;
            }
        }
        out.push((l, b, self.cdf(l)));
        out
    }

    /// Exact ∫_a^b ζ([0, t]) dt.
    pub fn int_cdf(&self, a: f64, b: f64) -> f64 {
        self.pieces(a, b).iter().map(|&(l, r, c)| c * (r - l)).sum()
    }

    /// Exact ∫_a^b t ξ''(t) ζ([0, t]) dt.
    pub fn int_t_d2_cdf(&self, m: &Mixture, a: f64, b: f64) -> f64 {
        self.pieces(a, b)
            .iter()
            .map(|&(l, r, c)| c * m.int_t_d2(l, r))
            .sum()
    }

    /// Exact ∫_a^b ξ''(t) ζ([0, t]) dt.
    pub fn int_d2_cdf(&self, m: &Mixture, a: f64, b: f64) -> f64 {
        self.pieces(a, b)
            .iter()
            .map(|&(l, r, c)| c * (m.d1(r) - m.d1(l)))
            .sum()
    }

    /// ζ restricted to (q, 1] plus ζ([0, q]) δ_q.
    pub fn project_at(&self, q: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::Domain(format!(
                "projection point {q} outside [0, 1]"
            )));
        }
        let mut pts = vec![(q, self.cdf(q))];
        for (&t, &c) in self.locs.iter().zip(&self.cum) {
            if t > q {
                pts.push((t, c));
            }
        }
        Self::from_cdf(&pts)
    }

    /// (1 − λ)·self + λ·other.
    pub fn blend(&self, other: &Self, lambda: f64) -> Result<Self> {
        let mut atoms: Vec<(f64, f64)> = self
            .atoms()
            .into_iter()
            .map(|(t, w)| (t, (1.0 - lambda) * w))
            .collect();
        atoms.extend(other.atoms().into_iter().map(|(t, w)| (t, lambda * w)));
        Self::new(atoms)
    }

    /// ζ + ε(δ_plus − δ_minus); requires an atom of weight ≥ ε at `minus`.
    pub fn shift_mass(&self, minus: f64, plus: f64, eps: f64) -> Result<Self> {
        if self.mass_at(minus) < eps {
            return Err(Error::Domain(format!(
                "no atom of mass >= {eps} at {minus}"
            )));
        }
        let mut atoms = self.atoms();
        for a in &mut atoms {
            if (a.0 - minus).abs() < MERGE_TOL {
                a.1 -= eps;
            }
        }
        atoms.push((plus, eps));
        Self::new(atoms)
    }
}

/// ∫_0^1 |ζ_a([0,t]) − ζ_b([0,t])| dt, exact.
pub fn dist(a: &AtomicMeasure, b: &AtomicMeasure) -> f64 {
    let mut pts: Vec<f64> = a.locs.iter().chain(&b.locs).copied().collect();
    pts.push(0.0);
    pts.push(1.0);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts.windows(2)
        .map(|w| (a.cdf(w[0]) - b.cdf(w[0])).abs() * (w[1] - w[0]))
        .sum()
}

/// An (n+1)-atom prefix: ζ = u_1 δ_0 + Σ_{k<n}(u_{k+1} − u_k) δ_{q_k} + (1 − u_n)·tail,
/// with `tail` a probability measure on [q_n, 1] carrying an atom at q_n.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixSpec {
    pub u: Vec<f64>,
    pub q: Vec<f64>,
    pub tail: AtomicMeasure,
}

impl PrefixSpec {
    pub fn new(u: Vec<f64>, q: Vec<f64>, tail: AtomicMeasure) -> Result<Self> {
        let s = Self { u, q, tail };
        s.validate()?;
        Ok(s)
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.u.len();
        if n == 0 || self.q.len() != n {
            return Err(Error::Construction(
                "u and q must be non-empty and of equal length".into(),
            ));
        }
        let increasing =
            |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]) && v.iter().all(|&x| x > 0.0 && x < 1.0);
        if !increasing(&self.u) {
            return Err(Error::Construction(
                "u must be strictly increasing in (0, 1)".into(),
            ));
        }
        if !increasing(&self.q) {
            return Err(Error::Construction(
                "q must be strictly increasing in (0, 1)".into(),
            ));
        }
        let qn = self.q[n - 1];
        if self.tail.min_support() < qn - MERGE_TOL {
            return Err(Error::Construction(format!(
                "tail charges points below q_n = {qn}"
            )));
        }
        if self.tail.mass_at(qn) <= 0.0 {
            return Err(Error::Construction(format!(
                "tail must carry an atom at q_n = {qn}"
            )));
        }
        Ok(())
    }

    /// The assembled measure on [0, 1].
    pub fn assemble(&self) -> Result<AtomicMeasure> {
        self.validate()?;
        let n = self.n();
        let un = self.u[n - 1];
        let mut pts = vec![(0.0, self.u[0])];
        for k in 0..n - 1 {
            pts.push((self.q[k], self.u[k + 1]));
        }
        for (t, c) in self.tail.locs.iter().zip(&self.tail.cum) {
            pts.push((t.max(self.q[n - 1]), un + (1.0 - un) * c));
        }
        AtomicMeasure::from_cdf(&pts)
    }

    /// Recovers the prefix structure of a measure whose first n+1 atoms are 0, q_1, …, q_n.
    pub fn from_measure(z: &AtomicMeasure, n: usize) -> Result<Self> {
        if n == 0 || z.len() < n + 1 || z.locs[0] != 0.0 {
            return Err(Error::Construction(
                "measure lacks an (n+1)-atom prefix".into(),
            ));
        }
        let u: Vec<f64> = (0..n).map(|i| z.cum[i]).collect();
        let q: Vec<f64> = z.locs[1..=n].to_vec();
        let un = u[n - 1];
        let tail_pts: Vec<(f64, f64)> = (n..z.len())
            .map(|i| (z.locs[i], (z.cum[i] - un) / (1.0 - un)))
            .collect();
        Self::new(u, q, AtomicMeasure::from_cdf(&tail_pts)?)
    }

    /// Δ_k = −ζ({q_k}) for k < n and Δ_n = ζ([0, q_n)).
    pub fn deltas(&self) -> Vec<f64> {
        let n = self.n();
        let mut d: Vec<f64> = (0..n - 1).map(|k| -(self.u[k + 1] - self.u[k])).collect();
        d.push(self.u[n - 1]);
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(atoms: &[(f64, f64)]) -> AtomicMeasure {
        AtomicMeasure::new(atoms.to_vec()).unwrap()
    }

    #[test]
    fn assemble_examples() {
        let s = PrefixSpec::new(vec![0.3], vec![0.5], AtomicMeasure::dirac(0.5).unwrap()).unwrap();
        let z = s.assemble().unwrap();
        assert_eq!(z.atoms().len(), 2);
        assert!((z.atoms()[1].1 - 0.7).abs() < 1e-15 && z.atoms()[0] == (0.0, 0.3));

        let s = PrefixSpec::new(
            vec![0.2, 0.5],
            vec![0.3, 0.6],
            AtomicMeasure::dirac(0.6).unwrap(),
        )
        .unwrap();
        let z = s.assemble().unwrap();
        let a = z.atoms();
        assert_eq!(a.len(), 3);
        for (got, want) in a.iter().zip([(0.0, 0.2), (0.3, 0.3), (0.6, 0.5)]) {
            assert!((got.0 - want.0).abs() < 1e-15 && (got.1 - want.1).abs() < 1e-15);
        }
        assert_eq!(z.cdf(0.0), 0.2);
        assert_eq!(z.cdf(0.3), 0.5);
        assert!((z.cdf(0.3) - z.cdf_left(0.3) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn assemble_rejects_bad_tail() {
        assert!(PrefixSpec::new(vec![0.3], vec![0.5], AtomicMeasure::dirac(0.4).unwrap()).is_err());
        assert!(PrefixSpec::new(vec![0.3], vec![0.5], AtomicMeasure::dirac(0.8).unwrap()).is_err());
        assert!(PrefixSpec::new(
            vec![0.5, 0.3],
            vec![0.2, 0.4],
            AtomicMeasure::dirac(0.4).unwrap()
        )
        .is_err());
    }

    #[test]
    fn deltas_telescope() {
        let tail = m(&[(0.6, 0.5), (0.9, 0.5)]);
        let s = PrefixSpec::new(vec![0.2, 0.5, 0.7], vec![0.3, 0.45, 0.6], tail).unwrap();
        let z = s.assemble().unwrap();
        let d = s.deltas();
        for i in 0..3 {
            let tail_sum: f64 = d[i..].iter().sum();
            assert!((tail_sum - z.cdf_left(s.q[i])).abs() < 1e-15);
        }
    }

    #[test]
    fn distances() {
        let d0 = AtomicMeasure::dirac(0.0).unwrap();
        let d1 = AtomicMeasure::dirac(1.0).unwrap();
        assert_eq!(dist(&d0, &d0), 0.0);
        assert!((dist(&d0, &d1) - 1.0).abs() < 1e-15);
        let a = AtomicMeasure::dirac(0.2).unwrap();
        let b = AtomicMeasure::dirac(0.7).unwrap();
        assert!((dist(&a, &b) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn projections() {
        let p = AtomicMeasure::dirac(0.0).unwrap().project_at(0.4).unwrap();
        assert_eq!(p.atoms(), vec![(0.4, 1.0)]);
        let p = m(&[(0.0, 0.3), (0.5, 0.7)]).project_at(0.5).unwrap();
        assert_eq!(p.atoms(), vec![(0.5, 1.0)]);
    }

    #[test]
    fn merge_and_drop() {
        let z = m(&[(0.3, 0.5), (0.3 + 1e-13, 0.5 - 1e-15), (0.8, 1e-15)]);
        assert_eq!(z.len(), 1);
        assert_eq!(z.cdf(0.3), 1.0);
        assert!(AtomicMeasure::new(vec![(0.2, 0.5)]).is_err());
        assert!(AtomicMeasure::new(vec![(1.2, 1.0)]).is_err());
    }

    #[test]
    fn exact_integrals() {
        let z = m(&[(0.0, 0.25), (0.5, 0.75)]);
        assert!((z.int_cdf(0.0, 1.0) - (0.25 * 0.5 + 0.5)).abs() < 1e-15);
        let xi = Mixture::sk(1.0).unwrap();
        // ∫ t·2·ζ: 0.25·[t²]_0^0.5 + [t²]_0.5^1
        assert!((z.int_t_d2_cdf(&xi, 0.0, 1.0) - (0.25 * 0.25 + 0.75)).abs() < 1e-15);
        assert!((z.int_d2_cdf(&xi, 0.2, 0.7) - (0.25 * 0.6 + 0.4)).abs() < 1e-15);
    }

    fn arb_measure() -> impl Strategy<Value = AtomicMeasure> {
        proptest::collection::vec((0.0f64..=1.0, 0.05f64..1.0), 1..6).prop_map(|v| {
            let s: f64 = v.iter().map(|a| a.1).sum();
            AtomicMeasure::new(v.into_iter().map(|(t, w)| (t, w / s)).collect()).unwrap()
        })
    }

    fn arb_prefix() -> impl Strategy<Value = PrefixSpec> {
        (
            1usize..4,
            proptest::collection::vec(0.05f64..1.0, 8),
            proptest::collection::vec(0.05f64..1.0, 8),
            0.05f64..0.95,
        )
            .prop_map(|(n, a, b, w)| {
                let mut u = Vec::new();
                let mut q = Vec::new();
                let (mut su, mut sq) = (0.0, 0.0);
                let (ta, tb): (f64, f64) = (a[..=n].iter().sum(), b[..=n].iter().sum());
                for k in 0..n {
                    su += a[k] / ta;
                    sq += b[k] / tb;
                    u.push(su);
                    q.push(sq);
                }
                let qn = q[n - 1];
                let tail = AtomicMeasure::new(vec![(qn, w), ((qn + 1.0) / 2.0, 1.0 - w)]).unwrap();
                PrefixSpec::new(u, q, tail).unwrap()
            })
    }

    proptest! {
        #[test]
        fn dist_is_a_metric(a in arb_measure(), b in arb_measure(), c in arb_measure()) {
            prop_assert!((dist(&a, &b) - dist(&b, &a)).abs() < 1e-15);
            prop_assert!(dist(&a, &c) <= dist(&a, &b) + dist(&b, &c) + 1e-14);
            prop_assert!(dist(&a, &a) == 0.0);
        }

        #[test]
        fn projection_keeps_cdf_above_q(a in arb_measure(), q in 0.0f64..=1.0) {
            let p = a.project_at(q).unwrap();
            for &t in a.locations().iter().chain([q, 1.0].iter()) {
                if t >= q { prop_assert!((p.cdf(t) - a.cdf(t)).abs() < 1e-15); }
            }
        }

        #[test]
        fn prefix_roundtrip(s in arb_prefix()) {
            let z = s.assemble().unwrap();
            let back = PrefixSpec::from_measure(&z, s.n()).unwrap();
            let z2 = back.assemble().unwrap();
            prop_assert_eq!(z.locations(), z2.locations());
            for (w1, w2) in z.weights().iter().zip(z2.weights()) {
                prop_assert!((w1 - w2).abs() < 1e-14);
            }
            for i in 0..s.n() {
                let at = if i == 0 { 0.0 } else { s.q[i - 1] };
                prop_assert_eq!(z.cdf(at), s.u[i]);
            }
        }

        #[test]
        fn projected_prefixes_are_lipschitz(s in arb_prefix(), q1 in 0.0f64..1.0, q2 in 0.0f64..1.0) {
            let z = s.assemble().unwrap();
            let d = dist(&z.project_at(q1).unwrap(), &z.project_at(q2).unwrap());
            prop_assert!(d <= (q1 - q2).abs() + 1e-14);
        }
    }
}
