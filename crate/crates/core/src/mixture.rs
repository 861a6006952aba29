//! The covariance structure function ξ(t) = Σ_p β_p² t^p of a mixed even p-spin model.

use crate::error::{Error, Result};
use std::collections::BTreeMap;

/// Mixed p-spin structure function with even exponents p ≥ 2.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    coeffs: BTreeMap<u32, f64>,
}

impl Mixture {
    /// Builds ξ from `(p, β_p²)` pairs. Repeated exponents are summed.
    pub fn new(pairs: &[(u32, f64)]) -> Result<Self> {
        let mut coeffs = BTreeMap::new();
        for &(p, b2) in pairs {
            if p < 2 || p % 2 == 1 {
                return Err(Error::Construction(format!(
                    "exponent p={p} rejected: only even p >= 2 are allowed"
                )));
            }
            if !(b2.is_finite() && b2 >= 0.0) {
                return Err(Error::Construction(format!(
                    "beta_{p}^2 = {b2} must be finite and >= 0"
                )));
            }
            *coeffs.entry(p).or_insert(0.0) += b2;
        }
        coeffs.retain(|_, b2| *b2 > 0.0);
        if coeffs.is_empty() {
            return Err(Error::Construction(
                "at least one beta_p^2 must be positive".into(),
            ));
        }
        Ok(Self { coeffs })
    }

    /// Sherrington–Kirkpatrick mixture ξ(t) = β² t².
    pub fn sk(beta: f64) -> Result<Self> {
        Self::new(&[(2, beta * beta)])
    }

    /// `(p, β_p²)` pairs in increasing p.
    pub fn coeffs(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.coeffs.iter().map(|(&p, &b)| (p, b))
    }

    /// Largest exponent present.
    pub fn max_degree(&self) -> u32 {
        *self
            .coeffs
            .keys()
            .next_back()
            .expect("non-empty by construction")
    }

    /// d^order ξ / dt^order at t, for order ≤ 4 and t ∈ [−1, 1].
    pub fn eval(&self, t: f64, order: u32) -> Result<f64> {
        if order > 4 {
            return Err(Error::Domain(format!("derivative order {order} > 4")));
        }
        if !(-1.0..=1.0).contains(&t) {
            return Err(Error::Domain(format!("t = {t} outside [-1, 1]")));
        }
        Ok(self.deriv(t, order))
    }

    /// Unchecked derivative of any order at any t.
    pub fn deriv(&self, t: f64, order: u32) -> f64 {
        self.coeffs
            .iter()
            .filter(|(&p, _)| p >= order)
            .map(|(&p, &b2)| {
                let falling: f64 = (0..order).map(|k| f64::from(p - k)).product();
                b2 * falling * t.powi((p - order) as i32)
            })
            .sum()
    }

    pub fn xi(&self, t: f64) -> f64 {
        self.deriv(t, 0)
    }
    pub fn d1(&self, t: f64) -> f64 {
        self.deriv(t, 1)
    }
    pub fn d2(&self, t: f64) -> f64 {
        self.deriv(t, 2)
    }
    pub fn d3(&self, t: f64) -> f64 {
        self.deriv(t, 3)
    }
    pub fn d4(&self, t: f64) -> f64 {
        self.deriv(t, 4)
    }

    /// Exact ∫_a^b t ξ''(t) dt = Σ β_p² (p−1)(b^p − a^p).
    pub fn int_t_d2(&self, a: f64, b: f64) -> f64 {
        self.coeffs
            .iter()
            .map(|(&p, &b2)| b2 * f64::from(p - 1) * (b.powi(p as i32) - a.powi(p as i32)))
            .sum()
    }

    /// D(q) = ξ(q)(ξ'(q) + qξ''(q)) − qξ'(q)².
    pub fn discriminant(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::Domain(format!("q = {q} outside (0, 1)")));
        }
        let (x, x1, x2) = (self.xi(q), self.d1(q), self.d2(q));
        Ok(x * (x1 + q * x2) - q * x1 * x1)
    }

    /// D(q) in the expanded form ½ Σ_{a,b} β_a²β_b²(a−b)² q^{a+b−1}.
    pub fn discriminant_expanded(&self, q: f64) -> f64 {
        let mut s = 0.0;
        for (&a, &ba) in &self.coeffs {
            for (&b, &bb) in &self.coeffs {
                let d = f64::from(a) - f64::from(b);
                s += ba * bb * d * d * q.powi((a + b - 1) as i32);
            }
        }
        0.5 * s
    }

    /// `Some(p)` when exactly one exponent carries weight.
    pub fn is_pure(&self) -> Option<u32> {
        if self.coeffs.len() == 1 {
            self.coeffs.keys().next().copied()
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mixed() -> Mixture {
        Mixture::new(&[(2, 1.0), (4, 1.0)]).unwrap()
    }

    #[test]
    fn values_at_reference_points() {
        let sk = Mixture::new(&[(2, 1.0)]).unwrap();
        assert_eq!(sk.eval(0.0, 0).unwrap(), 0.0);
        assert_eq!(sk.eval(0.0, 1).unwrap(), 0.0);
        assert!((sk.eval(0.5, 0).unwrap() - 0.25).abs() < 1e-15);
        assert!((mixed().eval(0.3, 2).unwrap() - 3.08).abs() < 1e-14);
        assert_eq!(mixed().eval(0.7, 4).unwrap(), 24.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(Mixture::new(&[(3, 1.0)]).is_err());
        assert!(Mixture::new(&[(1, 1.0)]).is_err());
        assert!(Mixture::new(&[(2, 0.0)]).is_err());
        assert!(Mixture::new(&[(2, -1.0)]).is_err());
        assert!(mixed().eval(1.5, 0).is_err());
        assert!(mixed().eval(0.5, 5).is_err());
    }

    #[test]
    fn discriminant_forms() {
        let m = mixed();
        let d = m.discriminant(0.5).unwrap();
        assert!((d - m.discriminant_expanded(0.5)).abs() < 1e-14);
        // (a,b) = (2,4) and (4,2) each contribute 4q⁵, halved.
        assert!((d - 4.0 * 0.5f64.powi(5)).abs() < 1e-14);
        let sk = Mixture::sk(0.7).unwrap();
        assert_eq!(sk.discriminant(0.5).unwrap().abs(), 0.0);
        let small = m.discriminant(1e-6).unwrap();
        assert!(small > 0.0 && small < 1e-20);
    }

    #[test]
    fn purity() {
        assert_eq!(Mixture::new(&[(4, 1.0)]).unwrap().is_pure(), Some(4));
        assert_eq!(mixed().is_pure(), None);
        assert_eq!(Mixture::new(&[(6, 2.0)]).unwrap().is_pure(), Some(6));
    }

    #[test]
    fn antiderivative_matches_quadrature() {
        let m = Mixture::new(&[(2, 0.3), (4, 0.7), (6, 0.2)]).unwrap();
        let (a, b) = (0.2, 0.9);
        let n = 2000;
        let h = (b - a) / n as f64;
        let mut s = 0.0;
        for i in 0..n {
            let t = a + (i as f64 + 0.5) * h;
            s += t * m.d2(t) * h;
        }
        assert!((s - m.int_t_d2(a, b)).abs() < 1e-6);
    }

    fn arb_mixture() -> impl Strategy<Value = Mixture> {
        proptest::collection::vec((1u32..=3, 0.01f64..2.0), 1..4).prop_map(|v| {
            let pairs: Vec<(u32, f64)> = v.into_iter().map(|(k, b)| (2 * k, b)).collect();
            Mixture::new(&pairs).unwrap()
        })
    }

    proptest! {
        #[test]
        fn discriminant_sign_tracks_purity(m in arb_mixture(), q in 0.01f64..0.99) {
            let d = m.discriminant(q).unwrap();
            let e = m.discriminant_expanded(q);
            prop_assert!((d - e).abs() <= 1e-12 * (1.0 + e.abs()));
            if m.is_pure().is_some() { prop_assert!(e == 0.0); } else { prop_assert!(e > 0.0); }
        }

        #[test]
        fn derivatives_match_central_differences(m in arb_mixture(), t in -0.9f64..0.9, k in 0u32..4) {
            let h = 1e-5;
            let fd = (m.deriv(t + h, k) - m.deriv(t - h, k)) / (2.0 * h);
            let exact = m.deriv(t, k + 1);
            prop_assert!((fd - exact).abs() <= 1e-6 * (1.0 + exact.abs()));
        }
    }
}
