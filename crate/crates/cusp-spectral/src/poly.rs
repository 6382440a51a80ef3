//! Multi-indices, homogeneous polynomials and truncated multivariate jets.
//!
//! Multi-indices of a fixed total degree are ordered graded-lexicographically:
//! within a degree, larger exponents on earlier variables come first.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

pub type MultiIndex = Vec<usize>;

/// All multi-indices in `d` variables of total degree exactly `n`.
pub fn monomials(d: usize, n: usize) -> Vec<MultiIndex> {
    fn rec(d: usize, n: usize, prefix: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
        if d == 1 {
            prefix.push(n);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in (0..=n).rev() {
            prefix.push(first);
            rec(d - 1, n - first, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if d == 0 {
        if n == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    rec(d, n, &mut Vec::new(), &mut out);
    out
}

/// All multi-indices with total degree at most `k`, degree by degree.
pub fn multi_indices_upto(d: usize, k: usize) -> Vec<MultiIndex> {
    (0..=k).flat_map(|n| monomials(d, n)).collect()
}

pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u64 = 1;
    for i in 0..k {
        r = r * (n - i) as u64 / (i + 1) as u64;
    }
    r
}

pub fn multi_factorial(mu: &[usize]) -> f64 {
    mu.iter().map(|&m| crate::series::factorial(m)).product()
}

pub fn degree(mu: &[usize]) -> usize {
    mu.iter().sum()
}

pub fn monomial_value(mu: &[usize], x: &[f64]) -> f64 {
    mu.iter().zip(x).map(|(&m, &xi)| xi.powi(m as i32)).product()
}

/// Dense homogeneous polynomial of degree `deg` in `d` variables,
/// coefficients over [`monomials`]`(d, deg)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomPoly {
    pub d: usize,
    pub deg: usize,
    pub coeffs: Vec<Complex64>,
}

impl HomPoly {
    pub fn new(d: usize, deg: usize, coeffs: Vec<Complex64>) -> crate::Result<Self> {
        let n = monomials(d, deg).len();
        if coeffs.len() != n {
            return Err(crate::Error::Argument(format!(
                "homogeneous polynomial of degree {deg} in {d} variables needs {n} coefficients, got {}",
                coeffs.len()
            )));
        }
        Ok(HomPoly { d, deg, coeffs })
    }

    pub fn one(d: usize) -> Self {
        HomPoly { d, deg: 0, coeffs: vec![Complex64::new(1.0, 0.0)] }
    }

    /// The single monomial `x^mu`.
    pub fn monomial(mu: &[usize]) -> Self {
        let d = mu.len();
        let deg = degree(mu);
        let coeffs = monomials(d, deg)
            .iter()
            .map(|m| if m.as_slice() == mu { 1.0.into() } else { 0.0.into() })
            .collect();
        HomPoly { d, deg, coeffs }
    }

    pub fn terms(&self) -> impl Iterator<Item = (MultiIndex, Complex64)> + '_ {
        monomials(self.d, self.deg).into_iter().zip(self.coeffs.iter().copied())
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        self.terms().map(|(m, c)| c * monomial_value(&m, x)).sum()
    }

    pub fn scale(&self, a: Complex64) -> Self {
        HomPoly { d: self.d, deg: self.deg, coeffs: self.coeffs.iter().map(|c| c * a).collect() }
    }

    pub fn mul(&self, o: &HomPoly) -> HomPoly {
        let deg = self.deg + o.deg;
        let basis = monomials(self.d, deg);
        let index: HashMap<&MultiIndex, usize> = basis.iter().enumerate().map(|(i, m)| (m, i)).collect();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); basis.len()];
        for (a, ca) in self.terms() {
            for (b, cb) in o.terms() {
                let m: MultiIndex = a.iter().zip(&b).map(|(x, y)| x + y).collect();
                coeffs[index[&m]] += ca * cb;
            }
        }
        HomPoly { d: self.d, deg, coeffs }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.norm() == 0.0)
    }

    /// Parity under `x -> -x` is `(-1)^deg`.
    pub fn parity(&self) -> i32 {
        if self.deg % 2 == 0 {
            1
        } else {
            -1
        }
    }
}

/// Truncated polynomial `sum_{|nu| <= order} c_nu x^nu`.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub d: usize,
    pub order: usize,
    pub basis: Vec<MultiIndex>,
    pub coeffs: Vec<Complex64>,
}

impl Jet {
    pub fn zero(d: usize, order: usize) -> Self {
        let basis = multi_indices_upto(d, order);
        let n = basis.len();
        Jet { d, order, basis, coeffs: vec![Complex64::new(0.0, 0.0); n] }
    }

    pub fn index_of(&self, mu: &[usize]) -> Option<usize> {
        let n = degree(mu);
        if n > self.order {
            return None;
        }
        let offset: usize = (0..n).map(|k| monomials(self.d, k).len()).sum();
        monomials(self.d, n).iter().position(|m| m.as_slice() == mu).map(|p| offset + p)
    }

    pub fn coeff(&self, mu: &[usize]) -> Complex64 {
        self.index_of(mu).map(|i| self.coeffs[i]).unwrap_or_default()
    }

    pub fn add_hom(&mut self, p: &HomPoly, scale: Complex64) {
        if p.deg > self.order {
            return;
        }
        for (m, c) in p.terms() {
            let i = self.index_of(&m).expect("degree checked");
            self.coeffs[i] += c * scale;
        }
    }

    pub fn add(&self, o: &Jet) -> Jet {
        let mut r = self.clone();
        for (i, c) in o.coeffs.iter().enumerate().take(r.coeffs.len()) {
            r.coeffs[i] += c;
        }
        r
    }

    pub fn scale(&self, a: Complex64) -> Jet {
        let mut r = self.clone();
        r.coeffs.iter_mut().for_each(|c| *c *= a);
        r
    }

    pub fn mul(&self, o: &Jet) -> Jet {
        let order = self.order.min(o.order);
        let mut r = Jet::zero(self.d, order);
        let index: HashMap<MultiIndex, usize> =
            r.basis.iter().cloned().enumerate().map(|(i, m)| (m, i)).collect();
        for (a, ca) in self.basis.iter().zip(&self.coeffs) {
            if ca.norm() == 0.0 || degree(a) > order {
                continue;
            }
            for (b, cb) in o.basis.iter().zip(&o.coeffs) {
                if cb.norm() == 0.0 || degree(a) + degree(b) > order {
                    continue;
                }
                let m: MultiIndex = a.iter().zip(b).map(|(x, y)| x + y).collect();
                r.coeffs[index[&m]] += ca * cb;
            }
        }
        r
    }

    /// The jet of a radial function `R(|x|)` from its even Taylor
    /// coefficients `r[2i]` in `|x|`.
    pub fn radial(d: usize, order: usize, taylor: &[Complex64]) -> Jet {
        let mut r = Jet::zero(d, order);
        let mut sq = Jet::zero(d, order);
        for i in 0..d {
            let mut e = vec![0; d];
            e[i] = 2;
            if let Some(ix) = sq.index_of(&e) {
                sq.coeffs[ix] = 1.0.into();
            }
        }
        let mut power = Jet::zero(d, order);
        power.coeffs[0] = 1.0.into();
        let mut k = 0;
        while 2 * k <= order {
            let c = taylor.get(2 * k).copied().unwrap_or_default();
            r = r.add(&power.scale(c));
            power = power.mul(&sq);
            k += 1;
        }
        r
    }

    /// `∂^mu` of the polynomial evaluated at the origin.
    pub fn derivative_at_origin(&self, mu: &[usize]) -> Complex64 {
        self.coeff(mu) * multi_factorial(mu)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn graded_lex_order_in_two_variables() {
        assert_eq!(monomials(2, 2), vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert_eq!(multi_indices_upto(2, 1), vec![vec![0, 0], vec![1, 0], vec![0, 1]]);
    }

    #[test]
    fn jet_multiplication_of_linear_forms() {
        let mut a = Jet::zero(2, 3);
        let i = a.index_of(&[1, 0]).unwrap();
        a.coeffs[i] = 1.0.into();
        a.coeffs[0] = 2.0.into();
        let p = a.mul(&a);
        assert_eq!(p.coeff(&[2, 0]), 1.0.into());
        assert_eq!(p.coeff(&[1, 0]), 4.0.into());
        assert_eq!(p.coeff(&[0, 0]), 4.0.into());
    }

    #[test]
    fn radial_jet_of_squared_norm() {
        // |x|^2 in d = 3.
        let taylor = vec![0.0.into(), 0.0.into(), 1.0.into()];
        let j = Jet::radial(3, 4, &taylor);
        assert_eq!(j.coeff(&[2, 0, 0]), 1.0.into());
        assert_eq!(j.coeff(&[1, 1, 0]), 0.0.into());
    }

    proptest! {
        #[test]
        fn monomial_count_is_binomial(d in 1usize..5, n in 0usize..7) {
            prop_assert_eq!(monomials(d, n).len() as u64, binomial(n + d - 1, d - 1));
        }

        #[test]
        fn hompoly_product_evaluates_as_product(x in -1.0f64..1.0, y in -1.0f64..1.0,
                                                a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let p = HomPoly::new(2, 1, vec![a.into(), b.into()]).unwrap();
            let q = HomPoly::new(2, 2, vec![1.0.into(), b.into(), a.into()]).unwrap();
            let pq = p.mul(&q);
            let lhs = pq.eval(&[x, y]);
            let rhs = p.eval(&[x, y]) * q.eval(&[x, y]);
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }
    }
}
