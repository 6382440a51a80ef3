//! Truncated univariate power series with complex coefficients.
//!
//! A [`Series`] of order `n` stores the Taylor coefficients `c_0..=c_n` of a
//! function around some expansion point. Arithmetic is truncated at the
//! smaller order of the two operands. This is the forward-mode Taylor
//! arithmetic used to obtain exact radial derivatives of test functions.

use num_complex::Complex64;
use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub c: Vec<Complex64>,
}

impl Series {
    pub fn zero(order: usize) -> Self {
        Series { c: vec![Complex64::new(0.0, 0.0); order + 1] }
    }

    pub fn constant(v: Complex64, order: usize) -> Self {
        let mut s = Self::zero(order);
        s.c[0] = v;
        s
    }

    /// The series of `x0 + ε`.
    pub fn variable(x0: f64, order: usize) -> Self {
        let mut s = Self::constant(x0.into(), order);
        if order >= 1 {
            s.c[1] = Complex64::new(1.0, 0.0);
        }
        s
    }

    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    pub fn value(&self) -> Complex64 {
        self.c[0]
    }

    /// `k`-th derivative at the expansion point, `k! c_k`.
    pub fn derivative_at(&self, k: usize) -> Complex64 {
        if k > self.order() {
            return Complex64::new(0.0, 0.0);
        }
        self.c[k] * factorial(k)
    }

    pub fn truncate(&self, order: usize) -> Self {
        Series { c: self.c[..=order.min(self.order())].to_vec() }
    }

    pub fn scale(&self, a: Complex64) -> Self {
        Series { c: self.c.iter().map(|x| x * a).collect() }
    }

    /// Formal derivative in ε; the order drops by one (kept at least zero).
    pub fn diff(&self) -> Self {
        if self.order() == 0 {
            return Self::zero(0);
        }
        Series { c: (1..self.c.len()).map(|k| self.c[k] * k as f64).collect() }
    }

    /// `ε d/dε` applied to the series in the shifted variable `x0 + ε`,
    /// i.e. `x f'(x)` expanded around `x0`.
    pub fn euler(&self, x0: f64) -> Self {
        let d = self.diff();
        let x = Series::variable(x0, d.order());
        &x * &d
    }

    pub fn recip(&self) -> Self {
        let n = self.order();
        let a0 = self.c[0];
        let mut b = vec![Complex64::new(0.0, 0.0); n + 1];
        b[0] = 1.0 / a0;
        for k in 1..=n {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 1..=k {
                acc += self.c[j] * b[k - j];
            }
            b[k] = -acc / a0;
        }
        Series { c: b }
    }

    pub fn exp(&self) -> Self {
        let n = self.order();
        let mut b = vec![Complex64::new(0.0, 0.0); n + 1];
        b[0] = self.c[0].exp();
        for k in 1..=n {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 1..=k {
                acc += self.c[j] * b[k - j] * j as f64;
            }
            b[k] = acc / k as f64;
        }
        Series { c: b }
    }

    pub fn ln(&self) -> Self {
        let n = self.order();
        let a0 = self.c[0];
        let mut b = vec![Complex64::new(0.0, 0.0); n + 1];
        b[0] = a0.ln();
        for k in 1..=n {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 1..k {
                acc += b[j] * self.c[k - j] * j as f64;
            }
            b[k] = (self.c[k] - acc / k as f64) / a0;
        }
        Series { c: b }
    }

    /// `self^e` for a constant term off the branch cut of the logarithm.
    pub fn powc(&self, e: Complex64) -> Self {
        (&self.ln()).scale(e).exp()
    }

    pub fn sqrt(&self) -> Self {
        self.powc(Complex64::new(0.5, 0.0))
    }

    /// Evaluate the truncated polynomial at offset `eps`.
    pub fn eval(&self, eps: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for c in self.c.iter().rev() {
            acc = acc * eps + c;
        }
        acc
    }
}

pub fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |a, i| a * i as f64)
}

impl Add for &Series {
    type Output = Series;
    fn add(self, o: &Series) -> Series {
        let n = self.order().min(o.order());
        Series { c: (0..=n).map(|k| self.c[k] + o.c[k]).collect() }
    }
}

impl Sub for &Series {
    type Output = Series;
    fn sub(self, o: &Series) -> Series {
        let n = self.order().min(o.order());
        Series { c: (0..=n).map(|k| self.c[k] - o.c[k]).collect() }
    }
}

impl Mul for &Series {
    type Output = Series;
    fn mul(self, o: &Series) -> Series {
        let n = self.order().min(o.order());
        let mut c = vec![Complex64::new(0.0, 0.0); n + 1];
        for i in 0..=n {
            if self.c[i] == Complex64::new(0.0, 0.0) {
                continue;
            }
            for j in 0..=(n - i) {
                c[i + j] += self.c[i] * o.c[j];
            }
        }
        Series { c }
    }
}

impl Neg for &Series {
    type Output = Series;
    fn neg(self) -> Series {
        self.scale(Complex64::new(-1.0, 0.0))
    }
}

impl Add for Series {
    type Output = Series;
    fn add(self, o: Series) -> Series {
        &self + &o
    }
}

impl Sub for Series {
    type Output = Series;
    fn sub(self, o: Series) -> Series {
        &self - &o
    }
}

impl Mul for Series {
    type Output = Series;
    fn mul(self, o: Series) -> Series {
        &self * &o
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn exp_of_variable_matches_taylor() {
        let s = Series::variable(0.3, 10).exp();
        for k in 0..=10 {
            let want = 0.3f64.exp() / factorial(k);
            assert!((s.c[k] - want).norm() < 1e-14 * want.max(1.0));
        }
    }

    #[test]
    fn log_inverts_exp() {
        let x = Series::variable(0.7, 12);
        let y = x.exp().ln();
        for k in 0..=12 {
            assert!((y.c[k] - x.c[k]).norm() < 1e-13);
        }
    }

    #[test]
    fn recip_times_self_is_one() {
        let x = &Series::variable(1.3, 9).exp() + &Series::constant(c(0.2), 9);
        let p = &x * &x.recip();
        assert!((p.c[0] - 1.0).norm() < 1e-14);
        for k in 1..=9 {
            assert!(p.c[k].norm() < 1e-13);
        }
    }

    #[test]
    fn sqrt_one_minus_x2_derivatives() {
        // sqrt(1 - x^2) at x0 = 0.5: f' = -x/sqrt(1-x^2).
        let x = Series::variable(0.5, 4);
        let one = Series::constant(c(1.0), 4);
        let g = (&one - &(&x * &x)).sqrt();
        assert!((g.value() - 0.75f64.sqrt()).norm() < 1e-15);
        assert!((g.derivative_at(1) + 0.5 / 0.75f64.sqrt()).norm() < 1e-14);
        // f'' = -1/(1-x^2)^{3/2}
        assert!((g.derivative_at(2) + 0.75f64.powf(-1.5)).norm() < 1e-13);
    }

    #[test]
    fn euler_operator() {
        // x d/dx (x^3) = 3 x^3
        let x = Series::variable(0.4, 6);
        let x3 = &(&x * &x) * &x;
        let e = x3.euler(0.4);
        let want = x3.scale(c(3.0));
        for k in 0..=5 {
            assert!((e.c[k] - want.c[k]).norm() < 1e-14);
        }
    }
}
