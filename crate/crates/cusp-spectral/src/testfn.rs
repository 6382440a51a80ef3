//! Test functions near a pole of `S^d`, written in the chart `x = sin φ·u`
//! as finite sums `Σ R_ℓ(|x|)·p_ℓ(x)` with radial profiles `R_ℓ` and
//! homogeneous polynomials `p_ℓ`.
//!
//! Radial profiles are Taylor-mode closures: `R(ρ0, n)` returns the Taylor
//! series of `R` at `ρ0` to order `n`, so every radial derivative, every jet
//! at the pole and every transpose needed for weak pairings is exact up to
//! rounding.

use crate::poly::{HomPoly, Jet};
use crate::quad::SphereRule;
use crate::series::Series;
use num_complex::Complex64;
use std::fmt;
use std::sync::Arc;

type RadialFn = Arc<dyn Fn(f64, usize) -> Series + Send + Sync>;

/// A smooth even radial profile with known support in `ρ`.
#[derive(Clone)]
pub struct Radial {
    f: RadialFn,
    /// The profile vanishes identically on `[0, inner]`.
    pub inner: f64,
    /// The profile vanishes identically on `[outer, ∞)`.
    pub outer: f64,
    /// The Taylor series at `ρ = 0` converges to the profile on `[0, taylor]`.
    pub taylor: f64,
}

impl fmt::Debug for Radial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Radial(support ⊂ [{}, {}])", self.inner, self.outer)
    }
}

/// `S(t)`: 0 for `t ≤ 0`, 1 for `t ≥ 1`, smooth and flat at both ends.
fn flat_step(t: &Series) -> Series {
    let n = t.order();
    let t0 = t.value().re;
    if t0 <= 0.0 {
        return Series::zero(n);
    }
    if t0 >= 1.0 {
        return Series::constant(1.0.into(), n);
    }
    let one = Series::constant(1.0.into(), n);
    let u = &t.recip() - &(&one - t).recip();
    if u.value().re > 700.0 {
        return Series::zero(n);
    }
    if u.value().re < -700.0 {
        return one;
    }
    if u.value().re > 0.0 {
        let e = u.scale((-1.0).into()).exp();
        &e * &(&one + &e).recip()
    } else {
        (&one + &u.exp()).recip()
    }
}

impl Radial {
    pub fn new(inner: f64, outer: f64, f: impl Fn(f64, usize) -> Series + Send + Sync + 'static) -> Self {
        Radial { f: Arc::new(f), inner, outer, taylor: 1.0 }
    }

    fn with_taylor(mut self, t: f64) -> Self {
        self.taylor = t;
        self
    }

    pub fn taylor_radius(&self) -> f64 {
        self.taylor
    }

    pub fn series(&self, rho0: f64, order: usize) -> Series {
        if rho0 >= self.outer || (rho0 <= self.inner && self.inner > 0.0) {
            return Series::zero(order);
        }
        (self.f)(rho0, order)
    }

    pub fn value(&self, rho: f64) -> Complex64 {
        self.series(rho, 0).value()
    }

    pub fn constant(c: Complex64) -> Self {
        Radial::new(0.0, f64::INFINITY, move |_, n| Series::constant(c, n)).with_taylor(f64::INFINITY)
    }

    /// `exp(-ρ²/(2σ²))`.
    pub fn gaussian(sigma: f64) -> Self {
        let k = -0.5 / (sigma * sigma);
        Radial::new(0.0, f64::INFINITY, move |r, n| {
            let x = Series::variable(r, n);
            (&x * &x).scale(k.into()).exp()
        })
        .with_taylor(f64::INFINITY)
    }

    /// Equal to 1 on `[0, r1]` and 0 on `[r2, ∞)`.
    pub fn cutoff(r1: f64, r2: f64) -> Self {
        let w = r2 - r1;
        Radial::new(0.0, r2, move |r, n| {
            let t = Series::variable((r - r1) / w, n);
            let t = Series { c: t.c.iter().enumerate().map(|(k, c)| if k == 1 { c / w } else { *c }).collect() };
            &Series::constant(1.0.into(), n) - &flat_step(&t)
        })
        .with_taylor(r1)
    }

    /// Smooth bump supported in `(a, b)` equal to 1 on `[a + w, b - w]`.
    pub fn annulus(a: f64, b: f64, w: f64) -> Self {
        Radial::new(a, b, move |r, n| {
            let mk = |shift: f64| {
                let t = Series::variable((r - shift) / w, n);
                Series { c: t.c.iter().enumerate().map(|(k, c)| if k == 1 { c / w } else { *c }).collect() }
            };
            let rise = flat_step(&mk(a));
            let fall = &Series::constant(1.0.into(), n) - &flat_step(&mk(b - w));
            &rise * &fall
        })
        .with_taylor(a)
    }

    /// `|x|^{2k}`.
    pub fn even_power(k: u32) -> Self {
        Radial::new(0.0, f64::INFINITY, move |r, n| {
            let x = Series::variable(r, n);
            let x2 = &x * &x;
            let mut p = Series::constant(1.0.into(), n);
            for _ in 0..k {
                p = &p * &x2;
            }
            p
        })
        .with_taylor(f64::INFINITY)
    }

    /// `g = cos φ = √(1 - ρ²)` on the northern hemisphere.
    pub fn g() -> Self {
        Radial::new(0.0, f64::INFINITY, |r, n| {
            let x = Series::variable(r, n);
            (&Series::constant(1.0.into(), n) - &(&x * &x)).sqrt()
        })
    }

    /// `q^e` with `q = 2 tan(φ/2)/sin φ = 2/(1 + √(1 - ρ²))`.
    pub fn q_power(e: Complex64) -> Self {
        Radial::new(0.0, f64::INFINITY, move |r, n| q_series(r, n).powc(e))
    }

    pub fn mul(&self, o: &Radial) -> Radial {
        let (a, b) = (self.f.clone(), o.f.clone());
        Radial {
            f: Arc::new(move |r, n| &a(r, n) * &b(r, n)),
            inner: self.inner.max(o.inner),
            outer: self.outer.min(o.outer),
            taylor: self.taylor.min(o.taylor),
        }
    }

    pub fn add(&self, o: &Radial) -> Radial {
        let (a, b) = (self.clone(), o.clone());
        Radial {
            inner: self.inner.min(o.inner),
            outer: self.outer.max(o.outer),
            taylor: self.taylor.min(o.taylor),
            f: Arc::new(move |r, n| &a.series(r, n) + &b.series(r, n)),
        }
    }

    pub fn scale(&self, c: Complex64) -> Radial {
        let a = self.f.clone();
        Radial { f: Arc::new(move |r, n| a(r, n).scale(c)), inner: self.inner, outer: self.outer, taylor: self.taylor }
    }

    /// `ρ R'(ρ)`.
    pub fn euler(&self) -> Radial {
        let a = self.f.clone();
        Radial { f: Arc::new(move |r, n| a(r, n + 1).euler(r)), inner: self.inner, outer: self.outer, taylor: self.taylor }
    }

    /// Even Taylor data at the pole: coefficients of `ρ^i`, `i ≤ order`.
    pub fn taylor_at_zero(&self, order: usize) -> Vec<Complex64> {
        self.series(0.0, order).c
    }
}

pub(crate) fn q_series(r: f64, n: usize) -> Series {
    let one = Series::constant(1.0.into(), n);
    let x = Series::variable(r, n);
    let g = (&one - &(&x * &x)).sqrt();
    (&one + &g).recip().scale(2.0.into())
}

/// `Σ_ℓ R_ℓ(|x|)·p_ℓ(x)` in `d` chart variables.
#[derive(Clone, Debug)]
pub struct TestFunction {
    pub d: usize,
    pub terms: Vec<(Radial, HomPoly)>,
}

impl TestFunction {
    pub fn new(d: usize, terms: Vec<(Radial, HomPoly)>) -> Self {
        assert!(terms.iter().all(|(_, p)| p.d == d), "polynomial dimension mismatch");
        TestFunction { d, terms }
    }

    pub fn radial(d: usize, r: Radial) -> Self {
        TestFunction::new(d, vec![(r, HomPoly::one(d))])
    }

    /// Largest radius where the function can be nonzero.
    pub fn outer(&self) -> f64 {
        self.terms.iter().map(|(r, _)| r.outer).fold(0.0, f64::max)
    }

    /// Radius below which the function vanishes identically.
    pub fn inner(&self) -> f64 {
        self.terms.iter().map(|(r, _)| r.inner).fold(f64::INFINITY, f64::min)
    }

    pub fn max_degree(&self) -> usize {
        self.terms.iter().map(|(_, p)| p.deg).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        let rho = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.terms.iter().map(|(r, p)| r.value(rho) * p.eval(x)).sum()
    }

    /// Taylor series in `ε` of `ψ((ρ0 + ε)u)`.
    pub fn ray(&self, u: &[f64], rho0: f64, order: usize) -> Series {
        let mut acc = Series::zero(order);
        for (r, p) in &self.terms {
            let pu = p.eval(u);
            if pu.norm() == 0.0 {
                continue;
            }
            let x = Series::variable(rho0, order);
            let mut xl = Series::constant(pu, order);
            for _ in 0..p.deg {
                xl = &xl * &x;
            }
            acc = &acc + &(&r.series(rho0, order) * &xl);
        }
        acc
    }

    /// The Taylor polynomial at the pole to total degree `order`.
    pub fn jet(&self, order: usize) -> Jet {
        let mut j = Jet::zero(self.d, order);
        for (r, p) in &self.terms {
            if p.deg > order {
                continue;
            }
            let radial = Jet::radial(self.d, order - p.deg, &r.taylor_at_zero(order - p.deg));
            let mut pj = Jet::zero(self.d, order);
            pj.add_hom(p, 1.0.into());
            let widened = Jet { coeffs: widen(&radial, order), ..Jet::zero(self.d, order) };
            j = j.add(&widened.mul(&pj));
        }
        j
    }

    pub fn scale(&self, c: Complex64) -> Self {
        TestFunction::new(self.d, self.terms.iter().map(|(r, p)| (r.scale(c), p.clone())).collect())
    }

    pub fn add(&self, o: &TestFunction) -> Self {
        let mut t = self.terms.clone();
        t.extend(o.terms.iter().cloned());
        TestFunction::new(self.d, t)
    }

    pub fn mul_radial(&self, r: &Radial) -> Self {
        TestFunction::new(self.d, self.terms.iter().map(|(a, p)| (a.mul(r), p.clone())).collect())
    }

    pub fn mul_poly(&self, q: &HomPoly) -> Self {
        TestFunction::new(self.d, self.terms.iter().map(|(a, p)| (a.clone(), p.mul(q))).collect())
    }

    /// The Euler operator `E = x·∇`.
    pub fn euler(&self) -> Self {
        let mut t = Vec::new();
        for (r, p) in &self.terms {
            t.push((r.euler(), p.clone()));
            if p.deg > 0 {
                t.push((r.scale((p.deg as f64).into()), p.clone()));
            }
        }
        TestFunction::new(self.d, t)
    }

    /// Transpose of `E` for the chart Lebesgue measure: `-d ψ - Eψ`.
    pub fn euler_transpose(&self) -> Self {
        self.scale((-(self.d as f64)).into()).add(&self.euler().scale((-1.0).into()))
    }

    /// Sampled radial `C^m` seminorm `max_{k ≤ m} sup |∂_ρ^k ψ(ρu)|` over
    /// rays of a sphere rule and a radial grid.
    pub fn cm_norm(&self, m: usize) -> f64 {
        let rule = SphereRule::new(self.d, 2 * self.max_degree() + 4);
        let outer = self.outer().min(0.999);
        let mut best: f64 = 0.0;
        for u in &rule.nodes {
            for i in 0..=200 {
                let rho = outer * i as f64 / 200.0;
                let s = self.ray(u, rho, m);
                for k in 0..=m {
                    best = best.max(s.derivative_at(k).norm());
                }
            }
        }
        best
    }
}

fn widen(j: &Jet, order: usize) -> Vec<Complex64> {
    let mut out = Jet::zero(j.d, order);
    for (m, c) in j.basis.iter().zip(&j.coeffs) {
        if let Some(i) = out.index_of(m) {
            out.coeffs[i] = *c;
        }
    }
    out.coeffs
}

/// A small library of test functions used throughout the tests.
pub mod library {
    use super::*;

    /// Gaussian of width `sigma` times a cutoff on `[r1, r2]` times `p`.
    pub fn gaussian_poly(d: usize, sigma: f64, r1: f64, r2: f64, p: HomPoly) -> TestFunction {
        TestFunction::new(d, vec![(Radial::gaussian(sigma).mul(&Radial::cutoff(r1, r2)), p)])
    }

    /// Five test functions with different jets at the pole.
    pub fn five(d: usize) -> Vec<TestFunction> {
        let mut e1 = vec![0; d];
        e1[0] = 1;
        let x1 = HomPoly::monomial(&e1);
        let mut v = vec![
            gaussian_poly(d, 0.3, 0.3, 0.6, HomPoly::one(d)),
            gaussian_poly(d, 0.5, 0.2, 0.7, x1.clone()),
            gaussian_poly(d, 0.4, 0.25, 0.55, x1.mul(&x1).scale(Complex64::new(1.0, 0.5))),
        ];
        let mix = TestFunction::new(
            d,
            vec![
                (Radial::cutoff(0.3, 0.6).mul(&Radial::even_power(1)), HomPoly::one(d)),
                (Radial::cutoff(0.3, 0.6).scale(0.7.into()), x1.clone()),
                (Radial::cutoff(0.3, 0.6).scale((-1.3).into()), HomPoly::one(d)),
            ],
        );
        v.push(mix);
        let last = if d >= 2 {
            let mut e2 = vec![0; d];
            e2[1] = 1;
            gaussian_poly(d, 0.35, 0.2, 0.65, HomPoly::monomial(&e2).mul(&x1))
        } else {
            gaussian_poly(d, 0.35, 0.2, 0.65, x1.mul(&x1).mul(&x1))
        };
        v.push(last);
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutoff_is_flat_and_exact_at_ends() {
        let c = Radial::cutoff(0.3, 0.6);
        assert_eq!(c.value(0.1), 1.0.into());
        assert_eq!(c.value(0.7), 0.0.into());
        let s = c.series(0.45, 3);
        assert!((s.value() - 0.5).norm() < 1e-14);
        assert!(s.c[1].re < 0.0);
    }

    #[test]
    fn ray_series_matches_finite_differences() {
        let f = library::five(2).remove(1);
        let u = [0.6, 0.8];
        let s = f.ray(&u, 0.4, 2);
        let h = 1e-5;
        let at = |r: f64| f.eval(&[r * u[0], r * u[1]]);
        let fd = (at(0.4 + h) - at(0.4 - h)) / (2.0 * h);
        assert!((s.derivative_at(1) - fd).norm() < 1e-8);
        assert!((s.value() - at(0.4)).norm() < 1e-15);
    }

    #[test]
    fn jet_reproduces_function_near_zero() {
        for f in library::five(2) {
            let j = f.jet(8);
            let x = [0.03, -0.02];
            let approx: Complex64 = j
                .basis
                .iter()
                .zip(&j.coeffs)
                .map(|(m, c)| c * crate::poly::monomial_value(m, &x))
                .sum();
            assert!((approx - f.eval(&x)).norm() < 1e-12);
        }
    }

    #[test]
    fn euler_against_chain_rule() {
        let f = library::five(2).remove(4);
        let e = f.euler();
        let x = [0.2, 0.1];
        let h = 1e-6;
        let fd = (f.eval(&[x[0] * (1.0 + h), x[1] * (1.0 + h)]) - f.eval(&[x[0] * (1.0 - h), x[1] * (1.0 - h)]))
            / (2.0 * h);
        assert!((e.eval(&x) - fd).norm() < 1e-8);
    }

    #[test]
    fn q_power_at_pole_is_one() {
        assert!((Radial::q_power(Complex64::new(3.3, 0.2)).value(0.0) - 1.0).norm() < 1e-15);
        // q = 2 tan(φ/2)/sin φ
        let phi: f64 = 0.7;
        let q = 2.0 * (phi / 2.0).tan() / phi.sin();
        assert!((Radial::q_power(1.0.into()).value(phi.sin()) - q).norm() < 1e-14);
    }
}
