//! Quadrature rules: Gauss–Legendre panels, adaptive Gauss–Kronrod for
//! complex integrands, composite Simpson on sampled grids, and product rules
//! on spheres `S^{d-1}`.

use gauss_quad::{GaussJacobi, GaussLegendre};
use num_complex::Complex64;
use std::f64::consts::PI;
use std::num::NonZeroUsize;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(NonZeroUsize::new(n.max(1)).unwrap());
    let mut v = rule.as_node_weight_pairs().to_vec();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    v
}

/// Composite Gauss–Legendre rule on `[a, b]` with `panels` equal panels.
pub fn gl_panels(a: f64, b: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let base = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let lo = a + h * p as f64;
        for &(x, w) in &base {
            out.push((lo + 0.5 * h * (x + 1.0), 0.5 * h * w));
        }
    }
    out
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> (Complex64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for i in 0..7 {
        let x = h * XGK[i];
        let s = f(c - x) + f(c + x);
        k += s * WGK[i];
        if i % 2 == 1 {
            g += s * WG[i / 2];
        }
    }
    (k * h, ((k - g) * h).norm())
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: Complex64,
    pub error: f64,
    pub evaluations: usize,
}

const MAX_EVALUATIONS: usize = 400_000;

/// Adaptive bisection with the 7/15 Gauss–Kronrod pair.
pub fn adaptive_gk<F: Fn(f64) -> Complex64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Integral {
    let mut stack = vec![(a, b, 0usize)];
    // Tolerances are relative to a coarse estimate of ∫|f|, so that heavy
    // cancellation does not drive the recursion to its depth limit.
    let absf = |x: f64| Complex64::from(f(x).norm());
    let scale = (0..8)
        .map(|i| {
            let w = (b - a) / 8.0;
            gk15(&absf, a + i as f64 * w, a + (i + 1) as f64 * w).0.re
        })
        .sum::<f64>();
    let mut value = Complex64::new(0.0, 0.0);
    let mut error = 0.0;
    let mut evaluations = 120;
    while let Some((lo, hi, depth)) = stack.pop() {
        let (v, e) = gk15(&f, lo, hi);
        evaluations += 15;
        let local_tol = (abs_tol.max(rel_tol * scale)) * (hi - lo) / (b - a);
        if e <= local_tol || depth >= 40 || evaluations > MAX_EVALUATIONS {
            value += v;
            error += e;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi, depth + 1));
            stack.push((lo, mid, depth + 1));
        }
    }
    Integral { value, error, evaluations }
}

/// Composite Simpson's rule on uniformly spaced samples. An even number of
/// intervals uses Simpson throughout; an odd count closes with the 3/8 rule.
pub fn simpson_uniform(values: &[f64], dx: f64) -> f64 {
    let n = values.len();
    match n {
        0 | 1 => 0.0,
        2 => 0.5 * dx * (values[0] + values[1]),
        3 => dx / 3.0 * (values[0] + 4.0 * values[1] + values[2]),
        _ => {
            let intervals = n - 1;
            let (simpson_end, tail) = if intervals % 2 == 0 { (n - 1, false) } else { (n - 4, true) };
            let mut acc = values[0] + values[simpson_end];
            for (i, v) in values.iter().enumerate().take(simpson_end).skip(1) {
                acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
            }
            let mut total = acc * dx / 3.0;
            if tail {
                let i = simpson_end;
                total += 3.0 * dx / 8.0
                    * (values[i] + 3.0 * values[i + 1] + 3.0 * values[i + 2] + values[i + 3]);
            }
            total
        }
    }
}

/// Simpson weights for uniformly spaced samples, consistent with
/// [`simpson_uniform`].
pub fn simpson_weights(n: usize, dx: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            simpson_uniform(&e, dx)
        })
        .collect()
}

/// Quadrature on the unit sphere `S^{d-1} ⊂ R^d` with respect to the
/// standard surface measure (counting measure on `S^0`).
#[derive(Debug, Clone)]
pub struct SphereRule {
    pub d: usize,
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl SphereRule {
    /// A rule integrating polynomials of degree `<= degree` exactly.
    pub fn new(d: usize, degree: usize) -> Self {
        assert!(d >= 1);
        match d {
            1 => SphereRule { d, nodes: vec![vec![1.0], vec![-1.0]], weights: vec![1.0, 1.0] },
            2 => {
                let n = degree + 1;
                let nodes = (0..n)
                    .map(|k| {
                        let t = 2.0 * PI * k as f64 / n as f64;
                        vec![t.cos(), t.sin()]
                    })
                    .collect();
                SphereRule { d, nodes, weights: vec![2.0 * PI / n as f64; n] }
            }
            _ => {
                let inner = SphereRule::new(d - 1, degree);
                let a = 0.5 * (d as f64 - 3.0);
                let n = degree / 2 + 2;
                let pairs: Vec<(f64, f64)> = if a == 0.0 {
                    gauss_legendre(n)
                } else {
                    let alpha = a.try_into().expect("finite exponent above -1");
                    GaussJacobi::new(NonZeroUsize::new(n).unwrap(), alpha, alpha)
                        .as_node_weight_pairs()
                        .to_vec()
                };
                let mut nodes = Vec::new();
                let mut weights = Vec::new();
                for &(t, w) in &pairs {
                    let st = (1.0 - t * t).max(0.0).sqrt();
                    for (v, wv) in inner.nodes.iter().zip(&inner.weights) {
                        let mut u = vec![t];
                        u.extend(v.iter().map(|x| st * x));
                        nodes.push(u);
                        weights.push(w * wv);
                    }
                }
                SphereRule { d, nodes, weights }
            }
        }
    }

    pub fn integrate<F: FnMut(&[f64]) -> Complex64>(&self, mut f: F) -> Complex64 {
        self.nodes.iter().zip(&self.weights).map(|(u, w)| f(u) * *w).sum()
    }
}

/// Surface area of `S^{d-1}` (2 for the two-point sphere `S^0`).
pub fn sphere_area(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 2.0 * PI / (d as f64 - 2.0) * sphere_area(d - 2),
    }
}

/// Trapezoidal rule for `(1/2πi) ∮ f(λ) dλ` on the circle `|λ - c| = r`.
pub fn circle_average<F: FnMut(Complex64) -> Complex64>(c: Complex64, r: f64, points: usize, mut f: F) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..points {
        let e = Complex64::from_polar(1.0, 2.0 * PI * (k as f64 + 0.5) / points as f64);
        acc += f(c + e * r) * e * r;
    }
    acc / points as f64
}

/// Pairwise (cascade) summation; the result depends only on the order of
/// the input, not on how the caller produced it.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let m = v.len() / 2;
    pairwise_sum(&v[..m]) + pairwise_sum(&v[m..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl_integrates_polynomials() {
        let r = gl_panels(0.0, 2.0, 3, 5);
        let v: f64 = r.iter().map(|(x, w)| w * x.powi(9)).sum();
        assert!((v - 2f64.powi(10) / 10.0).abs() < 1e-11);
    }

    #[test]
    fn adaptive_gk_handles_a_width_peak() {
        let r = adaptive_gk(|x| Complex64::new(1.0 / (1e-4 + x * x), 0.0), -1.0, 1.0, 1e-12, 1e-12);
        let exact = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert!((r.value.re - exact).abs() < 1e-8 * exact, "{} vs {}", r.value.re, exact);
    }

    #[test]
    fn simpson_is_exact_for_cubics() {
        for n in [5usize, 6, 7, 10] {
            let dx = 1.0 / (n - 1) as f64;
            let v: Vec<f64> = (0..n).map(|i| (i as f64 * dx).powi(3)).collect();
            assert!((simpson_uniform(&v, dx) - 0.25).abs() < 1e-14, "n = {n}");
        }
    }

    #[test]
    fn sphere_rules_integrate_moments() {
        // ∫_{S^{d-1}} x_1^2 = |S^{d-1}| / d
        for d in 1..=4 {
            let rule = SphereRule::new(d, 6);
            let v = rule.integrate(|u| Complex64::new(u[0] * u[0], 0.0)).re;
            assert!((v - sphere_area(d) / d as f64).abs() < 1e-12, "d = {d}: {v}");
            let total = rule.integrate(|_| 1.0.into()).re;
            assert!((total - sphere_area(d)).abs() < 1e-12);
        }
    }

    #[test]
    fn circle_average_extracts_residue() {
        let r = circle_average(Complex64::new(0.3, 0.0), 0.1, 32, |z| (2.0 * z).exp() / (z - 0.3));
        assert!((r - (0.6f64).exp()).norm() < 1e-12);
    }
}
