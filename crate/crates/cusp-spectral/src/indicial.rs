//! The scalar indicial operator `P_λ = h sin φ ∂_φ + (λ + hd/2) cos φ + hA`
//! on `S^d`: closed-form roots, Jordan structure, Dirac eigendistributions
//! at the North pole and two numerical cross-checks (jet matrices and
//! shooting along `x = cos φ`).

use crate::poly::{binomial, degree, monomials, multi_indices_upto, HomPoly, Jet, MultiIndex};
use crate::quad::adaptive_gk;
use crate::series::factorial;
use crate::testfn::{Radial, TestFunction};
use crate::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Tolerance for deciding that a complex number is an integer.
pub const INTEGER_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelOperator {
    pub d: usize,
    pub h: f64,
    pub lambda: Complex64,
    /// Scalar potential shift `A` from the bundle reduction.
    pub shift: Complex64,
}

impl ModelOperator {
    pub fn new(d: usize, h: f64, lambda: Complex64, shift: Complex64) -> Result<Self> {
        if d == 0 {
            return Err(Error::Argument("d must be at least 1".into()));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Domain(format!("h must be positive, got {h}")));
        }
        Ok(ModelOperator { d, h, lambda, shift })
    }

    pub fn scalar(d: usize, lambda: Complex64) -> Self {
        ModelOperator { d, h: 1.0, lambda, shift: 0.0.into() }
    }

    pub fn with_lambda(&self, lambda: Complex64) -> Self {
        ModelOperator { lambda, ..*self }
    }

    pub fn half_d(&self) -> f64 {
        0.5 * self.d as f64
    }
}

/// `P_λ f` at `φ` from the value `f` and `∂_φ f`.
pub fn apply_p(op: &ModelOperator, f: Complex64, df_dphi: Complex64, phi: f64) -> Complex64 {
    let h = op.h;
    df_dphi * (h * phi.sin()) + f * (op.lambda + h * op.half_d()) * phi.cos() + f * (op.shift * h)
}

/// The homogeneous solution `(sin φ)^{-d/2-λ/h}(2 tan(φ/2))^{s-A}` of
/// `(P_λ - hs)f = 0` on `0 < φ < π`, with its `φ`-derivative.
pub fn homogeneous_solution(op: &ModelOperator, s: Complex64, phi: f64) -> (Complex64, Complex64) {
    let a = -(op.lambda / op.h + op.half_d());
    let b = s - op.shift;
    let f = Complex64::from(phi.sin()).powc(a) * Complex64::from(2.0 * (0.5 * phi).tan()).powc(b);
    let dlog = a * (phi.cos() / phi.sin()) + b / phi.sin();
    (f, f * dlog)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Branch {
    /// `λ = +h(s - A + d/2 + n)`: Dirac jets at the North pole.
    Plus,
    /// `λ = -h(s - A + d/2 + n)`: homogeneous distributions smooth at the South pole.
    Minus,
}

impl Branch {
    pub fn sign(&self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndicialRoot {
    pub branch: Branch,
    pub n: usize,
    /// Slope `a = ±h` in `λ = a s + b`.
    pub a: f64,
    pub b: Complex64,
    pub multiplicity: u64,
    pub jordan_index: u8,
}

impl IndicialRoot {
    pub fn lambda(&self, s: Complex64) -> Complex64 {
        s * self.a + self.b
    }

    pub fn sign(&self) -> i32 {
        self.branch.sign() as i32
    }
}

/// `m = -(2(s - A) + d)` when it is a non-negative integer.
pub fn crossing_level(op: &ModelOperator, s: Complex64) -> Option<usize> {
    let m = -(2.0 * (s - op.shift) + op.d as f64);
    let r = m.re.round();
    if (m - r).norm() < INTEGER_TOL && r >= 0.0 {
        Some(r as usize)
    } else {
        None
    }
}

/// Index of the Jordan block carried by the root at level `n`: 2 when the
/// root coincides with a root of the opposite branch at level `n'` and the
/// pair has matching parity (`n + n'` even), 1 otherwise.
pub fn jordan_index(op: &ModelOperator, s: Complex64, n: usize) -> u8 {
    match crossing_level(op, s) {
        Some(m) if n <= m && m % 2 == 0 => 2,
        _ => 1,
    }
}

pub fn indicial_roots(op: &ModelOperator, s: Complex64, n_max: usize) -> Vec<IndicialRoot> {
    let mut out = Vec::with_capacity(2 * (n_max + 1));
    for branch in [Branch::Plus, Branch::Minus] {
        for n in 0..=n_max {
            let sg = branch.sign();
            out.push(IndicialRoot {
                branch,
                n,
                a: sg * op.h,
                b: (Complex64::from(op.half_d() + n as f64) - op.shift) * (sg * op.h),
                multiplicity: binomial(n + op.d - 1, op.d - 1),
                jordan_index: jordan_index(op, s, n),
            });
        }
    }
    out
}

/// Roots closest to `lambda` among levels up to `n_max`, with distance.
pub fn nearest_root(op: &ModelOperator, s: Complex64, lambda: Complex64, n_max: usize) -> (IndicialRoot, f64) {
    indicial_roots(op, s, n_max)
        .into_iter()
        .map(|r| {
            let dist = (r.lambda(s) - lambda).norm();
            (r, dist)
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one root")
}

/// Weighted Dirac jet `Σ_μ c_μ q^{e} δ^{(μ)}` at the North pole, with `q`
/// the conjugating factor `2 tan(φ/2)/sin φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiracJet {
    pub d: usize,
    pub coeffs: Vec<(MultiIndex, Complex64)>,
    pub q_exponent: Complex64,
}

impl DiracJet {
    pub fn order(&self) -> usize {
        self.coeffs.iter().map(|(m, _)| degree(m)).max().unwrap_or(0)
    }

    /// `⟨Σ c_μ q^e δ^{(μ)}, ψ⟩ = Σ c_μ (-1)^{|μ|} ∂^μ(q^e ψ)(0)`.
    pub fn pair(&self, psi: &TestFunction) -> Complex64 {
        let k = self.order();
        let weighted = psi.mul_radial(&Radial::q_power(self.q_exponent));
        let j = weighted.jet(k);
        self.coeffs
            .iter()
            .map(|(m, c)| {
                let sign = if degree(m) % 2 == 0 { 1.0 } else { -1.0 };
                c * sign * j.derivative_at_origin(m)
            })
            .sum()
    }
}

/// Weak representation of an eigendistribution.
#[derive(Debug, Clone)]
pub enum DistributionRep {
    Dirac(DiracJet),
    HomogeneousSouth(crate::hadamard::HomogeneousSouth),
    Jordan(crate::hadamard::JordanVector),
}

impl DistributionRep {
    pub fn pair(&self, psi: &TestFunction) -> Result<Complex64> {
        match self {
            DistributionRep::Dirac(j) => Ok(j.pair(psi)),
            DistributionRep::HomogeneousSouth(f) => f.pair(psi),
            DistributionRep::Jordan(v) => v.pair(psi),
        }
    }
}

/// Selects one eigendistribution within a root's eigenspace.
#[derive(Debug, Clone, PartialEq)]
pub enum Selector {
    /// Multi-index of the Dirac jet (Plus branch).
    Mu(MultiIndex),
    /// Homogeneous polynomial of degree `n` (Minus branch).
    Upsilon(HomPoly),
}

/// The transpose `(P_λ - hs)^t ψ` for the chart Lebesgue measure near the
/// North pole: `-h(d gψ + E(gψ)) + (λ + hd/2) gψ - h(s - A)ψ`.
pub fn p_minus_hs_transpose(op: &ModelOperator, s: Complex64, psi: &TestFunction) -> TestFunction {
    let g = psi.mul_radial(&Radial::g());
    let h = op.h;
    g.euler_transpose()
        .scale(h.into())
        .add(&g.scale(op.lambda + h * op.half_d()))
        .add(&psi.scale(-(s - op.shift) * h))
}

/// `s` determined by a root relation at the operator's `λ`.
pub fn s_of_root(op: &ModelOperator, branch: Branch, n: usize) -> Complex64 {
    op.lambda / (branch.sign() * op.h) - (op.half_d() + n as f64) + op.shift
}

/// An eigendistribution for the root `(branch, n)` through `op.lambda`.
pub fn eigendistribution(op: &ModelOperator, branch: Branch, n: usize, sel: &Selector) -> Result<DistributionRep> {
    let s = s_of_root(op, branch, n);
    match (branch, sel) {
        (Branch::Plus, Selector::Mu(mu)) => {
            if mu.len() != op.d || degree(mu) != n {
                return Err(Error::Argument(format!("multi-index {mu:?} does not have degree {n} in {} variables", op.d)));
            }
            Ok(DistributionRep::Dirac(DiracJet {
                d: op.d,
                coeffs: vec![(mu.clone(), 1.0.into())],
                q_exponent: s - op.shift,
            }))
        }
        (Branch::Minus, Selector::Upsilon(u)) => {
            if u.d != op.d || u.deg != n {
                return Err(Error::Argument(format!("Υ must have degree {n} in {} variables", op.d)));
            }
            Ok(DistributionRep::HomogeneousSouth(crate::hadamard::HomogeneousSouth::new(*op, u.clone())))
        }
        _ => Err(Error::Argument("selector does not match the branch".into())),
    }
}

/// Matrix of `P_λ` on `span{δ^{(μ)} : |μ| ≤ K}` (columns are images),
/// basis ordered by degree then graded-lexicographically.
pub fn jet_matrix(op: &ModelOperator, k: usize) -> DMatrix<Complex64> {
    let basis = multi_indices_upto(op.d, k);
    let n = basis.len();
    let gj = TestFunction::radial(op.d, Radial::g()).jet(k);
    let mut m = DMatrix::zeros(n, n);
    for (col, mu) in basis.iter().enumerate() {
        let diag = op.lambda + op.h * op.half_d() - op.h * (degree(mu) + op.d) as f64;
        for (row, nu) in basis.iter().enumerate() {
            if !nu.iter().zip(mu).all(|(a, b)| a <= b) {
                continue;
            }
            // g·δ^{(μ)} = Σ_{ν ≤ μ} C(μ,ν) (-1)^{|μ-ν|} ∂^{μ-ν}g(0) δ^{(ν)}
            let diff: MultiIndex = mu.iter().zip(nu).map(|(a, b)| a - b).collect();
            let c: f64 = mu.iter().zip(nu).map(|(a, b)| binomial(*a, *b) as f64).product();
            let sign = if degree(&diff) % 2 == 0 { 1.0 } else { -1.0 };
            m[(row, col)] += gj.derivative_at_origin(&diff) * c * sign * diag;
        }
        m[(col, col)] += op.shift * op.h;
    }
    m
}

#[derive(Debug, Clone)]
pub struct JetSpectrum {
    /// Eigenvalues of the jet matrix, i.e. the values of `hs` for which
    /// `op.lambda` is a root, sorted by real part.
    pub eigenvalues: Vec<Complex64>,
    /// The matching Plus-branch roots `λ_n(s)` at the requested `s`.
    pub roots: Vec<Complex64>,
}

pub fn numeric_roots_jet(op: &ModelOperator, s: Complex64, k: usize) -> Result<JetSpectrum> {
    let m = jet_matrix(op, k);
    let eig = m
        .clone()
        .schur()
        .eigenvalues()
        .ok_or_else(|| Error::Internal("Schur decomposition failed".into()))?;
    let mut eigenvalues: Vec<Complex64> = eig.iter().copied().collect();
    eigenvalues.sort_by(|a, b| b.re.total_cmp(&a.re).then(a.im.total_cmp(&b.im)));
    // Each eigenvalue e(λ) is λ plus a constant, so λ_n(s) = hs - e(λ) + λ.
    let roots = eigenvalues.iter().map(|e| s * op.h - e + op.lambda).collect();
    Ok(JetSpectrum { eigenvalues, roots })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShootingVerdict {
    pub is_root: bool,
    /// Growth exponent of `w` in `(1 - x)` at `x = +1`.
    pub exponent_north: Complex64,
    /// Growth exponent of `w` in `(1 + x)` at `x = -1`.
    pub exponent_south: Complex64,
    /// Closed-form counterparts of the two exponents.
    pub exact_north: Complex64,
    pub exact_south: Complex64,
    pub matched: Option<(Branch, usize)>,
}

fn near_nonneg_even(z: Complex64, parity_step: f64, tol: f64) -> Option<usize> {
    let k = z.re / parity_step;
    let r = k.round();
    if r >= 0.0 && (z - r * parity_step).norm() < tol {
        Some(r as usize)
    } else {
        None
    }
}

/// Integrate `(-h(1 - x²)∂_x + (λ + h(d/2 + m))x - h(s - A))w = 0` from
/// `x = -(1 - 10⁻⁶)` to `x = 1 - 10⁻⁶` and read off the endpoint exponents.
pub fn numeric_roots_shooting(op: &ModelOperator, s: Complex64, m: usize) -> Result<ShootingVerdict> {
    let c = op.lambda / op.h + op.half_d() + m as f64;
    let st = s - op.shift;
    let x0: f64 = 1.0 - 1e-6;
    let sigma_end = x0.atanh();
    let exact_south = -(c + st) * 0.5;
    let exact_north = (st - c) * 0.5;
    // Two-term Frobenius seed at x = -x0: w ≈ (1+x)^{a}(1 + b(1+x)).
    let e = 1.0 - x0;
    let b1 = (c + exact_south) * 0.5;
    let seed = exact_south * e.ln() + (Complex64::from(1.0) + b1 * e).ln();
    let stations = [-sigma_end, -sigma_end + 0.5, -sigma_end + 1.0, sigma_end - 1.0, sigma_end - 0.5, sigma_end];
    // dL/dσ = c tanh σ - s̃ for L = log w, x = tanh σ; the right side does
    // not involve L, so each leg is a quadrature.
    let rhs = |sig: f64| c * sig.tanh() - st;
    let mut values = vec![seed];
    let mut l = seed;
    for w in stations.windows(2) {
        let leg = adaptive_gk(rhs, w[0], w[1], 1e-14, 1e-14);
        if !leg.error.is_finite() {
            return Err(Error::Integration(format!("shooting from σ = {}", w[0])));
        }
        l += leg.value;
        values.push(l);
    }
    // Fit L = p - 2a σ + q e^{-2σ} at the right end and
    // L = p + 2a σ + q e^{2σ} at the left end.
    let fit = |sig: [f64; 3], l: [Complex64; 3], mirror: f64| -> Complex64 {
        let rows: Vec<[f64; 3]> = sig.iter().map(|&t| [1.0, -2.0 * mirror * t, (-2.0 * mirror * t).exp()]).collect();
        let a = nalgebra::Matrix3::from_fn(|i, j| rows[i][j]);
        let inv = a.try_inverse().expect("distinct fit stations");
        let re = inv * nalgebra::Vector3::new(l[0].re, l[1].re, l[2].re);
        let im = inv * nalgebra::Vector3::new(l[0].im, l[1].im, l[2].im);
        Complex64::new(re[1], im[1])
    };
    let exponent_south = fit(
        [stations[0], stations[1], stations[2]],
        [values[0], values[1], values[2]],
        -1.0,
    );
    let exponent_north = fit(
        [stations[3], stations[4], stations[5]],
        [values[3], values[4], values[5]],
        1.0,
    );
    // Regular at the South pole: w analytic at x = -1 (a_- ∈ Z≥0), the
    // Minus root at level m + 2a_-. Dirac homogeneity at the North pole:
    // ρ-exponent e_N = 2a_+ + m with -d - e_N - m ∈ 2Z≥0, the Plus root at
    // level -d - e_N.
    let tol = 1e-6;
    let south = near_nonneg_even(exponent_south, 1.0, tol).map(|k| (Branch::Minus, m + 2 * k));
    let dirac = -(op.d as f64) - exponent_north * 2.0 - 2.0 * m as f64;
    let north = near_nonneg_even(dirac, 2.0, tol).map(|k| (Branch::Plus, m + 2 * k));
    let matched = south.or(north);
    Ok(ShootingVerdict { is_root: matched.is_some(), exponent_north, exponent_south, exact_north, exact_south, matched })
}

/// Monomial count of degree `n` in `d` variables by enumeration.
pub fn brute_force_multiplicity(d: usize, n: usize) -> usize {
    monomials(d, n).len()
}

/// `n!` as an exact float for small `n`.
pub fn fact(n: usize) -> f64 {
    factorial(n)
}

/// `⟨D, ψ⟩` for the jet representation of `ρ∂_ρ δ^{(μ)}`.
pub fn euler_on_dirac(d: usize, mu: &[usize], psi: &TestFunction) -> Complex64 {
    let j = DiracJet { d, coeffs: vec![(mu.to_vec(), 1.0.into())], q_exponent: 0.0.into() };
    j.pair(&psi.euler_transpose())
}

/// Jet of a test function, re-exported for callers that only need Taylor
/// data at the pole.
pub fn pole_jet(psi: &TestFunction, order: usize) -> Jet {
    psi.jet(order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testfn::library;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn apply_p_examples() {
        let op = ModelOperator::scalar(1, c(0.3));
        assert!(apply_p(&op, c(1.0), c(0.0), std::f64::consts::FRAC_PI_2).norm() < 1e-16);
        let op = ModelOperator::scalar(2, c(1.0));
        assert_eq!(apply_p(&op, c(1.0), c(0.0), 0.0), c(2.0));
    }

    #[test]
    fn homogeneous_solution_is_annihilated() {
        let op = ModelOperator { d: 2, h: 0.5, lambda: Complex64::new(0.3, -0.4), shift: c(0.2) };
        let s = Complex64::new(-0.7, 0.25);
        for i in 1..40 {
            let phi = std::f64::consts::PI * i as f64 / 40.0;
            let (f, df) = homogeneous_solution(&op, s, phi);
            let r = apply_p(&op, f, df, phi) - f * s * op.h;
            assert!(r.norm() < 1e-10 * f.norm().max(1.0), "φ = {phi}: {r}");
        }
    }

    #[test]
    fn roots_example() {
        let op = ModelOperator::scalar(1, c(0.0));
        let r = indicial_roots(&op, c(0.0), 0);
        let lams: Vec<Complex64> = r.iter().map(|x| x.lambda(c(0.0))).collect();
        assert_eq!(lams, vec![c(0.5), c(-0.5)]);
        assert!(r.iter().all(|x| x.multiplicity == 1));
        let op2 = ModelOperator::scalar(2, c(0.0));
        assert_eq!(indicial_roots(&op2, c(0.0), 1)[1].multiplicity, 2);
        let op3 = ModelOperator::scalar(3, c(0.0));
        assert_eq!(indicial_roots(&op3, c(0.0), 2)[2].multiplicity, 6);
    }

    #[test]
    fn roots_swap_under_negation() {
        let op = ModelOperator::scalar(2, c(0.0));
        let s = Complex64::new(0.3, 0.2);
        let r = indicial_roots(&op, s, 4);
        for n in 0..=4 {
            assert_eq!(r[n].lambda(s), -r[5 + n].lambda(s));
            assert_eq!(r[n].multiplicity, r[5 + n].multiplicity);
        }
    }

    #[test]
    fn jordan_parity() {
        let op = ModelOperator::scalar(1, c(0.0));
        // s = -(j + k + d)/2 with j = 1, k = 1: m = 2, Jordan at levels ≤ 2.
        assert_eq!(jordan_index(&op, c(-1.5), 1), 2);
        // j = 1, k = 0: m = 1 odd, no block.
        assert_eq!(jordan_index(&op, c(-1.0), 1), 1);
        assert_eq!(jordan_index(&op, c(0.0), 0), 1);
    }

    #[test]
    fn dirac_zeroth_jet_is_point_evaluation() {
        for lam in [c(0.2), Complex64::new(-1.0, 3.0)] {
            let op = ModelOperator::scalar(2, lam);
            let d = eigendistribution(&op, Branch::Plus, 0, &Selector::Mu(vec![0, 0])).unwrap();
            for psi in library::five(2) {
                let v = d.pair(&psi).unwrap();
                assert!((v - psi.eval(&[0.0, 0.0])).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn euler_homogeneity_of_dirac_jets() {
        for d in 1..=2 {
            for mu in multi_indices_upto(d, 2) {
                for psi in library::five(d) {
                    let lhs = euler_on_dirac(d, &mu, &psi);
                    let j = DiracJet { d, coeffs: vec![(mu.clone(), c(1.0))], q_exponent: c(0.0) };
                    let rhs = j.pair(&psi) * -((degree(&mu) + d) as f64);
                    assert!((lhs - rhs).norm() < 1e-11 * (1.0 + rhs.norm()));
                }
            }
        }
    }

    #[test]
    fn dirac_eigendistributions_weakly_annihilated() {
        let op = ModelOperator { d: 2, h: 0.5, lambda: Complex64::new(0.4, 0.3), shift: c(0.7) };
        for mu in multi_indices_upto(2, 2) {
            let n = degree(&mu);
            let s = s_of_root(&op, Branch::Plus, n);
            let dist = eigendistribution(&op, Branch::Plus, n, &Selector::Mu(mu.clone())).unwrap();
            for psi in library::five(2) {
                let r = dist.pair(&p_minus_hs_transpose(&op, s, &psi)).unwrap();
                assert!(r.norm() < 1e-8 * psi.cm_norm(n + 1), "μ = {mu:?}: {r}");
            }
        }
    }

    #[test]
    fn jet_matrix_is_upper_triangular_with_closed_form_diagonal() {
        let op = ModelOperator::scalar(2, c(0.3));
        let m = jet_matrix(&op, 4);
        let basis = multi_indices_upto(2, 4);
        for i in 0..m.nrows() {
            for j in 0..i {
                assert_eq!(m[(i, j)], c(0.0));
            }
            let want = c(0.3) - (degree(&basis[i]) as f64 + 1.0);
            assert!((m[(i, i)] - want).norm() < 1e-14);
        }
        let s = numeric_roots_jet(&ModelOperator::scalar(1, c(0.0)), c(0.0), 0).unwrap();
        assert!((s.eigenvalues[0] + 0.5).norm() < 1e-15);
    }

    #[test]
    fn shooting_example() {
        let op = ModelOperator::scalar(1, c(1.5));
        let v = numeric_roots_shooting(&op, c(-2.0), 0).unwrap();
        assert!(v.is_root, "{v:?}");
        assert_eq!(v.matched, Some((Branch::Minus, 0)));
        assert!((v.exponent_north - v.exact_north).norm() < 1e-6);
        assert!((v.exponent_south - v.exact_south).norm() < 1e-6);
    }
}
