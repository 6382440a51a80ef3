//! Homogeneous distributions anchored at the South pole, continued in `λ`
//! by integration by parts in the radial variable at the North pole.
//!
//! For a homogeneous polynomial `Υ` of degree `k` the function
//! `f_{S,Υ,λ} = (2(1 - cos φ))^{s̃} sin^k φ Υ(u)`, `s̃ = -(k + d/2 + λ/h)`,
//! solves `(P_λ + λ + h(d/2 + k)) f = 0`, is smooth at the South pole and in
//! the North chart `x = ρu` equals `ρ^{β-d} Υ(u) q^{s̃}` with
//! `β = -2λ/h - k`. Its pairing with a test function `ψ` is
//!
//! `⟨F_λ, ψ⟩ = ∫_{S^{d-1}} Υ(u) ∫_0^∞ ρ^{β-1} ψ̃_λ(ρu) dρ du`, `ψ̃_λ = q^{s̃} ψ`,
//!
//! meromorphic in `λ` with simple poles at `λ = h(j - k)/2`.

use crate::indicial::{p_minus_hs_transpose, DiracJet, ModelOperator};
use crate::poly::{binomial, degree, monomials, multi_factorial, multi_indices_upto, HomPoly, Jet, MultiIndex};
use crate::quad::{adaptive_gk, circle_average, SphereRule};
use crate::series::{factorial, Series};
use crate::testfn::{Radial, TestFunction};
use crate::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;

/// Circle radius for residues, in `λ/h` units.
pub const POLE_EPS: f64 = 1e-2;
/// Step of the central difference for finite parts, in `λ/h` units.
pub const FINITE_PART_STEP: f64 = 1e-3;
/// Near-pole exclusion radius.
pub const POLE_GUARD: f64 = 1e-8;
const TAYLOR_TERMS: usize = 30;

/// Inputs of one regularized pairing.
#[derive(Debug, Clone)]
pub struct RegularizedPairing {
    pub d: usize,
    pub h: f64,
    pub upsilon: HomPoly,
    pub lambda: Complex64,
    pub n_reg: usize,
}

impl RegularizedPairing {
    pub fn k(&self) -> usize {
        self.upsilon.deg
    }

    pub fn beta(&self) -> Complex64 {
        -2.0 * self.lambda / self.h - self.k() as f64
    }

    /// Exponent of `q` in `ψ̃_λ`.
    pub fn q_exponent(&self) -> Complex64 {
        -(self.lambda / self.h + self.k() as f64 + 0.5 * self.d as f64)
    }

    /// Smallest admissible `N` for this `λ`.
    pub fn minimal_n(d: usize, h: f64, upsilon: &HomPoly, lambda: Complex64) -> usize {
        let beta = -2.0 * lambda.re / h - upsilon.deg as f64;
        if beta > 0.0 {
            0
        } else {
            (-beta).floor() as usize + 1
        }
        .max(if d == 0 { 1 } else { 0 })
    }
}

/// `∫_{S^{d-1}} Υ(u) ∫_0^∞ ρ^{β-1} w(ρ) φ(ρu) dρ du` continued by `N`
/// integrations by parts, for a radial weight `w` and `φ` supported in
/// `ρ < 1`. The integrations by parts act on `[0, ρ0]`, inside the radius
/// where the radial Taylor series converges; `[ρ0, ∞)` is an ordinary
/// integral. The angular integral is done termwise and exactly, leaving the
/// one-variable profile `Φ(ρ) = w(ρ) Σ_ℓ (∫Υ p_ℓ) ρ^{deg p_ℓ} R_ℓ(ρ)`.
pub fn radial_mellin(phi: &TestFunction, weight: Option<&Radial>, upsilon: &HomPoly, beta: Complex64, n: usize) -> Result<Complex64> {
    if beta.re + n as f64 <= 0.0 {
        return Err(Error::Argument(format!("N = {n} does not regularize β = {beta}")));
    }
    for i in 0..n {
        if (beta + i as f64).norm() < POLE_GUARD {
            return Err(Error::Argument(format!("β = {beta} sits on the pole β = -{i}")));
        }
    }
    let outer = phi.outer();
    if !(outer < 1.0) {
        return Err(Error::Argument("test function must be supported inside the North chart".into()));
    }
    let rule = SphereRule::new(phi.d, upsilon.deg + phi.max_degree());
    let mut parts: Vec<(usize, Complex64, &Radial)> = Vec::new();
    for (r, p) in &phi.terms {
        let c = rule.integrate(|u| upsilon.eval(u) * p.eval(u));
        if c.norm() > 1e-15 * (1.0 + c.norm()) {
            parts.push((p.deg, c, r));
        }
    }
    if parts.is_empty() {
        return Ok(0.0.into());
    }
    let inner = parts.iter().map(|p| p.2.inner).fold(f64::INFINITY, f64::min);
    let outer = parts.iter().map(|p| p.2.outer).fold(0.0, f64::max);
    let mut taylor = parts.iter().map(|p| p.2.taylor_radius()).fold(1.0, f64::min);
    if let Some(w) = weight {
        taylor = taylor.min(w.taylor_radius());
    }
    let profile = |r: f64, order: usize| -> Series {
        let x = Series::variable(r, order);
        let mut acc = Series::zero(order);
        for (deg, c, rad) in &parts {
            let mut xl = Series::constant(*c, order);
            for _ in 0..*deg {
                xl = &xl * &x;
            }
            acc = &acc + &(&rad.series(r, order) * &xl);
        }
        match weight {
            Some(w) => &acc * &w.series(r, order),
            None => acc,
        }
    };
    let rho0 = (0.25 * taylor).min(0.5 * outer);
    let mut total = Complex64::new(0.0, 0.0);
    // [0, ρ0]: N integrations by parts with boundary terms at ρ0, the
    // remaining integral termwise on the Taylor series.
    if inner < rho0 {
        let t = profile(0.0, n + TAYLOR_TERMS);
        let at = profile(rho0, n);
        let mut denom = Complex64::new(1.0, 0.0);
        for i in 0..n {
            denom *= beta + i as f64;
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            total += Complex64::from(rho0).powc(beta + i as f64) * at.derivative_at(i) * sign / denom;
        }
        let mut tail = Complex64::new(0.0, 0.0);
        for i in n..t.c.len() {
            let a = t.c[i] * (factorial(i) / factorial(i - n));
            if a.norm() == 0.0 {
                continue;
            }
            let e = beta + i as f64;
            tail += a * Complex64::from(rho0).powc(e) / e;
        }
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        total += tail * sign / denom;
    }
    // [max(ρ0, inner), outer]: a proper integral.
    let lo = rho0.max(inner);
    if lo < outer {
        let f = |r: f64| Complex64::from(r).powc(beta - 1.0) * profile(r, 0).value();
        total += adaptive_gk(f, lo, outer, 1e-15, 1e-13).value;
    }
    Ok(total)
}

pub fn pairing(rp: &RegularizedPairing, psi: &TestFunction) -> Result<Complex64> {
    let k = rp.k();
    for j in 0..rp.n_reg {
        let pole = rp.h * (j as f64 - k as f64) / 2.0;
        if (rp.lambda - pole).norm() < POLE_GUARD {
            return Err(Error::Pole { lambda: rp.lambda, j, k });
        }
    }
    if rp.beta().re + rp.n_reg as f64 <= 0.0 {
        return Err(Error::Argument(format!(
            "Re λ = {} needs N_reg > {} (got {})",
            rp.lambda.re,
            -rp.beta().re,
            rp.n_reg
        )));
    }
    radial_mellin(psi, Some(&Radial::q_power(rp.q_exponent())), &rp.upsilon, rp.beta(), rp.n_reg)
}

/// `f_{S,Υ,λ}` as a weak functional; the regularization depth is chosen
/// from `λ` unless fixed.
#[derive(Debug, Clone)]
pub struct HomogeneousSouth {
    pub op: ModelOperator,
    pub upsilon: HomPoly,
    pub n_reg: Option<usize>,
}

impl HomogeneousSouth {
    pub fn new(op: ModelOperator, upsilon: HomPoly) -> Self {
        HomogeneousSouth { op, upsilon, n_reg: None }
    }

    pub fn at(&self, lambda: Complex64) -> RegularizedPairing {
        let n = self
            .n_reg
            .unwrap_or_else(|| RegularizedPairing::minimal_n(self.op.d, self.op.h, &self.upsilon, lambda) + 1);
        RegularizedPairing { d: self.op.d, h: self.op.h, upsilon: self.upsilon.clone(), lambda, n_reg: n }
    }

    pub fn pair(&self, psi: &TestFunction) -> Result<Complex64> {
        pairing(&self.at(self.op.lambda), psi)
    }
}

/// Residue of `λ ↦ ⟨F_λ, ψ⟩` at `λ = h(j - k)/2`, by the closed form
/// `-(h/(2 j!)) ∫ Υ(u) ∂_ρ^j ψ̃(0·u) du` and by a contour integral.
#[derive(Debug, Clone, Copy)]
pub struct ResidueComparison {
    pub closed_form: Complex64,
    pub contour: Complex64,
}

impl ResidueComparison {
    pub fn relative_gap(&self) -> f64 {
        (self.closed_form - self.contour).norm() / self.closed_form.norm().max(self.contour.norm()).max(1e-300)
    }
}

pub fn pole_lambda(h: f64, j: usize, k: usize) -> Complex64 {
    Complex64::from(h * (j as f64 - k as f64) / 2.0)
}

pub fn residue_closed_form(d: usize, h: f64, j: usize, upsilon: &HomPoly, psi: &TestFunction) -> Complex64 {
    let k = upsilon.deg;
    let lam0 = pole_lambda(h, j, k);
    let e0 = -(lam0 / h + k as f64 + 0.5 * d as f64);
    let tilde = psi.mul_radial(&Radial::q_power(e0));
    let rule = SphereRule::new(d, k + j + psi.max_degree() + 2);
    let integral = rule.integrate(|u| upsilon.eval(u) * tilde.ray(u, 0.0, j).derivative_at(j));
    integral * (-h / (2.0 * factorial(j)))
}

pub fn residue_contour(d: usize, h: f64, j: usize, upsilon: &HomPoly, psi: &TestFunction, eps: f64, points: usize) -> Result<Complex64> {
    let k = upsilon.deg;
    let lam0 = pole_lambda(h, j, k);
    if 3.0 * eps >= 0.5 {
        return Err(Error::InvalidEnclosure { center: lam0, other: lam0 + h * 0.5 });
    }
    let mut err = None;
    let v = circle_average(lam0, eps * h, points, |lam| {
        let rp = RegularizedPairing { d, h, upsilon: upsilon.clone(), lambda: lam, n_reg: j + 2 };
        match pairing(&rp, psi) {
            Ok(v) => v,
            Err(e) => {
                err = Some(e);
                0.0.into()
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

pub fn pole_residue(d: usize, h: f64, j: usize, upsilon: &HomPoly, psi: &TestFunction) -> Result<ResidueComparison> {
    Ok(ResidueComparison {
        closed_form: residue_closed_form(d, h, j, upsilon, psi),
        contour: residue_contour(d, h, j, upsilon, psi, POLE_EPS, 32)?,
    })
}

/// Fit of `log mean|F|` against `log ε` on circles of shrinking radius; a
/// simple pole gives slope `-1`.
pub fn pole_order_fit(d: usize, h: f64, j: usize, upsilon: &HomPoly, psi: &TestFunction) -> Result<f64> {
    let k = upsilon.deg;
    let lam0 = pole_lambda(h, j, k);
    let eps = [1e-2, 1e-3, 1e-4];
    let mut pts = Vec::new();
    for &e in &eps {
        let mut acc = 0.0;
        for i in 0..16 {
            let lam = lam0 + Complex64::from_polar(e * h, 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / 16.0);
            let rp = RegularizedPairing { d, h, upsilon: upsilon.clone(), lambda: lam, n_reg: j + 2 };
            acc += pairing(&rp, psi)?.norm();
        }
        pts.push((e.ln(), (acc / 16.0).ln()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Ok(-sxy / sxx)
}

/// `⟨A_j, ψ⟩`: the 0th Laurent coefficient at `λ0 = h(j - k)/2`, as the
/// derivative of `(λ - λ0)⟨F_λ, ψ⟩` by 4th-order central differences.
pub fn finite_part(d: usize, h: f64, j: usize, upsilon: &HomPoly, psi: &TestFunction) -> Result<Complex64> {
    let lam0 = pole_lambda(h, j, upsilon.deg);
    let delta = FINITE_PART_STEP * h;
    let g = |t: f64| -> Result<Complex64> {
        let lam = lam0 + t;
        let rp = RegularizedPairing { d, h, upsilon: upsilon.clone(), lambda: lam, n_reg: j + 2 };
        Ok(pairing(&rp, psi)? * t)
    };
    let (p1, m1, p2, m2) = (g(delta)?, g(-delta)?, g(2.0 * delta)?, g(-2.0 * delta)?);
    Ok((8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * delta))
}

/// Finite part by a contour integral of `F/(λ - λ0)`, for cross-checks.
pub fn finite_part_contour(d: usize, h: f64, j: usize, upsilon: &HomPoly, psi: &TestFunction) -> Result<Complex64> {
    let lam0 = pole_lambda(h, j, upsilon.deg);
    let mut err = None;
    let v = circle_average(lam0, 0.05 * h, 64, |lam| {
        let rp = RegularizedPairing { d, h, upsilon: upsilon.clone(), lambda: lam, n_reg: j + 2 };
        match pairing(&rp, psi) {
            Ok(v) => v / (lam - lam0),
            Err(e) => {
                err = Some(e);
                0.0.into()
            }
        }
    });
    err.map_or(Ok(v), Err)
}

/// The residue `R = Res_{λ0} F_λ` as a Dirac jet:
/// `R = -(h/2)(-1)^j Σ_{|μ|=j} (∫Υu^μ/μ!) q^{e0} δ^{(μ)}`.
pub fn residue_distribution(d: usize, h: f64, j: usize, upsilon: &HomPoly) -> DiracJet {
    let k = upsilon.deg;
    let e0 = -(0.5 * (j + k) as f64 + 0.5 * d as f64);
    let rule = SphereRule::new(d, k + j + 2);
    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
    let coeffs = monomials(d, j)
        .into_iter()
        .map(|mu| {
            let a = rule.integrate(|u| upsilon.eval(u) * crate::poly::monomial_value(&mu, u));
            let c = a * (-0.5 * h * sign / multi_factorial(&mu));
            (mu, c)
        })
        .collect();
    DiracJet { d, coeffs, q_exponent: e0.into() }
}

/// Jet coefficients `c_ν` of `f·Σ c_μ δ^{(μ)}` for a smooth `f` with Taylor
/// jet `fj` at the pole.
fn multiply_jet_distribution(fj: &Jet, coeffs: &[(MultiIndex, Complex64)], order: usize) -> Vec<(MultiIndex, Complex64)> {
    let basis = multi_indices_upto(fj.d, order);
    let mut out: Vec<(MultiIndex, Complex64)> = basis.into_iter().map(|m| (m, Complex64::new(0.0, 0.0))).collect();
    for (mu, c) in coeffs {
        for (nu, slot) in out.iter_mut() {
            if !nu.iter().zip(mu).all(|(a, b)| a <= b) {
                continue;
            }
            let diff: MultiIndex = mu.iter().zip(nu.iter()).map(|(a, b)| a - b).collect();
            let b: f64 = mu.iter().zip(nu.iter()).map(|(a, b)| binomial(*a, *b) as f64).product();
            let sign = if degree(&diff) % 2 == 0 { 1.0 } else { -1.0 };
            *slot += c * fj.derivative_at_origin(&diff) * b * sign;
        }
    }
    out
}

/// `A_j + e_j` with `(P + c)²(A_j + e_j) = 0`, `c = h(k + j + d)/2`.
#[derive(Debug, Clone)]
pub struct JordanVector {
    pub d: usize,
    pub h: f64,
    pub j: usize,
    pub upsilon: HomPoly,
    pub residue: DiracJet,
    pub correction: DiracJet,
}

impl JordanVector {
    pub fn lambda0(&self) -> Complex64 {
        pole_lambda(self.h, self.j, self.upsilon.deg)
    }

    pub fn c(&self) -> f64 {
        self.h * (self.upsilon.deg + self.j + self.d) as f64 / 2.0
    }

    /// The operator `P_{λ0}` (no bundle shift) and `s0 = -c/h`.
    pub fn operator(&self) -> (ModelOperator, Complex64) {
        (ModelOperator { d: self.d, h: self.h, lambda: self.lambda0(), shift: 0.0.into() }, (-self.c() / self.h).into())
    }

    pub fn pair_finite_part(&self, psi: &TestFunction) -> Result<Complex64> {
        finite_part(self.d, self.h, self.j, &self.upsilon, psi)
    }

    pub fn pair(&self, psi: &TestFunction) -> Result<Complex64> {
        Ok(self.pair_finite_part(psi)? + self.correction.pair(psi))
    }

    /// `⟨(P + c)^p (A_j + e_j), ψ⟩` for `p ∈ {1, 2}`.
    pub fn pair_power(&self, power: usize, psi: &TestFunction) -> Result<Complex64> {
        let (op, s0) = self.operator();
        let mut t = psi.clone();
        for _ in 0..power {
            t = p_minus_hs_transpose(&op, s0, &t);
        }
        self.pair(&t)
    }
}

pub fn jordan_vector(j: usize, upsilon: &HomPoly, op: &ModelOperator) -> Result<JordanVector> {
    let d = op.d;
    let h = op.h;
    if upsilon.d != d {
        return Err(Error::Argument("Υ lives in the wrong number of variables".into()));
    }
    let residue = residue_distribution(d, h, j, upsilon);
    let e0 = residue.q_exponent;
    let correction = if j < 2 {
        DiracJet { d, coeffs: Vec::new(), q_exponent: e0 }
    } else {
        let order = j - 2;
        let basis = multi_indices_upto(d, order);
        let n = basis.len();
        // Right-hand side -h ρ² R' in the conjugated frame.
        let rho2 = TestFunction::radial(d, Radial::even_power(1)).jet(j);
        let rhs = multiply_jet_distribution(&rho2, &residue.coeffs, order);
        let gj = TestFunction::radial(d, Radial::g()).jet(order);
        let mut m = DMatrix::<Complex64>::zeros(n, n);
        for (col, mu) in basis.iter().enumerate() {
            let diag = h * (j as f64 - degree(mu) as f64);
            let image = multiply_jet_distribution(&gj, &[(mu.clone(), 1.0.into())], order);
            for (row, (_, v)) in image.iter().enumerate() {
                m[(row, col)] = v * diag;
            }
        }
        let m2 = &m * &m;
        for i in 0..n {
            if m2[(i, i)].norm() == 0.0 {
                return Err(Error::Internal(format!("singular Jordan system at diagonal entry {i}")));
            }
        }
        let b = nalgebra::DVector::from_iterator(n, rhs.iter().map(|(_, v)| -v * h));
        let x = m2
            .solve_upper_triangular(&b)
            .ok_or_else(|| Error::Internal("triangular solve failed".into()))?;
        DiracJet { d, coeffs: basis.into_iter().zip(x.iter().copied()).collect(), q_exponent: e0 }
    };
    Ok(JordanVector { d, h, j, upsilon: upsilon.clone(), residue, correction })
}

impl DiracJet {
    pub fn scaled(&self, c: Complex64) -> DiracJet {
        DiracJet { coeffs: self.coeffs.iter().map(|(m, v)| (m.clone(), v * c)).collect(), ..self.clone() }
    }
}
