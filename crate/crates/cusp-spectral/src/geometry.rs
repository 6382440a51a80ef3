//! Cusp geometry: the model `[a, ∞) × R^d/Λ` with metric `(dy² + dθ²)/y²`,
//! cotangent norms, local isometries and, for `d = 1`, the closed-form
//! stable/unstable frame of the geodesic flow.

use crate::{Error, Result};
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use ode_solvers::{Dop853, OutputType, System, Vector6};

const UNIMODULAR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct CuspModel {
    pub d: usize,
    /// Columns generate the lattice Λ.
    pub lattice_basis: DMatrix<f64>,
    pub a: f64,
    inverse: DMatrix<f64>,
}

impl CuspModel {
    pub fn new(d: usize, lattice_basis: DMatrix<f64>, a: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::Argument("cusp cross-section dimension must be at least 1".into()));
        }
        if lattice_basis.nrows() != d || lattice_basis.ncols() != d {
            return Err(Error::Argument(format!(
                "lattice basis must be {d}×{d}, got {}×{}",
                lattice_basis.nrows(),
                lattice_basis.ncols()
            )));
        }
        let det = lattice_basis.determinant();
        if (det.abs() - 1.0).abs() > UNIMODULAR_TOL {
            return Err(Error::Domain(format!("lattice basis is not unimodular: |det| = {}", det.abs())));
        }
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::Domain(format!("cusp base height must be positive, got {a}")));
        }
        let inverse = lattice_basis
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Domain("singular lattice basis".into()))?;
        Ok(CuspModel { d, lattice_basis, a, inverse })
    }

    /// The square lattice `Z^d` with base height 1.
    pub fn standard(d: usize) -> Self {
        Self::new(d, DMatrix::identity(d, d), 1.0).expect("identity is unimodular")
    }

    /// Representative of `θ` in the half-open cell `B·[0,1)^d`.
    pub fn reduce_theta(&self, theta: &[f64]) -> Vec<f64> {
        let t = DVector::from_column_slice(theta);
        let mut c = &self.inverse * t;
        for x in c.iter_mut() {
            *x -= x.floor();
            if *x >= 1.0 {
                *x = 0.0;
            }
        }
        (&self.lattice_basis * c).iter().copied().collect()
    }
}

/// A point of the unit cosphere bundle in coordinates `(r, θ, φ, u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub r: f64,
    pub theta: Vec<f64>,
    pub phi: f64,
    pub u: Vec<f64>,
}

impl PhasePoint {
    pub fn new(r: f64, theta: Vec<f64>, phi: f64, u: Vec<f64>) -> Result<Self> {
        if !(0.0..=std::f64::consts::PI).contains(&phi) {
            return Err(Error::Domain(format!("inclination must lie in [0, π], got {phi}")));
        }
        if theta.len() != u.len() {
            return Err(Error::Argument("θ and u must have the same dimension".into()));
        }
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("azimuth must be a unit vector, |u| = {norm}")));
        }
        let mut p = PhasePoint { r, theta, phi, u };
        p.canonicalize_pole();
        Ok(p)
    }

    pub fn d(&self) -> usize {
        self.theta.len()
    }

    /// At the poles the azimuth is replaced by the first basis vector.
    pub fn canonicalize_pole(&mut self) {
        if self.phi == 0.0 || self.phi == std::f64::consts::PI {
            self.u = canonical_u(self.u.len());
        }
    }

    /// The unit direction `ζ = (cos φ, sin φ·u)`.
    pub fn zeta(&self) -> Vec<f64> {
        let mut z = vec![self.phi.cos()];
        z.extend(self.u.iter().map(|x| self.phi.sin() * x));
        z
    }
}

pub fn canonical_u(d: usize) -> Vec<f64> {
    let mut u = vec![0.0; d];
    if d > 0 {
        u[0] = 1.0;
    }
    u
}

/// A covector `Y dy + J·dθ` at the base point `(y, θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CotangentVector {
    pub y: f64,
    pub theta: Vec<f64>,
    pub big_y: f64,
    pub j: Vec<f64>,
}

pub fn cotangent_norm(v: &CotangentVector) -> Result<f64> {
    if !(v.y > 0.0) {
        return Err(Error::Domain(format!("height must be positive, got y = {}", v.y)));
    }
    let j2: f64 = v.j.iter().map(|x| x * x).sum();
    Ok(v.y * (v.big_y * v.big_y + j2).sqrt())
}

/// `T_{τ,θ0}(r, θ) = (r + τ, e^τ θ + θ0)` with `θ` reduced mod Λ.
///
/// The maps are defined on the universal cover `R × R^d`; the reduced output
/// depends on the lift `θ` passed in, not only on its class mod Λ.
pub fn apply_local_isometry(model: &CuspModel, tau: f64, theta0: &[f64], r: f64, theta: &[f64]) -> (f64, Vec<f64>) {
    let (r1, moved) = local_isometry_lift(tau, theta0, r, theta);
    (r1, model.reduce_theta(&moved))
}

/// `T_{τ,θ0}` on the cover, without reduction.
pub fn local_isometry_lift(tau: f64, theta0: &[f64], r: f64, theta: &[f64]) -> (f64, Vec<f64>) {
    let e = tau.exp();
    (r + tau, theta.iter().zip(theta0).map(|(t, t0)| e * t + t0).collect())
}

/// Pull back a covector at `T_{τ,θ0}(y, θ)` to `(y, θ)`. The differential of
/// `T` is `e^τ` times the identity in `(y, θ)`.
pub fn pullback_covector(tau: f64, base_y: f64, base_theta: &[f64], at_image: &CotangentVector) -> CotangentVector {
    let e = tau.exp();
    CotangentVector {
        y: base_y,
        theta: base_theta.to_vec(),
        big_y: e * at_image.big_y,
        j: at_image.j.iter().map(|x| e * x).collect(),
    }
}

/// A point of `S*Z` for `d = 1` in `(r, θ, α)` coordinates, `α = u·φ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaPoint {
    pub r: f64,
    pub theta: f64,
    pub alpha: f64,
}

impl AlphaPoint {
    pub fn from_phase(p: &PhasePoint) -> Result<Self> {
        if p.d() != 1 {
            return Err(Error::UnsupportedDimension(p.d()));
        }
        Ok(AlphaPoint { r: p.r, theta: p.theta[0], alpha: p.u[0] * p.phi })
    }

    pub fn to_phase(&self) -> PhasePoint {
        let a = wrap_angle(self.alpha);
        let u = if a < 0.0 { -1.0 } else { 1.0 };
        let mut p = PhasePoint { r: self.r, theta: vec![self.theta], phi: a.abs(), u: vec![u] };
        p.canonicalize_pole();
        p
    }
}

/// Wrap an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut x = (a + PI).rem_euclid(2.0 * PI) - PI;
    if x <= -PI {
        x += 2.0 * PI;
    }
    x
}

/// Flow frame `X`, stable generator `E_s` and unstable generator `E_u` in
/// `(∂_r, ∂_θ, ∂_α)` components, with the dual coframe.
#[derive(Debug, Clone, PartialEq)]
pub struct SplittingFrame {
    pub flow: Vector3<f64>,
    pub stable: Vector3<f64>,
    pub unstable: Vector3<f64>,
    /// Dual of the flow direction, annihilating `E_s ⊕ E_u`.
    pub flow_dual: Vector3<f64>,
    /// Annihilates `E_0 ⊕ E_u`; grows like `e^t` under the lifted flow.
    pub unstable_dual: Vector3<f64>,
    /// Annihilates `E_0 ⊕ E_s`; decays like `e^{-t}` under the lifted flow.
    pub stable_dual: Vector3<f64>,
}

impl SplittingFrame {
    pub fn determinant(&self) -> f64 {
        Matrix3::from_columns(&[self.flow, self.stable, self.unstable]).determinant()
    }
}

pub fn invariant_splitting(model: &CuspModel, p: &PhasePoint) -> Result<SplittingFrame> {
    if model.d != 1 || p.d() != 1 {
        return Err(Error::UnsupportedDimension(model.d.max(p.d())));
    }
    Ok(splitting_at(&AlphaPoint::from_phase(p)?))
}

pub fn splitting_at(p: &AlphaPoint) -> SplittingFrame {
    let (s, c) = p.alpha.sin_cos();
    let e = p.r.exp();
    let ei = (-p.r).exp();
    let h = Vector3::new(-s, e * c, c);
    let v = Vector3::new(0.0, 0.0, 1.0);
    let hs = Vector3::new(-s, ei * c, 0.0);
    let vs = Vector3::new(0.0, -ei, 1.0);
    let k = std::f64::consts::FRAC_1_SQRT_2;
    SplittingFrame {
        flow: Vector3::new(c, e * s, s),
        stable: (h - v) * k,
        unstable: (h + v) * k,
        flow_dual: Vector3::new(c, ei * s, 0.0),
        unstable_dual: (hs - vs) * k,
        stable_dual: (hs + vs) * k,
    }
}

struct Variational;

impl System<f64, Vector6<f64>> for Variational {
    fn system(&self, _t: f64, y: &Vector6<f64>, dy: &mut Vector6<f64>) {
        let (r, a) = (y[0], y[2]);
        let (s, c) = a.sin_cos();
        let e = r.exp();
        dy[0] = c;
        dy[1] = e * s;
        dy[2] = s;
        let (dr, da) = (y[3], y[5]);
        dy[3] = -s * da;
        dy[4] = e * s * dr + e * c * da;
        dy[5] = c * da;
    }
}

/// Numerically integrate the geodesic equations together with their
/// linearization, returning the image point and `dφ_t(v)`.
pub fn numeric_pushforward(p: &AlphaPoint, v: &Vector3<f64>, t: f64, tol: f64) -> Result<(AlphaPoint, Vector3<f64>)> {
    if t == 0.0 {
        return Ok((*p, *v));
    }
    let y0 = Vector6::new(p.r, p.theta, p.alpha, v[0], v[1], v[2]);
    let mut solver = Dop853::new(Variational, 0.0, t, t, y0, tol, tol * 1e-3);
    solver.set_output(OutputType::Sparse);
    solver.integrate().map_err(|e| Error::Integration(format!("{e:?}")))?;
    let y = *solver.y_out().last().expect("solver produced output");
    Ok((AlphaPoint { r: y[0], theta: y[1], alpha: y[2] }, Vector3::new(y[3], y[4], y[5])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cotangent_norm_examples() {
        let v = CotangentVector { y: 1.0, theta: vec![0.0], big_y: 1.0, j: vec![0.0] };
        assert_eq!(cotangent_norm(&v).unwrap(), 1.0);
        let v = CotangentVector { y: 2.0, theta: vec![0.0, 0.0], big_y: 0.0, j: vec![3.0, 4.0] };
        assert_eq!(cotangent_norm(&v).unwrap(), 10.0);
        let v = CotangentVector { y: 7.0, theta: vec![0.0], big_y: 0.0, j: vec![0.0] };
        assert_eq!(cotangent_norm(&v).unwrap(), 0.0);
        let bad = CotangentVector { y: 0.0, theta: vec![0.0], big_y: 1.0, j: vec![0.0] };
        assert!(matches!(cotangent_norm(&bad), Err(Error::Domain(_))));
    }

    #[test]
    fn rejects_non_unimodular_lattice() {
        let b = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        assert!(CuspModel::new(2, b, 1.0).is_err());
        assert!(CuspModel::new(1, DMatrix::identity(1, 1), -1.0).is_err());
    }

    #[test]
    fn isometry_examples() {
        let m = CuspModel::standard(1);
        let (r, th) = apply_local_isometry(&m, 0.0, &[0.0], 0.3, &[0.4]);
        assert_eq!((r, th[0]), (0.3, 0.4));
        let (r, th) = apply_local_isometry(&m, 2f64.ln(), &[0.0], 0.0, &[0.25]);
        assert!((r - 2f64.ln()).abs() < 1e-15 && (th[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn pole_azimuth_is_canonical() {
        let p = PhasePoint::new(0.0, vec![0.0, 0.0], 0.0, vec![0.0, 1.0]).unwrap();
        assert_eq!(p.u, vec![1.0, 0.0]);
    }

    #[test]
    fn north_pole_stable_direction_is_horizontal() {
        let f = splitting_at(&AlphaPoint { r: 0.7, theta: 0.1, alpha: 0.0 });
        assert!(f.stable[0].abs() < 1e-15 && f.stable[2].abs() < 1e-15);
        // unstable: dy = 0 and dθ/y = dφ/2
        let y = 0.7f64.exp();
        assert!(f.unstable[0].abs() < 1e-15);
        assert!((f.unstable[1] / y - f.unstable[2] / 2.0).abs() < 1e-14);
    }

    #[test]
    fn stable_and_unstable_rates_against_variational_oracle() {
        for &(r, th, a) in &[(0.0, 0.0, 0.4), (1.2, -0.3, -2.0), (-0.5, 0.2, 2.9)] {
            let p = AlphaPoint { r, theta: th, alpha: a };
            let f0 = splitting_at(&p);
            for &t in &[1.0, 5.0] {
                let (q, vs) = numeric_pushforward(&p, &f0.stable, t, 1e-13).unwrap();
                let (_, vu) = numeric_pushforward(&p, &f0.unstable, t, 1e-13).unwrap();
                let f1 = splitting_at(&q);
                let es = (vs - f1.stable * (-t as f64).exp()).norm() / vs.norm();
                let eu = (vu - f1.unstable * t.exp()).norm() / vu.norm();
                assert!(es < 1e-8 && eu < 1e-8, "t = {t}: {es:e} {eu:e}");
            }
        }
    }

    #[test]
    fn coframe_is_dual() {
        let f = splitting_at(&AlphaPoint { r: 0.3, theta: 0.0, alpha: 1.1 });
        let e = [f.flow, f.unstable, f.stable];
        let d = [f.flow_dual, f.stable_dual, f.unstable_dual];
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d[i].dot(&e[j]) - want).abs() < 1e-14);
            }
        }
    }

    proptest! {
        #[test]
        fn isometries_compose(t1 in -2.0f64..2.0, t2 in -2.0f64..2.0, a in -3.0f64..3.0,
                              b in -3.0f64..3.0, th in 0.0f64..1.0, r in -1.0f64..1.0) {
            let m = CuspModel::standard(1);
            let (r1, th1) = local_isometry_lift(t1, &[a], r, &[th]);
            let (r2, th2) = apply_local_isometry(&m, t2, &[b], r1, &th1);
            let (r3, th3) = apply_local_isometry(&m, t1 + t2, &[t2.exp() * a + b], r, &[th]);
            prop_assert!((r2 - r3).abs() < 1e-12);
            let diff = (th2[0] - th3[0]).abs();
            prop_assert!(diff.min(1.0 - diff) < 1e-9);
        }

        #[test]
        fn isometries_preserve_pulled_back_norms(tau in -3.0f64..3.0, y in 0.1f64..5.0,
                                                 big_y in -2.0f64..2.0, j in -2.0f64..2.0) {
            let image = CotangentVector { y: tau.exp() * y, theta: vec![0.0], big_y, j: vec![j] };
            let back = pullback_covector(tau, y, &[0.0], &image);
            let a = cotangent_norm(&image).unwrap();
            let b = cotangent_norm(&back).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }

        #[test]
        fn frame_is_nondegenerate(r in -3.0f64..3.0, a in -3.1f64..3.1) {
            let f = splitting_at(&AlphaPoint { r, theta: 0.0, alpha: a });
            prop_assert!(f.determinant().abs() > 1e-8);
        }

        #[test]
        fn theta_reduction_lands_in_cell(x in -50.0f64..50.0, y in -50.0f64..50.0) {
            let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
            let m = CuspModel::new(2, b, 1.0).unwrap();
            let t = m.reduce_theta(&[x, y]);
            let c = m.inverse.clone() * DVector::from_column_slice(&t);
            for ci in c.iter() {
                prop_assert!(*ci >= -1e-12 && *ci < 1.0 + 1e-12);
            }
        }
    }
}
