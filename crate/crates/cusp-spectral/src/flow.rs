//! Geodesic flow: closed form in the full cusp, the exact flow on the
//! quotient by the level-2 congruence group, Liouville sampling, correlation
//! functions and their Laplace transforms.

use crate::geometry::{CuspModel, PhasePoint};
use crate::quad::{gl_panels, pairwise_sum, simpson_uniform};
use crate::{Error, Result};
use nalgebra::{DVector, Matrix2};
use num_complex::Complex64;
use ode_solvers::{Dop853, OutputType, System};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// The state of the flow together with the elapsed time.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub point: PhasePoint,
    pub time: f64,
}

/// Closed-form increments `(Δr, Δθ/u, φ(t))` for initial inclination `phi0`
/// at `r0`, stable for large `|t|`.
fn cusp_increments(r0: f64, phi0: f64, t: f64) -> (f64, f64, f64) {
    if phi0 == 0.0 {
        return (t, 0.0, 0.0);
    }
    if phi0 == PI {
        return (-t, 0.0, PI);
    }
    let (s, c) = (0.5 * phi0).sin_cos();
    if t >= 0.0 {
        let em = (-2.0 * t).exp();
        let phi = 2.0 * s.atan2(c * (-t).exp());
        let dr = if s == 0.0 { t } else { -t - (c * c * em + s * s).ln() };
        let dth = if s == 0.0 { 0.0 } else { r0.exp() * s * c * (1.0 - em) / (c * c * em + s * s) };
        (dr, dth, phi)
    } else {
        let ep = (2.0 * t).exp();
        let phi = 2.0 * (s * t.exp()).atan2(c);
        let dr = if c == 0.0 { -t } else { t - (c * c + s * s * ep).ln() };
        let dth = if c == 0.0 { 0.0 } else { r0.exp() * s * c * (ep - 1.0) / (c * c + s * s * ep) };
        (dr, dth, phi)
    }
}

/// Exact time-`t` flow on the full cusp, on the cover (θ not reduced).
pub fn flow_cusp_lift(p0: &PhasePoint, t: f64) -> PhasePoint {
    let (dr, dth, phi) = cusp_increments(p0.r, p0.phi, t);
    let theta = p0.theta.iter().zip(&p0.u).map(|(th, u)| th + dth * u).collect();
    let mut p = PhasePoint { r: p0.r + dr, theta, phi: phi.clamp(0.0, PI), u: p0.u.clone() };
    p.canonicalize_pole();
    p
}

pub fn flow_cusp_exact(model: &CuspModel, p0: &PhasePoint, t: f64) -> PhasePoint {
    let mut p = flow_cusp_lift(p0, t);
    p.theta = model.reduce_theta(&p.theta);
    p
}

/// Largest log-height reached along the geodesic, `r0 - log sin φ0`.
pub fn r_max(p0: &PhasePoint) -> f64 {
    p0.r - p0.phi.sin().ln()
}

struct CuspOde {
    u: Vec<f64>,
}

impl System<f64, DVector<f64>> for CuspOde {
    fn system(&self, _t: f64, y: &DVector<f64>, dy: &mut DVector<f64>) {
        let d = self.u.len();
        let (r, phi) = (y[0], y[d + 1]);
        dy[0] = phi.cos();
        for i in 0..d {
            dy[1 + i] = r.exp() * phi.sin() * self.u[i];
        }
        dy[d + 1] = phi.sin();
    }
}

/// Adaptive eighth-order integration of `dr = cos φ`, `dθ = e^r sin φ u`,
/// `dφ = sin φ` (on the cover).
pub fn flow_cusp_numeric(p0: &PhasePoint, t: f64, tol: f64) -> Result<PhasePoint> {
    if t == 0.0 {
        return Ok(p0.clone());
    }
    let d = p0.d();
    let mut y0 = DVector::zeros(d + 2);
    y0[0] = p0.r;
    for i in 0..d {
        y0[1 + i] = p0.theta[i];
    }
    y0[d + 1] = p0.phi;
    let mut solver = Dop853::new(CuspOde { u: p0.u.clone() }, 0.0, t, t, y0, tol, tol * 1e-4);
    solver.set_output(OutputType::Sparse);
    solver.integrate().map_err(|e| Error::Integration(format!("{e:?}")))?;
    let y = solver.y_out().last().expect("solver output").clone();
    Ok(PhasePoint { r: y[0], theta: (0..d).map(|i| y[1 + i]).collect(), phi: y[d + 1], u: p0.u.clone() })
}

/// The level-2 principal congruence subgroup with its side pairings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuotientSurface {
    pub generators: Vec<[[i64; 2]; 2]>,
    pub max_iterations: usize,
}

impl Default for QuotientSurface {
    fn default() -> Self {
        QuotientSurface { generators: vec![[[1, 2], [0, 1]], [[1, 0], [2, 1]]], max_iterations: 1_000_000 }
    }
}

/// Unit tangent vector on the upper half plane: base point and direction
/// angle `α`, the velocity being `Im z·(sin α, cos α)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitTangent {
    pub z: Complex64,
    pub alpha: f64,
}

/// `PSL(2, R)` element representing a unit tangent vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame(pub Matrix2<f64>);

impl Frame {
    pub fn from_tangent(v: UnitTangent) -> Self {
        let (x, y) = (v.z.re, v.z.im);
        let sy = y.sqrt();
        let n = Matrix2::new(sy, x / sy, 0.0, 1.0 / sy);
        let (s, c) = (-0.5 * v.alpha).sin_cos();
        let k = Matrix2::new(c, s, -s, c);
        Frame(n * k)
    }

    pub fn tangent(&self) -> UnitTangent {
        let m = &self.0;
        let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
        let i = Complex64::new(0.0, 1.0);
        let z = (i * a + b) / (i * c + d);
        let alpha = 2.0 * c.atan2(d);
        UnitTangent { z, alpha: crate::geometry::wrap_angle(alpha) }
    }

    pub fn flow(&self, t: f64) -> Frame {
        Frame(self.0 * Matrix2::new((0.5 * t).exp(), 0.0, 0.0, (-0.5 * t).exp()))
    }

    fn renormalize(&mut self) {
        let det = self.0.determinant();
        self.0 /= det.sqrt();
    }
}

fn mobius(m: &Matrix2<f64>, z: Complex64) -> Complex64 {
    (z * m[(0, 0)] + m[(0, 1)]) / (z * m[(1, 0)] + m[(1, 1)])
}

impl QuotientSurface {
    pub fn generator_matrices(&self) -> Vec<Matrix2<f64>> {
        self.generators
            .iter()
            .map(|g| Matrix2::new(g[0][0] as f64, g[0][1] as f64, g[1][0] as f64, g[1][1] as f64))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        for g in &self.generators {
            if g[0][0] * g[1][1] - g[0][1] * g[1][0] != 1 {
                return Err(Error::Argument(format!("generator {g:?} does not have determinant 1")));
            }
        }
        Ok(())
    }

    /// Membership in `{-1 ≤ Re z < 1, |2z - 1| ≥ 1, |2z + 1| ≥ 1}`.
    pub fn in_domain(&self, z: Complex64) -> bool {
        z.im > 0.0 && z.re >= -1.0 && z.re < 1.0 && (2.0 * z - 1.0).norm() >= 1.0 && (2.0 * z + 1.0).norm() >= 1.0
    }

    /// Move a frame into the fundamental domain by side pairings.
    pub fn reduce(&self, f: &Frame) -> Result<Frame> {
        let t_inv = |k: f64| Matrix2::new(1.0, -2.0 * k, 0.0, 1.0);
        let b = Matrix2::new(1.0, 0.0, 2.0, 1.0);
        let b_inv = Matrix2::new(1.0, 0.0, -2.0, 1.0);
        let mut g = f.0;
        for _ in 0..self.max_iterations {
            let z = mobius(&g, Complex64::new(0.0, 1.0));
            let k = ((z.re + 1.0) / 2.0).floor();
            if k != 0.0 {
                g = t_inv(k) * g;
                continue;
            }
            if (2.0 * z - 1.0).norm() < 1.0 {
                g = b_inv * g;
            } else if (2.0 * z + 1.0).norm() < 1.0 {
                g = b * g;
            } else {
                let mut out = Frame(g);
                out.renormalize();
                return Ok(out);
            }
        }
        Err(Error::NonTermination(self.max_iterations))
    }
}

pub fn flow_quotient(z0: Complex64, alpha0: f64, t: f64, surf: &QuotientSurface) -> Result<UnitTangent> {
    if !(z0.im > 0.0) {
        return Err(Error::Domain(format!("base point must lie in the upper half plane, got {z0}")));
    }
    let f = Frame::from_tangent(UnitTangent { z: z0, alpha: alpha0 }).flow(t);
    Ok(surf.reduce(&f)?.tangent())
}

/// Unreduced lift of the quotient flow.
pub fn flow_upper_half_plane(z0: Complex64, alpha0: f64, t: f64) -> UnitTangent {
    Frame::from_tangent(UnitTangent { z: z0, alpha: alpha0 }).flow(t).tangent()
}

pub fn hyperbolic_distance(z: Complex64, w: Complex64) -> f64 {
    (1.0 + (z - w).norm_sqr() / (2.0 * z.im * w.im)).acosh()
}

/// Total Liouville mass of the quotient: area `2π` times the fibre length `2π`.
pub const LIOUVILLE_MASS: f64 = 4.0 * PI * PI;

/// Area of each ideal triangle of the proposal; four of them make the
/// proposal region, two of which tile the fundamental domain.
const PROPOSAL_AREA: f64 = 4.0 * PI;

fn sample_ideal_triangle(rng: &mut ChaCha8Rng) -> Complex64 {
    // Exact hyperbolic-area sampling on the triangle (-1, 1, ∞).
    let x = (PI * rng.gen::<f64>()).cos();
    let v: f64 = 1.0 - rng.gen::<f64>();
    Complex64::new(x, (1.0 - x * x).max(0.0).sqrt() / v)
}

fn propose(rng: &mut ChaCha8Rng) -> Complex64 {
    let w = sample_ideal_triangle(rng);
    let which: u32 = rng.gen_range(0..4);
    let to01 = (w + 1.0) / 2.0;
    match which {
        0 => (w - 1.0) / 2.0,
        1 => to01,
        2 => -1.0 / (to01 + 1.0),
        _ => to01 / (to01 + 1.0),
    }
}

/// One Liouville sample and the number of proposals it consumed.
pub fn sample_one(seed: u64, index: u64, surf: &QuotientSurface) -> (UnitTangent, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let mut tries = 0;
    loop {
        tries += 1;
        let z = propose(&mut rng);
        let alpha = PI * (2.0 * rng.gen::<f64>() - 1.0);
        if surf.in_domain(z) {
            return (UnitTangent { z, alpha }, tries);
        }
    }
}

#[derive(Debug, Clone)]
pub struct LiouvilleSample {
    pub points: Vec<UnitTangent>,
    pub proposals: u64,
}

impl LiouvilleSample {
    /// Rejection estimate of the hyperbolic area of the fundamental domain
    /// and its standard error.
    pub fn area_estimate(&self) -> (f64, f64) {
        let p = self.points.len() as f64 / self.proposals as f64;
        let se = PROPOSAL_AREA * (p * (1.0 - p) / self.proposals as f64).sqrt();
        (PROPOSAL_AREA * p, se)
    }
}

pub fn sample_liouville(n: usize, seed: u64, surf: &QuotientSurface) -> Result<LiouvilleSample> {
    if n == 0 {
        return Err(Error::Argument("sample count must be at least 1".into()));
    }
    let draws: Vec<(UnitTangent, u64)> = (0..n as u64).into_par_iter().map(|i| sample_one(seed, i, surf)).collect();
    let proposals = draws.iter().map(|d| d.1).sum();
    Ok(LiouvilleSample { points: draws.into_iter().map(|d| d.0).collect(), proposals })
}

/// `offset + amplitude·(1 - (d(z, c)/R)²)^k` inside the geodesic ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpObservable {
    pub center: (f64, f64),
    pub radius: f64,
    pub order: u32,
    pub amplitude: f64,
    pub offset: f64,
}

impl BumpObservable {
    pub fn constant(c: f64) -> Self {
        BumpObservable { center: (0.0, 2.0), radius: 0.1, order: 2, amplitude: 0.0, offset: c }
    }

    pub fn center_z(&self) -> Complex64 {
        Complex64::new(self.center.0, self.center.1)
    }

    pub fn eval(&self, v: &UnitTangent) -> f64 {
        if self.amplitude == 0.0 {
            return self.offset;
        }
        let x = hyperbolic_distance(v.z, self.center_z()) / self.radius;
        let b = if x < 1.0 { (1.0 - x * x).powi(self.order as i32) } else { 0.0 };
        self.offset + self.amplitude * b
    }

    /// The geodesic ball must sit inside the fundamental domain so that the
    /// bump descends to the quotient without wrapping.
    pub fn validate(&self) -> Result<()> {
        let z = self.center_z();
        if !(self.radius > 0.0) || !(z.im > 0.0) {
            return Err(Error::Argument("bump needs a positive radius and a centre in the upper half plane".into()));
        }
        let (x, y) = (z.re, z.im);
        let mut dist = f64::INFINITY;
        for line in [-1.0, 1.0] {
            dist = dist.min(((x - line).abs() / y).asinh());
        }
        for m in [-0.5, 0.5] {
            let q = ((z - m).norm_sqr() - 0.25).abs() / (2.0 * 0.5 * y);
            dist = dist.min(q.asinh());
        }
        let inside = x.abs() < 1.0 && (2.0 * z - 1.0).norm() > 1.0 && (2.0 * z + 1.0).norm() > 1.0;
        if !inside || dist <= self.radius {
            return Err(Error::Argument(format!(
                "bump ball of radius {} around {z} leaves the fundamental domain (distance to boundary {dist})",
                self.radius
            )));
        }
        Ok(())
    }

    /// Exact Liouville integral by polar quadrature in geodesic coordinates.
    pub fn liouville_integral(&self) -> f64 {
        let area = 2.0 * PI;
        if self.amplitude == 0.0 {
            return self.offset * area * 2.0 * PI;
        }
        let bump: f64 = gl_panels(0.0, self.radius, 8, 20)
            .iter()
            .map(|&(rho, w)| w * (1.0 - (rho / self.radius).powi(2)).powi(self.order as i32) * rho.sinh())
            .sum();
        2.0 * PI * (self.offset * area + self.amplitude * 2.0 * PI * bump)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRecord {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub sample_count: usize,
    pub seed: u64,
}

impl CorrelationRecord {
    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.values.len() || self.times.len() != self.stderr.len() {
            return Err(Error::Argument("record columns have different lengths".into()));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Argument("record times must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,rho,stderr\n");
        for i in 0..self.times.len() {
            s.push_str(&format!("{},{},{}\n", self.times[i], self.values[i], self.stderr[i]));
        }
        s
    }
}

/// `ρ_{A,B}(t) = ∫ (A∘φ_t)·B dμ_L` on `{0, dt, ..., T_max}`, estimated from
/// `n` Liouville samples.
pub fn correlate<A, B>(a: &A, b: &B, t_max: f64, dt: f64, n: usize, seed: u64, surf: &QuotientSurface) -> Result<CorrelationRecord>
where
    A: Fn(&UnitTangent) -> f64 + Sync,
    B: Fn(&UnitTangent) -> f64 + Sync,
{
    if !(t_max > 0.0) || !(dt > 0.0) {
        return Err(Error::Argument("T_max and dt must be positive".into()));
    }
    let steps = (t_max / dt).round() as usize;
    if (steps as f64 * dt - t_max).abs() > 1e-9 * t_max {
        return Err(Error::Argument(format!("T_max = {t_max} is not a multiple of dt = {dt}")));
    }
    let samples = sample_liouville(n, seed, surf)?;
    let rows: Vec<Result<Vec<f64>>> = samples
        .points
        .par_iter()
        .map(|p| {
            let bv = b(p);
            let mut frame = Frame::from_tangent(*p);
            let mut out = Vec::with_capacity(steps + 1);
            out.push(a(p) * bv);
            for _ in 0..steps {
                frame = surf.reduce(&frame.flow(dt))?;
                out.push(a(&frame.tangent()) * bv);
            }
            Ok(out)
        })
        .collect();
    let rows: Vec<Vec<f64>> = rows.into_iter().collect::<Result<_>>()?;
    let nf = n as f64;
    let mut values = Vec::with_capacity(steps + 1);
    let mut stderr = Vec::with_capacity(steps + 1);
    let mut column = vec![0.0; n];
    for k in 0..=steps {
        for (c, row) in column.iter_mut().zip(&rows) {
            *c = row[k];
        }
        let mean = pairwise_sum(&column) / nf;
        let dev: Vec<f64> = column.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = if n > 1 { pairwise_sum(&dev) / (nf - 1.0) } else { 0.0 };
        values.push(LIOUVILLE_MASS * mean);
        stderr.push(LIOUVILLE_MASS * (var / nf).sqrt());
    }
    let times = (0..=steps).map(|k| k as f64 * dt).collect();
    Ok(CorrelationRecord { times, values, stderr, sample_count: n, seed })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceResult {
    /// `∫_0^{T_max} e^{-st} ρ(t) dt`.
    pub value: Complex64,
    /// `ρ(T_max) e^{-s T_max}/s`, the contribution of a constant tail.
    pub tail_estimate: Complex64,
}

impl LaplaceResult {
    pub fn with_tail(&self) -> Complex64 {
        self.value + self.tail_estimate
    }
}

pub fn laplace_transform(rec: &CorrelationRecord, s: Complex64) -> Result<LaplaceResult> {
    if !(s.re > 0.0) {
        return Err(Error::Domain(format!("Laplace transform needs Re s > 0, got {s}")));
    }
    rec.validate()?;
    let n = rec.times.len();
    if n < 2 {
        return Err(Error::Argument("record needs at least two samples".into()));
    }
    let dt = rec.times[1] - rec.times[0];
    let uniform = rec.times.windows(2).all(|w| ((w[1] - w[0]) - dt).abs() < 1e-9 * dt.abs().max(1.0));
    let f: Vec<Complex64> = rec.times.iter().zip(&rec.values).map(|(t, v)| (-s * t).exp() * v).collect();
    let value = if uniform {
        let re: Vec<f64> = f.iter().map(|c| c.re).collect();
        let im: Vec<f64> = f.iter().map(|c| c.im).collect();
        Complex64::new(simpson_uniform(&re, dt), simpson_uniform(&im, dt))
    } else {
        (0..n - 1).map(|i| (f[i] + f[i + 1]) * 0.5 * (rec.times[i + 1] - rec.times[i])).sum()
    };
    let t_end = rec.times[n - 1];
    let tail_estimate = (-s * t_end).exp() * rec.values[n - 1] / s;
    Ok(LaplaceResult { value, tail_estimate })
}
