//! Escape function for the lifted geodesic flow on the constant-curvature
//! full cusp (`d = 1`).
//!
//! In the dual frame `(ξ_0, ξ_u, ξ_s)` of [`splitting_at`] a covector has
//! components `v = (a, b, c)` with `a = ξ(X)`, `b = ξ(E_s)`, `c = ξ(E_u)`, and
//! the lifted flow acts as `(a, e^t b, e^{-t} c)` at every base point. The
//! weight `m`, the symbol `f` and `G` are built as functions of `v` alone, so
//! invariance under the local isometries holds by representation. The
//! reduced grid samples `α ∈ S¹` and `v̂ ∈ S²`.

use crate::flow::{flow_upper_half_plane, UnitTangent};
use crate::geometry::{splitting_at, wrap_angle, AlphaPoint};
use crate::quad::{gauss_legendre, simpson_weights};
use crate::{Error, Result};
use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

/// Time step of the flow averages.
pub const FLOW_STEP: f64 = 0.05;
/// Step of the finite differences along the flow.
pub const FD_STEP: f64 = 1e-3;
pub const BETA: f64 = 1.0;
const TABLE_STEP: f64 = 1e-5;
const KERNEL_NODES: usize = 64;
const TAU_SCAN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedPhaseGrid {
    pub n_alpha: usize,
    /// Polar angles `iπ/n_lat` from `E*_0`, `i < n_lat`.
    pub n_lat: usize,
    /// Azimuths `2πj/n_lon` in the `(ξ_u, ξ_s)` plane.
    pub n_lon: usize,
    pub delta: f64,
    pub epsilon: f64,
}

impl Default for ReducedPhaseGrid {
    fn default() -> Self {
        ReducedPhaseGrid { n_alpha: 64, n_lat: 32, n_lon: 32, delta: 1.0, epsilon: 0.2 }
    }
}

impl ReducedPhaseGrid {
    pub fn validate(&self) -> Result<()> {
        if self.n_alpha == 0 || self.n_lat < 2 || self.n_lon < 4 {
            return Err(Error::Configuration(format!("grid {}×({}×{}) is too small", self.n_alpha, self.n_lat, self.n_lon)));
        }
        if !(self.delta > 0.0) || !(self.epsilon > 0.0) {
            return Err(Error::Configuration("δ and ε must be positive".into()));
        }
        // U_u^{3ε} and U_{0,s}^{3ε} are disjoint iff 6ε < π/2; the same holds for s.
        if 6.0 * self.epsilon >= FRAC_PI_2 {
            return Err(Error::Configuration(format!("cone neighbourhoods overlap at ε = {}: need 6ε < π/2", self.epsilon)));
        }
        let e3 = 3.0 * self.epsilon;
        for v in self.directions() {
            if (angle_u(&v) < e3 && angle_band_s0(&v) < e3) || (angle_s(&v) < e3 && angle_band_u0(&v) < e3) {
                return Err(Error::Configuration(format!("grid direction {v:?} lies in two cone neighbourhoods")));
            }
        }
        Ok(())
    }

    pub fn alphas(&self) -> Vec<f64> {
        (0..self.n_alpha).map(|k| -PI + 2.0 * PI * k as f64 / self.n_alpha as f64).collect()
    }

    /// Unit dual-frame directions `(a, b, c)`.
    pub fn directions(&self) -> Vec<Vector3<f64>> {
        let mut out = Vec::with_capacity(self.n_lat * self.n_lon);
        for i in 0..self.n_lat {
            let th = PI * i as f64 / self.n_lat as f64;
            for j in 0..self.n_lon {
                let ps = 2.0 * PI * j as f64 / self.n_lon as f64;
                out.push(Vector3::new(th.cos(), th.sin() * ps.cos(), th.sin() * ps.sin()));
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.n_alpha * self.n_lat * self.n_lon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Base point and coordinate covector of the grid point `(k, j)`.
    pub fn phase_point(&self, k: usize, v: &Vector3<f64>) -> (AlphaPoint, Vector3<f64>) {
        let p = AlphaPoint { r: 0.0, theta: 0.0, alpha: self.alphas()[k] };
        let xi = from_dual(&p, v);
        (p, xi)
    }
}

/// `(ξ(X), ξ(E_s), ξ(E_u))` for a covector in `(dr, dθ, dα)` components.
pub fn dual_components(p: &AlphaPoint, xi: &Vector3<f64>) -> Vector3<f64> {
    let f = splitting_at(p);
    Vector3::new(xi.dot(&f.flow), xi.dot(&f.stable), xi.dot(&f.unstable))
}

/// Inverse of [`dual_components`].
pub fn from_dual(p: &AlphaPoint, v: &Vector3<f64>) -> Vector3<f64> {
    let f = splitting_at(p);
    f.flow_dual * v[0] + f.unstable_dual * v[1] + f.stable_dual * v[2]
}

/// Norm of the covector for the metric making the frame orthonormal.
pub fn frame_norm(p: &AlphaPoint, xi: &Vector3<f64>) -> f64 {
    dual_components(p, xi).norm()
}

/// The lifted flow in dual components.
pub fn flow_dual(v: &Vector3<f64>, t: f64) -> Vector3<f64> {
    Vector3::new(v[0], t.exp() * v[1], (-t).exp() * v[2])
}

pub fn base_flow(p: &AlphaPoint, t: f64) -> AlphaPoint {
    let z = Complex64::new(p.theta, p.r.exp());
    let UnitTangent { z, alpha } = flow_upper_half_plane(z, p.alpha, t);
    AlphaPoint { r: z.im.ln(), theta: z.re, alpha }
}

/// `Φ_t(x, ξ) = (φ_t(x), (dφ_t^*)^{-1} ξ)` in coordinates.
pub fn lifted_flow(p: &AlphaPoint, xi: &Vector3<f64>, t: f64) -> (AlphaPoint, Vector3<f64>) {
    let q = base_flow(p, t);
    let v = flow_dual(&dual_components(p, xi), t);
    (q, from_dual(&q, &v))
}

/// `T_{τ,θ0}` lifted to `T*(S*Z)`: `(r, θ, α) ↦ (r + τ, e^τ θ + θ0, α)`.
pub fn isometry_lift(tau: f64, theta0: f64, p: &AlphaPoint, xi: &Vector3<f64>) -> (AlphaPoint, Vector3<f64>) {
    let q = AlphaPoint { r: p.r + tau, theta: tau.exp() * p.theta + theta0, alpha: p.alpha };
    (q, Vector3::new(xi[0], (-tau).exp() * xi[1], xi[2]))
}

/// Angle between `v` and the axis `±E*_u`.
pub fn angle_u(v: &Vector3<f64>) -> f64 {
    v[0].hypot(v[2]).atan2(v[1].abs())
}

pub fn angle_s(v: &Vector3<f64>) -> f64 {
    v[0].hypot(v[1]).atan2(v[2].abs())
}

pub fn angle_0(v: &Vector3<f64>) -> f64 {
    v[1].hypot(v[2]).atan2(v[0].abs())
}

/// Angle between `v` and the plane `E*_0 ⊕ E*_s`.
pub fn angle_band_s0(v: &Vector3<f64>) -> f64 {
    FRAC_PI_2 - angle_u(v)
}

pub fn angle_band_u0(v: &Vector3<f64>) -> f64 {
    FRAC_PI_2 - angle_s(v)
}

/// `6t⁵ - 15t⁴ + 10t³` clamped to `[0, 1]`.
pub fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

/// Equal to 1 on `[-1/2, 1/2]`, supported in `(-1, 1)`.
pub fn chi_g(x: f64) -> f64 {
    1.0 - smoothstep(2.0 * x.abs() - 1.0)
}

/// `K(𝟙_cap - 𝟙_band)` for the cap of radius `2ε` about an axis and the band
/// of half-width `2ε` about the orthogonal plane, as a function of the angle
/// to the axis. The kernel is the bump `(1 - (ρ/w)²)^4` of width `w = ε/2`.
#[derive(Debug, Clone)]
pub struct MollifiedIndicator {
    pub epsilon: f64,
    table: Vec<f64>,
    step: f64,
}

impl MollifiedIndicator {
    pub fn new(epsilon: f64) -> Self {
        let w = 0.5 * epsilon;
        let rule = gauss_legendre(KERNEL_NODES);
        let kernel = |rho: f64| (1.0 - (rho / w).powi(2)).powi(4) * rho.sin();
        let total: f64 = rule.iter().map(|&(x, wt)| 0.5 * w * wt * kernel(0.5 * w * (x + 1.0))).sum();
        let n = (FRAC_PI_2 / TABLE_STEP).ceil() as usize;
        let step = FRAC_PI_2 / n as f64;
        let e2 = 2.0 * epsilon;
        let edges = [e2, FRAC_PI_2 - e2, FRAC_PI_2 + e2, PI - e2];
        let table = (0..=n)
            .into_par_iter()
            .map(|i| {
                let th = (i as f64 * step).max(1e-12);
                // The ψ-fraction has a kink where the circle first meets an edge.
                let mut cuts = vec![0.0, w];
                cuts.extend(edges.iter().map(|e| (th - e).abs()).filter(|&c| c > 0.0 && c < w));
                cuts.sort_by(f64::total_cmp);
                let mut acc = 0.0;
                for seg in cuts.windows(2) {
                    let (a, b) = (seg[0], seg[1]);
                    for &(x, wt) in &rule {
                        let rho = a + 0.5 * (b - a) * (x + 1.0);
                        let cap = arc_fraction(th, rho, 0.0, e2) + arc_fraction(th, rho, PI - e2, PI);
                        let band = arc_fraction(th, rho, FRAC_PI_2 - e2, FRAC_PI_2 + e2);
                        acc += 0.5 * (b - a) * wt * kernel(rho) * (cap - band);
                    }
                }
                acc / total
            })
            .collect();
        MollifiedIndicator { epsilon, table, step }
    }

    /// Value at axis angle `θ ∈ [0, π/2]`.
    pub fn eval(&self, theta: f64) -> f64 {
        let x = theta.clamp(0.0, FRAC_PI_2) / self.step;
        let i = (x.floor() as usize).min(self.table.len() - 2);
        let f = x - i as f64;
        self.table[i] * (1.0 - f) + self.table[i + 1] * f
    }
}

/// Fraction of the circle of radius `ρ` about a point at polar angle `θ`
/// lying in `{θ1 ≤ θ' ≤ θ2}`.
fn arc_fraction(theta: f64, rho: f64, th1: f64, th2: f64) -> f64 {
    let (st, ct) = theta.sin_cos();
    let (sr, cr) = rho.sin_cos();
    let den = st * sr;
    let lo = ((th2.cos() - ct * cr) / den).clamp(-1.0, 1.0);
    let hi = ((th1.cos() - ct * cr) / den).clamp(-1.0, 1.0);
    (lo.acos() - hi.acos()) / PI
}

/// Symmetric Simpson rule on `[-T, T]` with step at most [`FLOW_STEP`].
#[derive(Debug, Clone)]
struct FlowAverage {
    times: Vec<f64>,
    weights: Vec<f64>,
}

impl FlowAverage {
    fn new(t: f64) -> Self {
        let k = (t / FLOW_STEP).ceil().max(1.0) as usize;
        let h = t / k as f64;
        let times = (0..=2 * k).map(|i| -t + i as f64 * h).collect();
        FlowAverage { times, weights: simpson_weights(2 * k + 1, h) }
    }

    fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.times.iter().zip(&self.weights).map(|(&t, &w)| w * f(t)).sum()
    }
}

/// 4th-order central difference of `t ↦ g(t)` at 0.
fn flow_derivative(g: impl Fn(f64) -> f64) -> f64 {
    let h = FD_STEP;
    (8.0 * (g(h) - g(-h)) - (g(2.0 * h) - g(-2.0 * h))) / (12.0 * h)
}

/// `m = (m_T^+ + m_T^-)/2` on `S*M`, as a function of dual components.
#[derive(Debug, Clone)]
pub struct Weight {
    pub t: f64,
    indicator: MollifiedIndicator,
    average: FlowAverage,
}

impl Weight {
    pub fn m_plus(&self, v: &Vector3<f64>) -> f64 {
        self.average.integrate(|t| self.indicator.eval(angle_u(&flow_dual(v, t))))
    }

    pub fn m_minus(&self, v: &Vector3<f64>) -> f64 {
        -self.average.integrate(|t| self.indicator.eval(angle_s(&flow_dual(v, t))))
    }

    pub fn m(&self, v: &Vector3<f64>) -> f64 {
        0.5 * (self.m_plus(v) + self.m_minus(v))
    }

    /// `X_Φ̃ m` by finite differences along the flow.
    pub fn x_m(&self, v: &Vector3<f64>) -> f64 {
        flow_derivative(|t| self.m(&flow_dual(v, t)))
    }
}

/// Membership tests for the sets of the construction.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Cones {
    pub epsilon: f64,
    pub t: f64,
}

impl Cones {
    pub fn in_u(&self, v: &Vector3<f64>, e: f64) -> bool {
        angle_u(v) < e
    }

    pub fn in_s(&self, v: &Vector3<f64>, e: f64) -> bool {
        angle_s(v) < e
    }

    pub fn in_0(&self, v: &Vector3<f64>, e: f64) -> bool {
        angle_0(v) < e
    }

    pub fn in_0s(&self, v: &Vector3<f64>, e: f64) -> bool {
        angle_band_s0(v) < e
    }

    pub fn in_0u(&self, v: &Vector3<f64>, e: f64) -> bool {
        angle_band_u0(v) < e
    }

    /// `V_u = Φ̃_T(S*M \ U_{0,s}^ε)`.
    pub fn in_vu(&self, v: &Vector3<f64>) -> bool {
        !self.in_0s(&flow_dual(v, -self.t), self.epsilon)
    }

    /// `V_s = Φ̃_{-T}(S*M \ U_{0,u}^ε)`.
    pub fn in_vs(&self, v: &Vector3<f64>) -> bool {
        !self.in_0u(&flow_dual(v, self.t), self.epsilon)
    }
}

/// First time after which the transition properties hold, scanned on the grid.
pub fn estimate_tau_max(grid: &ReducedPhaseGrid) -> f64 {
    let e = grid.epsilon;
    let first = |v: &Vector3<f64>, dir: f64, hit: &dyn Fn(&Vector3<f64>) -> bool| -> f64 {
        let mut t = 0.0;
        while !hit(&flow_dual(v, dir * t)) {
            t += TAU_SCAN;
        }
        t
    };
    let mut tau: f64 = 0.0;
    for v in grid.directions() {
        if angle_u(&v) >= e {
            tau = tau.max(first(&v, -1.0, &|w| angle_band_s0(w) < e));
        }
        if angle_band_s0(&v) >= e {
            tau = tau.max(first(&v, 1.0, &|w| angle_u(w) < e));
        }
        if angle_s(&v) >= e {
            tau = tau.max(first(&v, 1.0, &|w| angle_band_u0(w) < e));
        }
        if angle_band_u0(&v) >= e {
            tau = tau.max(first(&v, -1.0, &|w| angle_s(w) < e));
        }
    }
    tau
}

/// Closed-form transition time bound `log(1/(tan ε sin ε))`.
pub fn tau_max_bound(epsilon: f64) -> f64 {
    (1.0 / (epsilon.tan() * epsilon.sin())).ln()
}

/// Radius of the small cones on which `m` is constant.
pub fn epsilon_prime(epsilon: f64, t: f64) -> f64 {
    0.5 * ((1.5 * epsilon).tan() * (-2.0 * t).exp()).atan()
}

#[derive(Debug, Clone)]
pub struct SampledWeight {
    pub weight: Weight,
    pub tau_max: f64,
    /// Indexed `(k, j)` as `k * directions + j`.
    pub values: Vec<f64>,
}

pub fn build_weight(grid: &ReducedPhaseGrid, t: f64) -> Result<SampledWeight> {
    grid.validate()?;
    let tau_max = estimate_tau_max(grid).max(tau_max_bound(grid.epsilon));
    if t < 2.0 * tau_max - 1e-12 {
        return Err(Error::Configuration(format!("T = {t} is below 2τ_max = {}", 2.0 * tau_max)));
    }
    let weight = Weight { t, indicator: MollifiedIndicator::new(grid.epsilon), average: FlowAverage::new(t) };
    let dirs = grid.directions();
    let values = (0..grid.n_alpha)
        .into_par_iter()
        .flat_map_iter(|k| {
            let w = &weight;
            dirs.iter().map(move |v| {
                let (p, xi) = grid.phase_point(k, v);
                w.m(&dual_components(&p, &xi))
            })
            .collect::<Vec<_>>()
        })
        .collect();
    Ok(SampledWeight { weight, tau_max, values })
}

/// The elliptic 1-homogeneous symbol `f`: `|p|` on `U_0^ε`, `f_us` away from
/// `U_0^{3ε/2}`.
#[derive(Debug, Clone)]
pub struct Symbol {
    pub t_prime: f64,
    pub epsilon: f64,
    average: FlowAverage,
}

impl Symbol {
    pub fn new(t_prime: f64, epsilon: f64) -> Self {
        Symbol { t_prime, epsilon, average: FlowAverage::new(t_prime) }
    }

    pub fn f_us(&self, v: &Vector3<f64>) -> f64 {
        let s = self.average.integrate(|t| flow_dual(v, t).norm().ln());
        (s / (2.0 * self.t_prime)).exp()
    }

    fn blend(&self, v: &Vector3<f64>) -> f64 {
        1.0 - smoothstep((angle_0(v) - self.epsilon) / (0.5 * self.epsilon))
    }

    pub fn f(&self, v: &Vector3<f64>) -> f64 {
        let c = self.blend(v);
        if c == 1.0 {
            v[0].abs()
        } else if c == 0.0 {
            self.f_us(v)
        } else {
            c * v[0].abs() + (1.0 - c) * self.f_us(v)
        }
    }

    pub fn x_log_f(&self, v: &Vector3<f64>) -> f64 {
        flow_derivative(|t| self.f(&flow_dual(v, t)).ln())
    }

    pub fn x_log_f_us(&self, v: &Vector3<f64>) -> f64 {
        flow_derivative(|t| self.f_us(&flow_dual(v, t)).ln())
    }

    /// A lower bound for `inf f` on the unit sphere: `f ≥ min(|a|, f_us)`,
    /// `f_us ≥ |v|` and `|a| ≥ cos(3ε/2)` where `|p|` enters.
    pub fn lower_bound(&self) -> f64 {
        (1.5 * self.epsilon).cos()
    }
}

#[derive(Debug, Clone)]
pub struct SampledSymbol {
    pub symbol: Symbol,
    /// Frame-comparison constant measured on the grid.
    pub c_frame: f64,
    pub f: Vec<f64>,
    pub f_us: Vec<f64>,
}

pub fn build_f(grid: &ReducedPhaseGrid, t_prime: f64) -> Result<SampledSymbol> {
    grid.validate()?;
    // C = sup |Φ_t ξ| e^{βt}/|ξ| over E*_s, t ∈ [0, T'].
    let mut c_frame: f64 = 1.0;
    for k in 0..grid.n_alpha {
        let p = AlphaPoint { r: 0.0, theta: 0.0, alpha: grid.alphas()[k] };
        let xi = from_dual(&p, &Vector3::new(0.0, 0.0, 1.0));
        for i in 0..=20 {
            let t = t_prime * i as f64 / 20.0;
            let (q, x) = lifted_flow(&p, &xi, t);
            c_frame = c_frame.max(frame_norm(&q, &x) * (BETA * t).exp() / frame_norm(&p, &xi));
        }
    }
    if !(t_prime > 2.0 * c_frame.ln() / BETA) {
        return Err(Error::Configuration(format!("T' = {t_prime} must exceed 2 log C/β = {}", 2.0 * c_frame.ln() / BETA)));
    }
    let symbol = Symbol::new(t_prime, grid.epsilon);
    let dirs = grid.directions();
    let f = dirs.iter().map(|v| symbol.f(v)).collect();
    let f_us = dirs.iter().map(|v| symbol.f_us(v)).collect();
    Ok(SampledSymbol { symbol, c_frame, f, f_us })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapeConstants {
    pub epsilon: f64,
    pub epsilon_prime: f64,
    pub delta: f64,
    pub tau_max: f64,
    pub t: f64,
    pub t_prime: f64,
    pub beta: f64,
    pub c_frame: f64,
    pub c_g_prime: f64,
    pub c_g: f64,
    pub c_f: f64,
    pub r: f64,
}

#[derive(Debug, Clone)]
pub struct EscapeData {
    pub grid: ReducedPhaseGrid,
    pub weight: SampledWeight,
    pub symbol: SampledSymbol,
    pub constants: EscapeConstants,
}

impl EscapeData {
    /// `G` as a function of dual components.
    pub fn g_dual(&self, v: &Vector3<f64>) -> f64 {
        let c = &self.constants;
        let n = v.norm();
        let cut = 1.0 - chi_g(n / c.delta);
        if cut == 0.0 {
            return 0.0;
        }
        let m = self.weight.weight.m(v);
        c.c_g_prime * cut * m * (2.0 * self.symbol.symbol.f(v) / (c.c_f * c.delta)).ln()
    }

    pub fn g(&self, p: &AlphaPoint, xi: &Vector3<f64>) -> f64 {
        self.g_dual(&dual_components(p, xi))
    }

    /// The weight of order `𝐦 = C_G' m`.
    pub fn order(&self, v: &Vector3<f64>) -> f64 {
        self.constants.c_g_prime * self.weight.weight.m(v)
    }

    pub fn x_g_dual(&self, v: &Vector3<f64>) -> f64 {
        flow_derivative(|t| self.g_dual(&flow_dual(v, t)))
    }

    /// `X_Φ G` along the lifted flow in coordinates.
    pub fn x_g(&self, p: &AlphaPoint, xi: &Vector3<f64>) -> f64 {
        flow_derivative(|t| {
            let (q, x) = lifted_flow(p, xi, t);
            self.g(&q, &x)
        })
    }
}

/// Weight, symbol and constants for the proof's choices:
/// `T = 2τ_max`, `C_G' = max(2/(βT), 1)`, `C_G = 2C_G'T`.
pub fn assemble_g(grid: &ReducedPhaseGrid, t_prime: f64) -> Result<EscapeData> {
    grid.validate()?;
    let tau_max = estimate_tau_max(grid).max(tau_max_bound(grid.epsilon));
    let t = 2.0 * tau_max;
    let weight = build_weight(grid, t)?;
    let symbol = build_f(grid, t_prime)?;
    let c_g_prime = (2.0 / (BETA * t)).max(1.0);
    let constants = EscapeConstants {
        epsilon: grid.epsilon,
        epsilon_prime: epsilon_prime(grid.epsilon, t),
        delta: grid.delta,
        tau_max,
        t,
        t_prime,
        beta: BETA,
        c_frame: symbol.c_frame,
        c_g_prime,
        c_g: 2.0 * c_g_prime * t,
        c_f: symbol.symbol.lower_bound(),
        // log(2f/(c_f δ)) > 1 once |ξ| > Rδ; enough because m X_Φ f ≥ 0.
        r: 0.5 * std::f64::consts::E,
    };
    Ok(EscapeData { grid: *grid, weight, symbol, constants })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub v: [f64; 3],
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub name: String,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub margin: f64,
    pub threshold: f64,
    pub samples: usize,
    pub witnesses: Vec<Witness>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub passed: bool,
    pub grid: ReducedPhaseGrid,
    pub constants: EscapeConstants,
    pub conditions: Vec<ConditionReport>,
}

impl Certificate {
    pub fn condition(&self, name: &str) -> Option<&ConditionReport> {
        self.conditions.iter().find(|c| c.name == name)
    }
}

/// Which side of the threshold passes.
#[derive(Clone, Copy)]
enum Bound {
    AtLeast,
    AtMost,
}

fn report(name: &str, values: &[(Vector3<f64>, f64)], threshold: f64, bound: Bound) -> ConditionReport {
    let bad = |x: f64| match bound {
        Bound::AtLeast => x < threshold,
        Bound::AtMost => x > threshold,
    };
    let key = |x: f64| match bound {
        Bound::AtLeast => x,
        Bound::AtMost => -x,
    };
    let margin = values.iter().map(|v| v.1).fold(None, |acc: Option<f64>, x| Some(match acc {
        None => x,
        Some(a) if key(x) < key(a) => x,
        Some(a) => a,
    }));
    let mut witnesses: Vec<Witness> = values
        .iter()
        .filter(|v| bad(v.1))
        .take(8)
        .map(|(v, x)| Witness { v: [v[0], v[1], v[2]], value: *x })
        .collect();
    witnesses.truncate(8);
    ConditionReport {
        name: name.into(),
        passed: witnesses.is_empty() && !values.is_empty(),
        margin: margin.unwrap_or(f64::NAN),
        threshold,
        samples: values.len(),
        witnesses,
    }
}

/// Options for [`verify`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub samples: usize,
    pub seed: u64,
    pub max_norm: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { samples: 100_000, seed: 20, max_norm: 1e6 }
    }
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let z: f64 = rng.gen_range(-1.0..1.0);
    let ph: f64 = rng.gen_range(0.0..2.0 * PI);
    let s = (1.0 - z * z).sqrt();
    Vector3::new(z, s * ph.cos(), s * ph.sin())
}

/// A unit vector within angle `e` of the axis `k`.
fn near_axis(rng: &mut ChaCha8Rng, k: usize, e: f64) -> Vector3<f64> {
    let th = e * rng.gen_range(0.0..1.0f64).sqrt();
    let ph: f64 = rng.gen_range(0.0..2.0 * PI);
    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let mut v = Vector3::zeros();
    v[k] = sign * th.cos();
    v[(k + 1) % 3] = th.sin() * ph.cos();
    v[(k + 2) % 3] = th.sin() * ph.sin();
    v
}

fn slope_fit(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Sampled certificate of the escape-function properties.
pub fn verify(data: &EscapeData, opts: &VerifyOptions) -> Certificate {
    let c = data.constants;
    let w = &data.weight.weight;
    let sym = &data.symbol.symbol;
    let cones = Cones { epsilon: c.epsilon, t: c.t };
    let grid = &data.grid;
    let dirs = grid.directions();
    let mut conditions = Vec::new();

    // Weight on the grid, through the coordinate route.
    let grid_points: Vec<(usize, Vector3<f64>)> = (0..grid.n_alpha).flat_map(|k| dirs.iter().map(move |v| (k, *v))).collect();
    let xm: Vec<(Vector3<f64>, f64)> = grid_points
        .par_iter()
        .map(|(k, v)| {
            let (p, xi) = grid.phase_point(*k, v);
            let xm = flow_derivative(|t| {
                let (q, x) = lifted_flow(&p, &xi, t);
                w.m(&dual_components(&q, &x))
            });
            (*v, xm)
        })
        .collect();
    conditions.push(report("(b) X m >= 0", &xm, -1e-6, Bound::AtLeast));
    let outside: Vec<_> = xm.iter().copied().filter(|(v, _)| !cones.in_vu(v) && !cones.in_vs(v) && !cones.in_0(v, c.epsilon)).collect();
    conditions.push(report("(c) X m >= 1 off V_u, V_s, U_0", &outside, 1.0 - 1e-3, Bound::AtLeast));
    let range: Vec<_> = data.weight.values.iter().zip(&grid_points).map(|(m, (_, v))| (*v, m.abs())).collect();
    conditions.push(report("|m| <= 2T", &range, 2.0 * c.t + 1e-9, Bound::AtMost));

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let small = 200.min(opts.samples.max(1));
    for (name, axis, target) in [("(d) m = 2T on U_u", 1, 2.0 * c.t), ("(d) m = -2T on U_s", 2, -2.0 * c.t), ("(d) m = 0 on U_0", 0, 0.0)] {
        let mut pts: Vec<Vector3<f64>> = (0..small).map(|_| near_axis(&mut rng, axis, c.epsilon_prime)).collect();
        pts.extend(dirs.iter().copied().filter(|v| angle_to_axis(v, axis) < c.epsilon_prime));
        let vals: Vec<_> = pts.iter().map(|v| (*v, (w.m(v) - target).abs())).collect();
        conditions.push(report(name, &vals, 1e-9, Bound::AtMost));
    }
    let vu: Vec<_> = xm.iter().filter(|(v, _)| cones.in_vu(v)).map(|(v, _)| (*v, w.m(v) - c.t)).collect();
    let vs: Vec<_> = xm.iter().filter(|(v, _)| cones.in_vs(v)).map(|(v, _)| (*v, -c.t - w.m(v))).collect();
    conditions.push(report("(e) m > T on V_u", &vu, 0.0, Bound::AtLeast));
    conditions.push(report("(e) m < -T on V_s", &vs, 0.0, Bound::AtLeast));

    // Symbol f.
    let es: Vec<_> = (0..small)
        .map(|_| {
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let v = Vector3::new(0.0, 0.0, sign * rng.gen_range(0.1..10.0));
            (v, sym.x_log_f_us(&v))
        })
        .collect();
    conditions.push(report("X log f_us <= -3β/4 on E*_s", &es, -0.75 * BETA + 1e-3, Bound::AtMost));
    let nu: Vec<_> = xm.iter().filter(|(v, _)| cones.in_vu(v)).map(|(v, _)| (*v, sym.x_log_f(v))).collect();
    let ns: Vec<_> = xm.iter().filter(|(v, _)| cones.in_vs(v)).map(|(v, _)| (*v, -sym.x_log_f(v))).collect();
    conditions.push(report("X log f >= β/2 on N_u", &nu, 0.5 * BETA - 1e-3, Bound::AtLeast));
    conditions.push(report("X log f <= -β/2 on N_s", &ns, 0.5 * BETA - 1e-3, Bound::AtLeast));
    let n0: Vec<_> = (0..small)
        .map(|_| {
            let v = near_axis(&mut rng, 0, 0.9 * c.epsilon) * rng.gen_range(0.5..100.0);
            (v, flow_derivative(|t| sym.f(&flow_dual(&v, t))).abs())
        })
        .collect();
    conditions.push(report("X f = 0 on N_0", &n0, 1e-8, Bound::AtMost));
    let homog: Vec<_> = dirs.iter().map(|v| (*v, (sym.f(&(v * 2.0)) - 2.0 * sym.f(v)).abs())).collect();
    conditions.push(report("f(2ξ) = 2f(ξ)", &homog, 1e-10, Bound::AtMost));
    let inf: Vec<_> = dirs.iter().map(|v| (*v, sym.f(v))).collect();
    conditions.push(report("f >= c_f on |ξ| = 1", &inf, c.c_f, Bound::AtLeast));

    // Sampled phase points with |ξ| > δ, log-uniform up to max_norm.
    let samples: Vec<Vector3<f64>> = (0..opts.samples)
        .map(|_| {
            let u = random_unit(&mut rng);
            let n = c.delta * (opts.max_norm / c.delta).powf(rng.gen_range(0.0..1.0f64)) * (1.0 + 1e-9);
            u * n
        })
        .collect();
    let xg: Vec<(Vector3<f64>, f64, f64)> = samples
        .par_iter()
        .map(|v| {
            let m = w.m(v);
            let mxf = m * sym.x_log_f(v);
            (*v, data.x_g_dual(v), mxf)
        })
        .collect();
    let all: Vec<_> = xg.iter().map(|(v, x, _)| (*v, *x)).collect();
    conditions.push(report("(ii) X G >= 0 on |ξ| > δ", &all, -1e-6, Bound::AtLeast));
    let sign: Vec<_> = xg.iter().map(|(v, _, s)| (*v, *s)).collect();
    conditions.push(report("m X log f >= 0", &sign, -1e-6, Bound::AtLeast));
    let strict: Vec<_> = xg
        .iter()
        .filter(|(v, _, _)| v.norm() > c.r * c.delta && !cones.in_0(v, c.epsilon))
        .map(|(v, x, _)| (*v, *x))
        .collect();
    conditions.push(report("(i) X G > 1 off |ξ| < Rδ and N_0", &strict, 1.0 - 1e-3, Bound::AtLeast));

    // Logarithmic asymptotics.
    let logs: Vec<f64> = (0..=20).map(|i| (1e2f64).ln() + (1e4f64).ln() * i as f64 / 20.0).collect();
    for (name, axis, target) in [("(iii) slope +C_G on N_u", 1, c.c_g), ("(iii) slope -C_G on N_s", 2, -c.c_g)] {
        let vals: Vec<_> = (0..16)
            .map(|_| {
                let u = near_axis(&mut rng, axis, c.epsilon_prime);
                let ys: Vec<f64> = logs.iter().map(|l| data.g_dual(&(u * l.exp()))).collect();
                (u, (slope_fit(&logs, &ys) - target).abs() / target.abs())
            })
            .collect();
        conditions.push(report(name, &vals, 0.02, Bound::AtMost));
    }
    let zero: Vec<_> = (0..small)
        .map(|_| {
            let u = near_axis(&mut rng, 0, c.epsilon_prime);
            let v = u * (c.r * c.delta * (opts.max_norm).powf(rng.gen_range(0.0..1.0f64)) * (1.0 + 1e-9));
            (v, data.g_dual(&v).abs())
        })
        .collect();
    conditions.push(report("(iii) G = 0 on N_0", &zero, 1e-9, Bound::AtMost));

    // Invariance under T_{τ,θ0}: the same representation at both points.
    let inv: Vec<_> = (0..small)
        .map(|_| {
            let p = AlphaPoint { r: rng.gen_range(-1.0..3.0), theta: rng.gen_range(-0.5..0.5), alpha: rng.gen_range(-PI..PI) };
            let xi = Vector3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            let (q, eta) = isometry_lift(rng.gen_range(-2.0..2.0), rng.gen_range(-1.0..1.0), &p, &xi);
            let (g0, g1) = (data.g(&p, &xi), data.g(&q, &eta));
            (dual_components(&p, &xi), (g1 - g0).abs() / g0.abs().max(1.0))
        })
        .collect();
    conditions.push(report("(iv) G invariant under T_{τ,θ0}", &inv, 1e-12, Bound::AtMost));

    let passed = conditions.iter().all(|c| c.passed);
    Certificate { passed, grid: *grid, constants: c, conditions }
}

fn angle_to_axis(v: &Vector3<f64>, axis: usize) -> f64 {
    match axis {
        0 => angle_0(v),
        1 => angle_u(v),
        _ => angle_s(v),
    }
}

/// `dφ_t` in coordinates, column by column, from the numerical variational flow.
pub fn numeric_differential(p: &AlphaPoint, t: f64, tol: f64) -> Result<(AlphaPoint, Matrix3<f64>)> {
    let mut m = Matrix3::zeros();
    let mut q = *p;
    for i in 0..3 {
        let (qi, col) = crate::geometry::numeric_pushforward(p, &Vector3::ith(i, 1.0), t, tol)?;
        m.set_column(i, &col);
        q = qi;
    }
    q.alpha = wrap_angle(q.alpha);
    Ok((q, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_grid() -> ReducedPhaseGrid {
        ReducedPhaseGrid { n_alpha: 4, n_lat: 16, n_lon: 16, ..Default::default() }
    }

    #[test]
    fn flow_dual_is_preserved() {
        for (r, th, a) in [(0.3, 0.1, 0.7), (-1.0, 2.0, -2.5), (2.0, -0.4, 3.0)] {
            let p = AlphaPoint { r, theta: th, alpha: a };
            let xi = splitting_at(&p).flow_dual;
            for t in [-5.0, 0.5, 7.0] {
                let (q, x) = lifted_flow(&p, &xi, t);
                let v = dual_components(&q, &x);
                assert!((v - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-10, "{v:?}");
            }
        }
    }

    #[test]
    fn lift_matches_the_variational_flow() {
        let p = AlphaPoint { r: 0.2, theta: 0.3, alpha: 1.1 };
        let xi = Vector3::new(0.4, -1.3, 0.8);
        let (q_num, d) = numeric_differential(&p, 3.0, 1e-13).unwrap();
        let (q, x) = lifted_flow(&p, &xi, 3.0);
        assert!((q.r - q_num.r).abs() < 1e-9 && (q.theta - q_num.theta).abs() < 1e-9);
        assert!(wrap_angle(q.alpha - q_num.alpha).abs() < 1e-9);
        // (dφ_t^*)^{-1} ξ pairs with dφ_t v as ξ pairs with v.
        for i in 0..3 {
            let v = Vector3::ith(i, 1.0);
            assert!((x.dot(&(d * v)) - xi.dot(&v)).abs() < 1e-8 * xi.norm());
        }
        let xu = splitting_at(&p).unstable_dual;
        let (q, x) = lifted_flow(&p, &xu, 3.0);
        assert!((frame_norm(&q, &x) / frame_norm(&p, &xu) - 3f64.exp()).abs() < 1e-8 * 3f64.exp());
    }

    #[test]
    fn generic_covector_is_dominated_by_the_unstable_part() {
        let p = AlphaPoint { r: -0.3, theta: 0.0, alpha: 0.4 };
        let xi = Vector3::new(0.7, 0.2, -0.5);
        let (q, d) = numeric_differential(&p, 10.0, 1e-13).unwrap();
        // Oracle: ξ_t = ξ ∘ (dφ_t)^{-1}.
        let xt = d.try_inverse().unwrap().transpose() * xi;
        let v = dual_components(&q, &xt);
        let ratio = v[1].abs() / v[0].hypot(v[2]);
        assert!(ratio > 1e3, "{ratio}");
        let (_, x) = lifted_flow(&p, &xi, 10.0);
        assert!((x - xt).norm() < 1e-6 * xt.norm());
    }

    #[test]
    fn overlapping_cones_are_rejected() {
        let g = ReducedPhaseGrid { epsilon: 0.3, ..small_grid() };
        assert!(matches!(g.validate(), Err(Error::Configuration(_))));
        assert!(small_grid().validate().is_ok());
    }

    #[test]
    fn mollified_indicator_is_flat_and_monotone() {
        let k = MollifiedIndicator::new(0.2);
        assert_eq!(k.eval(0.0), 1.0);
        assert_eq!(k.eval(0.3 - 1e-6), 1.0);
        assert_eq!(k.eval(FRAC_PI_2), -1.0);
        assert_eq!(k.eval(FRAC_PI_2 - 0.3 + 1e-6), -1.0);
        assert_eq!(k.eval(0.7), 0.0);
        assert!(k.table.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    }

    #[test]
    fn transition_time_is_below_the_bound() {
        let g = small_grid();
        let tau = estimate_tau_max(&g);
        let bound = tau_max_bound(g.epsilon);
        assert!(tau <= bound + 2.0 * TAU_SCAN && tau > 0.8 * bound, "{tau} vs {bound}");
    }

    #[test]
    fn weight_properties() {
        let g = small_grid();
        let t = 2.0 * tau_max_bound(g.epsilon);
        let sw = build_weight(&g, t).unwrap();
        let w = &sw.weight;
        let ep = epsilon_prime(g.epsilon, t);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            assert!((w.m(&near_axis(&mut rng, 1, ep)) - 2.0 * t).abs() < 1e-9);
            assert!((w.m(&near_axis(&mut rng, 2, ep)) + 2.0 * t).abs() < 1e-9);
            assert!(w.m(&near_axis(&mut rng, 0, ep)).abs() < 1e-9);
        }
        let cones = Cones { epsilon: g.epsilon, t };
        for v in g.directions() {
            let xm = w.x_m(&v);
            assert!(xm >= -1e-6, "{v:?}: {xm}");
            if !cones.in_vu(&v) && !cones.in_vs(&v) && !cones.in_0(&v, g.epsilon) {
                assert!(xm >= 1.0 - 1e-3, "{v:?}: {xm}");
            }
        }
        assert!(sw.values.iter().all(|m| m.abs() <= 2.0 * t + 1e-9));
        assert!(build_weight(&g, 0.5 * t).is_err());
    }

    #[test]
    fn weight_is_odd_under_the_swap() {
        let g = small_grid();
        let w = build_weight(&g, 2.0 * tau_max_bound(g.epsilon)).unwrap().weight;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let v = random_unit(&mut rng);
            let sw = Vector3::new(v[0], v[2], v[1]);
            assert!((w.m(&v) + w.m(&sw)).abs() < 1e-12);
        }
    }

    #[test]
    fn symbol_properties() {
        let g = small_grid();
        let s = build_f(&g, 1.0).unwrap();
        assert!((s.c_frame - 1.0).abs() < 1e-12);
        let sym = &s.symbol;
        let es = Vector3::new(0.0, 0.0, 2.0);
        assert!(sym.x_log_f_us(&es) <= -0.75 + 1e-3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let v = random_unit(&mut rng) * rng.gen_range(0.1..50.0);
            assert!((sym.f(&(v * 2.0)) - 2.0 * sym.f(&v)).abs() < 1e-10 * sym.f(&v));
            assert!(sym.f(&v) >= sym.lower_bound() * v.norm());
            let n0 = near_axis(&mut rng, 0, 0.9 * g.epsilon) * 3.0;
            assert!(flow_derivative(|t| sym.f(&flow_dual(&n0, t))).abs() < 1e-8);
        }
    }

    #[test]
    fn monotone_along_trajectories() {
        let data = assemble_g(&small_grid(), 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let p = AlphaPoint { r: rng.gen_range(-1.0..1.0), theta: 0.0, alpha: rng.gen_range(-PI..PI) };
            let xi = random_unit(&mut rng) * 5.0;
            let mut prev = f64::NEG_INFINITY;
            for i in 0..60 {
                let (q, x) = lifted_flow(&p, &xi, -3.0 + 0.1 * i as f64);
                if frame_norm(&q, &x) <= data.constants.delta {
                    prev = f64::NEG_INFINITY;
                    continue;
                }
                let gv = data.g(&q, &x);
                assert!(gv >= prev - 1e-6, "{gv} < {prev}");
                prev = gv;
            }
        }
    }

    #[test]
    fn small_certificate_passes() {
        let data = assemble_g(&small_grid(), 1.0).unwrap();
        let cert = verify(&data, &VerifyOptions { samples: 4000, ..Default::default() });
        for c in &cert.conditions {
            assert!(c.passed, "{}: margin {} vs {} ({:?})", c.name, c.margin, c.threshold, c.witnesses.first());
        }
        assert!(serde_json::to_string(&cert).is_ok());
    }
}
