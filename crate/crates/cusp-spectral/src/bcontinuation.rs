//! Continuation of the model resolvent `(X_b - hs)^{-1}` on `ℝ_r × S^d`.
//!
//! Inputs are finite sums `Σ χ_k(r) G_k(φ) Υ_k(u)` with
//! `G(φ) = w(φ) sin^m φ G̃(cos φ)`, a polynomial `G̃`, a homogeneous `Υ` of
//! degree `m` and an optional window `w` vanishing near the North pole.
//! In `y = log tan(φ/2)` the indicial equation for one such term reads
//! `h(F' - a tanh y F - s̃F) = G` with `a = λ/h + d/2`, `s̃ = s - A`, and the
//! solution regular at the South pole is
//! `F(y) = -(1/h) ∫_y^∞ (F_0(y)/F_0(y')) G(y') dy'`, `F_0 = cosh^a y e^{s̃y}`.
//! Near the South pole the integral is continued termwise in `w = e^{-y}`,
//! which produces the poles at the Minus roots. The poles at the Plus roots
//! live at the North pole and are seen by [`north_pairing`].

use crate::hadamard::radial_mellin;
use crate::indicial::{crossing_level, indicial_roots, Branch, IndicialRoot, ModelOperator};
use crate::poly::HomPoly;
use crate::quad::{gauss_legendre, SphereRule};
use crate::series::Series;
use crate::testfn::{Radial, TestFunction};
use crate::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

/// Distance below which `λ` counts as a root.
pub const ROOT_EXCLUSION: f64 = 1e-8;
/// Distance below which an abscissa counts as passing through a root.
pub const ABSCISSA_EXCLUSION: f64 = 1e-6;
/// Levels scanned when enumerating roots.
pub const ROOT_LEVELS: usize = 200;
pub const M_MAX: usize = 8;
/// `y` beyond which the South pole series is used directly (`e^{-y} < 0.1`).
const Y_SOUTH: f64 = 2.31;
const SOUTH_TERMS: usize = 80;
const Y_PANEL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourSpec {
    /// Abscissa `Re λ/h` of the vertical line.
    pub rho: f64,
    /// Truncation of `|Im λ/h|`.
    pub height: f64,
    pub panels: usize,
    pub tail_tol: f64,
}

impl Default for ContourSpec {
    fn default() -> Self {
        ContourSpec { rho: 0.0, height: 40.0, panels: 80, tail_tol: 1e-10 }
    }
}

impl ContourSpec {
    pub fn at(rho: f64) -> Self {
        ContourSpec { rho, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.height > 0.0) {
            return Err(Error::Configuration(format!("contour height must be positive, got {}", self.height)));
        }
        if self.panels < 4 {
            return Err(Error::Configuration(format!("need at least 4 panels, got {}", self.panels)));
        }
        Ok(())
    }
}

/// Uniform grid on `[-L, L]` used for the transform in `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RGrid {
    pub half_width: f64,
    pub points: usize,
}

impl Default for RGrid {
    fn default() -> Self {
        RGrid { half_width: 30.0, points: 4096 }
    }
}

impl RGrid {
    pub fn nodes(&self) -> Vec<f64> {
        let dx = self.step();
        (0..self.points).map(|i| -self.half_width + i as f64 * dx).collect()
    }

    pub fn step(&self) -> f64 {
        2.0 * self.half_width / (self.points - 1) as f64
    }
}

/// `G(φ) Υ(u)` with `G = w(φ) sin^m φ Σ_k c_k cos^k φ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularProfile {
    pub upsilon: HomPoly,
    pub poly: Vec<Complex64>,
    /// The window rises from 0 at `φ_a` to 1 at `φ_b`.
    pub window: Option<(f64, f64)>,
}

/// `0` for `t ≤ 0`, `1` for `t ≥ 1`, smooth and flat at both ends.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let u = 1.0 / t - 1.0 / (1.0 - t);
        if u > 0.0 {
            let e = (-u).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + u.exp())
        }
    }
}

pub fn phi_of_y(y: f64) -> f64 {
    2.0 * y.exp().atan()
}

pub fn y_of_phi(phi: f64) -> f64 {
    (0.5 * phi).tan().ln()
}

fn ln_cosh(y: f64) -> f64 {
    let a = y.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

impl AngularProfile {
    pub fn new(upsilon: HomPoly, poly: Vec<Complex64>) -> Self {
        AngularProfile { upsilon, poly, window: None }
    }

    pub fn windowed(mut self, phi_a: f64, phi_b: f64) -> Self {
        self.window = Some((phi_a, phi_b));
        self
    }

    pub fn m(&self) -> usize {
        self.upsilon.deg
    }

    pub fn validate(&self) -> Result<()> {
        if self.m() > M_MAX {
            return Err(Error::Configuration(format!("angular degree {} exceeds m_max = {M_MAX}", self.m())));
        }
        if let Some((a, b)) = self.window {
            if !(0.0 < a && a < b && b < phi_of_y(Y_SOUTH)) {
                return Err(Error::Configuration(format!("window ({a}, {b}) must satisfy 0 < φ_a < φ_b < {}", phi_of_y(Y_SOUTH))));
            }
        }
        Ok(())
    }

    /// `G` at `y`.
    pub fn g(&self, y: f64) -> Complex64 {
        let c = -y.tanh();
        let sech = 1.0 / y.cosh();
        let mut p = Complex64::new(0.0, 0.0);
        for coef in self.poly.iter().rev() {
            p = p * c + coef;
        }
        let w = match self.window {
            Some((a, b)) => smooth_step((phi_of_y(y) - a) / (b - a)),
            None => 1.0,
        };
        p * sech.powi(self.m() as i32) * w
    }

    /// Coefficients `φ_i` of `2^a (1+w²)^{-a} (2/(1+w²))^m G̃(-(1-w²)/(1+w²))`
    /// in powers of `w`.
    fn south_series(&self, a: Complex64, order: usize) -> Vec<Complex64> {
        let w = Series::variable(0.0, order);
        let one = Series::constant(1.0.into(), order);
        let w2 = &w * &w;
        let opw = &one + &w2;
        let inv = opw.recip();
        let c = (&(&one - &w2) * &inv).scale((-1.0).into());
        let mut p = Series::zero(order);
        for coef in self.poly.iter().rev() {
            p = &(&p * &c) + &Series::constant(*coef, order);
        }
        let mut f = inv.scale(2.0.into());
        let mut fm = Series::constant(1.0.into(), order);
        for _ in 0..self.m() {
            fm = &fm * &f;
        }
        f = opw.powc(-a);
        (&(&p * &fm) * &f).scale(Complex64::from(2.0).powc(a)).c
    }
}

/// One indicial solve evaluated at stations `ys` (any order).
pub fn solve_indicial(op: &ModelOperator, s: Complex64, lambda: Complex64, g: &AngularProfile, ys: &[f64]) -> Result<Vec<Complex64>> {
    check_off_roots(op, s, lambda)?;
    g.validate()?;
    let plan = SolvePlan::new(g, ys);
    plan.solve(op, s, lambda)
}

fn check_off_roots(op: &ModelOperator, s: Complex64, lambda: Complex64) -> Result<()> {
    for r in indicial_roots(op, s, ROOT_LEVELS) {
        let root = r.lambda(s);
        let distance = (root - lambda).norm();
        if distance < ROOT_EXCLUSION {
            return Err(Error::NearRoot { lambda, root, distance });
        }
    }
    Ok(())
}

/// Breakpoints, Gauss nodes and sampled `G` for repeated solves.
#[derive(Debug, Clone)]
pub struct SolvePlan {
    profile: AngularProfile,
    /// Requested stations.
    ys: Vec<f64>,
    /// Station grid descending from `Y_SOUTH`; each requested station sits on it.
    breaks: Vec<f64>,
    /// For each interval `[breaks[i+1], breaks[i]]`: nodes `(y', weight, G(y'))`.
    panels: Vec<Vec<(f64, f64, Complex64)>>,
    index_of_station: Vec<StationRef>,
}

#[derive(Debug, Clone, Copy)]
enum StationRef {
    Grid(usize),
    South(f64),
}

impl SolvePlan {
    pub fn new(profile: &AngularProfile, ys: &[f64]) -> Self {
        let y_min = ys.iter().copied().fold(Y_SOUTH, f64::min);
        let mut breaks: Vec<f64> = ys.iter().copied().filter(|&y| y < Y_SOUTH).collect();
        let n = ((Y_SOUTH - y_min) / Y_PANEL).ceil() as usize;
        for i in 0..=n {
            breaks.push(Y_SOUTH - i as f64 * (Y_SOUTH - y_min) / n.max(1) as f64);
        }
        breaks.sort_by(|a, b| b.total_cmp(a));
        breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let gl = gauss_legendre(16);
        let panels = breaks
            .windows(2)
            .map(|w| {
                let (hi, lo) = (w[0], w[1]);
                let (c, r) = (0.5 * (hi + lo), 0.5 * (hi - lo));
                gl.iter().map(|&(x, wt)| {
                    let y = c + r * x;
                    (y, wt * r, profile.g(y))
                })
                .collect()
            })
            .collect();
        let index_of_station = ys
            .iter()
            .map(|&y| {
                if y >= Y_SOUTH {
                    StationRef::South(y)
                } else {
                    let i = breaks.iter().position(|b| (b - y).abs() < 1e-12).expect("station on grid");
                    StationRef::Grid(i)
                }
            })
            .collect();
        SolvePlan { profile: profile.clone(), ys: ys.to_vec(), breaks, panels, index_of_station }
    }

    pub fn stations(&self) -> &[f64] {
        &self.ys
    }

    /// Values of `F` at the requested stations.
    pub fn solve(&self, op: &ModelOperator, s: Complex64, lambda: Complex64) -> Result<Vec<Complex64>> {
        let h = op.h;
        let a = lambda / h + op.half_d();
        let st = s - op.shift;
        let m = self.profile.m();
        let sigma = a + st + m as f64;
        let phis = self.profile.south_series(a, SOUTH_TERMS);
        for (i, p) in phis.iter().enumerate() {
            if p.norm() > 0.0 && (sigma + i as f64).norm() < ROOT_EXCLUSION {
                return Err(Error::NearRoot { lambda, root: -h * (st + op.half_d() + (m + i) as f64), distance: (sigma + i as f64).norm() * h });
            }
        }
        let south = |y: f64| -> Complex64 {
            let w = (-y).exp();
            let mut acc = Complex64::new(0.0, 0.0);
            let mut wp = w.powi(m as i32);
            for (i, p) in phis.iter().enumerate() {
                if p.norm() > 0.0 {
                    acc += p * wp / (sigma + i as f64);
                }
                wp *= w;
            }
            -acc * Complex64::from(0.5).powc(a) * Complex64::from(1.0 + w * w).powc(a) / h
        };
        // log F_0
        let lf0 = |y: f64| a * ln_cosh(y) + st * y;
        let mut grid = vec![Complex64::new(0.0, 0.0); self.breaks.len()];
        grid[0] = south(self.breaks[0]);
        for i in 0..self.panels.len() {
            let (hi, lo) = (self.breaks[i], self.breaks[i + 1]);
            let base = lf0(lo);
            let mut integral = Complex64::new(0.0, 0.0);
            for &(y, w, g) in &self.panels[i] {
                integral += (base - lf0(y)).exp() * g * w;
            }
            grid[i + 1] = (base - lf0(hi)).exp() * grid[i] - integral / h;
        }
        Ok(self
            .index_of_station
            .iter()
            .map(|r| match r {
                StationRef::Grid(i) => grid[*i],
                StationRef::South(y) => south(*y),
            })
            .collect())
    }
}

/// `F_0(y) = cosh^a y e^{s̃ y}`.
pub fn homogeneous_f0(op: &ModelOperator, s: Complex64, lambda: Complex64, y: f64) -> Complex64 {
    let a = lambda / op.h + op.half_d();
    (a * ln_cosh(y) + (s - op.shift) * y).exp()
}

/// `h(F' - a tanh y F - s̃F) - G` at interior stations of a uniform grid,
/// by 8th-order central differences.
pub fn indicial_residual(op: &ModelOperator, s: Complex64, lambda: Complex64, g: &AngularProfile, ys: &[f64], f: &[Complex64]) -> Vec<Complex64> {
    let a = lambda / op.h + op.half_d();
    let st = s - op.shift;
    let dy = ys[1] - ys[0];
    let mut out = Vec::new();
    for i in 4..ys.len() - 4 {
        let d = fd8(&f[i - 4..=i + 4], dy);
        out.push((d - a * ys[i].tanh() * f[i] - st * f[i]) * op.h - g.g(ys[i]));
    }
    out
}

const FD8: [f64; 4] = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];

fn fd8(v: &[Complex64], dx: f64) -> Complex64 {
    let c = 4;
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 1..=4 {
        acc += (v[c + k] - v[c - k]) * FD8[k - 1];
    }
    acc / dx
}

/// An `r`-profile: exact values plus samples on the transform grid.
#[derive(Clone)]
pub struct RProfile {
    pub exact: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub samples: Vec<f64>,
}

impl fmt::Debug for RProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RProfile({} samples)", self.samples.len())
    }
}

/// `exp(-(r - c)²/(2σ²))`, numerically compact.
pub fn gaussian_bump(center: f64, sigma: f64) -> impl Fn(f64) -> f64 + Send + Sync + Clone + 'static {
    move |r: f64| (-(r - center).powi(2) / (2.0 * sigma * sigma)).exp()
}

/// A separable input `Σ_k χ_k(r) G_k(φ) Υ_k(u)`.
#[derive(Debug, Clone)]
pub struct ModelInput {
    pub d: usize,
    pub grid: RGrid,
    pub terms: Vec<(RProfile, AngularProfile)>,
}

impl ModelInput {
    pub fn new(d: usize, grid: RGrid) -> Self {
        ModelInput { d, grid, terms: Vec::new() }
    }

    pub fn with_term(mut self, chi: impl Fn(f64) -> f64 + Send + Sync + 'static, g: AngularProfile) -> Self {
        let samples = self.grid.nodes().into_iter().map(&chi).collect();
        self.terms.push((RProfile { exact: Arc::new(chi), samples }, g));
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::Configuration("input has no terms".into()));
        }
        for (c, g) in &self.terms {
            if c.samples.len() != self.grid.points {
                return Err(Error::Configuration("r-profile length does not match the grid".into()));
            }
            if g.upsilon.d != self.d {
                return Err(Error::Configuration("Υ has the wrong number of variables".into()));
            }
            g.validate()?;
        }
        Ok(())
    }

    /// `χ̂(λ) = ∫ e^{-λr/h} χ(r) dr` by the trapezoid rule.
    pub fn transform(&self, k: usize, lambda: Complex64, h: f64) -> Complex64 {
        let dx = self.grid.step();
        let chi = &self.terms[k].0.samples;
        let n = chi.len();
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, &c) in chi.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            let r = -self.grid.half_width + i as f64 * dx;
            acc += (-lambda * r / h).exp() * c * w;
        }
        acc * dx
    }

    /// The input on an output grid.
    pub fn sample(&self, r: &[f64], y: &[f64]) -> Field {
        let modes = self
            .terms
            .iter()
            .map(|(chi, g)| {
                let mat = DMatrix::from_fn(r.len(), y.len(), |i, j| g.g(y[j]) * (chi.exact)(r[i]));
                (g.upsilon.clone(), mat)
            })
            .collect();
        Field { d: self.d, r: r.to_vec(), y: y.to_vec(), modes, error_estimate: 0.0 }
    }
}

/// A function on an `(r, y)` grid times angular factors: `Σ_k M_k(r, y) Υ_k(u)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Field {
    pub d: usize,
    pub r: Vec<f64>,
    pub y: Vec<f64>,
    pub modes: Vec<(HomPoly, DMatrix<Complex64>)>,
    pub error_estimate: f64,
}

impl Field {
    pub fn zeros_like(&self) -> Field {
        Field {
            modes: self.modes.iter().map(|(u, m)| (u.clone(), DMatrix::zeros(m.nrows(), m.ncols()))).collect(),
            error_estimate: 0.0,
            ..self.clone()
        }
    }

    /// `self += c o` pointwise in grid index, matching modes by angular factor.
    pub fn axpy(&mut self, c: Complex64, o: &Field) {
        assert!(self.r.len() == o.r.len() && self.y.len() == o.y.len(), "axpy on fields of different shapes");
        for (up, b) in &o.modes {
            match self.modes.iter_mut().find(|(u, _)| u == up) {
                Some((_, a)) => *a += b * c,
                None => self.modes.push((up.clone(), b * c)),
            }
        }
        self.error_estimate += c.norm() * o.error_estimate;
    }

    pub fn sub(&self, o: &Field) -> Field {
        let mut out = self.clone();
        out.axpy((-1.0).into(), o);
        out
    }

    pub fn value(&self, i: usize, j: usize, u: &[f64]) -> Complex64 {
        self.modes.iter().map(|(up, m)| m[(i, j)] * up.eval(u)).sum()
    }

    fn sphere_nodes(&self) -> Vec<Vec<f64>> {
        let deg = self.modes.iter().map(|(u, _)| u.deg).max().unwrap_or(0);
        SphereRule::new(self.d, 2 * deg + 2).nodes
    }

    /// Maximum modulus over the grid and a sphere rule in `u`.
    pub fn sup_norm(&self) -> f64 {
        let nodes = self.sphere_nodes();
        let mut best: f64 = 0.0;
        for i in 0..self.r.len() {
            for j in 0..self.y.len() {
                for u in &nodes {
                    best = best.max(self.value(i, j, u).norm());
                }
            }
        }
        best
    }

    /// Flattened samples over the grid and the given `u` nodes.
    pub fn samples(&self, nodes: &[Vec<f64>]) -> Vec<Complex64> {
        let mut v = Vec::new();
        for i in 0..self.r.len() {
            for j in 0..self.y.len() {
                for u in nodes {
                    v.push(self.value(i, j, u));
                }
            }
        }
        v
    }

    /// `(X_b - hs)u` at interior grid points by 8th-order differences on
    /// uniform grids, as a field on the interior.
    pub fn apply_model(&self, op: &ModelOperator, s: Complex64) -> Field {
        let (nr, ny) = (self.r.len(), self.y.len());
        let dr = self.r[1] - self.r[0];
        let dy = self.y[1] - self.y[0];
        let h = op.h;
        let modes = self
            .modes
            .iter()
            .map(|(up, m)| {
                let out = DMatrix::from_fn(nr - 8, ny - 8, |i, j| {
                    let (i, j) = (i + 4, j + 4);
                    let col: Vec<Complex64> = (i - 4..=i + 4).map(|k| m[(k, j)]).collect();
                    let row: Vec<Complex64> = (j - 4..=j + 4).map(|k| m[(i, k)]).collect();
                    let ur = fd8(&col, dr);
                    let uy = fd8(&row, dy);
                    let t = self.y[j].tanh();
                    (-t * ur + uy - t * op.half_d() * m[(i, j)] + op.shift * m[(i, j)]) * h - s * h * m[(i, j)]
                });
                (up.clone(), out)
            })
            .collect();
        Field { d: self.d, r: self.r[4..nr - 4].to_vec(), y: self.y[4..ny - 4].to_vec(), modes, error_estimate: 0.0 }
    }
}

/// Checks that `Re λ/h = rho` stays away from every root.
pub fn check_abscissa(op: &ModelOperator, s: Complex64, rho: f64) -> Result<()> {
    for r in indicial_roots(op, s, ROOT_LEVELS) {
        let root = r.lambda(s);
        let distance = (root.re / op.h - rho).abs();
        if distance < ABSCISSA_EXCLUSION {
            return Err(Error::ContourOnRoot { rho, root, distance });
        }
    }
    Ok(())
}

fn contour_nodes(spec: &ContourSpec, order: usize) -> Vec<(f64, f64)> {
    crate::quad::gl_panels(-spec.height, spec.height, spec.panels, order)
}

/// `R_{hρ}(s) f = (1/2πh) ∫_{hρ + iℝ} e^{λr/h} (I(λ) - hs)^{-1} f̂(λ) dλ` on
/// the grid `(r, y)`.
pub fn resolvent_line(op: &ModelOperator, s: Complex64, contour: &ContourSpec, f: &ModelInput, r: &[f64], y: &[f64]) -> Result<Field> {
    contour.validate()?;
    f.validate()?;
    check_abscissa(op, s, contour.rho)?;
    let plans: Vec<SolvePlan> = f.terms.iter().map(|(_, g)| SolvePlan::new(g, y)).collect();
    let fine = line_integral(op, s, contour, f, &plans, r, 16)?;
    let coarse = line_integral(op, s, contour, f, &plans, r, 8)?;
    let mut out = f.sample(r, y).zeros_like();
    let mut quad_err: f64 = 0.0;
    for (k, (a, b)) in fine.iter().zip(&coarse).enumerate() {
        out.modes[k].1 = a.clone();
        quad_err = quad_err.max((a - b).iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    // Tail: integrand size at the truncation height.
    let mut tail: f64 = 0.0;
    for (k, plan) in plans.iter().enumerate() {
        for sign in [-1.0, 1.0] {
            let lam = Complex64::new(contour.rho, sign * contour.height) * op.h;
            let chi = f.transform(k, lam, op.h);
            let vals = plan.solve(op, s, lam)?;
            let vmax = vals.iter().map(|v| v.norm()).fold(0.0, f64::max);
            let rmax = r.iter().map(|x| (contour.rho * x).exp()).fold(0.0, f64::max);
            tail = tail.max(chi.norm() * vmax * rmax);
        }
    }
    if tail > contour.tail_tol {
        return Err(Error::Integration(format!("contour tail {tail:.3e} exceeds {:.3e}; raise the height", contour.tail_tol)));
    }
    out.error_estimate = quad_err + tail;
    Ok(out)
}

fn line_integral(op: &ModelOperator, s: Complex64, contour: &ContourSpec, f: &ModelInput, plans: &[SolvePlan], r: &[f64], order: usize) -> Result<Vec<DMatrix<Complex64>>> {
    let nodes = contour_nodes(contour, order);
    let ny = plans.first().map_or(0, |p| p.stations().len());
    // Fixed chunks summed in order keep the reduction deterministic.
    let chunks: Vec<&[(f64, f64)]> = nodes.chunks(64).collect();
    let partials: Vec<Result<Vec<DMatrix<Complex64>>>> = chunks
        .par_iter()
        .map(|chunk| {
            let mut acc = vec![DMatrix::<Complex64>::zeros(r.len(), ny); plans.len()];
            for &(eta, w) in chunk.iter() {
                let lam = Complex64::new(contour.rho, eta) * op.h;
                for (k, plan) in plans.iter().enumerate() {
                    let chi = f.transform(k, lam, op.h);
                    if chi.norm() < 1e-300 {
                        continue;
                    }
                    let vals = plan.solve(op, s, lam)?;
                    for (i, &x) in r.iter().enumerate() {
                        let e = (lam * x / op.h).exp() * chi * (w / (2.0 * PI));
                        for (j, v) in vals.iter().enumerate() {
                            acc[k][(i, j)] += e * v;
                        }
                    }
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = vec![DMatrix::<Complex64>::zeros(r.len(), ny); plans.len()];
    for p in partials {
        for (t, a) in total.iter_mut().zip(p?) {
            *t += a;
        }
    }
    Ok(total)
}

/// Circle `|λ - λ0| = ε h` for `B(s, ·)` and the trapezoid order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidueOperator {
    pub s: Complex64,
    pub lambda0: Complex64,
    /// Radius in `λ/h` units.
    pub eps: f64,
    pub points: usize,
}

impl ResidueOperator {
    pub fn new(s: Complex64, lambda0: Complex64, eps: f64) -> Self {
        ResidueOperator { s, lambda0, eps, points: 64 }
    }

    /// No root other than those at the center within `2ε`.
    pub fn validate(&self, op: &ModelOperator) -> Result<()> {
        for r in indicial_roots(op, self.s, ROOT_LEVELS) {
            let root = r.lambda(self.s);
            let dist = (root - self.lambda0).norm();
            if dist > ROOT_EXCLUSION && dist < 2.0 * self.eps * op.h {
                return Err(Error::InvalidEnclosure { center: self.lambda0, other: root });
            }
        }
        Ok(())
    }

    fn nodes(&self, h: f64) -> Vec<(Complex64, Complex64)> {
        (0..self.points)
            .map(|p| {
                let th = 2.0 * PI * (p as f64 + 0.5) / self.points as f64;
                let dl = Complex64::from_polar(self.eps * h, th);
                // (1/2πi h) ∮ g dλ = (1/h) mean[g (λ - λ0)]
                (self.lambda0 + dl, dl / (self.points as f64 * h))
            })
            .collect()
    }
}

/// `B(s, λ0) f = (1/2πih) ∮ e^{λr/h} (I(λ) - hs)^{-1} f̂(λ) dλ` on the grid.
pub fn residue_apply(res: &ResidueOperator, op: &ModelOperator, f: &ModelInput, r: &[f64], y: &[f64]) -> Result<Field> {
    res.validate(op)?;
    f.validate()?;
    let mut out = f.sample(r, y).zeros_like();
    for (k, (_, g)) in f.terms.iter().enumerate() {
        let plan = SolvePlan::new(g, y);
        let mut acc = DMatrix::<Complex64>::zeros(r.len(), y.len());
        for (lam, w) in res.nodes(op.h) {
            let chi = f.transform(k, lam, op.h);
            let vals = plan.solve(op, res.s, lam)?;
            for (i, &x) in r.iter().enumerate() {
                let e = (lam * x / op.h).exp() * chi * w;
                for (j, v) in vals.iter().enumerate() {
                    acc[(i, j)] += e * v;
                }
            }
        }
        out.modes[k].1 = acc;
    }
    Ok(out)
}

/// Closed form of `B(s, λ0)` at a simple Minus root of level `m + i`:
/// `-(1/h) e^{λ0 r/h} χ̂(λ0) φ_i(λ0) F_0(y)`.
pub fn residue_closed_form(op: &ModelOperator, s: Complex64, level: usize, f: &ModelInput, r: &[f64], y: &[f64]) -> Result<Field> {
    let st = s - op.shift;
    let lam0 = -op.h * (st + op.half_d() + level as f64);
    let a = lam0 / op.h + op.half_d();
    let mut out = f.sample(r, y).zeros_like();
    for (k, (_, g)) in f.terms.iter().enumerate() {
        if level < g.m() || (level - g.m()) % 2 == 1 {
            continue;
        }
        let phis = g.south_series(a, SOUTH_TERMS);
        let c = phis[level - g.m()] * f.transform(k, lam0, op.h) * (-1.0 / op.h);
        out.modes[k].1 = DMatrix::from_fn(r.len(), y.len(), |i, j| c * (lam0 * r[i] / op.h).exp() * homogeneous_f0(op, s, lam0, y[j]));
    }
    Ok(out)
}

/// Roots that crossed the imaginary axis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VisibleRootSet {
    /// Plus roots with `Re λ < 0`.
    pub positive_visible: Vec<IndicialRoot>,
    /// Minus roots with `Re λ > 0`.
    pub negative_visible: Vec<IndicialRoot>,
}

/// Roots on the wrong side of the abscissa `rho` (in `λ/h` units).
pub fn visible_roots_at(op: &ModelOperator, s: Complex64, rho: f64) -> VisibleRootSet {
    let roots = indicial_roots(op, s, ROOT_LEVELS);
    VisibleRootSet {
        positive_visible: roots.iter().copied().filter(|r| r.branch == Branch::Plus && r.lambda(s).re / op.h < rho).collect(),
        negative_visible: roots.iter().copied().filter(|r| r.branch == Branch::Minus && r.lambda(s).re / op.h > rho).collect(),
    }
}

pub fn visible_roots(op: &ModelOperator, s: Complex64) -> VisibleRootSet {
    visible_roots_at(op, s, 0.0)
}

/// `max(0, |Re λ|)` over visible roots.
pub fn rho_max(op: &ModelOperator, s: Complex64) -> f64 {
    let v = visible_roots(op, s);
    v.positive_visible
        .iter()
        .chain(&v.negative_visible)
        .map(|r| r.lambda(s).re.abs())
        .fold(0.0, f64::max)
}

/// `sup_{Re s' ≥ τ} ρ_max(s') = max(0, Re A - τ - d/2)` in units of `h`.
pub fn rho_max_prime(op: &ModelOperator, tau: f64) -> f64 {
    (op.h * (op.shift.re - tau - op.half_d())).max(0.0)
}

/// Brute-force `ρ'_max`: enumerate visible roots over `s' = τ + δ + iη`.
pub fn rho_max_prime_enumerated(op: &ModelOperator, tau: f64) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..=40 {
        for eta in [-3.0, 0.0, 2.5] {
            let s = Complex64::new(tau + 0.125 * i as f64, eta);
            best = best.max(rho_max(op, s));
        }
    }
    best
}

/// The continued resolvent with the abscissas actually used.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContinuedResolvent {
    pub field: Field,
    pub abscissas: Vec<f64>,
    /// Sup-norm gap between the patching expressions when two were needed.
    pub patching_gap: Option<f64>,
}

/// `R(s) f = R_ρ(s) f + Σ_{Minus, Re λ/h > ρ} B(s,λ) f - Σ_{Plus, Re λ/h < ρ} B(s,λ) f`
/// for an `s`-regular `ρ`; at `ρ = 0` this is the visible-root formula.
pub fn resolvent_via(op: &ModelOperator, s: Complex64, contour: &ContourSpec, f: &ModelInput, r: &[f64], y: &[f64]) -> Result<Field> {
    let mut u = resolvent_line(op, s, contour, f, r, y)?;
    let vis = visible_roots_at(op, s, contour.rho);
    let all = indicial_roots(op, s, ROOT_LEVELS);
    for (sign, set) in [(1.0, &vis.negative_visible), (-1.0, &vis.positive_visible)] {
        for root in set.iter() {
            let lam0 = root.lambda(s);
            let eps = enclosure_radius(op, s, lam0, &all);
            let b = residue_apply(&ResidueOperator::new(s, lam0, eps), op, f, r, y)?;
            u.axpy(sign.into(), &b);
        }
    }
    Ok(u)
}

fn enclosure_radius(op: &ModelOperator, s: Complex64, lam0: Complex64, all: &[IndicialRoot]) -> f64 {
    let gap = all
        .iter()
        .map(|r| (r.lambda(s) - lam0).norm())
        .filter(|&d| d > ROOT_EXCLUSION)
        .fold(f64::INFINITY, f64::min);
    (0.3 * gap / op.h).min(0.1)
}

pub fn check_crossing(op: &ModelOperator, s: Complex64) -> Result<()> {
    if let Some(m) = crossing_level(op, s) {
        return Err(Error::Crossing { s, detail: format!("Plus and Minus roots with n + n' = {m} coincide") });
    }
    Ok(())
}

/// Meromorphically continued resolvent. When `0` is not `s`-regular the two
/// patching abscissas `ρ < 0 < ρ'` are both evaluated and compared.
pub fn continue_resolvent(op: &ModelOperator, s: Complex64, base: &ContourSpec, f: &ModelInput, r: &[f64], y: &[f64]) -> Result<ContinuedResolvent> {
    check_crossing(op, s)?;
    if check_abscissa(op, s, 0.0).is_ok() {
        let field = resolvent_via(op, s, &ContourSpec { rho: 0.0, ..*base }, f, r, y)?;
        return Ok(ContinuedResolvent { field, abscissas: vec![0.0], patching_gap: None });
    }
    let gap = indicial_roots(op, s, ROOT_LEVELS)
        .iter()
        .map(|x| (x.lambda(s).re / op.h).abs())
        .filter(|&d| d > ABSCISSA_EXCLUSION)
        .fold(0.5, f64::min);
    let delta = 0.5 * gap;
    let left = resolvent_via(op, s, &ContourSpec { rho: -delta, ..*base }, f, r, y)?;
    let right = resolvent_via(op, s, &ContourSpec { rho: delta, ..*base }, f, r, y)?;
    let gap = left.sub(&right).sup_norm();
    Ok(ContinuedResolvent { field: left, abscissas: vec![-delta, delta], patching_gap: Some(gap) })
}

/// `⟨F(λ), ψ⟩` for a windowed profile (vanishing for `φ < φ_a`) and a test
/// function supported in `sin φ < sin φ_a`, with the Plus-root poles
/// continued by radial Mellin regularization: there
/// `F = C(λ) F_0`, `F_0 = 2^{-s̃} ρ^{s̃ - a} q^{s̃}`.
pub fn north_pairing(op: &ModelOperator, s: Complex64, lambda: Complex64, g: &AngularProfile, psi: &TestFunction) -> Result<Complex64> {
    let (phi_a, _) = g
        .window
        .ok_or_else(|| Error::Argument("the North pairing needs a profile vanishing near the North pole".into()))?;
    if psi.outer() > phi_a.sin() {
        return Err(Error::Argument(format!("test function support {} reaches the window at φ = {phi_a}", psi.outer())));
    }
    let ya = y_of_phi(phi_a);
    let f = SolvePlan::new(g, &[ya]).solve(op, s, lambda)?[0];
    let c = f / homogeneous_f0(op, s, lambda, ya);
    let st = s - op.shift;
    let a = lambda / op.h + op.half_d();
    let beta = st - a + op.d as f64;
    let n = if beta.re > 0.0 { 0 } else { (-beta.re).floor() as usize + 1 };
    let mellin = radial_mellin(psi, Some(&Radial::q_power(st)), &g.upsilon, beta, n)?;
    Ok(c * Complex64::from(2.0).powc(-st) * mellin)
}

/// `B(s, λ0)` seen through `ψ` at the North pole: the coefficients
/// `(c0, c1)` of `e^{λ0 r/h}(c0 + c1 r)` for the term `k` of `f`.
pub fn north_residue_components(res: &ResidueOperator, op: &ModelOperator, f: &ModelInput, k: usize, psi: &TestFunction) -> Result<(Complex64, Complex64)> {
    res.validate(op)?;
    let g = &f.terms[k].1;
    let mut c_m1 = Complex64::new(0.0, 0.0);
    let mut c_m2 = Complex64::new(0.0, 0.0);
    for (lam, w) in res.nodes(op.h) {
        let kv = f.transform(k, lam, op.h) * north_pairing(op, res.s, lam, g, psi)?;
        // w = (λ - λ0)/(P h)
        c_m1 += kv * w;
        c_m2 += kv * w * (lam - res.lambda0);
    }
    Ok((c_m1, c_m2 / op.h))
}
