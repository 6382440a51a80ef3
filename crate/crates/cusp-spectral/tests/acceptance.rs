//! The ten acceptance criteria, one pass/fail line each.

use cusp_spectral::bcontinuation::{
    continue_resolvent, gaussian_bump, resolvent_line, residue_apply, rho_max_prime, rho_max_prime_enumerated, AngularProfile,
    ContourSpec, ModelInput, ResidueOperator, RGrid, ROOT_LEVELS,
};
use cusp_spectral::escape::{assemble_g, verify, ReducedPhaseGrid, VerifyOptions};
use cusp_spectral::flow::{
    correlate, flow_cusp_lift, flow_cusp_numeric, laplace_transform, r_max, sample_liouville, BumpObservable, QuotientSurface,
    LIOUVILLE_MASS,
};
use cusp_spectral::geometry::PhasePoint;
use cusp_spectral::hadamard::{jordan_vector, pole_lambda, pole_order_fit, pole_residue};
use cusp_spectral::indicial::{
    brute_force_multiplicity, indicial_roots, jordan_index, numeric_roots_jet, numeric_roots_shooting, Branch, ModelOperator,
};
use cusp_spectral::poly::HomPoly;
use cusp_spectral::testfn::library;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::time::Instant;

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn uniform(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn x_power(d: usize, k: usize) -> HomPoly {
    let mut e = vec![0; d];
    e[0] = k;
    HomPoly::monomial(&e)
}

fn input(d: usize) -> ModelInput {
    let odd = AngularProfile::new(x_power(d, 1), vec![c(1.0), c(-0.3)]);
    ModelInput::new(d, RGrid::default())
        .with_term(gaussian_bump(0.0, 0.5), AngularProfile::new(HomPoly::one(d), vec![c(1.0), c(0.5)]))
        .with_term(gaussian_bump(0.2, 0.4), odd)
}

fn root_formula(h: f64, s: Complex64, d: usize, n: usize, sign: f64) -> Complex64 {
    (s + (0.5 * d as f64 + n as f64)) * (sign * h)
}

fn roots_closed_form() -> Outcome {
    let mut worst_exact: f64 = 0.0;
    let mut worst_jet: f64 = 0.0;
    let mut bad_mult = 0;
    for d in 1..=3 {
        for h in [1.0, 0.5] {
            for s in [c(0.0), c(-1.0), Complex64::new(0.3, 0.2)] {
                let op = ModelOperator { d, h, lambda: c(0.0), shift: c(0.0) };
                let roots = indicial_roots(&op, s, 4);
                for r in &roots {
                    let want = root_formula(h, s, d, r.n, r.branch.sign());
                    worst_exact = worst_exact.max((r.lambda(s) - want).norm() / want.norm().max(1.0));
                    if r.multiplicity as usize != brute_force_multiplicity(d, r.n) {
                        bad_mult += 1;
                    }
                }
                let plus: Vec<_> = roots.iter().filter(|r| r.branch == Branch::Plus).collect();
                let jet = numeric_roots_jet(&op, s, 4).unwrap();
                let mut counts = vec![0usize; plus.len()];
                for z in &jet.roots {
                    let (k, dist) = plus
                        .iter()
                        .enumerate()
                        .map(|(k, r)| (k, (r.lambda(s) - z).norm()))
                        .min_by(|a, b| a.1.total_cmp(&b.1))
                        .unwrap();
                    worst_jet = worst_jet.max(dist);
                    counts[k] += 1;
                }
                bad_mult += plus.iter().zip(&counts).filter(|(r, n)| r.multiplicity as usize != **n).count();
            }
        }
    }
    outcome(
        worst_exact <= 1e-15 && worst_jet < 1e-12 && bad_mult == 0,
        format!("closed form {worst_exact:.1e}, jet {worst_jet:.1e} < 1e-12, multiplicity mismatches {bad_mult}"),
    )
}

fn shooting() -> Outcome {
    let h = 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut misclassified = 0;
    let mut worst: f64 = 0.0;
    let is_root = |s: Complex64, lam: Complex64, m: usize| {
        (0..=40).filter(|n| n % 2 == m % 2 && *n >= m).any(|n| {
            [1.0, -1.0].iter().any(|&sg| (root_formula(h, s, 1, n, sg) - lam).norm() < 1e-3)
        })
    };
    let mut generic = 0;
    while generic < 20 {
        let s = Complex64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-1.0..1.0));
        let lam = Complex64::new(rng.gen_range(-4.0..4.0), rng.gen_range(-1.0..1.0));
        let m = rng.gen_range(0..2usize);
        if is_root(s, lam, m) {
            continue;
        }
        generic += 1;
        let v = numeric_roots_shooting(&ModelOperator::scalar(1, lam), s, m).unwrap();
        if v.is_root {
            misclassified += 1;
        }
        worst = worst.max((v.exponent_north - v.exact_north).norm()).max((v.exponent_south - v.exact_south).norm());
    }
    let mut root_points = 0;
    for s in [Complex64::new(0.3, 0.2), Complex64::new(-0.7, 0.1), Complex64::new(1.4, -0.6)] {
        for n in 0..=3usize {
            for branch in [Branch::Plus, Branch::Minus] {
                let lam = root_formula(h, s, 1, n, branch.sign());
                let v = numeric_roots_shooting(&ModelOperator::scalar(1, lam), s, n % 2).unwrap();
                root_points += 1;
                if v.matched != Some((branch, n)) {
                    misclassified += 1;
                }
                worst = worst.max((v.exponent_north - v.exact_north).norm()).max((v.exponent_south - v.exact_south).norm());
            }
        }
    }
    outcome(
        misclassified == 0 && worst < 1e-6,
        format!("20 generic + {root_points} root points, {misclassified} misclassified, exponent error {worst:.1e} < 1e-6"),
    )
}

fn contour_shift() -> Outcome {
    let op = ModelOperator::scalar(1, c(0.0));
    let (r, y) = (uniform(-3.0, 3.0, 61), uniform(-2.0, 2.0, 41));
    let f = input(1);
    let fnorm = f.sample(&r, &y).sup_norm();
    let mut worst: f64 = 0.0;
    let mut counts = Vec::new();
    // Minus roots at λ = -(s + 1/2 + n).
    for (s, rho0, rho1) in [
        (Complex64::new(1.0, 0.3), 0.0, -2.0),
        (Complex64::new(0.2, 0.1), 0.0, -1.2),
        (Complex64::new(-0.6, 0.4), -0.5, -1.5),
    ] {
        let tail = |rho| ContourSpec { tail_tol: 1e-8, ..ContourSpec::at(rho) };
        let a = resolvent_line(&op, s, &tail(rho0), &f, &r, &y).unwrap();
        let b = resolvent_line(&op, s, &tail(rho1), &f, &r, &y).unwrap();
        let strip: Vec<_> = indicial_roots(&op, s, ROOT_LEVELS)
            .into_iter()
            .filter(|x| x.lambda(s).re > rho1 && x.lambda(s).re < rho0)
            .collect();
        counts.push(strip.len());
        let mut sum = a.zeros_like();
        for root in strip.iter().filter(|x| x.branch == Branch::Minus) {
            sum.axpy(c(1.0), &residue_apply(&ResidueOperator::new(s, root.lambda(s), 0.1), &op, &f, &r, &y).unwrap());
        }
        worst = worst.max(a.sub(&b).sub(&sum).sup_norm() / fnorm);
    }
    outcome(
        worst < 1e-6 && counts.iter().all(|&n| n == 1),
        format!("roots per strip {counts:?}, worst gap {worst:.1e} < 1e-6"),
    )
}

fn continuation() -> Outcome {
    let op = ModelOperator::scalar(1, c(0.0));
    let (r, y) = (uniform(-3.0, 3.0, 121), uniform(-2.0, 2.0, 81));
    let f = input(1);
    let s = Complex64::new(-1.0, 0.3);
    let u = continue_resolvent(&op, s, &ContourSpec::default(), &f, &r, &y).unwrap();
    let lhs = u.field.apply_model(&op, s);
    let rhs = f.sample(&lhs.r, &lhs.y);
    let residual = lhs.sub(&rhs).sup_norm() / rhs.sup_norm();
    let p = Complex64::new(-0.5, 0.3);
    let v = continue_resolvent(&op, p, &ContourSpec::default(), &f, &r, &y).unwrap();
    let gap = v.patching_gap.unwrap_or(f64::INFINITY) / v.field.sup_norm();
    outcome(
        residual < 1e-5 && gap < 1e-6,
        format!("residual at s = -1+0.3i {residual:.1e} < 1e-5, patching gap at s = -0.5+0.3i {gap:.1e} < 1e-6"),
    )
}

fn hadamard_residues() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut worst_order: f64 = 0.0;
    let mut fits = 0;
    for d in 1..=2 {
        for k in 0..=1 {
            let up = x_power(d, k);
            for j in 0..=2 {
                let mut best = (0.0, None);
                for psi in library::five(d) {
                    let cmp = pole_residue(d, 1.0, j, &up, &psi).unwrap();
                    let scale = psi.cm_norm(j);
                    let gap = if cmp.closed_form.norm() > 1e-8 * scale {
                        cmp.relative_gap()
                    } else {
                        cmp.contour.norm() / scale
                    };
                    worst = worst.max(gap);
                    if cmp.closed_form.norm() / scale > best.0 {
                        best = (cmp.closed_form.norm() / scale, Some(psi));
                    }
                }
                if let (m, Some(psi)) = best {
                    if m > 1e-6 {
                        let order = pole_order_fit(d, 1.0, j, &up, &psi).unwrap();
                        worst_order = worst_order.max((order - 1.0).abs());
                        fits += 1;
                    }
                }
            }
        }
    }
    outcome(
        worst < 1e-6 && worst_order < 0.05 && fits > 0,
        format!("worst relative gap {worst:.1e} < 1e-6, pole order deviation {worst_order:.1e} < 5% over {fits} fits"),
    )
}

fn jordan() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut wrong = 0;
    let mut index_two = 0;
    for d in 1..=2usize {
        for k in 0..=2usize {
            for j in 0..=3usize {
                let up = x_power(d, k);
                let op = ModelOperator::scalar(d, pole_lambda(1.0, j, k));
                let v = jordan_vector(j, &up, &op).unwrap();
                let (opv, s0) = v.operator();
                let predicted = jordan_index(&opv, s0, k);
                let mut first: f64 = 0.0;
                for psi in library::five(d) {
                    let scale = psi.cm_norm(j + 2);
                    worst = worst.max(v.pair_power(2, &psi).unwrap().norm() / scale);
                    first = first.max(v.pair_power(1, &psi).unwrap().norm());
                }
                if (first > 1e-3) != (predicted == 2) {
                    wrong += 1;
                }
                if predicted == 2 {
                    index_two += 1;
                }
            }
        }
    }
    outcome(
        worst < 1e-6 && wrong == 0 && index_two > 0,
        format!("second power {worst:.1e} < 1e-6 relative, first power matches the index in all cases ({index_two} of index 2, {wrong} wrong)"),
    )
}

fn rho_max_prime_closed_form() -> Outcome {
    let mut worst: f64 = 0.0;
    for d in 1..=2 {
        for a in [0.0, 0.7] {
            let op = ModelOperator { d, h: 1.0, lambda: c(0.0), shift: c(a) };
            for k in 0..50 {
                let tau = -4.0 + 0.16 * k as f64;
                let closed = (a - tau - 0.5 * d as f64).max(0.0);
                worst = worst.max((rho_max_prime(&op, tau) - closed).abs());
                worst = worst.max((rho_max_prime_enumerated(&op, tau) - closed).abs());
            }
        }
    }
    outcome(worst < 1e-9, format!("200 cases, worst {worst:.1e} < 1e-9"))
}

fn flow_laws() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut drift, mut semi, mut ymax, mut oracle): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..100 {
        let d = 1 + i % 2;
        let mut u: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        u.iter_mut().for_each(|x| *x /= n);
        let theta: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..1.0)).collect();
        let p0 = PhasePoint::new(rng.gen_range(-1.0..1.0), theta, rng.gen_range(0.05..PI - 0.05), u.clone()).unwrap();
        let peak = -(0.5 * p0.phi).tan().ln();
        let top = flow_cusp_lift(&p0, peak);
        let y0 = p0.r.exp();
        ymax = ymax.max((top.r.exp() - y0 / p0.phi.sin()).abs() / (y0 / p0.phi.sin()));
        ymax = ymax.max((r_max(&p0).exp() - y0 / p0.phi.sin()).abs() / (y0 / p0.phi.sin()));
        for t in [1.0, 5.0, 10.0, 20.0] {
            let a = flow_cusp_lift(&p0, t);
            let half = flow_cusp_lift(&flow_cusp_lift(&p0, 0.3 * t), 0.7 * t);
            semi = semi.max((half.r - a.r).abs()).max((half.phi - a.phi).abs());
            for (x, y) in half.theta.iter().zip(&a.theta) {
                semi = semi.max((x - y).abs() / y.abs().max(1.0));
            }
            let b = flow_cusp_numeric(&p0, t, 1e-13).unwrap();
            oracle = oracle.max((a.r - b.r).abs() / a.r.abs().max(1.0)).max((a.phi - b.phi).abs());
            for (x, y) in a.theta.iter().zip(&b.theta) {
                oracle = oracle.max((x - y).abs() / x.abs().max(1.0));
            }
            // The azimuth is the direction of the horizontal displacement.
            for q in [&a, &b] {
                let dth: Vec<f64> = q.theta.iter().zip(&p0.theta).map(|(x, y)| x - y).collect();
                let nd = dth.iter().map(|x| x * x).sum::<f64>().sqrt();
                let sign = if p0.phi < PI { 1.0 } else { -1.0 };
                drift = drift.max(q.u.iter().zip(&u).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
                if nd > 1e-3 {
                    drift = drift.max(dth.iter().zip(&u).map(|(x, y)| (sign * x / nd - y).abs()).fold(0.0, f64::max));
                }
            }
        }
    }
    outcome(
        drift < 1e-12 && semi < 1e-10 && ymax < 1e-9 && oracle < 1e-8,
        format!("u drift {drift:.1e}, semigroup {semi:.1e}, y_max {ymax:.1e}, integrator {oracle:.1e}"),
    )
}

fn mixing() -> Outcome {
    let surf = QuotientSurface::default();
    let bump = BumpObservable { center: (0.0, 2.0), radius: 0.4, order: 3, amplitude: 1.0, offset: 1.0 };
    bump.validate().unwrap();
    let n = 100_000;
    let seed = 41;
    let limit = bump.liouville_integral().powi(2) / LIOUVILLE_MASS;
    let rec = correlate(&|v| bump.eval(v), &|v| bump.eval(v), 20.0, 0.1, n, seed, &surf).unwrap();
    let last = rec.values.len() - 1;
    let z = (rec.values[last] - limit).abs() / rec.stderr[last];
    let s = c(0.05);
    let lap = laplace_transform(&rec, s).unwrap();
    let probe = (s * lap.with_tail()).re;
    let rel = (probe - limit).abs() / limit;
    let sample = sample_liouville(n, seed, &surf).unwrap();
    let (area, se) = sample.area_estimate();
    let za = (area - 2.0 * PI).abs() / se;
    outcome(
        z < 3.0 && rel < 0.05 && za < 3.0,
        format!("rho(20) off by {z:.2} SE, s rho(s) at 0.05 off by {:.2}%, area off by {za:.2} SE", 100.0 * rel),
    )
}

fn escape_certificate() -> Outcome {
    let grid = ReducedPhaseGrid::default();
    let data = assemble_g(&grid, 1.0).unwrap();
    let cert = verify(&data, &VerifyOptions::default());
    let failed: Vec<&str> = cert.conditions.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    let get = |name: &str| cert.condition(name).map(|c| c.margin).unwrap_or(f64::NAN);
    outcome(
        cert.passed && grid.n_alpha * grid.n_lat * grid.n_lon == 64 * 32 * 32,
        format!(
            "{} conditions, failed {failed:?}; (i) min {:.4}, (ii) min {:.1e}, slope errors {:.1e}/{:.1e}, invariance {:.1e}",
            cert.conditions.len(),
            get("(i) X G > 1 off |ξ| < Rδ and N_0"),
            get("(ii) X G >= 0 on |ξ| > δ"),
            get("(iii) slope +C_G on N_u"),
            get("(iii) slope -C_G on N_s"),
            get("(iv) G invariant under T_{τ,θ0}"),
        ),
    )
}

#[test]
fn acceptance() {
    type Check = fn() -> Outcome;
    let checks: [(&str, Check, f64); 10] = [
        ("root closed form", roots_closed_form, 1.0),
        ("shooting cross-check", shooting, 10.0),
        ("contour-shift identity", contour_shift, 60.0),
        ("continued resolvent", continuation, f64::INFINITY),
        ("Hadamard residues", hadamard_residues, f64::INFINITY),
        ("Jordan nilpotency", jordan, f64::INFINITY),
        ("rho'_max closed form", rho_max_prime_closed_form, f64::INFINITY),
        ("flow laws", flow_laws, f64::INFINITY),
        ("mixing and s = 0 pole", mixing, 300.0),
        ("escape certificate", escape_certificate, 600.0),
    ];
    let mut failures = Vec::new();
    for (i, (name, check, limit)) in checks.iter().enumerate() {
        let start = Instant::now();
        let o = check();
        let secs = start.elapsed().as_secs_f64();
        let ok = o.passed && secs < *limit;
        let budget = if limit.is_finite() { format!(", limit {limit} s") } else { String::new() };
        println!("criterion {:>2} {}: {} ({}; {secs:.2} s{budget})", i + 1, name, if ok { "PASS" } else { "FAIL" }, o.detail);
        if !ok {
            failures.push(i + 1);
        }
    }
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}
