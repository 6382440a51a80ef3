//! One runner per subcommand. Each fills a [`Report`]; nothing touches the
//! file system here.

use crate::config::{BranchName, Command, ExperimentConfig};
use crate::output::Report;
use crate::CliError;
use cusp_spectral::bcontinuation::{
    gaussian_bump, resolvent_line, residue_apply, AngularProfile, ModelInput, ResidueOperator, RGrid, ROOT_LEVELS,
};
use cusp_spectral::escape::{assemble_g, verify, VerifyOptions};
use cusp_spectral::flow::{correlate, flow_cusp_exact, flow_cusp_lift, flow_cusp_numeric, laplace_transform, r_max, QuotientSurface};
use cusp_spectral::geometry::{CuspModel, PhasePoint};
use cusp_spectral::hadamard::{pole_lambda, pole_residue};
use cusp_spectral::indicial::{
    eigendistribution, indicial_roots, numeric_roots_jet, p_minus_hs_transpose, s_of_root, Branch, ModelOperator, Selector,
};
use cusp_spectral::poly::HomPoly;
use cusp_spectral::testfn::{Radial, TestFunction};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::fmt::Write;

fn branch_name(b: Branch) -> &'static str {
    match b {
        Branch::Plus => "plus",
        Branch::Minus => "minus",
    }
}

pub fn execute(config: &ExperimentConfig) -> Result<Report, CliError> {
    config.validate()?;
    match config.command()? {
        Command::Roots => roots(config),
        Command::Eigendist => eigendist(config),
        Command::Resolvent => resolvent(config),
        Command::Residue => residue(config),
        Command::Escape => escape(config),
        Command::Flow => flow(config),
        Command::Correlate => correlation(config),
    }
}

fn roots(config: &ExperimentConfig) -> Result<Report, CliError> {
    let c = &config.roots;
    let op = ModelOperator::new(c.d, c.h, 0.0.into(), c.shift.z())?;
    let s = c.s.z();
    let list = indicial_roots(&op, s, c.n_max);
    let mut csv = String::from("branch,n,lambda_re,lambda_im,multiplicity,jordan_index\n");
    for r in &list {
        let l = r.lambda(s);
        writeln!(csv, "{},{},{},{},{},{}", branch_name(r.branch), r.n, l.re + 0.0, l.im + 0.0, r.multiplicity, r.jordan_index).unwrap();
    }
    // Jet-matrix eigenvalues give the Plus roots with multiplicity.
    let jet = numeric_roots_jet(&op, s, c.n_max)?;
    let plus: Vec<_> = list.iter().filter(|r| r.branch == Branch::Plus).collect();
    let mut distance: f64 = 0.0;
    let mut counts = vec![0usize; plus.len()];
    for z in &jet.roots {
        let (k, dist) = plus
            .iter()
            .enumerate()
            .map(|(k, r)| (k, (r.lambda(s) - z).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        distance = distance.max(dist);
        counts[k] += 1;
    }
    let mismatch = plus.iter().zip(&counts).filter(|(r, n)| r.multiplicity as usize != **n).count();
    let mut report = Report::default();
    report.artifact("roots.csv", csv);
    report.at_most("jet_root_distance", distance, c.tolerance);
    report.at_most("multiplicity_mismatches", mismatch as f64, 0.0);
    Ok(report)
}

/// `exp(-ρ²/2σ²)` cut off to `ρ < 0.9`, plus a first-order term.
fn probe(d: usize, sigma: f64) -> TestFunction {
    let radial = Radial::gaussian(sigma).mul(&Radial::cutoff(0.5, 0.9));
    let mut e = vec![0; d];
    e[0] = 1;
    TestFunction::new(d, vec![(radial.clone(), HomPoly::one(d)), (radial, HomPoly::monomial(&e))])
}

fn eigendist(config: &ExperimentConfig) -> Result<Report, CliError> {
    let c = &config.eigendist;
    let op = ModelOperator::new(c.d, c.h, c.lambda.z(), c.shift.z())?;
    let n: usize = c.exponents.iter().sum();
    let (branch, sel) = match c.branch {
        BranchName::Plus => (Branch::Plus, Selector::Mu(c.exponents.clone())),
        BranchName::Minus => (Branch::Minus, Selector::Upsilon(HomPoly::monomial(&c.exponents))),
    };
    let s = s_of_root(&op, branch, n);
    let dist = eigendistribution(&op, branch, n, &sel)?;
    let rows: Vec<Result<(f64, Complex64, f64), CliError>> = c
        .sigmas
        .par_iter()
        .map(|&sigma| {
            let psi = probe(c.d, sigma);
            let value = dist.pair(&psi)?;
            let residual = dist.pair(&p_minus_hs_transpose(&op, s, &psi))?.norm() / psi.cm_norm(n + 1);
            Ok((sigma, value, residual))
        })
        .collect();
    let mut csv = format!("# s = {} {}\nsigma,pairing_re,pairing_im,residual\n", s.re, s.im);
    let mut worst: f64 = 0.0;
    for row in rows {
        let (sigma, v, res) = row?;
        worst = worst.max(res);
        writeln!(csv, "{sigma},{},{},{res}", v.re, v.im).unwrap();
    }
    let mut report = Report::default();
    report.artifact("pairings.csv", csv);
    report.at_most("weak_eigen_residual", worst, c.tolerance);
    Ok(report)
}

fn uniform(range: [f64; 2], n: usize) -> Vec<f64> {
    (0..n).map(|i| range[0] + (range[1] - range[0]) * i as f64 / (n - 1) as f64).collect()
}

/// Right side with an even and an odd angular mode.
pub fn model_input(d: usize, center: f64, sigma: f64) -> ModelInput {
    let mut e = vec![0; d];
    e[0] = 1;
    ModelInput::new(d, RGrid::default())
        .with_term(gaussian_bump(center, sigma), AngularProfile::new(HomPoly::one(d), vec![1.0.into(), 0.5.into()]))
        .with_term(gaussian_bump(center + 0.2, 0.8 * sigma), AngularProfile::new(HomPoly::monomial(&e), vec![1.0.into(), (-0.3).into()]))
}

fn resolvent(config: &ExperimentConfig) -> Result<Report, CliError> {
    let c = &config.resolvent;
    let op = ModelOperator::new(c.d, c.h, 0.0.into(), c.shift.z())?;
    let s = c.s.z();
    let (r, y) = (uniform(c.r_range, c.r_points), uniform(c.y_range, c.y_points));
    let f = model_input(c.d, c.center, c.sigma);
    f.validate()?;
    let rho0 = c.rhos[0];
    let base = resolvent_line(&op, s, &config.contour(rho0), &f, &r, &y)?;
    let mut u = vec![0.0; c.d];
    u[0] = 1.0;
    let mut field = String::from("r,y,re,im\n");
    for (i, rv) in r.iter().enumerate() {
        for (j, yv) in y.iter().enumerate() {
            let v = base.value(i, j, &u);
            writeln!(field, "{rv},{yv},{},{}", v.re, v.im).unwrap();
        }
    }
    let mut shifts = String::from("rho,roots_in_strip,relative_gap\n");
    let mut worst: f64 = 0.0;
    let all = indicial_roots(&op, s, ROOT_LEVELS);
    for &rho in &c.rhos[1..] {
        let shifted = resolvent_line(&op, s, &config.contour(rho), &f, &r, &y)?;
        let strip: Vec<_> = all
            .iter()
            .filter(|x| x.branch == Branch::Minus && x.lambda(s).re > rho && x.lambda(s).re < rho0)
            .collect();
        let mut sum = base.zeros_like();
        for root in &strip {
            let b = residue_apply(&ResidueOperator::new(s, root.lambda(s), 0.1), &op, &f, &r, &y)?;
            sum.axpy(1.0.into(), &b);
        }
        let gap = base.sub(&shifted).sub(&sum).sup_norm() / base.sup_norm();
        worst = worst.max(gap);
        writeln!(shifts, "{rho},{},{gap}", strip.len()).unwrap();
    }
    let mut report = Report::default();
    report.artifact("field.csv", field);
    report.artifact("shifts.csv", shifts);
    if c.rhos.len() > 1 {
        report.at_most("shift_identity_gap", worst, c.tolerance);
    }
    Ok(report)
}

fn residue(config: &ExperimentConfig) -> Result<Report, CliError> {
    let c = &config.residue;
    let upsilon = HomPoly::monomial(&c.exponents);
    let psi = probe(c.d, c.sigma);
    let rows: Vec<Result<_, CliError>> = (0..=c.j_max)
        .into_par_iter()
        .map(|j| Ok((j, pole_residue(c.d, c.h, j, &upsilon, &psi)?)))
        .collect();
    let rows: Vec<_> = rows.into_iter().collect::<Result<_, _>>()?;
    let scale = rows.iter().map(|(_, r)| r.closed_form.norm()).fold(0.0, f64::max).max(1e-300);
    let mut csv = String::from("j,lambda,closed_re,closed_im,contour_re,contour_im,gap\n");
    let mut worst: f64 = 0.0;
    for (j, r) in &rows {
        let gap = (r.closed_form - r.contour).norm() / scale;
        worst = worst.max(gap);
        let lam = pole_lambda(c.h, *j, upsilon.deg);
        writeln!(csv, "{j},{},{},{},{},{},{gap}", lam.re, r.closed_form.re, r.closed_form.im, r.contour.re, r.contour.im).unwrap();
    }
    let mut report = Report::default();
    report.artifact("residues.csv", csv);
    report.at_most("residue_gap", worst, c.tolerance);
    Ok(report)
}

fn escape(config: &ExperimentConfig) -> Result<Report, CliError> {
    let c = &config.escape;
    let data = assemble_g(&c.grid(), c.t_prime)?;
    let cert = verify(&data, &VerifyOptions { samples: c.samples, seed: config.seed, max_norm: c.max_norm });
    let mut report = Report::default();
    let json = serde_json::to_string_pretty(&cert).map_err(|e| CliError::Internal(e.to_string()))?;
    report.artifact("certificate.json", json);
    for cond in &cert.conditions {
        report.tolerances.insert(
            cond.name.clone(),
            crate::config::Achieved { value: cond.margin, threshold: cond.threshold, passed: cond.passed },
        );
    }
    Ok(report)
}

fn random_point(rng: &mut ChaCha8Rng, d: usize) -> Result<PhasePoint, CliError> {
    let r = rng.gen_range(-1.0..1.0);
    let theta = (0..d).map(|_| rng.gen_range(0.0..1.0)).collect();
    let phi = rng.gen_range(0.05..PI - 0.05);
    let mut u: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let n = u.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-3);
    u.iter_mut().for_each(|x| *x /= n);
    if d == 1 {
        u[0] = u[0].signum();
    }
    Ok(PhasePoint::new(r, theta, phi, u)?)
}

fn flow(config: &ExperimentConfig) -> Result<Report, CliError> {
    let c = &config.flow;
    let model = CuspModel::standard(c.d);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let starts: Vec<PhasePoint> = (0..c.points).map(|_| random_point(&mut rng, c.d)).collect::<Result<_, _>>()?;
    let steps = (c.t_max / c.dt).round() as usize;
    type Row = (usize, f64, PhasePoint, f64, f64, f64);
    let rows: Vec<Result<Vec<Row>, CliError>> = starts
        .par_iter()
        .enumerate()
        .map(|(k, p0)| {
            let mut out = Vec::with_capacity(steps + 1);
            for i in 0..=steps {
                let t = i as f64 * c.dt;
                let exact = flow_cusp_lift(p0, t);
                let num = flow_cusp_numeric(p0, t, c.ode_tol)?;
                let scale = |a: f64| 1.0 + a.abs();
                let mut gap = ((exact.r - num.r).abs() / scale(exact.r)).max((exact.phi - num.phi).abs());
                for (a, b) in exact.theta.iter().zip(&num.theta) {
                    gap = gap.max((a - b).abs() / scale(*a));
                }
                let height = (r_max(&exact) - r_max(p0)).abs();
                let half = flow_cusp_lift(&flow_cusp_lift(p0, 0.5 * t), 0.5 * t);
                let mut semi = (half.r - exact.r).abs().max((half.phi - exact.phi).abs());
                for (a, b) in half.theta.iter().zip(&exact.theta) {
                    semi = semi.max((a - b).abs() / scale(*b));
                }
                out.push((k, t, flow_cusp_exact(&model, p0, t), gap, height, semi));
            }
            Ok(out)
        })
        .collect();
    let mut csv = String::from("point,t,r");
    for i in 0..c.d {
        write!(csv, ",theta_{i}").unwrap();
    }
    csv.push_str(",phi,numeric_gap\n");
    let (mut gap, mut height, mut semi): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for traj in rows {
        for (k, t, p, g, h, s) in traj? {
            gap = gap.max(g);
            height = height.max(h);
            semi = semi.max(s);
            write!(csv, "{k},{t},{}", p.r).unwrap();
            for th in &p.theta {
                write!(csv, ",{th}").unwrap();
            }
            writeln!(csv, ",{},{g}", p.phi).unwrap();
        }
    }
    let mut report = Report::default();
    report.artifact("trajectories.csv", csv);
    report.at_most("numeric_vs_exact", gap, c.tolerance);
    report.at_most("max_height_drift", height, c.tolerance);
    report.at_most("semigroup_gap", semi, c.tolerance);
    Ok(report)
}

fn correlation(config: &ExperimentConfig) -> Result<Report, CliError> {
    let c = &config.correlate;
    let surf = QuotientSurface::default();
    let (a, b) = (c.a, c.b);
    let rec = correlate(&move |v| a.eval(v), &move |v| b.eval(v), c.t_max, c.dt, c.samples, config.seed, &surf)?;
    let mut lap = String::from("s_re,s_im,value_re,value_im,tail_re,tail_im\n");
    for s in &c.laplace {
        let l = laplace_transform(&rec, s.z())?;
        writeln!(lap, "{},{},{},{},{},{}", s.0[0], s.0[1], l.value.re, l.value.im, l.tail_estimate.re, l.tail_estimate.im).unwrap();
    }
    let mut report = Report::default();
    report.artifact("correlation.csv", rec.to_csv());
    report.artifact("laplace.csv", lap);
    Ok(report)
}
