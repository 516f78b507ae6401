use dcspde::fourier::bounds::{decay_slope, dominance_sweep, BoundConstants, CalibrationGrid, DecayPath};
use dcspde::fourier::{fourier_gamma, fourier_gamma_direct, Frequency};
use dcspde::kernel::{gamma_eval, oracle_suite, weak_apply, KernelPoint, TestFunction, ORACLE_SOURCES};
use dcspde::noise::covariance_mc_check;
use dcspde::solver::{isometry_report, l2_increment, mc_l2_increment, solve_field_with, FieldPoint, Increment, SolverConfig};
use dcspde::spectral::{
    dalang_integral, dalang_integral_quadrature, norm_integral, sc_integral, sc_integral_quadrature, IntegralVerdict,
};
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde_json::json;

use crate::args::{Axis, BoundsArgs, Cli, Command, ContinuityArgs, FourierCheckArgs, GammaArgs, SimulateArgs};
use crate::config::{resolve, RunConfig};
use crate::output::{num, Manifest, Output};
use crate::CliError;

/// Result of a command: `Err` text marks a failed acceptance threshold.
type Verdict = std::result::Result<(), String>;

pub fn run(cli: Cli) -> Result<(), CliError> {
    let params = match &cli.command {
        Command::Gamma(a) => json!({ "y1": a.y1, "x1": [a.x1_min, a.x1_max], "x2": [a.x2_min, a.x2_max], "n": a.n }),
        Command::FourierCheck(a) => json!({ "threshold": a.threshold }),
        Command::Bounds(a) => json!({ "calibrate": a.calibrate, "points": a.points, "fit_nodes": a.fit_nodes }),
        Command::Simulate(a) => json!({ "isometry": a.isometry }),
        Command::Continuity(a) => json!({ "axes": a.axes, "deltas": a.deltas, "mc": a.mc }),
        Command::WeakCheck | Command::Admissibility | Command::CovarianceCheck => json!({}),
    };
    let config = resolve(&cli.global, &cli.command, params)?;
    let previous = if cli.global.verify_manifest { Some(Manifest::read(&config.out)?) } else { None };

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = config.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Invalid(e.to_string()))?;

    let mut out = Output::new(&config.out, config.hash())?;
    let verdict = pool.install(|| match &cli.command {
        Command::Gamma(a) => gamma(&config, a, &mut out),
        Command::WeakCheck => weak_check(&config, &mut out),
        Command::FourierCheck(a) => fourier_check(&config, a, &mut out),
        Command::Bounds(a) => bounds(&config, a, &mut out),
        Command::Admissibility => admissibility(&config, &mut out),
        Command::Simulate(a) => simulate(&config, a, &mut out),
        Command::Continuity(a) => continuity(&config, a, &mut out),
        Command::CovarianceCheck => covariance_check(&config, &mut out),
    })?;
    let dir = out.dir().to_path_buf();
    let manifest = out.finish(&config)?;
    println!("{} -> {} (config_hash {})", config.command, dir.display(), manifest.config_hash);

    if let Some(prev) = previous {
        let diff = prev.mismatches(&manifest);
        if !diff.is_empty() {
            return Err(CliError::Check(format!("manifest mismatch: {}", diff.join("; "))));
        }
        println!("manifest verified");
    }
    verdict.map_err(CliError::Check)
}

fn gamma(c: &RunConfig, a: &GammaArgs, out: &mut Output) -> Result<Verdict, CliError> {
    if a.n < 2 || !(a.x1_max > a.x1_min) || !(a.x2_max > a.x2_min) {
        return Err(CliError::Invalid("gamma grid needs n >= 2 and increasing ranges".into()));
    }
    if !(c.point.t > 0.0) {
        return Err(CliError::Invalid("gamma needs t > 0".into()));
    }
    let node = |lo: f64, hi: f64, k: usize| lo + (hi - lo) * k as f64 / (a.n - 1) as f64;
    let mut rows = Vec::with_capacity(a.n * a.n);
    for i in 0..a.n {
        let x1 = node(a.x1_min, a.x1_max, i);
        for j in 0..a.n {
            let x2 = node(a.x2_min, a.x2_max, j);
            let v = gamma_eval(&KernelPoint::new(c.point.t, x1, a.y1, x2));
            rows.push(vec![c.point.t.to_string(), x1.to_string(), a.y1.to_string(), x2.to_string(), num(v)]);
        }
    }
    out.write_csv("gamma.csv", &["t", "x1", "y1", "x2", "gamma"], &rows)?;
    Ok(Ok(()))
}

fn weak_check(c: &RunConfig, out: &mut Output) -> Result<Verdict, CliError> {
    let suite = oracle_suite();
    let cases: Vec<(usize, f64)> =
        (0..suite.len()).flat_map(|i| ORACLE_SOURCES.iter().map(move |&y| (i, y))).collect();
    let threshold = 5.0 * c.tol;
    let results = cases
        .par_iter()
        .map(|&(i, y1)| {
            let phi = &suite[i];
            let r = weak_apply(y1, phi, c.tol)?;
            Ok((i, y1, r.value, phi.value(0.0, y1, 0.0), r.abs_error, r.evals))
        })
        .collect::<dcspde::Result<Vec<_>>>()?;
    let mut worst: f64 = 0.0;
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|&(i, y1, v, expected, qerr, evals)| {
            let err = (v - expected).abs();
            worst = worst.max(err);
            vec![
                i.to_string(),
                y1.to_string(),
                num(v),
                num(expected),
                num(err),
                num(qerr),
                evals.to_string(),
                (err <= threshold).to_string(),
            ]
        })
        .collect();
    out.write_csv(
        "weak_check.csv",
        &["function", "y1", "weak_value", "expected", "abs_error", "quad_error", "evals", "pass"],
        &rows,
    )?;
    let failed = rows.iter().filter(|r| r[7] == "false").count();
    out.write_json(
        "weak_check.json",
        json!({ "cases": rows.len(), "failed": failed, "max_error": worst, "threshold": threshold }),
    )?;
    Ok(if failed == 0 { Ok(()) } else { Err(format!("{failed} weak identities exceed {threshold:e}")) })
}

/// `3⁴` combinations of three seeded draws per coordinate.
pub fn fourier_grid(seed: u64) -> Vec<(f64, f64, f64, Frequency<f64>)> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |lo: f64, hi: f64| -> Vec<f64> { (0..3).map(|_| rng.random_range(lo..hi)).collect() };
    let taus: Vec<f64> = draw(0.0, 2.0).into_iter().map(|u| 2.0 - u).collect();
    let x1s = draw(-2.0, 2.0);
    let x2s = draw(-1.0, 1.0);
    let radii = draw(-1.0, 2.0);
    let angles = draw(0.0, std::f64::consts::TAU);
    let xis: Vec<Frequency<f64>> = radii
        .iter()
        .zip(&angles)
        .map(|(lr, a)| {
            let r = 10f64.powf(*lr);
            Frequency::new(r * a.cos(), r * a.sin())
        })
        .collect();
    let mut grid = Vec::with_capacity(81);
    for &t in &taus {
        for &x1 in &x1s {
            for &x2 in &x2s {
                for &xi in &xis {
                    grid.push((t, x1, x2, xi));
                }
            }
        }
    }
    grid
}

fn fourier_check(c: &RunConfig, a: &FourierCheckArgs, out: &mut Output) -> Result<Verdict, CliError> {
    let grid = fourier_grid(c.seed);
    let results = grid
        .par_iter()
        .map(|&(t, x1, x2, xi)| {
            let b = fourier_gamma(t, x1, x2, xi, c.tol)?;
            let d = fourier_gamma_direct(t, x1, x2, xi, c.tol)?;
            Ok((t, x1, x2, xi, b, d))
        })
        .collect::<dcspde::Result<Vec<_>>>()?;
    let mut worst: f64 = 0.0;
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|(t, x1, x2, xi, b, d)| {
            let diff = (b - d).norm();
            worst = worst.max(diff);
            vec![
                num(*t),
                num(*x1),
                num(*x2),
                num(xi.xi1),
                num(xi.xi2),
                num(b.re),
                num(b.im),
                num(d.re),
                num(d.im),
                num(diff),
            ]
        })
        .collect();
    out.write_csv(
        "fourier_check.csv",
        &["tau", "x1", "x2", "xi1", "xi2", "bessel_re", "bessel_im", "direct_re", "direct_im", "abs_diff"],
        &rows,
    )?;
    out.write_json(
        "fourier_check.json",
        json!({ "cases": rows.len(), "max_abs_diff": worst, "threshold": a.threshold }),
    )?;
    Ok(if worst <= a.threshold { Ok(()) } else { Err(format!("max |difference| {worst:e} > {:e}", a.threshold)) })
}

const SLOPE_TOLERANCE: f64 = 0.05;

fn bounds(c: &RunConfig, a: &BoundsArgs, out: &mut Output) -> Result<Verdict, CliError> {
    let constants = if a.calibrate { BoundConstants::calibrate(&CalibrationGrid::default())? } else { BoundConstants::shipped()? };
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for (path, target) in [(DecayPath::Xi2Axis, -0.5), (DecayPath::Matched, -1.0 / 3.0)] {
        let fit = decay_slope(path, c.point.t, c.point.x1, 1e2, 1e4, a.fit_nodes, c.tol)?;
        let label = serde_json::to_value(path).expect("path serializes");
        for (r, m) in &fit.samples {
            rows.push(vec![label.as_str().unwrap_or_default().to_string(), num(*r), num(*m)]);
        }
        fits.push(json!({
            "path": path,
            "slope": fit.slope,
            "intercept": fit.intercept,
            "target": target,
            "tolerance": SLOPE_TOLERANCE,
            "pass": (fit.slope - target).abs() <= SLOPE_TOLERANCE,
        }));
    }
    out.write_csv("decay.csv", &["path", "xi_norm", "modulus"], &rows)?;
    let dominance = dominance_sweep(&constants, a.points, c.seed, c.tol)?;
    out.write_json(
        "bounds.json",
        json!({ "constants": constants, "fits": fits, "dominance": dominance, "dominance_pass": dominance.passes() }),
    )?;
    Ok(Ok(()))
}

fn verdict_json(v: &IntegralVerdict) -> serde_json::Value {
    json!({
        "verdict": if v.is_finite() { "finite" } else { "divergent" },
        "value": v.value,
        "method": v.method,
        "error_estimate": v.error_estimate,
    })
}

fn admissibility(c: &RunConfig, out: &mut Output) -> Result<Verdict, CliError> {
    let mu = &c.measure;
    let sc = sc_integral(mu)?;
    let dalang = dalang_integral(mu)?;
    let sc_q = sc_integral_quadrature(mu)?;
    let dalang_q = dalang_integral_quadrature(mu)?;
    let report = json!({
        "measure": mu,
        "sc": verdict_json(&sc),
        "dalang": verdict_json(&dalang),
        "sc_quadrature": verdict_json(&sc_q),
        "dalang_quadrature": verdict_json(&dalang_q),
    });
    println!("sc: {}, dalang: {}", report["sc"]["verdict"], report["dalang"]["verdict"]);
    out.write_json("admissibility.json", report)?;
    Ok(Ok(()))
}

fn simulate(c: &RunConfig, a: &SimulateArgs, out: &mut Output) -> Result<Verdict, CliError> {
    let solver = SolverConfig::new(c.grid, c.measure.clone());
    let ens = solve_field_with(&[c.point], &solver, c.samples)?;
    let mut csv = Vec::new();
    ens.write_csv(&mut csv)?;
    out.write_csv_body("samples.csv", &csv)?;
    let mut summary = ens.summary_json();
    summary["solver_config_hash"] = solver.hash().into();
    out.write_json("summary.json", summary)?;
    if a.isometry {
        let s = &ens.summaries()[0];
        let norm = norm_integral(c.point.t, c.point.x1, c.point.x2, &c.measure, c.tol)?;
        let r = isometry_report(s, norm);
        println!("variance {:.4} ± {:.4}, norm integral {:.4}, budget {:.4}", r.mc_variance, r.std_err, r.norm_integral, r.budget);
        out.write_json("isometry.json", json!({ "report": r, "pass": r.passes() }))?;
    }
    Ok(Ok(()))
}

fn increment(axis: Axis, delta: f64, base: FieldPoint) -> Increment {
    match axis {
        Axis::Time => Increment::Time(delta),
        Axis::X1 => Increment::X1(base.x1 + delta),
        Axis::X2 => Increment::X2(base.x2 + delta),
    }
}

fn continuity(c: &RunConfig, a: &ContinuityArgs, out: &mut Output) -> Result<Verdict, CliError> {
    if a.deltas.is_empty() || a.deltas.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
        return Err(CliError::Invalid("deltas must be positive".into()));
    }
    let base = c.point;
    let mut rows = Vec::new();
    let mut trends = Vec::new();
    for &axis in &a.axes {
        let mut values = Vec::new();
        let mut bracketed = true;
        for &d in &a.deltas {
            let kind = increment(axis, d, base);
            let v = l2_increment(kind, base, &c.measure, c.tol)?;
            let mut row = vec![serde_json::to_value(axis).unwrap().as_str().unwrap_or_default().into(), d.to_string(), num(v)];
            if a.mc {
                let (m, se) = mc_l2_increment(kind, base, &c.grid, &c.measure, c.samples)?;
                bracketed &= (m - v).abs() <= 3.0 * se;
                row.extend([num(m), num(se)]);
            } else {
                row.extend([String::new(), String::new()]);
            }
            rows.push(row);
            values.push(v);
        }
        let decreasing = values.windows(2).all(|w| w[1] < w[0]);
        let ratio = values.last().unwrap() / values[0];
        trends.push(json!({
            "axis": axis,
            "values": values,
            "strictly_decreasing": decreasing,
            "final_over_first": ratio,
            "mc_bracketed": if a.mc { Some(bracketed) } else { None },
        }));
    }
    out.write_csv("continuity.csv", &["axis", "delta", "l2_increment", "mc", "mc_std_err"], &rows)?;
    out.write_json("continuity.json", json!({ "base": base, "trends": trends }))?;
    Ok(Ok(()))
}

/// The two overlapping bumps used by `covariance-check`.
pub fn covariance_pair() -> (TestFunction<f64>, TestFunction<f64>) {
    (
        TestFunction::bump([0.5, 0.2, -0.3], [0.4, 1.5, 1.2]),
        TestFunction::bump([0.6, -0.3, 0.2], [0.35, 1.2, 1.5]),
    )
}

fn covariance_check(c: &RunConfig, out: &mut Output) -> Result<Verdict, CliError> {
    let (phi, psi) = covariance_pair();
    let r = covariance_mc_check(&phi, &psi, &c.grid, &c.measure, c.samples)?;
    let pass = (r.mc_estimate - r.spectral_value).abs() <= 3.0 * r.std_err;
    println!("mc {:.5} ± {:.5}, spectral {:.5}", r.mc_estimate, r.std_err, r.spectral_value);
    out.write_json("covariance_check.json", json!({ "phi": phi_json(&phi), "psi": phi_json(&psi), "result": r, "pass": pass }))?;
    Ok(if pass { Ok(()) } else { Err("Monte Carlo covariance outside 3 standard errors".into()) })
}

fn phi_json(f: &TestFunction<f64>) -> serde_json::Value {
    json!({
        "center": [f.time.center, f.x1.center, f.x2.center],
        "radii": [f.time.radius, f.x1.radius, f.x2.radius],
    })
}
