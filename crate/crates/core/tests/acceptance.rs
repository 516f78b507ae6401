//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! `cargo test -p dcspde --test acceptance`

use std::time::{Duration, Instant};

use dcspde::fourier::laplace::{hat_gamma_dagger, laplace_chi_identity, LaplaceFrequency};
use dcspde::fourier::{
    decay_slope, dominance_sweep, fourier_gamma, fourier_gamma_direct, BoundConstants, CalibrationGrid, DecayPath,
    Frequency,
};
use dcspde::kernel::{oracle_suite, weak_apply, TestFunction, ORACLE_SOURCES};
use dcspde::noise::{covariance_mc_check, GridSpec};
use dcspde::solver::{
    isometry_report, l2_increment, mc_l2_increment, solve_field, FieldPoint, Increment, PointSummary,
};
use dcspde::spectral::{
    dalang_integral, dalang_integral_quadrature, norm_integral, sc_integral, sc_integral_quadrature,
    SpectralMeasureSpec,
};
use num_complex::Complex;
use rand::{Rng, SeedableRng};

type Outcome = Result<String, String>;
type Shift = fn(f64, FieldPoint) -> Increment;

struct Report {
    failed: usize,
}

impl Report {
    fn run(&mut self, id: &str, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let r = f();
        let secs = start.elapsed().as_secs_f64();
        match r {
            Ok(msg) => println!("PASS {id}: {msg} [{secs:.1}s]"),
            Err(msg) => {
                self.failed += 1;
                println!("FAIL {id}: {msg} [{secs:.1}s]");
            }
        }
    }
}

fn verdict(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn weak_suite() -> Outcome {
    let tol = 1e-3;
    let start = Instant::now();
    let suite = oracle_suite();
    let mut worst: f64 = 0.0;
    for phi in &suite {
        for &y1 in &ORACLE_SOURCES {
            let r = weak_apply(y1, phi, tol).map_err(|e| e.to_string())?;
            worst = worst.max((r.value - phi.value(0.0, y1, 0.0)).abs());
        }
    }
    let fast = start.elapsed() <= Duration::from_secs(300);
    verdict(
        suite.len() >= 10 && worst <= 5.0 * tol && fast,
        format!("{} functions x {} sources, max error {worst:.2e} (limit {:.0e})", suite.len(), ORACLE_SOURCES.len(), 5.0 * tol),
    )
}

fn representation() -> Outcome {
    let start = Instant::now();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    let mut draw = |lo: f64, hi: f64| -> [f64; 3] { [0, 1, 2].map(|_| rng.random_range(lo..hi)) };
    let taus = draw(0.0, 2.0).map(|u| 2.0 - u);
    let x1s = draw(-2.0, 2.0);
    let x2s = draw(-1.0, 1.0);
    let (lr, ang) = (draw(-1.0, 2.0), draw(0.0, std::f64::consts::TAU));
    let xis: Vec<Frequency<f64>> =
        (0..3).map(|k| Frequency::new(10f64.powf(lr[k]) * ang[k].cos(), 10f64.powf(lr[k]) * ang[k].sin())).collect();
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for &t in &taus {
        for &x1 in &x1s {
            for &x2 in &x2s {
                for &xi in &xis {
                    let a = fourier_gamma(t, x1, x2, xi, 1e-9).map_err(|e| e.to_string())?;
                    let b = fourier_gamma_direct(t, x1, x2, xi, 1e-9).map_err(|e| e.to_string())?;
                    worst = worst.max((a - b).norm());
                    n += 1;
                }
            }
        }
    }
    let fast = start.elapsed() <= Duration::from_secs(120);
    verdict(worst <= 1e-6 && fast, format!("{n} grid points, max |difference| {worst:.2e} (limit 1e-6)"))
}

fn slope(path: DecayPath, target: f64) -> Outcome {
    let fit = decay_slope(path, 1.0, 0.5, 1e2, 1e4, 41, 1e-10).map_err(|e| e.to_string())?;
    verdict(
        (fit.slope - target).abs() <= 0.05,
        format!("fitted slope {:.4}, target {target:.4} +/- 0.05", fit.slope),
    )
}

fn dominance() -> Outcome {
    let c = BoundConstants::shipped().map_err(|e| e.to_string())?;
    if c.grid_hash != CalibrationGrid::default().hash() {
        return Err("shipped constants were not fitted on the default grid".into());
    }
    let r = dominance_sweep(&c, 200, 2024, 1e-9).map_err(|e| e.to_string())?;
    verdict(
        r.passes() && r.checked == 200,
        format!("{}/{} points dominated, worst ratio {:.3}", r.checked - r.violations, r.checked, r.worst_ratio),
    )
}

fn admissibility() -> Outcome {
    let e = |e: dcspde::Error| e.to_string();
    let mut notes = Vec::new();
    let mut ok = true;
    for beta in [0.5, 0.6, 0.66, 0.7, 1.0] {
        let mu = SpectralMeasureSpec::RieszPower { beta };
        let closed = sc_integral(&mu).map_err(e)?;
        let quad = sc_integral_quadrature(&mu).map_err(e)?;
        let expect = beta < 2.0 / 3.0;
        ok &= closed.is_finite() == expect && quad.is_finite() == expect;
        if let (Some(a), Some(b)) = (closed.value, quad.value) {
            ok &= (a - b).abs() <= 1e-3 * a;
        }
        let (dc, dq) = (dalang_integral(&mu).map_err(e)?, dalang_integral_quadrature(&mu).map_err(e)?);
        ok &= dc.is_finite() && dq.is_finite();
        if let (Some(a), Some(b)) = (dc.value, dq.value) {
            ok &= (a - b).abs() <= 1e-3 * a;
        }
        notes.push(format!("beta {beta}: {}", if closed.is_finite() { "finite" } else { "divergent" }));
    }
    let white = SpectralMeasureSpec::WhiteNoise;
    let white_div = !sc_integral(&white).map_err(e)?.is_finite()
        && !dalang_integral(&white).map_err(e)?.is_finite()
        && !sc_integral_quadrature(&white).map_err(e)?.is_finite()
        && !dalang_integral_quadrature(&white).map_err(e)?.is_finite();
    let gauss = SpectralMeasureSpec::GaussianDensity { ell: 1.0 };
    let gauss_fin = sc_integral(&gauss).map_err(e)?.is_finite() && dalang_integral(&gauss).map_err(e)?.is_finite();
    notes.push(format!("white divergent: {white_div}, gaussian finite: {gauss_fin}"));
    verdict(ok && white_div && gauss_fin, notes.join("; "))
}

fn isometry() -> Outcome {
    let start = Instant::now();
    let grid = GridSpec { dt: 0.05, t_steps: 20, x_extent: 4.0, n_modes: 64, seed: 2024, n_cells: 64 };
    let mu = SpectralMeasureSpec::RieszPower { beta: 0.5 };
    let ens = solve_field(&[FieldPoint::new(1.0, 0.0, 0.0)], &grid, &mu, 10_000).map_err(|e| e.to_string())?;
    let norm = norm_integral(1.0, 0.0, 0.0, &mu, 0.05).map_err(|e| e.to_string())?;
    let r = isometry_report(&ens.summaries()[0], norm);
    let fast = start.elapsed() <= Duration::from_secs(600);
    verdict(
        r.passes() && fast,
        format!(
            "MC variance {:.4} +/- {:.4}, norm integral {:.4} +/- {:.4}, budget {:.4}",
            r.mc_variance, r.std_err, r.norm_integral, r.norm_error, r.budget
        ),
    )
}

fn covariance() -> Outcome {
    let grid = GridSpec { dt: 0.05, t_steps: 20, x_extent: 6.0, n_modes: 32, seed: 2024, n_cells: 96 };
    let phi = TestFunction::bump([0.5, 0.2, -0.3], [0.4, 1.5, 1.2]);
    let psi = TestFunction::bump([0.6, -0.3, 0.2], [0.35, 1.2, 1.5]);
    let mu = SpectralMeasureSpec::RieszPower { beta: 0.5 };
    let r = covariance_mc_check(&phi, &psi, &grid, &mu, 10_000).map_err(|e| e.to_string())?;
    verdict(
        (r.mc_estimate - r.spectral_value).abs() <= 3.0 * r.std_err,
        format!("MC {:.4} +/- {:.4}, spectral {:.4}", r.mc_estimate, r.std_err, r.spectral_value),
    )
}

fn continuity() -> Outcome {
    let mu = SpectralMeasureSpec::GaussianDensity { ell: 1.0 };
    let base = FieldPoint::new(0.5, 0.5, 0.0);
    let grid = GridSpec { dt: 0.003125, t_steps: 224, x_extent: 4.0, n_modes: 16, seed: 7, n_cells: 8 };
    let deltas = [0.2, 0.1, 0.05, 0.025];
    let axes: [(&str, Shift); 3] = [
        ("t", |d, _| Increment::Time(d)),
        ("x1", |d, b| Increment::X1(b.x1 + d)),
        ("x2", |d, b| Increment::X2(b.x2 + d)),
    ];
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, make) in axes {
        let mut values = Vec::new();
        let mut bracketed = 0;
        for d in deltas {
            let kind = make(d, base);
            let v = l2_increment(kind, base, &mu, 2e-4).map_err(|e| e.to_string())?;
            let (m, se) = mc_l2_increment(kind, base, &grid, &mu, 10_000).map_err(|e| e.to_string())?;
            if (m - v).abs() <= 3.0 * se {
                bracketed += 1;
            }
            values.push(v);
        }
        let decreasing = values.windows(2).all(|w| w[1] < w[0]);
        let ratio = values[3] / values[0];
        ok &= decreasing && ratio < 0.1 && bracketed == deltas.len();
        notes.push(format!("{name}: ratio {ratio:.4}, decreasing {decreasing}, MC bracketed {bracketed}/4"));
    }
    verdict(ok, notes.join("; "))
}

fn laplace() -> Outcome {
    let e = |e: dcspde::Error| e.to_string();
    let i = Complex::new(0.0, 1.0);
    let mut ode: f64 = 0.0;
    let mut jump: f64 = 0.0;
    let h = 1e-5;
    for (re, im, xi2, y1) in [(1.0, -1.0, 2.0, 0.8), (-0.7, -0.4, 1.3, 1.5), (3.0, -2.0, -4.0, 0.0)] {
        let z = Complex::new(re, im);
        let xi0 = LaplaceFrequency::new(re, im).map_err(e)?;
        let f = |x: f64| hat_gamma_dagger(xi0, x, y1, xi2);
        for x in [y1 - 1.7, y1 - 0.9, y1 - 0.3] {
            let d = (f(x + h).map_err(e)? - f(x - h).map_err(e)?) / (2.0 * h);
            let fx = f(x).map_err(e)?;
            let r = d + i / (z * 2.0) * (x * x * xi2 * xi2 - z * z) * fx;
            ode = ode.max(r.norm() / fx.norm());
        }
        let target = -i / (z * 2.0);
        jump = jump.max((f(y1 - 1e-13).map_err(e)? - target).norm());
    }
    let mut chi: f64 = 0.0;
    for (re, im) in [(0.0, -1.0), (1.0, -1.0), (-4.0, -0.05)] {
        let (l, r) = laplace_chi_identity(LaplaceFrequency::new(re, im).map_err(e)?, 1e-10).map_err(e)?;
        chi = chi.max((l - r).norm());
    }
    verdict(
        ode <= 1e-6 && jump <= 1e-10 && chi <= 1e-8,
        format!("ODE residual {ode:.1e}, jump error {jump:.1e}, identity error {chi:.1e}"),
    )
}

fn in_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn determinism() -> Outcome {
    let grid = GridSpec { dt: 0.05, t_steps: 20, x_extent: 4.0, n_modes: 32, seed: 42, n_cells: 64 };
    let mu = SpectralMeasureSpec::RieszPower { beta: 0.5 };
    let pts = [FieldPoint::new(1.0, 0.0, 0.0), FieldPoint::new(0.6, -0.4, 0.3)];
    let run = || -> dcspde::Result<(Vec<PointSummary>, (f64, f64))> {
        let s = solve_field(&pts, &grid, &mu, 2000)?.summaries();
        let inc = mc_l2_increment(Increment::X2(0.1), pts[0], &grid, &mu, 500)?;
        Ok((s, inc))
    };
    let (a, ia) = in_pool(1, run).map_err(|e| e.to_string())?;
    let (b, ib) = in_pool(4, run).map_err(|e| e.to_string())?;
    let mut worst: f64 = (ia.0 - ib.0).abs().max((ia.1 - ib.1).abs());
    for (x, y) in a.iter().zip(&b) {
        for (p, q) in [(x.mean, y.mean), (x.variance, y.variance), (x.std_err_variance, y.std_err_variance)] {
            worst = worst.max((p - q).abs());
        }
    }
    verdict(worst <= 1e-12, format!("1 vs 4 threads, max summary difference {worst:.1e}"))
}

fn main() {
    let mut r = Report { failed: 0 };
    r.run("1 weak fundamental solution", weak_suite);
    r.run("2 representation equivalence", representation);
    r.run("3a decay exponent along xi2 axis", || slope(DecayPath::Xi2Axis, -0.5));
    r.run("3b decay exponent along matched curve", || slope(DecayPath::Matched, -1.0 / 3.0));
    r.run("3c dominance sweep", dominance);
    r.run("4 admissibility classification", admissibility);
    r.run("5 isometry at desk scale", isometry);
    r.run("6 covariance check", covariance);
    r.run("7 L2 continuity trends", continuity);
    r.run("8 Laplace-side checks", laplace);
    r.run("9 determinism across thread counts", determinism);
    println!("{} criteria failed", r.failed);
    if r.failed > 0 {
        std::process::exit(1);
    }
}
