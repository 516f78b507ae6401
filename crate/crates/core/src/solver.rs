//! Discrete stochastic convolution `u(t, x) = Σ_k ∫ Γ(t − s_k, x₁, y₁, x₂ − y₂) W_k(y) dy`
//! with left endpoints `s_k = k·dt`.
//!
//! Two equivalent routes are provided. [`solve_field`] integrates `Γ` against every
//! lattice mode exactly, which reduces each step to
//!
//! ```text
//! √dt · Σ_j √w_j (A_kj Re T_kj − B_kj Im T_kj),   T_kj = FΓ(t − s_k, x₁, x₂)(ξ_j),
//! ```
//!
//! and [`convolve_cells`] sums cell integrals of `Γ` against a materialized
//! [`NoiseGrid`]. Both consume the same coefficient streams, so they agree up to the
//! cell quadrature error of the noise.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fourier::{fourier_gamma, fourier_gamma_fixed, Frequency};
use crate::kernel::{max_spread_sqrt, spread};
use crate::noise::{draw_coefficients, mean_var, GridSpec, NoiseGrid, NoiseModes};
use crate::quadrature::{integrate, QuadOptions};
use crate::scalar::CompensatedSum;
use crate::spectral::{
    head_bound, require_admissible, spectral_time_integral, transform_scale, SpectralMeasureSpec,
    SpectralValue, TransformOptions,
};

/// A space-time query point `(t, x₁, x₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldPoint {
    pub t: f64,
    pub x1: f64,
    pub x2: f64,
}

impl FieldPoint {
    pub fn new(t: f64, x1: f64, x2: f64) -> Self {
        Self { t, x1, x2 }
    }
}

/// Everything that determines an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub grid: GridSpec,
    pub measure: SpectralMeasureSpec,
    /// Absolute tolerance of each transform evaluation.
    pub transform_tol: f64,
}

impl SolverConfig {
    pub fn new(grid: GridSpec, measure: SpectralMeasureSpec) -> Self {
        Self { grid, measure, transform_tol: 1e-10 }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Monte Carlo samples of `u` at a list of points.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldEnsemble {
    pub points: Vec<FieldPoint>,
    /// `samples[p][r]` is realization `r` at point `p`.
    pub samples: Vec<Vec<f64>>,
    pub config: SolverConfig,
    /// `dt Σ_k Σ_j w_j |T_kj|²` per point: the exact variance of the discrete field.
    pub discrete_variance: Vec<f64>,
}

/// Mean, variance and their standard errors at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub point: FieldPoint,
    pub mean: f64,
    pub variance: f64,
    pub std_err_mean: f64,
    pub std_err_variance: f64,
    pub discrete_variance: f64,
}

/// Per-step transforms `T_kj` of one point, `k = 0..K`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTransforms {
    pub steps: Vec<Vec<Complex<f64>>>,
}

impl StepTransforms {
    pub fn compute(point: FieldPoint, grid: &GridSpec, modes: &NoiseModes, tol: f64) -> Result<Self> {
        let k_max = grid.steps_to(point.t)?;
        let m = modes.len();
        let jobs: Vec<(usize, usize)> = (0..k_max).flat_map(|k| (0..m).map(move |j| (k, j))).collect();
        let flat: Vec<Complex<f64>> = jobs
            .par_iter()
            .map(|&(k, j)| {
                let tau = point.t - k as f64 * grid.dt;
                fourier_gamma(tau, point.x1, point.x2, modes.frequencies[j], tol)
            })
            .collect::<Result<_>>()?;
        Ok(Self { steps: flat.chunks(m.max(1)).take(k_max).map(|c| c.to_vec()).collect() })
    }

    /// `self − other`, padding the shorter stack with zero steps.
    pub fn difference(&self, other: &Self) -> Self {
        let n = self.steps.len().max(other.steps.len());
        let m = self.steps.first().or(other.steps.first()).map_or(0, |s| s.len());
        let zero = vec![Complex::new(0.0, 0.0); m];
        let steps = (0..n)
            .map(|k| {
                let a = self.steps.get(k).unwrap_or(&zero);
                let b = other.steps.get(k).unwrap_or(&zero);
                a.iter().zip(b).map(|(x, y)| x - y).collect()
            })
            .collect();
        Self { steps }
    }

    /// `dt Σ_k Σ_j w_j |T_kj|²`.
    pub fn variance(&self, modes: &NoiseModes, dt: f64) -> f64 {
        let s: CompensatedSum = self
            .steps
            .iter()
            .flat_map(|step| step.iter().zip(&modes.weights).map(|(t, w)| w * t.norm_sqr()))
            .collect();
        dt * s.value()
    }

    /// The field value for explicit per-step coefficients.
    pub fn project(&self, modes: &NoiseModes, dt: f64, coefficients: &[Vec<(f64, f64)>]) -> f64 {
        let mut acc = CompensatedSum::new();
        for (step, coef) in self.steps.iter().zip(coefficients) {
            acc.add(project_step(step, &modes.sqrt_weights, coef));
        }
        dt.sqrt() * acc.value()
    }
}

fn project_step(step: &[Complex<f64>], sqrt_w: &[f64], coef: &[(f64, f64)]) -> f64 {
    step.iter()
        .zip(sqrt_w)
        .zip(coef)
        .map(|((t, s), (a, b))| s * (a * t.re - b * t.im))
        .sum()
}

/// Checks the support cone of every point against `[−X, X]²`.
pub fn check_support(point: &FieldPoint, grid: &GridSpec) -> Result<()> {
    if !(point.t >= 0.0) || !point.x1.is_finite() || !point.x2.is_finite() {
        return Err(Error::InvalidInput("query point must have t ≥ 0 and finite x".into()));
    }
    let x = grid.x_extent;
    let half_width = max_spread_sqrt(point.t, point.x1);
    let ok = point.x1 >= -x
        && point.x1 + 2.0 * point.t <= x
        && point.x2 - half_width >= -x
        && point.x2 + half_width <= x;
    if !ok {
        return Err(Error::SupportOverflow(format!(
            "support of Γ at (t, x₁, x₂) = ({}, {}, {}) spans y₁ ∈ ({}, {}), |x₂ − y₂| ≤ {} outside [−{x}, {x}]²",
            point.t,
            point.x1,
            point.x2,
            point.x1,
            point.x1 + 2.0 * point.t,
            half_width
        )));
    }
    Ok(())
}

fn prepare(points: &[FieldPoint], grid: &GridSpec, mu: &SpectralMeasureSpec) -> Result<NoiseModes> {
    grid.validate()?;
    require_admissible(mu)?;
    for p in points {
        check_support(p, grid)?;
        grid.steps_to(p.t)?;
    }
    NoiseModes::new(grid, mu)
}

/// Values of several linear functionals of the noise for realizations
/// `first..first + n`, drawn once per `(realization, step)`.
fn sample_functionals(
    stacks: &[&StepTransforms],
    modes: &NoiseModes,
    grid: &GridSpec,
    first: u64,
    n: usize,
) -> Vec<Vec<f64>> {
    let k_max = stacks.iter().map(|s| s.steps.len()).max().unwrap_or(0);
    let sqdt = grid.dt.sqrt();
    (first..first + n as u64)
        .into_par_iter()
        .map(|r| {
            let mut coef = Vec::new();
            let mut acc = vec![CompensatedSum::new(); stacks.len()];
            for k in 0..k_max {
                draw_coefficients(grid.seed, r, k as u64, modes.len(), &mut coef);
                for (a, s) in acc.iter_mut().zip(stacks) {
                    if let Some(step) = s.steps.get(k) {
                        a.add(project_step(step, &modes.sqrt_weights, &coef));
                    }
                }
            }
            acc.iter().map(|a| sqdt * a.value()).collect()
        })
        .collect()
}

/// Monte Carlo samples of `u` at `points`; realization `r` uses noise substream `r`.
pub fn solve_field(
    points: &[FieldPoint],
    grid: &GridSpec,
    mu: &SpectralMeasureSpec,
    n_samples: usize,
) -> Result<FieldEnsemble> {
    solve_field_with(points, &SolverConfig::new(*grid, mu.clone()), n_samples)
}

pub fn solve_field_with(points: &[FieldPoint], config: &SolverConfig, n_samples: usize) -> Result<FieldEnsemble> {
    let grid = &config.grid;
    let modes = prepare(points, grid, &config.measure)?;
    let stacks: Vec<StepTransforms> = points
        .iter()
        .map(|p| StepTransforms::compute(*p, grid, &modes, config.transform_tol))
        .collect::<Result<_>>()?;
    let refs: Vec<&StepTransforms> = stacks.iter().collect();
    let rows = sample_functionals(&refs, &modes, grid, 0, n_samples);
    let samples = (0..points.len()).map(|p| rows.iter().map(|r| r[p]).collect()).collect();
    let discrete_variance = stacks.iter().map(|s| s.variance(&modes, grid.dt)).collect();
    Ok(FieldEnsemble { points: points.to_vec(), samples, config: config.clone(), discrete_variance })
}

impl FieldEnsemble {
    pub fn n_samples(&self) -> usize {
        self.samples.first().map_or(0, |s| s.len())
    }

    pub fn summaries(&self) -> Vec<PointSummary> {
        self.points
            .iter()
            .zip(&self.samples)
            .zip(&self.discrete_variance)
            .map(|((p, xs), dv)| {
                let n = xs.len() as f64;
                let (mean, variance) = mean_var(xs);
                let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
                let (_, var_sq) = mean_var(&sq);
                PointSummary {
                    point: *p,
                    mean,
                    variance,
                    std_err_mean: (variance / n).sqrt(),
                    std_err_variance: (var_sq / n).sqrt(),
                    discrete_variance: *dv,
                }
            })
            .collect()
    }

    /// One row per `(point, sample)`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        out.write_record(["point", "t", "x1", "x2", "sample", "u"]).map_err(io)?;
        for (i, (p, xs)) in self.points.iter().zip(&self.samples).enumerate() {
            for (r, u) in xs.iter().enumerate() {
                out.write_record(&[
                    i.to_string(),
                    p.t.to_string(),
                    p.x1.to_string(),
                    p.x2.to_string(),
                    r.to_string(),
                    format!("{u:e}"),
                ])
                .map_err(io)?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Summary statistics with the configuration hash.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "version": env!("CARGO_PKG_VERSION"),
            "config_hash": self.config.hash(),
            "config": self.config,
            "n_samples": self.n_samples(),
            "points": self.summaries(),
        })
    }
}

/// Isometry comparison at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsometryReport {
    pub mc_variance: f64,
    pub std_err: f64,
    pub norm_integral: f64,
    pub norm_error: f64,
    pub discrete_variance: f64,
    /// `|norm_integral − discrete_variance|`.
    pub budget: f64,
}

impl IsometryReport {
    pub fn passes(&self) -> bool {
        (self.mc_variance - self.norm_integral).abs() <= 3.0 * self.std_err + self.budget
    }
}

pub fn isometry_report(summary: &PointSummary, norm: SpectralValue) -> IsometryReport {
    IsometryReport {
        mc_variance: summary.variance,
        std_err: summary.std_err_variance,
        norm_integral: norm.value,
        norm_error: norm.error_estimate,
        discrete_variance: summary.discrete_variance,
        budget: (norm.value - summary.discrete_variance).abs(),
    }
}

/// `∫_cell Γ(τ, x₁, y₁, x₂ − y₂) dy` over `[a₁, b₁] × [a₂, b₂]`.
///
/// The `y₂` integral is closed form, `(1/2π)·arcsin((x₂ − y₂)/√h)` between the cell
/// edges, which keeps the inverse-square-root edge singularity exact.
pub fn cell_integral(tau: f64, x1: f64, x2: f64, y1_range: (f64, f64), y2_range: (f64, f64), tol: f64) -> Result<f64> {
    let lo = y1_range.0.max(x1);
    let hi = y1_range.1.min(x1 + 2.0 * tau);
    if tau <= 0.0 || hi <= lo {
        return Ok(0.0);
    }
    let inner = |y1: f64| {
        let h = spread(tau, x1, y1);
        if h <= 0.0 {
            return 0.0;
        }
        let w = h.sqrt();
        let s_lo = ((x2 - y2_range.1) / w).clamp(-1.0, 1.0);
        let s_hi = ((x2 - y2_range.0) / w).clamp(-1.0, 1.0);
        (s_hi.asin() - s_lo.asin()) / (2.0 * PI)
    };
    Ok(integrate(inner, lo, hi, &QuadOptions::absolute(tol))?.value)
}

/// `u(point)` from a materialized realization by cell sums of `Γ`.
pub fn convolve_cells(point: FieldPoint, noise: &NoiseGrid, tol: f64) -> Result<f64> {
    let grid = &noise.spec;
    check_support(&point, grid)?;
    let k_max = grid.steps_to(point.t)?;
    let w = grid.cell_width();
    let x = grid.x_extent;
    let n = grid.n_cells;
    let cell_of = |q: f64| (((q + x) / w).floor().max(0.0) as usize).min(n - 1);
    let mut acc = CompensatedSum::new();
    for k in 0..k_max {
        let tau = point.t - k as f64 * grid.dt;
        let half = max_spread_sqrt(tau, point.x1);
        let (c1_lo, c1_hi) = (cell_of(point.x1), cell_of(point.x1 + 2.0 * tau));
        let (c2_lo, c2_hi) = (cell_of(point.x2 - half), cell_of(point.x2 + half));
        for c1 in c1_lo..=c1_hi {
            let y1 = (-x + c1 as f64 * w, -x + (c1 + 1) as f64 * w);
            for c2 in c2_lo..=c2_hi {
                let y2 = (-x + c2 as f64 * w, -x + (c2 + 1) as f64 * w);
                let g = cell_integral(tau, point.x1, point.x2, y1, y2, tol)?;
                if g != 0.0 {
                    acc.add(g * noise.value(k, c1, c2));
                }
            }
        }
    }
    Ok(acc.value())
}

/// Which coordinate an increment moves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum Increment {
    /// `u(t + h, x) − u(t, x)`.
    Time(f64),
    /// `u(t, x₁, x₂) − u(t, z₁, x₂)`.
    X1(f64),
    /// `u(t, x₁, x₂) − u(t, x₁, z₂)`.
    X2(f64),
}

impl Increment {
    /// The second point of the pair.
    pub fn shifted(&self, base: FieldPoint) -> FieldPoint {
        match *self {
            Increment::Time(h) => FieldPoint { t: base.t + h, ..base },
            Increment::X1(z1) => FieldPoint { x1: z1, ..base },
            Increment::X2(z2) => FieldPoint { x2: z2, ..base },
        }
    }

    fn is_trivial(&self, base: FieldPoint) -> bool {
        match *self {
            Increment::Time(h) => h == 0.0,
            Increment::X1(z1) => z1 == base.x1,
            Increment::X2(z2) => z2 == base.x2,
        }
    }

    fn validate(&self, base: FieldPoint) -> Result<()> {
        if !(base.t > 0.0) || !base.t.is_finite() || !base.x1.is_finite() || !base.x2.is_finite() {
            return Err(Error::Domain("base point needs t > 0 and finite x".into()));
        }
        match *self {
            Increment::Time(h) if !(h >= 0.0) || !h.is_finite() => {
                Err(Error::Domain("time increment must be nonnegative".into()))
            }
            Increment::X1(z) | Increment::X2(z) if !z.is_finite() => {
                Err(Error::Domain("shifted coordinate must be finite".into()))
            }
            _ => Ok(()),
        }
    }
}

/// `E|u(base) − u(shifted)|²` from the spectral representation.
pub fn l2_increment(kind: Increment, base: FieldPoint, mu: &SpectralMeasureSpec, tol: f64) -> Result<f64> {
    let v = l2_increment_with(kind, base, mu, tol, &TransformOptions::default())?;
    if v.error_estimate > tol {
        return Err(Error::QuadratureNoConvergence { achieved: v.error_estimate, target: tol, evals: 0 });
    }
    Ok(v.value)
}

/// [`l2_increment`] with explicit options and an error estimate instead of a hard check.
pub fn l2_increment_with(
    kind: Increment,
    base: FieldPoint,
    mu: &SpectralMeasureSpec,
    tol: f64,
    opts: &TransformOptions,
) -> Result<SpectralValue> {
    kind.validate(base)?;
    if !(tol > 0.0) {
        return Err(Error::Domain("tol must be positive".into()));
    }
    require_admissible(mu)?;
    if kind.is_trivial(base) {
        return Ok(SpectralValue { value: 0.0, error_estimate: 0.0 });
    }
    let t = base.t;
    let (x1, x2) = (base.x1, base.x2);
    let cut = opts.time_cut * t;
    let fg = move |tau: f64, x1: f64, xi: Frequency<f64>| fourier_gamma_fixed(tau, x1, x2, xi);
    match kind {
        Increment::Time(h) => {
            let diff = spectral_time_integral(
                mu,
                cut,
                t,
                |tau, xi| Ok((fg(tau + h, x1, xi)? - fg(tau, x1, xi)?).norm_sqr()),
                |tau| transform_scale(tau + h, x1),
                0.5 * tol,
                opts,
            )?;
            let hcut = opts.time_cut * h;
            let tail = spectral_time_integral(
                mu,
                hcut,
                h,
                |tau, xi| Ok(fg(tau, x1, xi)?.norm_sqr()),
                |tau| transform_scale(tau, x1),
                0.5 * tol,
                opts,
            )?;
            // |a − b|² ≤ 2|a|² + 2|b|² on the bounded piece of the difference term
            let head = head_bound(mu, x1, cut, 2.0)? + shifted_head(mu, x1, cut, h)? + head_bound(mu, x1, hcut, 1.0)?;
            Ok(SpectralValue {
                value: diff.value + tail.value + 0.5 * head,
                error_estimate: diff.error_estimate + tail.error_estimate + 0.5 * head,
            })
        }
        Increment::X1(z1) => {
            let body = spectral_time_integral(
                mu,
                cut,
                t,
                |tau, xi| Ok((fg(tau, x1, xi)? - fg(tau, z1, xi)?).norm_sqr()),
                |tau| transform_scale(tau, x1).max(transform_scale(tau, z1)) + (x1 - z1).abs(),
                tol,
                opts,
            )?;
            let head = head_bound(mu, x1, cut, 2.0)? + head_bound(mu, z1, cut, 2.0)?;
            Ok(SpectralValue { value: body.value + 0.5 * head, error_estimate: body.error_estimate + 0.5 * head })
        }
        Increment::X2(z2) => {
            let d = x2 - z2;
            let body = spectral_time_integral(
                mu,
                cut,
                t,
                |tau, xi| {
                    let s = (0.5 * d * xi.xi2).sin();
                    Ok(4.0 * s * s * fg(tau, x1, xi)?.norm_sqr())
                },
                |tau| transform_scale(tau, x1) + d.abs(),
                tol,
                opts,
            )?;
            // |e^{iθ} − 1|² ≤ 4
            let head = head_bound(mu, x1, cut, 4.0)?;
            Ok(SpectralValue { value: body.value + 0.5 * head, error_estimate: body.error_estimate + 0.5 * head })
        }
    }
}

/// `2 ∫₀^c ∫ |FΓ(τ + h)|² dμ dτ`, evaluated directly since `τ + h` stays away from 0.
fn shifted_head(mu: &SpectralMeasureSpec, x1: f64, cut: f64, h: f64) -> Result<f64> {
    if cut <= 0.0 {
        return Ok(0.0);
    }
    let coarse = TransformOptions { tail_rel: 1e-2, rel_tol: 1e-2, time_nodes: 2, ..Default::default() };
    let v = spectral_time_integral(
        mu,
        h,
        h + cut,
        |tau, xi| Ok(fourier_gamma_fixed(tau, x1, 0.0, xi)?.norm_sqr()),
        |tau| transform_scale(tau, x1),
        f64::INFINITY,
        &coarse,
    )?;
    Ok(2.0 * (v.value + v.error_estimate))
}

/// Monte Carlo estimate of `E|Δu|²` with both fields driven by the same noise.
pub fn mc_l2_increment(
    kind: Increment,
    base: FieldPoint,
    grid: &GridSpec,
    mu: &SpectralMeasureSpec,
    n_samples: usize,
) -> Result<(f64, f64)> {
    let config = SolverConfig::new(*grid, mu.clone());
    let (modes, diff) = increment_transforms(kind, base, &config)?;
    if diff.steps.iter().all(|s| s.iter().all(|t| *t == Complex::new(0.0, 0.0))) {
        return Ok((0.0, 0.0));
    }
    let rows = sample_functionals(&[&diff], &modes, grid, 0, n_samples);
    let sq: Vec<f64> = rows.iter().map(|r| r[0] * r[0]).collect();
    let (m, v) = mean_var(&sq);
    Ok((m, (v / n_samples as f64).sqrt()))
}

/// `E|Δu|²` from independent realizations: `E u₁² + E u₂² − 2E[u₁u₂]`, each
/// mean from its own block of `n_samples` realizations.
pub fn mc_l2_increment_independent(
    kind: Increment,
    base: FieldPoint,
    grid: &GridSpec,
    mu: &SpectralMeasureSpec,
    n_samples: usize,
) -> Result<(f64, f64)> {
    let config = SolverConfig::new(*grid, mu.clone());
    let shifted = kind.shifted(base);
    let modes = prepare(&[base, shifted], grid, mu)?;
    let a = StepTransforms::compute(base, grid, &modes, config.transform_tol)?;
    let b = StepTransforms::compute(shifted, grid, &modes, config.transform_tol)?;
    let n = n_samples;
    let block = |first: u64| sample_functionals(&[&a, &b], &modes, grid, first, n);
    let (r1, r2, r3) = (block(0), block(n as u64), block(2 * n as u64));
    let aa: Vec<f64> = r1.iter().map(|r| r[0] * r[0]).collect();
    let bb: Vec<f64> = r2.iter().map(|r| r[1] * r[1]).collect();
    let ab: Vec<f64> = r3.iter().map(|r| r[0] * r[1]).collect();
    let ((ma, va), (mb, vb), (mab, vab)) = (mean_var(&aa), mean_var(&bb), mean_var(&ab));
    let nf = n as f64;
    Ok((ma + mb - 2.0 * mab, ((va + vb + 4.0 * vab) / nf).sqrt()))
}

/// Transform stacks of the increment and the discrete counterpart of [`l2_increment`].
pub fn increment_transforms(kind: Increment, base: FieldPoint, config: &SolverConfig) -> Result<(NoiseModes, StepTransforms)> {
    kind.validate(base)?;
    let grid = &config.grid;
    let shifted = kind.shifted(base);
    let modes = prepare(&[base, shifted], grid, &config.measure)?;
    if kind.is_trivial(base) {
        return Ok((modes, StepTransforms { steps: Vec::new() }));
    }
    let a = StepTransforms::compute(base, grid, &modes, config.transform_tol)?;
    let b = StepTransforms::compute(shifted, grid, &modes, config.transform_tol)?;
    // steps are indexed by noise time s_k, so both stacks already line up
    Ok((modes, b.difference(&a)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec { dt: 0.1, t_steps: 5, x_extent: 3.0, n_modes: 8, seed: 11, n_cells: 48 }
    }

    fn gauss() -> SpectralMeasureSpec {
        SpectralMeasureSpec::GaussianDensity { ell: 1.0 }
    }

    #[test]
    fn zero_time_gives_zero_field() {
        let e = solve_field(&[FieldPoint::new(0.0, 0.0, 0.0)], &grid(), &gauss(), 50).unwrap();
        assert!(e.samples[0].iter().all(|u| *u == 0.0));
        assert_eq!(e.discrete_variance[0], 0.0);
    }

    #[test]
    fn rejects_overflow_and_divergent_measures() {
        let g = grid();
        assert!(matches!(
            solve_field(&[FieldPoint::new(0.5, 2.5, 0.0)], &g, &gauss(), 5),
            Err(Error::SupportOverflow(_))
        ));
        assert!(matches!(
            solve_field(&[FieldPoint::new(0.5, 0.0, 0.0)], &g, &SpectralMeasureSpec::RieszPower { beta: 0.8 }, 5),
            Err(Error::PreconditionFailed(_))
        ));
        assert!(solve_field(&[FieldPoint::new(0.25, 0.0, 0.0)], &g, &gauss(), 5).is_err());
    }

    #[test]
    fn same_seed_same_samples_across_threads() {
        let pts = [FieldPoint::new(0.3, 0.0, 0.0), FieldPoint::new(0.5, -0.5, 0.2)];
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let a = one.install(|| solve_field(&pts, &grid(), &gauss(), 64).unwrap());
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let b = four.install(|| solve_field(&pts, &grid(), &gauss(), 64).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.summaries(), b.summaries());
    }

    #[test]
    fn linear_in_the_noise_and_causal() {
        let g = grid();
        let modes = NoiseModes::new(&g, &gauss()).unwrap();
        let p = FieldPoint::new(0.3, 0.0, 0.0);
        let st = StepTransforms::compute(p, &g, &modes, 1e-10).unwrap();
        let coefs: Vec<Vec<(f64, f64)>> = (0..g.t_steps)
            .map(|k| {
                let mut c = Vec::new();
                draw_coefficients(g.seed, 0, k as u64, modes.len(), &mut c);
                c
            })
            .collect();
        let u = st.project(&modes, g.dt, &coefs);
        let doubled: Vec<Vec<(f64, f64)>> =
            coefs.iter().map(|c| c.iter().map(|(a, b)| (2.0 * a, 2.0 * b)).collect()).collect();
        assert_eq!(st.project(&modes, g.dt, &doubled), 2.0 * u);
        let mut late = coefs.clone();
        for c in late.iter_mut().skip(3) {
            c.iter_mut().for_each(|v| *v = (9.0, -9.0));
        }
        assert_eq!(st.project(&modes, g.dt, &late), u);
    }

    #[test]
    fn cell_route_respects_causality_and_cone() {
        let g = grid();
        let p = FieldPoint::new(0.3, -0.5, 0.1);
        let noise = crate::noise::sample_noise(&g, &gauss()).unwrap();
        let u = convolve_cells(p, &noise, 1e-12).unwrap();
        let mut mutated = noise.clone();
        for step in mutated.increments.iter_mut().skip(3) {
            step.iter_mut().for_each(|v| *v = 1e3);
        }
        let w = g.cell_width();
        for k in 0..3 {
            let tau = p.t - k as f64 * g.dt;
            let half = max_spread_sqrt(tau, p.x1);
            for c1 in 0..g.n_cells {
                for c2 in 0..g.n_cells {
                    let (a1, b1) = (-g.x_extent + c1 as f64 * w, -g.x_extent + (c1 + 1) as f64 * w);
                    let (a2, b2) = (-g.x_extent + c2 as f64 * w, -g.x_extent + (c2 + 1) as f64 * w);
                    let meets = b1 > p.x1 && a1 < p.x1 + 2.0 * tau && b2 > p.x2 - half && a2 < p.x2 + half;
                    if !meets {
                        mutated.increments[k][c1 * g.n_cells + c2] = -7.0;
                    }
                }
            }
        }
        assert_eq!(convolve_cells(p, &mutated, 1e-12).unwrap(), u);
    }

    #[test]
    fn cell_integral_of_full_support_is_time() {
        // ∫Γ dy = τ
        let tau = 0.4;
        let v = cell_integral(tau, 0.2, 0.1, (-5.0, 5.0), (-5.0, 5.0), 1e-13).unwrap();
        assert!((v - tau).abs() < 1e-10, "{v}");
        // splitting a cell is additive
        let a = cell_integral(tau, 0.2, 0.1, (0.3, 0.7), (0.0, 0.05), 1e-13).unwrap();
        let b = cell_integral(tau, 0.2, 0.1, (0.3, 0.7), (0.05, 0.2), 1e-13).unwrap();
        let c = cell_integral(tau, 0.2, 0.1, (0.3, 0.7), (0.0, 0.2), 1e-13).unwrap();
        assert!((a + b - c).abs() < 1e-12);
    }

    #[test]
    fn cell_route_converges_to_projection() {
        let p = FieldPoint::new(0.3, -0.5, 0.1);
        let reps = 8;
        let mut errs = Vec::new();
        for n_cells in [24, 48, 96] {
            let g = GridSpec { n_cells, ..grid() };
            let e = solve_field(&[p], &g, &gauss(), reps).unwrap();
            let modes = NoiseModes::new(&g, &gauss()).unwrap();
            let ms: f64 = (0..reps)
                .map(|r| {
                    let noise = crate::noise::sample_noise_realization(&g, &gauss(), &modes, r as u64).unwrap();
                    (convolve_cells(p, &noise, 1e-12).unwrap() - e.samples[0][r]).powi(2)
                })
                .sum::<f64>()
                / reps as f64;
            errs.push(ms.sqrt());
        }
        assert!(errs[1] < 0.5 * errs[0] && errs[2] < 0.5 * errs[1], "{errs:?}");
    }

    #[test]
    fn discrete_variance_matches_sample_variance() {
        let g = grid();
        let p = FieldPoint::new(0.5, 0.0, 0.0);
        let e = solve_field(&[p], &g, &gauss(), 4000).unwrap();
        let s = e.summaries()[0];
        assert!(s.mean.abs() <= 3.0 * s.std_err_mean);
        assert!((s.variance - s.discrete_variance).abs() <= 3.0 * s.std_err_variance, "{s:?}");
    }

    #[test]
    fn trivial_increments_vanish() {
        let b = FieldPoint::new(0.5, 0.0, 0.0);
        for k in [Increment::Time(0.0), Increment::X1(0.0), Increment::X2(0.0)] {
            assert_eq!(l2_increment(k, b, &gauss(), 1e-6).unwrap(), 0.0);
            assert_eq!(mc_l2_increment(k, b, &grid(), &gauss(), 10).unwrap(), (0.0, 0.0));
        }
        assert!(l2_increment(Increment::Time(-0.1), b, &gauss(), 1e-6).is_err());
    }

    #[test]
    fn x2_increment_is_below_the_lipschitz_bound() {
        let b = FieldPoint::new(0.5, 0.3, 0.0);
        let z = 0.05;
        let opts = TransformOptions::default();
        let v = l2_increment_with(Increment::X2(z), b, &gauss(), 1e-7, &opts).unwrap();
        let m2 = spectral_time_integral(
            &gauss(),
            0.0,
            b.t,
            |tau, xi| {
                if tau <= 0.0 {
                    return Ok(0.0);
                }
                Ok(xi.xi2 * xi.xi2 * fourier_gamma(tau, b.x1, 0.0, xi, 1e-10)?.norm_sqr())
            },
            |tau| transform_scale(tau, b.x1),
            1e-9,
            &opts,
        )
        .unwrap();
        assert!(v.value > 0.0);
        assert!(v.value <= z * z * m2.value + v.error_estimate, "{} vs {}", v.value, z * z * m2.value);
    }

    #[test]
    fn discrete_increment_matches_mc() {
        let g = GridSpec { t_steps: 8, ..grid() };
        let b = FieldPoint::new(0.3, 0.0, 0.0);
        let config = SolverConfig::new(g, gauss());
        for kind in [Increment::Time(0.2), Increment::X1(0.2), Increment::X2(0.3)] {
            let (modes, d) = increment_transforms(kind, b, &config).unwrap();
            let exact = d.variance(&modes, g.dt);
            let (m, se) = mc_l2_increment(kind, b, &g, &gauss(), 4000).unwrap();
            assert!((m - exact).abs() <= 3.0 * se, "{kind:?}: {m} ± {se} vs {exact}");
        }
    }

    #[test]
    fn common_noise_beats_independent_blocks() {
        let g = GridSpec { t_steps: 8, ..grid() };
        let b = FieldPoint::new(0.5, 0.0, 0.0);
        let (_, crn) = mc_l2_increment(Increment::Time(0.1), b, &g, &gauss(), 2000).unwrap();
        let (_, ind) = mc_l2_increment_independent(Increment::Time(0.1), b, &g, &gauss(), 2000).unwrap();
        assert!(crn < ind, "{crn} vs {ind}");
    }

    #[test]
    fn exports_carry_the_config_hash() {
        let e = solve_field(&[FieldPoint::new(0.2, 0.0, 0.0)], &grid(), &gauss(), 3).unwrap();
        let mut buf = Vec::new();
        e.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("point,t,x1,x2,sample,u"));
        let j = e.summary_json();
        assert_eq!(j["config_hash"], e.config.hash());
        assert_eq!(j["points"].as_array().unwrap().len(), 1);
        let mut other = e.config.clone();
        other.grid.seed += 1;
        assert_ne!(other.hash(), e.config.hash());
    }
}
