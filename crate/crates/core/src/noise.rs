//! Discretized martingale-measure increments: white in time, coloured in space.
//!
//! Each time step `k` carries a stationary Gaussian field
//!
//! ```text
//! W_k(x) = √dt · Σ_j √w_j (A_kj cos(ξ_j·x) + B_kj sin(ξ_j·x))
//! ```
//!
//! on the lattice `ξ_j = (π/X)·m`, `m ∈ {−n/2, …, n/2 − 1}²`, with `w_j` the
//! `μ`-weight of the lattice cell around `ξ_j`, so that
//! `E[W_k(x) W_k(y)] = dt Σ_j w_j cos(ξ_j·(x − y)) ≈ dt f(x − y)`.
//!
//! Coefficients for realization `r` and step `k` come from a ChaCha8 stream keyed by
//! `(seed, r, k)`, so any subset of realizations can be drawn in any order or on
//! any number of threads with identical results.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::Frequency;
use crate::kernel::{AxisProfile, TestFunction};
use crate::quadrature::FixedRule;
use crate::scalar::CompensatedSum;
use crate::spectral::{spectral_space_integral, SpectralMeasureSpec, TransformOptions};

/// Time × space discretization of the noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dt: f64,
    pub t_steps: usize,
    /// Spatial domain is `[−X, X]²`.
    pub x_extent: f64,
    /// Lattice modes per frequency axis; even.
    pub n_modes: usize,
    pub seed: u64,
    /// Cells per spatial axis when a realization is materialized.
    pub n_cells: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidInput("dt must be positive".into()));
        }
        if self.t_steps == 0 {
            return Err(Error::InvalidInput("t_steps must be positive".into()));
        }
        if !(self.x_extent > 0.0) || !self.x_extent.is_finite() {
            return Err(Error::InvalidInput("x_extent must be positive".into()));
        }
        if self.n_modes == 0 || !self.n_modes.is_multiple_of(2) {
            return Err(Error::InvalidInput("n_modes must be positive and even".into()));
        }
        if self.n_cells == 0 {
            return Err(Error::InvalidInput("n_cells must be positive".into()));
        }
        Ok(())
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.t_steps as f64
    }

    /// Lattice spacing `π/X`.
    pub fn spacing(&self) -> f64 {
        PI / self.x_extent
    }

    /// Largest lattice frequency per axis.
    pub fn max_frequency(&self) -> f64 {
        self.spacing() * (self.n_modes / 2) as f64
    }

    pub fn cell_width(&self) -> f64 {
        2.0 * self.x_extent / self.n_cells as f64
    }

    /// Centre of cell `c` along one axis.
    pub fn cell_center(&self, c: usize) -> f64 {
        -self.x_extent + (c as f64 + 0.5) * self.cell_width()
    }

    /// Number of whole steps in `[0, t]`; `t` must be a multiple of `dt`.
    pub fn steps_to(&self, t: f64) -> Result<usize> {
        let k = (t / self.dt).round();
        if !(t >= 0.0) || (k * self.dt - t).abs() > 1e-9 * self.dt.max(t) {
            return Err(Error::InvalidInput(format!("time {t} is not a multiple of dt = {}", self.dt)));
        }
        let k = k as usize;
        if k > self.t_steps {
            return Err(Error::InvalidInput(format!("time {t} exceeds the horizon {}", self.horizon())));
        }
        Ok(k)
    }
}

/// The frequency lattice with its `μ`-weights.
#[derive(Debug, Clone)]
pub struct NoiseModes {
    pub frequencies: Vec<Frequency<f64>>,
    pub weights: Vec<f64>,
    pub sqrt_weights: Vec<f64>,
}

impl NoiseModes {
    pub fn new(grid: &GridSpec, mu: &SpectralMeasureSpec) -> Result<Self> {
        grid.validate()?;
        mu.validate()?;
        if !mu.has_density() {
            return Err(Error::UnsupportedMeasure(
                "white noise has no random-field version to synthesize".into(),
            ));
        }
        let d = grid.spacing();
        let half = (grid.n_modes / 2) as i64;
        let mut frequencies = Vec::with_capacity(grid.n_modes * grid.n_modes);
        for m1 in -half..half {
            for m2 in -half..half {
                frequencies.push(Frequency::new(d * m1 as f64, d * m2 as f64));
            }
        }
        let weights: Vec<f64> = frequencies
            .par_iter()
            .map(|xi| cell_mass(mu, *xi, d))
            .collect::<Result<_>>()?;
        let sqrt_weights = weights.iter().map(|w| w.sqrt()).collect();
        Ok(Self { frequencies, weights, sqrt_weights })
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// `Σ_j w_j`, the per-unit-time variance of `W_k(x)`.
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().copied().collect::<CompensatedSum>().value()
    }

    /// `Σ_j w_j cos(ξ_j·h)`: the lattice covariance at lag `h`, per unit time.
    pub fn covariance(&self, h: (f64, f64)) -> f64 {
        self.frequencies
            .iter()
            .zip(&self.weights)
            .map(|(xi, w)| w * (xi.xi1 * h.0 + xi.xi2 * h.1).cos())
            .collect::<CompensatedSum>()
            .value()
    }
}

/// Weight of the lattice point `ξ` with spacing `d`.
///
/// Densities that are smooth at the origin use `d²·m(ξ)`, whose lattice sums of
/// band-limited integrands are exact up to aliasing. The Riesz density is integrated
/// over each cell instead, so the origin cell carries its finite mass.
fn cell_mass(mu: &SpectralMeasureSpec, xi: Frequency<f64>, d: f64) -> Result<f64> {
    if !matches!(mu, SpectralMeasureSpec::RieszPower { .. }) {
        return Ok(d * d * mu.density(xi.norm())?);
    }
    let a = 0.5 * d;
    if xi.xi1 == 0.0 && xi.xi2 == 0.0 {
        // origin cell, exact in polar form: 8 ∫₀^{π/4} M(a/cos φ)/(2π) dφ
        let rule = FixedRule::legendre_cached(32);
        let h = 0.125 * PI;
        let mut acc = 0.0;
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            let phi = h * (x + 1.0);
            acc += w * mu.radial_mass(a / phi.cos())?;
        }
        return Ok(8.0 * h * acc / (2.0 * PI));
    }
    let rule = FixedRule::legendre_cached(4);
    let mut acc = 0.0;
    for (x, wx) in rule.nodes.iter().zip(&rule.weights) {
        for (y, wy) in rule.nodes.iter().zip(&rule.weights) {
            let r = (xi.xi1 + a * x).hypot(xi.xi2 + a * y);
            acc += wx * wy * mu.density(r)?;
        }
    }
    Ok(acc * a * a)
}

/// Gaussian coefficients `(A_j, B_j)` of realization `realization`, step `step`.
pub fn draw_coefficients(seed: u64, realization: u64, step: u64, n: usize, out: &mut Vec<(f64, f64)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(realization.wrapping_mul(1 << 20) ^ step);
    out.clear();
    out.extend((0..n).map(|_| {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        (a, b)
    }));
}

/// One realization materialized at cell centres.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseGrid {
    pub spec: GridSpec,
    pub measure: SpectralMeasureSpec,
    pub realization: u64,
    /// `increments[k][c1 * n_cells + c2]` is `W_k` at cell `(c1, c2)`.
    pub increments: Vec<Vec<f64>>,
}

/// Realization 0 of the noise.
pub fn sample_noise(grid: &GridSpec, mu: &SpectralMeasureSpec) -> Result<NoiseGrid> {
    let modes = NoiseModes::new(grid, mu)?;
    sample_noise_realization(grid, mu, &modes, 0)
}

/// Realization `realization`, reusing precomputed modes.
pub fn sample_noise_realization(
    grid: &GridSpec,
    mu: &SpectralMeasureSpec,
    modes: &NoiseModes,
    realization: u64,
) -> Result<NoiseGrid> {
    grid.validate()?;
    let n = grid.n_modes;
    let nc = grid.n_cells;
    let d = grid.spacing();
    let half = (n / 2) as i64;
    // axis tables: cos/sin(ξ m x_c)
    let axis: Vec<(Vec<f64>, Vec<f64>)> = (-half..half)
        .map(|m| {
            let k = d * m as f64;
            (0..nc).map(|c| (k * grid.cell_center(c)).sin_cos()).map(|(s, c)| (c, s)).unzip()
        })
        .collect();
    let increments = (0..grid.t_steps)
        .into_par_iter()
        .map(|k| {
            let mut coef = Vec::new();
            draw_coefficients(grid.seed, realization, k as u64, modes.len(), &mut coef);
            materialize(&coef, modes, &axis, n, nc, grid.dt)
        })
        .collect();
    Ok(NoiseGrid { spec: *grid, measure: mu.clone(), realization, increments })
}

/// Separable evaluation of the trigonometric sum at all cell centres.
fn materialize(
    coef: &[(f64, f64)],
    modes: &NoiseModes,
    axis: &[(Vec<f64>, Vec<f64>)],
    n: usize,
    nc: usize,
    dt: f64,
) -> Vec<f64> {
    let scale = dt.sqrt();
    let mut field = vec![0.0; nc * nc];
    // cos(a + b) = ca cb − sa sb,  sin(a + b) = sa cb + ca sb
    let mut p = vec![0.0; nc];
    let mut q = vec![0.0; nc];
    for m1 in 0..n {
        p.iter_mut().for_each(|v| *v = 0.0);
        q.iter_mut().for_each(|v| *v = 0.0);
        for m2 in 0..n {
            let j = m1 * n + m2;
            let (a, b) = coef[j];
            let s = modes.sqrt_weights[j];
            if s == 0.0 {
                continue;
            }
            let (alpha, beta) = (a * s, b * s);
            let (c2, s2) = &axis[m2];
            for c in 0..nc {
                // P = Σ α cb + β sb,  Q = Σ β cb − α sb
                p[c] += alpha * c2[c] + beta * s2[c];
                q[c] += beta * c2[c] - alpha * s2[c];
            }
        }
        let (c1, s1) = &axis[m1];
        for r in 0..nc {
            let (ca, sa) = (c1[r], s1[r]);
            let row = &mut field[r * nc..(r + 1) * nc];
            for c in 0..nc {
                row[c] += ca * p[c] + sa * q[c];
            }
        }
    }
    field.iter_mut().for_each(|v| *v *= scale);
    field
}

impl NoiseGrid {
    pub fn value(&self, step: usize, c1: usize, c2: usize) -> f64 {
        self.increments[step][c1 * self.spec.n_cells + c2]
    }

    /// Little-endian binary export; see `docs/noise_grid_format.md`.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(b"DCSPDENG")?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&self.spec.dt.to_le_bytes())?;
        w.write_all(&(self.spec.t_steps as u64).to_le_bytes())?;
        w.write_all(&self.spec.x_extent.to_le_bytes())?;
        w.write_all(&(self.spec.n_modes as u64).to_le_bytes())?;
        w.write_all(&self.spec.seed.to_le_bytes())?;
        w.write_all(&(self.spec.n_cells as u64).to_le_bytes())?;
        w.write_all(&self.realization.to_le_bytes())?;
        for step in &self.increments {
            for v in step {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Inverse of [`NoiseGrid::write_binary`]; the measure is not part of the format.
    pub fn read_binary(bytes: &[u8], measure: SpectralMeasureSpec) -> Result<Self> {
        let mut cur = bytes;
        let mut take = |n: usize| -> Result<&[u8]> {
            if cur.len() < n {
                return Err(Error::InvalidInput("truncated noise grid".into()));
            }
            let (a, b) = cur.split_at(n);
            cur = b;
            Ok(a)
        };
        if take(8)? != b"DCSPDENG" {
            return Err(Error::InvalidInput("not a noise grid file".into()));
        }
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
        if version != 1 {
            return Err(Error::InvalidInput(format!("unsupported noise grid version {version}")));
        }
        let f = |b: &[u8]| f64::from_le_bytes(b.try_into().unwrap());
        let u = |b: &[u8]| u64::from_le_bytes(b.try_into().unwrap());
        let dt = f(take(8)?);
        let t_steps = u(take(8)?) as usize;
        let x_extent = f(take(8)?);
        let n_modes = u(take(8)?) as usize;
        let seed = u(take(8)?);
        let n_cells = u(take(8)?) as usize;
        let realization = u(take(8)?);
        let spec = GridSpec { dt, t_steps, x_extent, n_modes, seed, n_cells };
        spec.validate()?;
        let mut increments = Vec::with_capacity(t_steps);
        for _ in 0..t_steps {
            let raw = take(8 * n_cells * n_cells)?;
            increments.push(raw.chunks_exact(8).map(f).collect());
        }
        if !cur.is_empty() {
            return Err(Error::InvalidInput("trailing bytes after noise grid".into()));
        }
        Ok(Self { spec, measure, realization, increments })
    }
}

/// Test functions for the covariance check are the separable bumps of the kernel module.
pub type TestFunction2D = TestFunction<f64>;

/// `∫ p(y) e^{−iξy} dy` for one axis profile.
pub fn axis_transform(p: &AxisProfile<f64>, xi: f64) -> Complex<f64> {
    let rule = FixedRule::legendre_cached(96);
    let mut acc = Complex::new(0.0, 0.0);
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        let y = p.center + p.radius * x;
        acc += Complex::from_polar(w * p.eval(y).0, -xi * y);
    }
    acc * p.radius
}

/// Result of [`covariance_mc_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceCheck {
    pub mc_estimate: f64,
    pub spectral_value: f64,
    pub std_err: f64,
    /// `Σ_j w_j`-lattice counterpart of the spectral value (time-discrete, cell-summed).
    pub lattice_value: f64,
}

fn time_overlap(phi: &TestFunction2D, psi: &TestFunction2D) -> f64 {
    let lo = phi.time.lower().max(psi.time.lower());
    let hi = phi.time.upper().min(psi.time.upper());
    if hi <= lo {
        return 0.0;
    }
    let rule = FixedRule::legendre_cached(96);
    rule.apply(|t: f64| phi.amplitude * psi.amplitude * phi.time.eval(t).0 * psi.time.eval(t).0, lo, hi)
}

/// `∫∫ Fφ(t, ξ) conj(Fψ(t, ξ)) dμ(ξ) dt` for separable `φ, ψ`.
pub fn covariance_spectral(phi: &TestFunction2D, psi: &TestFunction2D, mu: &SpectralMeasureSpec) -> Result<f64> {
    let time = time_overlap(phi, psi);
    if time == 0.0 {
        return Ok(0.0);
    }
    let scale = 2.0
        * (phi.x1.center.abs() + phi.x1.radius)
            .max(phi.x2.center.abs() + phi.x2.radius)
            .max(psi.x1.center.abs() + psi.x1.radius)
            .max(psi.x2.center.abs() + psi.x2.radius);
    let opts = TransformOptions { tail_rel: 1e-7, max_annuli: 14, ..Default::default() };
    let space = spectral_space_integral(
        mu,
        |xi| {
            // the real part is even under ξ → −ξ; average the two ξ₁-reflections for
            // evenness in each coordinate separately
            let g = |a: f64, b: f64| {
                let f = axis_transform(&phi.x1, a) * axis_transform(&phi.x2, b);
                let h = axis_transform(&psi.x1, a) * axis_transform(&psi.x2, b);
                (f * h.conj()).re
            };
            Ok(0.5 * (g(xi.xi1, xi.xi2) + g(-xi.xi1, xi.xi2)))
        },
        scale,
        &opts,
    )?;
    Ok(time * space.value)
}

/// Monte Carlo check of `E[F(φ)F(ψ)] = ∫∫ Fφ conj(Fψ) dμ dt`, with
/// `F(φ) = Σ_k Σ_c φ(t_k, y_c) W_k(y_c) |c|` at step midpoints `t_k`.
pub fn covariance_mc_check(
    phi: &TestFunction2D,
    psi: &TestFunction2D,
    grid: &GridSpec,
    mu: &SpectralMeasureSpec,
    n_samples: usize,
) -> Result<CovarianceCheck> {
    grid.validate()?;
    phi.validate()?;
    psi.validate()?;
    if n_samples < 2 {
        return Err(Error::InvalidInput("need at least two samples".into()));
    }
    for f in [phi, psi] {
        if f.time.lower() < 0.0 || f.time.upper() > grid.horizon() {
            return Err(Error::InvalidInput("test function time support must lie in [0, horizon]".into()));
        }
        for ax in [&f.x1, &f.x2] {
            if ax.lower() < -grid.x_extent || ax.upper() > grid.x_extent {
                return Err(Error::SupportOverflow("test function leaves the spatial domain".into()));
            }
            if ax.radius < 8.0 * grid.cell_width() {
                return Err(Error::GridTooCoarse(format!(
                    "spatial radius {} spans fewer than 8 cells of width {}",
                    ax.radius,
                    grid.cell_width()
                )));
            }
        }
        if f.time.radius < 4.0 * grid.dt {
            return Err(Error::GridTooCoarse(format!(
                "time radius {} is below 4 dt = {}",
                f.time.radius,
                4.0 * grid.dt
            )));
        }
    }
    // cell-sum integration of W·φ is exact for band-limited products up to the Nyquist
    // frequency of the cell grid
    if grid.max_frequency() * std::f64::consts::SQRT_2 * grid.cell_width() > 0.5 * PI {
        return Err(Error::GridTooCoarse("cell grid under-resolves the highest lattice mode".into()));
    }
    let modes = NoiseModes::new(grid, mu)?;
    let spectral_value = covariance_spectral(phi, psi, mu)?;

    // discrete cell transforms per step: Φ_kj = Σ_c φ(t_k, y_c) e^{−iξ_j·y_c} |c|
    let nc = grid.n_cells;
    let area = grid.cell_width() * grid.cell_width();
    let cell_transform = |f: &TestFunction2D| -> Vec<Complex<f64>> {
        let v1: Vec<f64> = (0..nc).map(|c| f.x1.eval(grid.cell_center(c)).0).collect();
        let v2: Vec<f64> = (0..nc).map(|c| f.x2.eval(grid.cell_center(c)).0).collect();
        modes
            .frequencies
            .iter()
            .map(|xi| {
                let a: Complex<f64> = (0..nc).map(|c| Complex::from_polar(v1[c], -xi.xi1 * grid.cell_center(c))).sum();
                let b: Complex<f64> = (0..nc).map(|c| Complex::from_polar(v2[c], -xi.xi2 * grid.cell_center(c))).sum();
                a * b * area
            })
            .collect()
    };
    let phi_hat = cell_transform(phi);
    let psi_hat = cell_transform(psi);
    let steps: Vec<(usize, f64, f64)> = (0..grid.t_steps)
        .map(|k| {
            let t = (k as f64 + 0.5) * grid.dt;
            (k, phi.amplitude * phi.time.eval(t).0, psi.amplitude * psi.time.eval(t).0)
        })
        .filter(|(_, a, b)| *a != 0.0 || *b != 0.0)
        .collect();

    let lattice_value = steps
        .iter()
        .map(|&(_, a, b)| {
            grid.dt
                * a
                * b
                * modes
                    .weights
                    .iter()
                    .zip(phi_hat.iter().zip(&psi_hat))
                    .map(|(w, (p, q))| w * (p * q.conj()).re)
                    .collect::<CompensatedSum>()
                    .value()
        })
        .collect::<CompensatedSum>()
        .value();
    if (spectral_value - lattice_value).abs() > 0.01 * spectral_value.abs().max(1e-300) && spectral_value != 0.0 {
        return Err(Error::GridTooCoarse(format!(
            "lattice truncation misses more than 1% of the spectral value ({lattice_value} vs {spectral_value})"
        )));
    }

    let sqdt = grid.dt.sqrt();
    let products: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|r| {
            let mut coef = Vec::new();
            let (mut fp, mut fq) = (CompensatedSum::new(), CompensatedSum::new());
            for &(k, a, b) in &steps {
                draw_coefficients(grid.seed, r, k as u64, modes.len(), &mut coef);
                let (mut sp, mut sq) = (0.0, 0.0);
                for j in 0..modes.len() {
                    let (ca, cb) = coef[j];
                    let s = modes.sqrt_weights[j];
                    sp += s * (ca * phi_hat[j].re - cb * phi_hat[j].im);
                    sq += s * (ca * psi_hat[j].re - cb * psi_hat[j].im);
                }
                fp.add(sqdt * a * sp);
                fq.add(sqdt * b * sq);
            }
            fp.value() * fq.value()
        })
        .collect();
    let (mean, var) = mean_var(&products);
    Ok(CovarianceCheck {
        mc_estimate: mean,
        spectral_value,
        std_err: (var / n_samples as f64).sqrt(),
        lattice_value,
    })
}

/// Mean and unbiased variance, both with compensated sums in index order.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().copied().collect::<CompensatedSum>().value() / n;
    let ss = xs.iter().map(|x| (x - mean) * (x - mean)).collect::<CompensatedSum>().value();
    (mean, if xs.len() > 1 { ss / (n - 1.0) } else { 0.0 })
}
