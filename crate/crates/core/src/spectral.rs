//! Radial spectral measures, the admissibility integrals and the `L²` norm of the
//! stochastic convolution.
//!
//! Every measure here is radial with density `m(|ξ|)`, so integrals are taken in
//! polar coordinates: a disk `[0, r₀]`, then dyadic annuli `[r₀2ᵏ, r₀2ᵏ⁺¹]` until
//! the geometric tail is negligible or the annuli stop shrinking.

use std::f64::consts::PI;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{fourier_gamma_fixed, Frequency};
use rayon::prelude::*;

use crate::quadrature::{integrate, FixedRule, QuadOptions};
use crate::scalar::CompensatedSum;

/// Spectral measure `μ` of the spatial covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SpectralMeasureSpec {
    /// Density `|ξ|^{β−2}`, `0 < β < 2`; covariance `f(x) ∝ |x|^{−β}`.
    #[serde(rename = "riesz")]
    RieszPower { beta: f64 },
    /// Density `e^{−ℓ²|ξ|²}`.
    #[serde(rename = "gaussian")]
    GaussianDensity { ell: f64 },
    /// Density `1`.
    #[serde(rename = "white")]
    WhiteNoise,
    /// Piecewise-linear radial density through `(radius, density)` samples, flat
    /// below the first radius and extended by the power law through the last two.
    #[serde(rename = "table")]
    TabulatedRadial { samples: Vec<(f64, f64)> },
}

impl SpectralMeasureSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::RieszPower { beta } => {
                if !(*beta > 0.0 && *beta < 2.0) {
                    return Err(Error::InvalidInput(format!("riesz beta must lie in (0, 2), got {beta}")));
                }
            }
            Self::GaussianDensity { ell } => {
                if !(*ell > 0.0) || !ell.is_finite() {
                    return Err(Error::InvalidInput(format!("gaussian ell must be positive, got {ell}")));
                }
            }
            Self::WhiteNoise => {}
            Self::TabulatedRadial { samples } => {
                if samples.is_empty() {
                    return Err(Error::InvalidInput("tabulated measure has no samples".into()));
                }
                for w in samples.windows(2) {
                    if !(w[1].0 > w[0].0) {
                        return Err(Error::InvalidInput("tabulated radii must be strictly increasing".into()));
                    }
                }
                if samples.iter().any(|&(r, m)| !r.is_finite() || !m.is_finite() || r < 0.0 || m < 0.0) {
                    return Err(Error::InvalidInput("tabulated samples must be finite and nonnegative".into()));
                }
            }
        }
        Ok(())
    }

    pub fn has_density(&self) -> bool {
        !matches!(self, Self::WhiteNoise)
    }

    /// Radial density `m(r)`.
    pub fn density(&self, r: f64) -> Result<f64> {
        Ok(match self {
            Self::RieszPower { beta } => r.powf(beta - 2.0),
            Self::GaussianDensity { ell } => (-(ell * ell * r * r)).exp(),
            Self::WhiteNoise => 1.0,
            Self::TabulatedRadial { samples } => table_density(samples, r)?,
        })
    }

    /// `μ({|ξ| < R})`.
    pub fn radial_mass(&self, radius: f64) -> Result<f64> {
        if !(radius >= 0.0) {
            return Err(Error::Domain("radius must be nonnegative".into()));
        }
        Ok(match self {
            Self::RieszPower { beta } => 2.0 * PI * radius.powf(*beta) / beta,
            Self::GaussianDensity { ell } => PI * (-(-(ell * ell * radius * radius)).exp_m1()) / (ell * ell),
            Self::WhiteNoise => PI * radius * radius,
            Self::TabulatedRadial { .. } => {
                if radius == 0.0 {
                    return Ok(0.0);
                }
                let fail = Mutex::new(None);
                let f = |r: f64| match self.density(r) {
                    Ok(m) => 2.0 * PI * r * m,
                    Err(e) => {
                        *fail.lock().unwrap() = Some(e);
                        0.0
                    }
                };
                let mut knots = vec![0.0];
                if let Self::TabulatedRadial { samples } = self {
                    knots.extend(samples.iter().map(|s| s.0).filter(|&r| r > 0.0 && r < radius));
                }
                knots.push(radius);
                let v = crate::quadrature::integrate_panels(f, &knots, &QuadOptions::absolute(0.0).with_rel_tol(1e-12))?;
                if let Some(e) = fail.into_inner().unwrap() {
                    return Err(e);
                }
                v.value
            }
        })
    }

    /// Exponent `q` of the substitution `r = r₀ u^q` that flattens `r·m(r)` near the origin.
    fn disk_power(&self) -> f64 {
        match self {
            Self::RieszPower { beta } => 1.0 / beta,
            _ => 1.0,
        }
    }

    /// Radius below which the density has no structure of its own.
    fn natural_radius(&self) -> f64 {
        match self {
            Self::GaussianDensity { ell } => 0.5 / ell,
            Self::TabulatedRadial { samples } => {
                samples.iter().map(|s| s.0).find(|r| *r > 0.0).unwrap_or(f64::INFINITY)
            }
            _ => f64::INFINITY,
        }
    }

    fn label(&self) -> &'static str {
        match self {
            Self::RieszPower { .. } => "riesz",
            Self::GaussianDensity { .. } => "gaussian",
            Self::WhiteNoise => "white",
            Self::TabulatedRadial { .. } => "table",
        }
    }
}

fn table_density(samples: &[(f64, f64)], r: f64) -> Result<f64> {
    let n = samples.len();
    let (r_first, m_first) = samples[0];
    if r <= r_first {
        return Ok(m_first);
    }
    let (r_last, m_last) = samples[n - 1];
    if r >= r_last {
        let p = tail_exponent(samples)?;
        return Ok(if m_last == 0.0 { 0.0 } else { m_last * (r / r_last).powf(p) });
    }
    let k = samples.partition_point(|s| s.0 <= r);
    let (r0, m0) = samples[k - 1];
    let (r1, m1) = samples[k];
    Ok(m0 + (m1 - m0) * (r - r0) / (r1 - r0))
}

/// Power-law exponent through the last two samples; `−∞` for a table ending in zeros.
pub fn tail_exponent(samples: &[(f64, f64)]) -> Result<f64> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::TabulationTooCoarse("need at least two samples to fit the tail".into()));
    }
    let (ra, ma) = samples[n - 2];
    let (rb, mb) = samples[n - 1];
    if mb == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    if ma == 0.0 || ra <= 0.0 {
        return Err(Error::TabulationTooCoarse("last two samples cannot determine a power-law tail".into()));
    }
    let p = (mb / ma).ln() / (rb / ra).ln();
    if !p.is_finite() {
        return Err(Error::TabulationTooCoarse("tail exponent is not finite".into()));
    }
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ClosedForm,
    Quadrature,
}

/// Value of an admissibility integral; `value` is `None` when it diverges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegralVerdict {
    pub value: Option<f64>,
    pub method: Method,
    pub error_estimate: f64,
}

impl IntegralVerdict {
    pub fn finite(value: f64, method: Method, error_estimate: f64) -> Self {
        Self { value: Some(value), method, error_estimate }
    }

    pub fn divergent(method: Method) -> Self {
        Self { value: None, method, error_estimate: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_some()
    }
}

/// Integral value with its accumulated error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralValue {
    pub value: f64,
    pub error_estimate: f64,
}

/// Controls for the adaptive polar quadrature of the admissibility integrals.
#[derive(Debug, Clone, Copy)]
pub struct RadialOptions {
    /// Radius of the inner disk; annuli start here.
    pub r0: f64,
    /// Relative tolerance of every one-dimensional rule.
    pub rel_tol: f64,
    /// Stop once the extrapolated tail is known to this fraction of the running total.
    pub tail_rel: f64,
    pub min_annuli: usize,
    pub max_annuli: usize,
    /// Flag divergence when the last five annuli are non-decreasing.
    pub detect_divergence: bool,
    /// Divergence is only judged on annuli beyond this radius, past the pre-asymptotic
    /// rise of densities such as `r^{β−1}/(1 + r^{2/3})`.
    pub divergence_radius: f64,
}

impl Default for RadialOptions {
    fn default() -> Self {
        Self {
            r0: 0.125,
            rel_tol: 1e-10,
            tail_rel: 1e-12,
            min_annuli: 8,
            max_annuli: 240,
            detect_divergence: true,
            divergence_radius: 65536.0,
        }
    }
}

/// Controls for integrands built from `|FΓ|`, which oscillate on the frequency
/// scale `1/L` and are costly per point. Rules are fixed Gauss–Legendre sized to
/// `L·r`. The outer time rule is Gauss–Legendre, doubled until two orders agree.
#[derive(Debug, Clone, Copy)]
pub struct TransformOptions {
    pub r0: f64,
    /// Nodes per radian of phase swept by the integrand along a rule.
    pub nodes_per_phase: f64,
    pub min_nodes: usize,
    pub tail_rel: f64,
    pub min_annuli: usize,
    pub max_annuli: usize,
    /// Annuli continue at least until `r·L` reaches this phase, where the
    /// geometric tail regime sets in.
    pub min_phase: f64,
    /// Relative tolerance of the outer time rule.
    pub rel_tol: f64,
    /// Starting order of the outer time rule.
    pub time_nodes: usize,
    pub max_time_nodes: usize,
    /// Fraction of the time interval next to `τ = 0` that is bounded rather than
    /// integrated; the bound enters the error estimate.
    pub time_cut: f64,
}

impl Default for TransformOptions {
    fn default() -> Self {
        Self {
            r0: 0.25,
            nodes_per_phase: 1.0,
            min_nodes: 12,
            tail_rel: 1e-4,
            min_annuli: 5,
            max_annuli: 30,
            min_phase: 24.0,
            rel_tol: 1e-5,
            time_nodes: 12,
            max_time_nodes: 96,
            time_cut: 1e-3,
        }
    }
}

/// Outcome of a radial sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialResult {
    pub value: f64,
    pub error_estimate: f64,
    pub divergent: bool,
    pub annuli: usize,
    /// Geometric estimate of everything beyond the last annulus, included in `value`.
    pub tail: f64,
}

struct SweepControl {
    r0: f64,
    tail_rel: f64,
    min_annuli: usize,
    max_annuli: usize,
    detect_divergence: bool,
    divergence_radius: f64,
}

/// Disk plus dyadic annuli with geometric tail extrapolation. `annulus(lo, hi)`
/// returns `(value, error)`.
fn sweep<A>(disk: (f64, f64), mut annulus: A, ctl: &SweepControl) -> Result<RadialResult>
where
    A: FnMut(f64, f64) -> Result<(f64, f64)>,
{
    let mut total = crate::scalar::CompensatedSum::new();
    total.add(disk.0);
    let mut err = disk.1;
    let mut parts: Vec<f64> = Vec::new();
    let mut lo = ctl.r0;
    let mut tail = 0.0;
    let mut tail_err = f64::INFINITY;
    for k in 0..ctl.max_annuli {
        let hi = 2.0 * lo;
        let (v, e) = annulus(lo, hi)?;
        parts.push(v);
        total.add(v);
        err += e;
        lo = hi;

        let n = parts.len();
        let floor = 1e-14 * total.value().abs();
        if ctl.detect_divergence && n >= 5 && lo >= 16.0 * ctl.divergence_radius && parts[n - 1] > floor {
            let rising = parts[n - 5..].windows(2).all(|w| w[1] >= w[0]);
            if rising {
                return Ok(RadialResult {
                    value: f64::INFINITY,
                    error_estimate: f64::INFINITY,
                    divergent: true,
                    annuli: n,
                    tail: f64::INFINITY,
                });
            }
        }
        let past_rise = !ctl.detect_divergence || lo > ctl.divergence_radius;
        if parts[n - 1].abs() <= floor && k + 1 >= ctl.min_annuli && past_rise {
            tail = 0.0;
            tail_err = floor;
            break;
        }
        if n >= 3 {
            let rho = parts[n - 1] / parts[n - 2];
            let rho_prev = parts[n - 2] / parts[n - 3];
            if rho > 0.0 && rho < 1.0 && rho_prev > 0.0 && rho_prev < 1.0 {
                let t = parts[n - 1] * rho / (1.0 - rho);
                let t_prev = parts[n - 1] * rho_prev / (1.0 - rho_prev);
                tail = t;
                tail_err = (t - t_prev).abs() + 1e-6 * t;
                if k + 1 >= ctl.min_annuli && past_rise && tail_err <= ctl.tail_rel * total.value().abs() {
                    break;
                }
            } else {
                tail_err = f64::INFINITY;
            }
        }
    }
    if !tail_err.is_finite() {
        return Err(Error::QuadratureNoConvergence {
            achieved: parts.last().copied().unwrap_or(f64::NAN),
            target: ctl.tail_rel,
            evals: parts.len(),
        });
    }
    total.add(tail);
    Ok(RadialResult {
        value: total.value(),
        error_estimate: err + tail_err,
        divergent: false,
        annuli: parts.len(),
        tail,
    })
}

/// `∫₀^∞ g(r) dr` with adaptive rules, where `g(r)` already contains `r·m(r)`
/// and `r = r₀u^q` flattens the origin.
pub fn radial_sweep<G>(g: G, q: f64, opts: &RadialOptions) -> Result<RadialResult>
where
    G: Fn(f64) -> Result<f64>,
{
    let fail = Mutex::new(None);
    let guarded = |r: f64| -> f64 {
        match g(r) {
            Ok(v) => v,
            Err(e) => {
                fail.lock().unwrap().get_or_insert(e);
                0.0
            }
        }
    };
    let quad = QuadOptions::absolute(1e-300).with_rel_tol(opts.rel_tol);
    let r0 = opts.r0;
    let disk = integrate(
        |u: f64| {
            let r = r0 * u.powf(q);
            if r == 0.0 {
                0.0
            } else {
                guarded(r) * q * r0 * u.powf(q - 1.0)
            }
        },
        0.0,
        1.0,
        &quad,
    )?;
    if let Some(e) = fail.lock().unwrap().take() {
        return Err(e);
    }
    let ctl = SweepControl {
        r0,
        tail_rel: opts.tail_rel,
        min_annuli: opts.min_annuli,
        max_annuli: opts.max_annuli,
        detect_divergence: opts.detect_divergence,
        divergence_radius: opts.divergence_radius,
    };
    sweep(
        (disk.value, disk.abs_error),
        |lo, hi| {
            // logarithmic variable keeps the rule scale-free on wide annuli
            let a = integrate(
                |s: f64| {
                    let r = s.exp();
                    guarded(r) * r
                },
                lo.ln(),
                hi.ln(),
                &quad,
            )?;
            if let Some(e) = fail.lock().unwrap().take() {
                return Err(e);
            }
            Ok((a.value, a.abs_error))
        },
        &ctl,
    )
}

fn admissibility(mu: &SpectralMeasureSpec, weight: impl Fn(f64) -> f64) -> Result<IntegralVerdict> {
    mu.validate()?;
    if let SpectralMeasureSpec::TabulatedRadial { samples } = mu {
        tail_exponent(samples)?;
    }
    let q = mu.disk_power();
    let r = radial_sweep(|r| Ok(2.0 * PI * r * mu.density(r)? * weight(r)), q, &RadialOptions::default())?;
    if r.divergent {
        Ok(IntegralVerdict::divergent(Method::Quadrature))
    } else {
        Ok(IntegralVerdict::finite(r.value, Method::Quadrature, r.error_estimate))
    }
}

fn sc_weight(r: f64) -> f64 {
    1.0 / (1.0 + r.powf(2.0 / 3.0))
}

fn dalang_weight(r: f64) -> f64 {
    1.0 / (1.0 + r * r)
}

/// `∫ (1 + |ξ|^{2/3})^{−1} dμ(ξ)`.
pub fn sc_integral(mu: &SpectralMeasureSpec) -> Result<IntegralVerdict> {
    mu.validate()?;
    match mu {
        SpectralMeasureSpec::RieszPower { beta } => Ok(if *beta < 2.0 / 3.0 {
            IntegralVerdict::finite(3.0 * PI * PI / (1.5 * PI * beta).sin(), Method::ClosedForm, 0.0)
        } else {
            IntegralVerdict::divergent(Method::ClosedForm)
        }),
        SpectralMeasureSpec::WhiteNoise => Ok(IntegralVerdict::divergent(Method::ClosedForm)),
        _ => admissibility(mu, sc_weight),
    }
}

/// `∫ (1 + |ξ|²)^{−1} dμ(ξ)`, the wave-equation condition.
pub fn dalang_integral(mu: &SpectralMeasureSpec) -> Result<IntegralVerdict> {
    mu.validate()?;
    match mu {
        SpectralMeasureSpec::RieszPower { beta } => Ok(IntegralVerdict::finite(
            PI * PI / (0.5 * PI * beta).sin(),
            Method::ClosedForm,
            0.0,
        )),
        SpectralMeasureSpec::WhiteNoise => Ok(IntegralVerdict::divergent(Method::ClosedForm)),
        _ => admissibility(mu, dalang_weight),
    }
}

/// `sc_integral` forced through the polar quadrature, for cross-checking closed forms.
pub fn sc_integral_quadrature(mu: &SpectralMeasureSpec) -> Result<IntegralVerdict> {
    admissibility(mu, sc_weight)
}

/// `dalang_integral` forced through the polar quadrature.
pub fn dalang_integral_quadrature(mu: &SpectralMeasureSpec) -> Result<IntegralVerdict> {
    admissibility(mu, dalang_weight)
}

/// Fails with `PreconditionFailed` unless `sc_integral(mu)` is finite.
pub fn require_admissible(mu: &SpectralMeasureSpec) -> Result<IntegralVerdict> {
    let v = sc_integral(mu)?;
    if !v.is_finite() {
        return Err(Error::PreconditionFailed(format!(
            "{} measure fails the admissibility integral",
            mu.label()
        )));
    }
    Ok(v)
}

fn nodes_for(opts: &TransformOptions, phase: f64) -> usize {
    opts.min_nodes + (opts.nodes_per_phase * phase).ceil() as usize
}

/// `∫_{ℝ²} g(ξ) dμ(ξ)` for `g` even in `ξ₁` and in `ξ₂` that varies on the
/// frequency scale `1/scale`.
pub fn spectral_space_integral<G>(mu: &SpectralMeasureSpec, g: G, scale: f64, opts: &TransformOptions) -> Result<SpectralValue>
where
    G: Fn(Frequency<f64>) -> Result<f64> + Sync,
{
    mu.validate()?;
    if !mu.has_density() {
        return Err(Error::UnsupportedMeasure("white noise has no finite spectral integrals here".into()));
    }
    if !(scale >= 0.0) || !scale.is_finite() {
        return Err(Error::Domain("oscillation scale must be finite and nonnegative".into()));
    }
    // r · m(r) · ∫ g over the circle of radius r
    let ring = |r: f64| -> Result<f64> {
        if r == 0.0 {
            return Ok(0.0);
        }
        let rule = FixedRule::legendre_cached(nodes_for(opts, scale * r * 0.5 * PI));
        let h = 0.25 * PI;
        let vals: Vec<f64> = rule
            .nodes
            .par_iter()
            .map(|x| {
                let (s, c) = (h * (x + 1.0)).sin_cos();
                g(Frequency::new(r * c, r * s))
            })
            .collect::<Result<_>>()?;
        let sum: f64 = vals.iter().zip(&rule.weights).map(|(v, w)| v * w).sum();
        Ok(4.0 * h * sum * r * mu.density(r)?)
    };
    let q = mu.disk_power();
    // g is flat below r ~ 1/scale, so the disk may extend that far
    let r0 = if scale > 1.0 { opts.r0 } else { (opts.r0 / scale).min(opts.r0.max(mu.natural_radius())) };
    let disk_rule = FixedRule::legendre_cached(nodes_for(opts, scale * r0));
    let mut disk = 0.0;
    for (x, w) in disk_rule.nodes.iter().zip(&disk_rule.weights) {
        let u = 0.5 * (x + 1.0);
        let r = r0 * u.powf(q);
        if r > 0.0 {
            disk += 0.5 * w * ring(r)? * q * r0 * u.powf(q - 1.0);
        }
    }
    let onset = if scale > 0.0 { (opts.min_phase / (scale * r0)).log2().ceil().max(0.0) as usize } else { 0 };
    let ctl = SweepControl {
        r0,
        tail_rel: opts.tail_rel,
        min_annuli: opts.min_annuli.max(onset).min(opts.max_annuli),
        max_annuli: opts.max_annuli,
        detect_divergence: false,
        divergence_radius: 0.0,
    };
    let r = sweep(
        (disk, 0.0),
        |lo, hi| {
            let rule = FixedRule::legendre_cached(nodes_for(opts, scale * (hi - lo)));
            let (a, b) = (lo.ln(), hi.ln());
            let mut acc = 0.0;
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                let r = (0.5 * (a + b) + 0.5 * (b - a) * x).exp();
                acc += w * ring(r)? * r;
            }
            Ok((0.5 * (b - a) * acc, 0.0))
        },
        &ctl,
    );
    match r {
        Ok(r) => Ok(SpectralValue { value: r.value, error_estimate: r.error_estimate }),
        // a tail that never settles into geometric decay is reported, not hidden
        Err(e) => Err(e),
    }
}

/// `∫_{τ_lo}^{τ_hi} ∫_{ℝ²} g(τ, ξ) dμ(ξ) dτ` for integrands even in `ξ₁` and in `ξ₂`;
/// `scale(τ)` is the spatial length scale of `g(τ, ·)`.
///
/// The time variable is `τ = τ_lo + (τ_hi − τ_lo)u²`, which smooths the algebraic
/// behaviour of `|FΓ|²`-type integrands at `τ → 0`. Accepts once two successive
/// Gauss–Legendre orders agree to `max(tol, rel_tol·|value|)`.
pub fn spectral_time_integral<G, S>(
    mu: &SpectralMeasureSpec,
    tau_lo: f64,
    tau_hi: f64,
    g: G,
    scale: S,
    tol: f64,
    opts: &TransformOptions,
) -> Result<SpectralValue>
where
    G: Fn(f64, Frequency<f64>) -> Result<f64> + Sync,
    S: Fn(f64) -> f64,
{
    if !(tau_hi >= tau_lo) || !tau_lo.is_finite() || !tau_hi.is_finite() {
        return Err(Error::Domain("time interval must be finite and ordered".into()));
    }
    if tau_hi == tau_lo {
        return Ok(SpectralValue { value: 0.0, error_estimate: 0.0 });
    }
    let span = tau_hi - tau_lo;
    let rule_value = |n: usize| -> Result<(f64, f64)> {
        let rule = FixedRule::legendre_cached(n);
        let (mut acc, mut err) = (CompensatedSum::new(), 0.0);
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            let u = 0.5 * (x + 1.0);
            let tau = tau_lo + span * u * u;
            let jac = span * u * w;
            let v = spectral_space_integral(mu, |xi| g(tau, xi), scale(tau), opts)?;
            acc.add(v.value * jac);
            err += v.error_estimate * jac;
        }
        Ok((acc.value(), err))
    };
    let mut n = opts.time_nodes.max(2);
    let mut coarse = rule_value(n)?;
    loop {
        let fine = rule_value(2 * n)?;
        let diff = (fine.0 - coarse.0).abs();
        if diff <= tol.max(opts.rel_tol * fine.0.abs()) {
            return Ok(SpectralValue { value: fine.0, error_estimate: diff + fine.1 });
        }
        n *= 2;
        if 2 * n > opts.max_time_nodes {
            return Err(Error::QuadratureNoConvergence { achieved: diff, target: tol, evals: 3 * n });
        }
        coarse = fine;
    }
}

/// Spatial length scale of `|FΓ(τ, x₁, ·)|²` as a function of `ξ`.
pub fn transform_scale(tau: f64, x1: f64) -> f64 {
    2.0 * tau + 2.0 * crate::kernel::max_spread_sqrt(tau, x1)
}

/// `∫₀ᵗ ∫ |FΓ(t − s, x₁, ·, x₂ − ·)(ξ)|² dμ(ξ) ds`.
///
/// `|FΓ|` does not depend on `x₂`; the argument is kept for symmetry with the
/// pointwise field.
pub fn norm_integral(t: f64, x1: f64, x2: f64, mu: &SpectralMeasureSpec, tol: f64) -> Result<SpectralValue> {
    // the tail extrapolation dominates the cost; tighten it only as far as tol demands
    let mut opts = TransformOptions { tail_rel: 1e-2, rel_tol: 1e-4, ..Default::default() };
    loop {
        let v = norm_integral_with(t, x1, x2, mu, 0.25 * tol, &opts)?;
        if v.error_estimate <= tol {
            return Ok(v);
        }
        if opts.tail_rel < 1e-5 {
            return Err(Error::QuadratureNoConvergence { achieved: v.error_estimate, target: tol, evals: 0 });
        }
        opts.tail_rel *= 0.3;
    }
}

pub fn norm_integral_with(
    t: f64,
    x1: f64,
    x2: f64,
    mu: &SpectralMeasureSpec,
    tol: f64,
    opts: &TransformOptions,
) -> Result<SpectralValue> {
    if !(t > 0.0) || !t.is_finite() || !x1.is_finite() || !x2.is_finite() {
        return Err(Error::Domain("norm_integral needs t > 0 and finite x".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::Domain("tol must be positive".into()));
    }
    require_admissible(mu)?;
    let cut = opts.time_cut * t;
    let body = spectral_time_integral(
        mu,
        cut,
        t,
        |tau, xi| Ok(fourier_gamma_fixed(tau, x1, 0.0, xi)?.norm_sqr()),
        |tau| transform_scale(tau, x1),
        tol,
        opts,
    )?;
    let head = head_bound(mu, x1, cut, 1.0)?;
    Ok(SpectralValue { value: body.value + 0.5 * head, error_estimate: body.error_estimate + 0.5 * head })
}

/// Upper bound on `factor · ∫₀^c ∫ |FΓ(τ, x₁, ·)(ξ)|² dμ dτ` from `|FΓ| ≤ τ` and the
/// calibrated decay envelope.
///
/// Near `τ = 0` the transform is flat out to `|ξ₂| ~ τ⁻²`, which makes direct
/// quadrature there needlessly expensive while the contribution is `O(c^{5/2})`.
pub fn head_bound(mu: &SpectralMeasureSpec, x1: f64, cut: f64, factor: f64) -> Result<f64> {
    if cut <= 0.0 {
        return Ok(0.0);
    }
    let bounds = crate::fourier::BoundConstants::shipped()?;
    let q = mu.disk_power();
    let rule = FixedRule::legendre_cached(8);
    let mut acc = 0.0;
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        let u = 0.5 * (x + 1.0);
        let tau = cut * u * u;
        let k = bounds.kappa_tilde(tau, x1);
        let b = radial_sweep(
            |r| Ok(2.0 * PI * r * mu.density(r)? * (tau * tau).min(k * sc_weight(r))),
            q,
            &RadialOptions { rel_tol: 1e-6, tail_rel: 1e-6, detect_divergence: false, ..Default::default() },
        )?;
        acc += w * b.value * cut * u;
    }
    Ok(factor * acc)
}

/// `∫₀ᵗ κ̃(τ, x₁) dτ · sc_integral(μ)`, the envelope bound on [`norm_integral`].
pub fn norm_envelope(t: f64, x1: f64, mu: &SpectralMeasureSpec, bounds: &crate::fourier::BoundConstants) -> Result<f64> {
    let sc = require_admissible(mu)?.value.unwrap_or(f64::INFINITY);
    let [a, b, c] = bounds.kappa_lin;
    let l0 = b * x1.abs() + c;
    // ∫₀ᵗ (aτ + l0)² dτ
    let k = a * a * t.powi(3) / 3.0 + a * l0 * t * t + l0 * l0 * t;
    Ok(k * sc)
}
