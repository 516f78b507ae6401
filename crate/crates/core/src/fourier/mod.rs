//! Spatial Fourier transform of `Γ(τ, x₁, ·, x₂ − ·)`.
//!
//! With `y₁ = x₁ + 2λτ` and the transverse integral done in closed form,
//!
//! ```text
//! FΓ(ξ) = τ e^{−i x₂ξ₂ − i x₁ξ₁} ∫₀¹ e^{−2iλτξ₁} J₀(ξ₂ h̃(τ, x₁, λ)) dλ
//! ```
//!
//! where `h̃² = 4τ²λ(1 − λ)(4τ²λ² + 6τx₁λ + 3x₁²)/3`.

pub mod bounds;
pub mod laplace;

use std::f64::consts::PI;

use num_complex::Complex;

pub use crate::bessel::{bessel_j0, bessel_j1};
use crate::error::{Error, Result};
use crate::kernel::spread;
use crate::quadrature::{integrate_panels, QuadOptions, DEFAULT_MAX_EVALS};
use crate::scalar::Real;

pub use bounds::{decay_slope, dominance_sweep, BoundConstants, CalibrationGrid, DecayFit, DecayPath, DominanceReport};
pub use laplace::{hat_gamma_dagger, laplace_chi_identity, LaplaceFrequency};

/// Panel count cap for the oscillatory rules.
const MAX_PANELS: usize = 400_000;

/// Spatial frequency `(ξ₁, ξ₂)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frequency<T> {
    pub xi1: T,
    pub xi2: T,
}

impl<T: Real> Frequency<T> {
    pub fn new(xi1: T, xi2: T) -> Self {
        Self { xi1, xi2 }
    }

    pub fn norm(&self) -> T {
        self.xi1.hypot(self.xi2)
    }

    pub fn is_finite(&self) -> bool {
        self.xi1.is_finite() && self.xi2.is_finite()
    }
}

impl<T: Real> std::ops::Neg for Frequency<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.xi1, -self.xi2)
    }
}

/// `(4τ²λ² + 6τx₁λ + 3x₁²)/3`, i.e. `(y₁² + y₁x₁ + x₁²)/3` at `y₁ = x₁ + 2λτ`.
fn quad_factor<T: Real>(tau: T, x1: T, lam: T) -> T {
    let two_tl = (tau + tau) * lam;
    (two_tl * two_tl + T::lit(3.0) * two_tl * x1 + T::lit(3.0) * x1 * x1) / T::lit(3.0)
}

/// `h̃(τ, x₁, λ) = 2τ √(λ(1−λ)) √((4τ²λ² + 6τx₁λ + 3x₁²)/3)`.
pub fn h_tilde<T: Real>(tau: T, x1: T, lambda: T) -> Result<T> {
    if !(tau > T::zero()) || !tau.is_finite() {
        return Err(Error::Domain(format!("tau must be positive, got {tau}")));
    }
    if !(lambda >= T::zero() && lambda <= T::one()) {
        return Err(Error::Domain(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    if !x1.is_finite() {
        return Err(Error::Domain("x1 must be finite".into()));
    }
    Ok(h_tilde_unchecked(tau, x1, lambda))
}

fn h_tilde_unchecked<T: Real>(tau: T, x1: T, lam: T) -> T {
    let q = quad_factor(tau, x1, lam).max(T::zero());
    (tau + tau) * (lam * (T::one() - lam)).max(T::zero()).sqrt() * q.sqrt()
}

/// Upper bound on `|d h̃/dφ|` under `λ = sin²(φ/2)`.
fn h_tilde_phi_slope<T: Real>(tau: T, x1: T) -> T {
    // √q is convex in λ with slope at most 2τ/√3
    let q_max = quad_factor(tau, x1, T::zero()).max(quad_factor(tau, x1, T::one()));
    tau * (q_max.sqrt() + tau / T::lit(3.0).sqrt())
}

fn check_inputs<T: Real>(tau: T, x1: T, x2: T, xi: &Frequency<T>, tol: T) -> Result<()> {
    if !(tau > T::zero()) || !tau.is_finite() {
        return Err(Error::Domain(format!("tau must be positive, got {tau}")));
    }
    if !x1.is_finite() || !x2.is_finite() || !xi.is_finite() {
        return Err(Error::Domain("arguments must be finite".into()));
    }
    if !(tol > T::zero()) {
        return Err(Error::Domain("tol must be positive".into()));
    }
    Ok(())
}

fn uniform_breaks<T: Real>(a: T, b: T, n: usize) -> Vec<T> {
    let n_t = T::from_usize(n).unwrap();
    (0..=n)
        .map(|k| {
            if k == n {
                b
            } else {
                a + (b - a) * T::from_usize(k).unwrap() / n_t
            }
        })
        .collect()
}

/// Panels needed so the phase moves by at most π per panel at the given rate
/// over an interval of length `len`.
fn panel_count<T: Real>(rate: T, len: T) -> usize {
    let n = (rate * len / T::PI()).ceil().to_f64_lossy();
    (n.max(0.0) as usize + 1).min(MAX_PANELS)
}

/// `FΓ(τ, x₁, ·, x₂ − ·)(ξ)` via the Bessel representation.
///
/// The λ-integral is taken in `φ` with `λ = sin²(φ/2)`, where `h̃ = τ sin φ √q` has
/// bounded slope; panels are uniform in `φ` and sized to the fastest local oscillation.
pub fn fourier_gamma<T: Real>(tau: T, x1: T, x2: T, xi: Frequency<T>, tol: T) -> Result<Complex<T>> {
    check_inputs(tau, x1, x2, &xi, tol)?;
    let rate = tau * xi.xi1.abs() + xi.xi2.abs() * h_tilde_phi_slope(tau, x1);
    let n = panel_count(rate, T::PI());
    let breaks = uniform_breaks(T::zero(), T::PI(), n);
    let half = T::lit(0.5);
    let integrand = |phi: T| -> Complex<T> {
        let (s, c) = phi.sin_cos();
        let lam = (T::one() - c) * half;
        let q = quad_factor(tau, x1, lam).max(T::zero());
        let h = tau * s.abs() * q.sqrt();
        let phase = -(tau * xi.xi1) * (T::one() - c);
        let j0 = T::lit(crate::bessel::bessel_j0_fast((xi.xi2 * h).to_f64_lossy()));
        Complex::from_polar(j0 * s * half, phase)
    };
    let opts = QuadOptions::absolute(tol / tau).with_max_evals(DEFAULT_MAX_EVALS + 60 * n);
    let r = integrate_panels(integrand, &breaks, &opts)?;
    let value = r.value * Complex::from_polar(tau, -(x2 * xi.xi2 + x1 * xi.xi1));
    debug_assert!(
        value.norm() <= tau * (T::one() + T::lit(1e-10)) + tol,
        "|FΓ| = {} exceeds τ = {}",
        value.norm(),
        tau
    );
    Ok(value)
}

/// [`fourier_gamma`] with a fixed 8-point Gauss–Legendre rule on each half-wave panel
/// instead of adaptive refinement. Absolute error is below `1e-9·τ`; used where
/// many transforms are summed.
pub fn fourier_gamma_fixed(tau: f64, x1: f64, x2: f64, xi: Frequency<f64>) -> Result<Complex<f64>> {
    check_inputs(tau, x1, x2, &xi, 1.0)?;
    let rate = tau * xi.xi1.abs() + xi.xi2.abs() * h_tilde_phi_slope(tau, x1);
    let n = panel_count(rate, PI);
    let rule = crate::quadrature::FixedRule::legendre_cached(8);
    let width = PI / n as f64;
    let mut acc = Complex::new(0.0, 0.0);
    for p in 0..n {
        let mid = (p as f64 + 0.5) * width;
        let mut panel = Complex::new(0.0, 0.0);
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            let phi = mid + 0.5 * width * x;
            let (s, c) = phi.sin_cos();
            let lam = 0.5 * (1.0 - c);
            let q = quad_factor(tau, x1, lam).max(0.0);
            let h = tau * s.abs() * q.sqrt();
            let j0 = crate::bessel::bessel_j0_fast(xi.xi2 * h);
            panel += Complex::from_polar(w * j0 * s, -(tau * xi.xi1) * (1.0 - c));
        }
        acc += panel;
    }
    Ok(acc * (0.25 * width) * Complex::from_polar(tau, -(x2 * xi.xi2 + x1 * xi.xi1)))
}

/// `FΓ` from the `(y₁, θ)` double integral, `y₂ = x₂ + √h sin θ`, with the
/// transverse exponential integrated directly. Independent of any Bessel code.
pub fn fourier_gamma_direct<T: Real>(tau: T, x1: T, x2: T, xi: Frequency<T>, tol: T) -> Result<Complex<T>> {
    check_inputs(tau, x1, x2, &xi, tol)?;
    let half_pi = T::FRAC_PI_2();
    let inner_tol = T::PI() * tol / (tau + tau);
    let failure = std::cell::Cell::new(None);

    let inner = |y1: T| -> Complex<T> {
        let root = spread(tau, x1, y1).max(T::zero()).sqrt();
        let n = panel_count(xi.xi2.abs() * root, T::PI());
        let breaks = uniform_breaks(-half_pi, half_pi, n);
        let opts = QuadOptions::absolute(inner_tol).with_max_evals(DEFAULT_MAX_EVALS + 60 * n);
        let r = integrate_panels(
            |th: T| Complex::from_polar(T::one(), -(x2 + root * th.sin()) * xi.xi2),
            &breaks,
            &opts,
        );
        match r {
            Ok(r) => r.value * Complex::from_polar(T::one() / (T::lit(2.0) * T::PI()), -y1 * xi.xi1),
            Err(e) => {
                failure.set(Some(e));
                Complex::new(T::zero(), T::zero())
            }
        }
    };

    let n = panel_count(xi.xi1.abs(), tau + tau);
    let breaks = uniform_breaks(x1, x1 + tau + tau, n);
    let opts = QuadOptions::absolute(tol * T::lit(0.5)).with_max_evals(DEFAULT_MAX_EVALS + 60 * n);
    let r = integrate_panels(inner, &breaks, &opts)?;
    if let Some(e) = failure.take() {
        return Err(e);
    }
    Ok(r.value)
}
