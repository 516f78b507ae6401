//! Transform-side checks: the closed form of `Γ̂†` in `(ξ₀, x₁, ξ₂)` and the
//! Laplace identity `∫₀^∞ e^{−iξ₀t} (πt)^{−1/2} dt = (iξ₀)^{−1/2}`.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::quadrature::{integrate_panels, QuadOptions, DEFAULT_MAX_EVALS};
use crate::scalar::Real;

/// Complex `ξ₀` in the lower half-plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceFrequency<T> {
    pub re: T,
    pub im: T,
}

impl<T: Real> LaplaceFrequency<T> {
    pub fn new(re: T, im: T) -> Result<Self> {
        if !re.is_finite() || !im.is_finite() {
            return Err(Error::Domain("xi0 must be finite".into()));
        }
        if !(im < T::zero()) {
            return Err(Error::Domain(format!("Im(xi0) must be negative, got {im}")));
        }
        Ok(Self { re, im })
    }

    pub fn as_complex(&self) -> Complex<T> {
        Complex::new(self.re, self.im)
    }
}

/// `−(i/(2ξ₀)) · exp(i(ξ₀/2)(x₁ − y₁) − i(ξ₂²/(6ξ₀))(x₁³ − y₁³)) · H(y₁ − x₁)`.
///
/// `H(0)` is taken as 1, so the value at `x₁ = y₁` is the left limit `−i/(2ξ₀)`.
pub fn hat_gamma_dagger<T: Real>(xi0: LaplaceFrequency<T>, x1: T, y1: T, xi2: T) -> Result<Complex<T>> {
    if !(xi0.im < T::zero()) {
        return Err(Error::Domain(format!("Im(xi0) must be negative, got {}", xi0.im)));
    }
    if x1 > y1 {
        return Ok(Complex::new(T::zero(), T::zero()));
    }
    let z = xi0.as_complex();
    let i = Complex::new(T::zero(), T::one());
    let two = T::lit(2.0);
    let cubes = x1.powi(3) - y1.powi(3);
    let exponent = i * z * (x1 - y1) / two - i * (xi2 * xi2 * cubes) / (z * T::lit(6.0));
    Ok(-(i / (z * two)) * exponent.exp())
}

/// Returns `(quadrature of ∫₀^∞ e^{−iξ₀t}(πt)^{−1/2} dt, principal (iξ₀)^{−1/2})`.
///
/// `t = s²` turns the integrand into `2 e^{−iξ₀s²}/√π`, smooth at the origin; the
/// range is cut where `e^{Im(ξ₀) s²}` drops below `tol · 1e−3`.
pub fn laplace_chi_identity<T: Real>(xi0: LaplaceFrequency<T>, tol: T) -> Result<(Complex<T>, Complex<T>)> {
    if !(xi0.im < T::zero()) {
        return Err(Error::Domain(format!("Im(xi0) must be negative, got {}", xi0.im)));
    }
    if !(tol > T::zero()) {
        return Err(Error::Domain("tol must be positive".into()));
    }
    let z = xi0.as_complex();
    let decay = -xi0.im;
    let cut = (-(tol * T::lit(1e-3)).min(T::lit(0.5)).ln() / decay).sqrt();
    // phase ξ₀_re·s² moves by at most π per panel
    let turns = (xi0.re.abs() * cut * cut / T::PI()).ceil().to_f64_lossy() as usize;
    let n = (turns + 8).min(200_000);
    let n_t = T::from_usize(n).unwrap();
    let breaks: Vec<T> = (0..=n).map(|k| cut * (T::from_usize(k).unwrap() / n_t).sqrt()).collect();
    let scale = T::lit(2.0) / T::PI().sqrt();
    let i = Complex::new(T::zero(), T::one());
    let opts = QuadOptions::absolute(tol * T::lit(0.1)).with_max_evals(DEFAULT_MAX_EVALS + 60 * n);
    let r = integrate_panels(|s: T| (-(i * z) * (s * s)).exp() * scale, &breaks, &opts)?;
    let rhs = (i * z).powf(T::lit(-0.5));
    Ok((r.value, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xi0(re: f64, im: f64) -> LaplaceFrequency<f64> {
        LaplaceFrequency::new(re, im).unwrap()
    }

    #[test]
    fn rejects_upper_half_plane() {
        assert!(LaplaceFrequency::new(1.0, 0.0).is_err());
        assert!(LaplaceFrequency::new(1.0, 0.5).is_err());
        let bad = LaplaceFrequency { re: 1.0, im: 0.0 };
        assert!(matches!(hat_gamma_dagger(bad, 0.0, 1.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(laplace_chi_identity(bad, 1e-8), Err(Error::Domain(_))));
    }

    #[test]
    fn vanishes_right_of_source() {
        let v = hat_gamma_dagger(xi0(1.0, -1.0), 0.5, 0.2, 3.0).unwrap();
        assert_eq!(v, Complex::new(0.0, 0.0));
    }

    #[test]
    fn left_limit_is_jump() {
        for &(re, im, y1, xi2) in &[(1.0, -1.0, 0.3, 2.0), (-2.5, -0.1, -1.0, 7.0), (0.0, -3.0, 2.0, 0.0)] {
            let z = Complex::new(re, im);
            let jump = -Complex::new(0.0, 1.0) / (z * 2.0);
            let at = hat_gamma_dagger(xi0(re, im), y1, y1, xi2).unwrap();
            assert!((at - jump).norm() < 1e-10 * jump.norm());
            let near = hat_gamma_dagger(xi0(re, im), y1 - 1e-12, y1, xi2).unwrap();
            assert!((near - jump).norm() < 1e-10);
        }
    }

    #[test]
    fn ode_residual_left_of_source() {
        let h = 1e-5;
        for &(re, im, xi2) in &[(1.0, -1.0, 2.0), (-0.7, -0.4, 1.3), (3.0, -2.0, -4.0)] {
            let z = Complex::new(re, im);
            let f = |x: f64| hat_gamma_dagger(xi0(re, im), x, 0.8, xi2).unwrap();
            for &x in &[-1.0, -0.2, 0.1, 0.5] {
                let d = (f(x + h) - f(x - h)) / (2.0 * h);
                let coef = Complex::new(0.0, 1.0) / (z * 2.0) * (x * x * xi2 * xi2 - z * z);
                let residual = d + coef * f(x);
                assert!(residual.norm() <= 1e-6 * f(x).norm(), "x={x}: {residual}");
            }
        }
    }

    #[test]
    fn chi_identity_examples() {
        let (l, r) = laplace_chi_identity(xi0(0.0, -1.0), 1e-12).unwrap();
        assert!((l - 1.0).norm() < 1e-10 && (r - 1.0).norm() < 1e-14);
        let (l, r) = laplace_chi_identity(xi0(0.0, -10.0), 1e-12).unwrap();
        assert!((l.re - 10f64.powf(-0.5)).abs() < 1e-10 && (r - l).norm() < 1e-10);
        let (l, r) = laplace_chi_identity(xi0(1.0, -1.0), 1e-10).unwrap();
        assert!((l - r).norm() < 1e-9, "{l} vs {r}");
    }

    #[test]
    fn chi_identity_weak_damping() {
        let (l, r) = laplace_chi_identity(xi0(-4.0, -0.05), 1e-10).unwrap();
        assert!((l - r).norm() < 1e-8, "{l} vs {r}");
    }
}
