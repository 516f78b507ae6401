//! Closed-form fundamental solution of `L = ∂t² − 2∂t∂x₁ − x₁²∂x₂²` and a weak-form
//! check of `L Γ = δ_(0, y₁, 0)`.
//!
//! `Γ(t, x₁, y₁, x₂) = √3/(2π) · R^{-1/2}` with
//! `R = (y₁³ − x₁³)(2t + x₁ − y₁) − 3x₂²`, on the open set where `t > 0`, `y₁ > x₁`
//! and `R > 0`; zero elsewhere. `R > 0` together with `y₁ > x₁` forces
//! `x₁ < y₁ < x₁ + 2t`.

use std::cell::Cell;

use crate::error::{Error, Result};
use crate::quadrature::{integrate, QuadOptions, DEFAULT_MAX_EVALS};
use crate::scalar::Real;

/// Spacetime argument `(t, x₁, y₁, x₂)` of `Γ`; `y₁` is the source coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelPoint<T> {
    pub t: T,
    pub x1: T,
    pub y1: T,
    pub x2: T,
}

impl<T: Real> KernelPoint<T> {
    pub fn new(t: T, x1: T, y1: T, x2: T) -> Self {
        Self { t, x1, y1, x2 }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.x1.is_finite() && self.y1.is_finite() && self.x2.is_finite()
    }
}

/// `(y₁³ − x₁³)(2t + x₁ − y₁) − 3x₂²`.
pub fn radicand<T: Real>(p: &KernelPoint<T>) -> T {
    (p.y1.powi(3) - p.x1.powi(3)) * (p.t + p.t + p.x1 - p.y1) - T::lit(3.0) * p.x2 * p.x2
}

/// Transverse spread `h = (2t + x₁ − y₁)(y₁³ − x₁³)/3`; the support in `x₂` is `x₂² < h`.
pub fn spread<T: Real>(t: T, x1: T, y1: T) -> T {
    (t + t + x1 - y1) * (y1.powi(3) - x1.powi(3)) / T::lit(3.0)
}

/// Membership in the open support `A`.
pub fn in_support<T: Real>(p: &KernelPoint<T>) -> bool {
    p.t > T::zero() && p.y1 > p.x1 && radicand(p) > T::zero()
}

/// `Γ(p)`; zero off the support and on its boundary.
pub fn gamma_eval<T: Real>(p: &KernelPoint<T>) -> T {
    if !in_support(p) {
        return T::zero();
    }
    T::lit(3.0).sqrt() / (T::lit(2.0) * T::PI()) / radicand(p).sqrt()
}

/// Largest `√h(t, x₁, y₁)` over `y₁ ∈ (x₁, x₁ + 2t)`, i.e. the half-width of the
/// support in the transverse direction.
pub fn max_spread_sqrt<T: Real>(t: T, x1: T) -> T {
    if t <= T::zero() {
        return T::zero();
    }
    let two_t = t + t;
    let f = |lam: T| spread(t, x1, x1 + two_t * lam).max(T::zero());
    // coarse scan followed by golden-section refinement around the best sample
    let n = 64;
    let mut best = 0;
    let mut best_v = T::zero();
    for i in 0..=n {
        let v = f(T::from_usize(i).unwrap() / T::from_usize(n).unwrap());
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    let step = T::one() / T::from_usize(n).unwrap();
    let mut a = (T::from_usize(best).unwrap() * step - step).max(T::zero());
    let mut b = (T::from_usize(best).unwrap() * step + step).min(T::one());
    let g = T::lit(0.618_033_988_749_894_9);
    for _ in 0..80 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    f((a + b) * T::lit(0.5)).max(best_v).sqrt()
}

/// One axis of a separable test function: `p(s) · e · exp(−1/(1 − s²))` with
/// `s = (q − center)/radius` and `p` a quadratic, so the profile is `p(0)` at the center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisProfile<T> {
    pub center: T,
    pub radius: T,
    pub poly: [T; 3],
}

impl<T: Real> AxisProfile<T> {
    pub fn bump(center: T, radius: T) -> Self {
        Self {
            center,
            radius,
            poly: [T::one(), T::zero(), T::zero()],
        }
    }

    pub fn lower(&self) -> T {
        self.center - self.radius
    }

    pub fn upper(&self) -> T {
        self.center + self.radius
    }

    /// `(value, d/dq, d²/dq²)` at `q`.
    pub fn eval(&self, q: T) -> (T, T, T) {
        let s = (q - self.center) / self.radius;
        if s.abs() >= T::one() {
            return (T::zero(), T::zero(), T::zero());
        }
        let one = T::one();
        let w = one - s * s;
        let g = -one / w;
        let b = T::E() * g.exp();
        let g1 = -(s + s) / (w * w);
        let g2 = -T::lit(2.0) / (w * w) - T::lit(8.0) * s * s / (w * w * w);
        let b1 = g1 * b;
        let b2 = (g2 + g1 * g1) * b;
        let [c0, c1, c2] = self.poly;
        let p = c0 + c1 * s + c2 * s * s;
        let p1 = c1 + T::lit(2.0) * c2 * s;
        let p2 = T::lit(2.0) * c2;
        let r = self.radius;
        (
            p * b,
            (p1 * b + p * b1) / r,
            (p2 * b + T::lit(2.0) * p1 * b1 + p * b2) / (r * r),
        )
    }
}

/// Smooth compactly supported `φ(t, x₁, x₂) = A · φ_t(t) φ₁(x₁) φ₂(x₂)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestFunction<T> {
    pub amplitude: T,
    pub time: AxisProfile<T>,
    pub x1: AxisProfile<T>,
    pub x2: AxisProfile<T>,
}

/// Values of `φ` and the partials entering `L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet<T> {
    pub value: T,
    pub d_tt: T,
    pub d_tx1: T,
    pub d_x2x2: T,
}

impl<T: Real> TestFunction<T> {
    /// Product bump centred at `center = (t, x₁, x₂)` with per-axis radii; equals 1 at the center.
    pub fn bump(center: [T; 3], radii: [T; 3]) -> Self {
        Self {
            amplitude: T::one(),
            time: AxisProfile::bump(center[0], radii[0]),
            x1: AxisProfile::bump(center[1], radii[1]),
            x2: AxisProfile::bump(center[2], radii[2]),
        }
    }

    pub fn with_amplitude(mut self, a: T) -> Self {
        self.amplitude = a;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for ax in [&self.time, &self.x1, &self.x2] {
            if !(ax.radius > T::zero() && ax.radius.is_finite() && ax.center.is_finite()) {
                return Err(Error::InvalidInput("test function radii must be positive and finite".into()));
            }
        }
        Ok(())
    }

    pub fn value(&self, t: T, x1: T, x2: T) -> T {
        self.amplitude * self.time.eval(t).0 * self.x1.eval(x1).0 * self.x2.eval(x2).0
    }

    pub fn jet(&self, t: T, x1: T, x2: T) -> Jet<T> {
        let (a, a1, a2) = self.time.eval(t);
        let (b, b1, _) = self.x1.eval(x1);
        let (c, _, c2) = self.x2.eval(x2);
        let k = self.amplitude;
        Jet {
            value: k * a * b * c,
            d_tt: k * a2 * b * c,
            d_tx1: k * a1 * b1 * c,
            d_x2x2: k * a * b * c2,
        }
    }

    /// Support box `[lo, hi]` per axis `(t, x₁, x₂)`.
    pub fn support(&self) -> [(T, T); 3] {
        [
            (self.time.lower(), self.time.upper()),
            (self.x1.lower(), self.x1.upper()),
            (self.x2.lower(), self.x2.upper()),
        ]
    }
}

/// Source positions `y₁` of the weak-form oracle suite.
pub const ORACLE_SOURCES: [f64; 4] = [-1.0, 0.0, 0.5, 2.0];

/// Twelve test functions straddling `t = 0` with assorted supports, tilts and
/// amplitudes, for checking `⟨Γ, Lφ⟩ = φ(0, y₁, 0)`.
pub fn oracle_suite() -> Vec<TestFunction<f64>> {
    let tilt = |mut p: AxisProfile<f64>, poly: [f64; 3]| {
        p.poly = poly;
        p
    };
    let mut v = vec![
        TestFunction::bump([0.0, 0.0, 0.0], [0.5, 1.5, 0.5]),
        TestFunction::bump([0.1, -1.0, 0.0], [0.4, 0.8, 0.6]),
        TestFunction::bump([-0.1, 0.5, 0.1], [0.5, 0.7, 0.4]),
        TestFunction::bump([0.0, 2.0, 0.0], [0.3, 0.6, 0.3]),
        TestFunction::bump([0.2, 0.3, -0.2], [0.6, 1.2, 0.9]).with_amplitude(2.0),
        TestFunction::bump([0.0, -0.5, 0.0], [0.8, 1.0, 1.0]),
        TestFunction::bump([-0.2, 1.5, 0.05], [0.5, 1.0, 0.5]),
        TestFunction::bump([0.0, 0.25, 0.0], [0.25, 0.5, 0.25]),
        TestFunction::bump([0.05, 1.0, 0.0], [0.3, 1.5, 0.2]),
        TestFunction::bump([0.0, -1.2, 0.1], [0.6, 0.5, 0.7]).with_amplitude(-1.5),
        TestFunction::bump([0.1, 2.2, -0.1], [0.4, 0.5, 0.4]),
        TestFunction::bump([0.0, 0.8, 0.0], [1.0, 2.0, 1.0]),
    ];
    v[5].x1 = tilt(v[5].x1, [1.0, 0.5, -0.3]);
    v[6].time = tilt(v[6].time, [1.0, -0.4, 0.2]);
    v[8].x2 = tilt(v[8].x2, [1.0, 0.3, 0.1]);
    v
}

/// `(Lφ)(q) = ∂t²φ − 2∂t∂x₁φ − x₁²∂x₂²φ` from the analytic derivatives of the profile.
pub fn lop_apply<T: Real>(phi: &TestFunction<T>, q: (T, T, T)) -> T {
    let (t, x1, x2) = q;
    let j = phi.jet(t, x1, x2);
    j.d_tt - T::lit(2.0) * j.d_tx1 - x1 * x1 * j.d_x2x2
}

#[derive(Debug, Clone, Copy)]
pub struct WeakResult<T> {
    pub value: T,
    pub abs_error: T,
    pub evals: usize,
}

/// `⟨Γ(·, ·, y₁, ·), Lφ⟩`, which equals `φ(0, y₁, 0)` when `Γ` is the fundamental solution.
///
/// `L` is formally self-adjoint: `∂t²` and `∂t∂x₁` have constant coefficients and
/// `x₁²` commutes with `∂x₂`, so `⟨LΓ, φ⟩ = ⟨Γ, Lφ⟩` and no adjoint is needed.
///
/// The integral is computed in the coordinates `x₁ = y₁ − 2λt`, `x₂ = √h sin θ`, in which
/// `Γ dx₁ dx₂ = (t/π) dλ dθ` and the integrand is bounded.
pub fn weak_apply<T: Real>(y1: T, phi: &TestFunction<T>, tol: T) -> Result<WeakResult<T>> {
    weak_apply_with_budget(y1, phi, tol, DEFAULT_MAX_EVALS)
}

/// As [`weak_apply`], with `max_evals` capping every adaptive call of the nested scheme.
pub fn weak_apply_with_budget<T: Real>(
    y1: T,
    phi: &TestFunction<T>,
    tol: T,
    max_evals: usize,
) -> Result<WeakResult<T>> {
    if !(tol > T::zero()) {
        return Err(Error::Domain("tol must be positive".into()));
    }
    phi.validate()?;
    let [(t_lo, t_hi), (x1_lo, x1_hi), (x2_lo, x2_hi)] = phi.support();
    let t_lo = t_lo.max(T::zero());
    if t_hi <= t_lo {
        return Ok(WeakResult { value: T::zero(), abs_error: T::zero(), evals: 0 });
    }

    let count = Cell::new(0usize);
    let exhausted = Cell::new(false);
    let half_pi = T::FRAC_PI_2();
    let span = t_hi - t_lo;
    let scale = (t_hi * span / T::PI()).max(T::one());
    let outer_tol = tol / T::lit(3.0);
    let inner_tol = tol / (T::lit(6.0) * scale);
    let inner_opts = QuadOptions::absolute(inner_tol).with_max_evals(max_evals);

    let theta_integral = |t: T, lam: T| -> Result<T> {
        let x1 = y1 - (t + t) * lam;
        let h = spread(t, x1, y1).max(T::zero());
        let root = h.sqrt();
        if root == T::zero() {
            return Ok(if x2_lo < T::zero() && T::zero() < x2_hi {
                T::PI() * lop_apply(phi, (t, x1, T::zero()))
            } else {
                T::zero()
            });
        }
        let lo = (x2_lo / root).max(-T::one()).min(T::one()).asin();
        let hi = (x2_hi / root).max(-T::one()).min(T::one()).asin();
        if hi <= lo {
            return Ok(T::zero());
        }
        let r = integrate(
            |th: T| {
                count.set(count.get() + 1);
                lop_apply(phi, (t, x1, root * th.sin()))
            },
            lo.max(-half_pi),
            hi.min(half_pi),
            &inner_opts,
        )?;
        Ok(r.value)
    };

    let lambda_integral = |t: T| -> Result<T> {
        // x₁ = y₁ − 2λt must lie in [x1_lo, x1_hi]
        let two_t = t + t;
        let lo = ((y1 - x1_hi) / two_t).max(T::zero());
        let hi = ((y1 - x1_lo) / two_t).min(T::one());
        if hi <= lo {
            return Ok(T::zero());
        }
        let failure: Cell<Option<Error>> = Cell::new(None);
        let r = integrate(
            |lam: T| match theta_integral(t, lam) {
                Ok(v) => v,
                Err(e) => {
                    failure.set(Some(e));
                    T::zero()
                }
            },
            lo,
            hi,
            &inner_opts,
        )?;
        if let Some(e) = failure.take() {
            return Err(e);
        }
        Ok(r.value)
    };

    let failure: Cell<Option<Error>> = Cell::new(None);
    let outer = integrate(
        |t: T| {
            if exhausted.get() {
                return T::zero();
            }
            match lambda_integral(t) {
                Ok(v) => t / T::PI() * v,
                Err(e) => {
                    failure.set(Some(e));
                    exhausted.set(true);
                    T::zero()
                }
            }
        },
        t_lo,
        t_hi,
        &QuadOptions::absolute(outer_tol).with_max_evals(max_evals),
    );
    if let Some(e) = failure.take() {
        return Err(e);
    }
    let outer = outer?;
    let propagated = T::lit(2.0) * inner_tol * scale;
    Ok(WeakResult {
        value: outer.value,
        abs_error: outer.abs_error + propagated,
        evals: count.get(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const GAMMA_AT_UNIT: f64 = 0.275_664_447_710_896_6;

    #[test]
    fn support_examples() {
        assert!(in_support(&KernelPoint::new(1.0, 0.0, 1.0, 0.0)));
        assert!(!in_support(&KernelPoint::new(1.0, 0.0, 2.5, 0.0)));
        assert!(!in_support(&KernelPoint::new(-1.0, 0.0, 1.0, 0.0)));
    }

    #[test]
    fn gamma_examples() {
        let v = gamma_eval(&KernelPoint::new(1.0, 0.0, 1.0, 0.0));
        assert!((v - GAMMA_AT_UNIT).abs() < 1e-15);
        assert!((GAMMA_AT_UNIT - 3f64.sqrt() / (2.0 * std::f64::consts::PI)).abs() < 1e-15);
        assert_eq!(gamma_eval(&KernelPoint::new(1.0, 0.0, 1.0, 1.0)), 0.0);
        // radicand exactly zero on the boundary 2t + x₁ − y₁ = 0
        assert_eq!(gamma_eval(&KernelPoint::new(0.5, -1.0, 0.0, 0.0)), 0.0);
    }

    #[test]
    fn gamma_f32() {
        let v = gamma_eval(&KernelPoint::new(1.0f32, 0.0, 1.0, 0.0));
        assert!((v - GAMMA_AT_UNIT as f32).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn support_implies_cone(t in -2.0f64..3.0, x1 in -3.0f64..3.0, y1 in -3.0f64..3.0, x2 in -2.0f64..2.0) {
            let p = KernelPoint::new(t, x1, y1, x2);
            if in_support(&p) {
                prop_assert!(p.x1 < p.y1 && p.y1 < p.x1 + 2.0 * p.t);
                prop_assert!(gamma_eval(&p) > 0.0);
                prop_assert!(gamma_eval(&p).is_finite());
            } else {
                prop_assert_eq!(gamma_eval(&p), 0.0);
            }
        }

        #[test]
        fn degenerate_axis_well_defined(t in 0.01f64..3.0, x1 in -2.0f64..-1e-3, y1 in 1e-3f64..2.0, s in -0.99f64..0.99) {
            // x₁ < 0 < y₁: y₁³ − x₁³ stays positive
            prop_assume!(y1 < x1 + 2.0 * t);
            let h = spread(t, x1, y1);
            prop_assert!(h > 0.0);
            let p = KernelPoint::new(t, x1, y1, s * h.sqrt());
            prop_assert!(in_support(&p));
            prop_assert!(gamma_eval(&p).is_finite() && gamma_eval(&p) > 0.0);
        }
    }

    #[test]
    fn integral_over_sources_equals_tau() {
        // raw-coordinate integration: the 1/√ endpoint singularity is left to the adaptive rule
        for &(tau, x1, x2) in &[(0.7f64, 0.3f64, 0.0f64), (1.3, -0.8, 0.4), (0.4, 1.1, -2.0)] {
            let inner = |y1: f64| {
                let h = spread(tau, x1, y1);
                if h <= 0.0 {
                    return 0.0;
                }
                let w = h.sqrt();
                integrate(
                    |y2: f64| gamma_eval(&KernelPoint::new(tau, x1, y1, x2 - y2)),
                    x2 - w,
                    x2 + w,
                    &QuadOptions::absolute(1e-7),
                )
                .unwrap()
                .value
            };
            let total = integrate(inner, x1, x1 + 2.0 * tau, &QuadOptions::absolute(1e-7)).unwrap();
            assert!((total.value - tau).abs() < 1e-6, "tau={tau}: {}", total.value);
        }
    }

    #[test]
    fn lop_outside_support_is_zero() {
        let phi = TestFunction::bump([0.0, 0.0, 0.0], [0.5, 0.5, 0.5]);
        assert_eq!(lop_apply(&phi, (0.6, 0.0, 0.0)), 0.0);
        assert_eq!(lop_apply(&phi, (0.0, -0.7, 0.1)), 0.0);
    }

    #[test]
    fn lop_at_center_of_product_bump() {
        // ψ(s) = e·exp(−1/(1−s²)): ψ(0) = 1, ψ'(0) = 0, ψ''(0) = −2
        let c = 0.7f64;
        let phi = TestFunction::bump([0.3, c, -0.2], [1.0, 1.0, 1.0]);
        let expected = -2.0 - c * c * (-2.0);
        assert!((lop_apply(&phi, (0.3, c, -0.2)) - expected).abs() < 1e-14);
    }

    #[test]
    fn lop_matches_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut phi = TestFunction::bump([0.2, -0.3, 0.1], [0.8, 0.6, 0.7]);
        phi.x1.poly = [1.0, 0.4, -0.3];
        phi.time.poly = [0.5, -0.2, 0.9];
        // fourth-order stencils; a plain three-point second difference at step 1e-5
        // carries ~4e-6 relative roundoff, above the 1e-6 target
        let h = 1e-3;
        let f = |t: f64, a: f64, b: f64| phi.value(t, a, b);
        let d1 = |g: &dyn Fn(f64) -> f64, x: f64| (-g(x + 2.0 * h) + 8.0 * g(x + h) - 8.0 * g(x - h) + g(x - 2.0 * h)) / (12.0 * h);
        let d2 = |g: &dyn Fn(f64) -> f64, x: f64| {
            (-g(x + 2.0 * h) + 16.0 * g(x + h) - 30.0 * g(x) + 16.0 * g(x - h) - g(x - 2.0 * h)) / (12.0 * h * h)
        };
        for _ in 0..10 {
            let t = 0.2 + 0.8 * rng.random_range(-0.5..0.5);
            let a = -0.3 + 0.6 * rng.random_range(-0.5..0.5);
            let b = 0.1 + 0.7 * rng.random_range(-0.5..0.5);
            let d_tt = d2(&|s| f(s, a, b), t);
            let d_tx = d1(&|s| d1(&|y| f(s, y, b), a), t);
            let d_bb = d2(&|s| f(t, a, s), b);
            let fd = d_tt - 2.0 * d_tx - a * a * d_bb;
            let exact = lop_apply(&phi, (t, a, b));
            assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1.0), "fd={fd} exact={exact}");
        }
    }

    #[test]
    fn weak_apply_before_time_zero_vanishes() {
        let phi = TestFunction::bump([-0.5, 0.5, 0.0], [0.3, 0.5, 0.5]);
        let r = weak_apply(0.5, &phi, 1e-3).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn weak_apply_reproduces_point_value() {
        let phi = TestFunction::bump([0.0, 0.5, 0.0], [0.6, 0.7, 0.8]);
        let r = weak_apply(0.5f64, &phi, 1e-4).unwrap();
        assert!((r.value - 1.0).abs() < 5e-4, "{r:?}");
    }

    #[test]
    fn weak_apply_off_source_is_zero() {
        // source (0, y₁, 0) outside supp φ, but supp φ meets the forward cone
        let phi = TestFunction::bump([0.6, 0.2, 0.0], [0.4, 0.4, 0.5]);
        assert!(phi.value(0.0, 0.5, 0.0) == 0.0);
        let r = weak_apply(0.5f64, &phi, 1e-4).unwrap();
        assert!(r.value.abs() < 5e-4, "{r:?}");
    }

    #[test]
    fn weak_apply_rejects_bad_tol() {
        let phi = TestFunction::bump([0.0, 0.0, 0.0], [1.0, 1.0, 1.0]);
        assert!(matches!(weak_apply(0.0, &phi, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn weak_apply_budget_exhaustion_reports_error() {
        let phi = TestFunction::bump([0.0, 0.5, 0.0], [0.6, 0.7, 0.8]);
        let r = weak_apply_with_budget(0.5, &phi, 1e-8, 45);
        assert!(matches!(r, Err(Error::QuadratureNoConvergence { .. })));
    }

    #[test]
    fn max_spread_matches_scan() {
        let (t, x1) = (1.0, 0.0);
        // h = (2 − y₁) y₁³ / 3, maximal at y₁ = 3/2
        let expected = ((2.0 - 1.5) * 1.5f64.powi(3) / 3.0).sqrt();
        assert!((max_spread_sqrt(t, x1) - expected).abs() < 1e-10);
    }
}
