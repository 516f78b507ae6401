//! Bessel functions of the first kind of orders zero and one.
//!
//! For `|z| <= 12` the power series is summed in double-word arithmetic so that
//! the cancellation between its large alternating terms does not eat the result.
//! Beyond that the Hankel form
//!
//! ```text
//! J_nu(z) = sqrt(2/(pi z)) [cos(chi) P(z) - sin(chi) Q(z)],   chi = z - (2 nu + 1) pi / 4
//! ```
//!
//! is used, where `P + iQ` is the Laplace-type integral
//! `Gamma(nu+1/2)^{-1} int_0^inf e^{-u} u^{nu-1/2} (1 + iu/(2z))^{nu-1/2} du`.
//! On `(12, 20]` that integral is evaluated by Gauss–Hermite quadrature (after
//! `u = s^2`), above 20 by its asymptotic series, whose smallest term there is
//! below `e^{-40}`.

use std::sync::OnceLock;

use num_complex::Complex;

use crate::quadrature::FixedRule;
use crate::scalar::Real;

/// Switch from the power series to the `P±` representation.
pub const SERIES_LIMIT: f64 = 12.0;
/// Switch from the quadrature of `P±` to their asymptotic series.
pub const ASYMPTOTIC_LIMIT: f64 = 20.0;

const HERMITE_NODES: usize = 48;

fn hermite_half() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        let r = FixedRule::hermite(HERMITE_NODES);
        // integrands below are even in s: fold onto s >= 0
        r.nodes
            .iter()
            .zip(&r.weights)
            .filter(|(x, _)| **x > 0.0)
            .map(|(x, w)| (*x, 2.0 * w))
            .collect()
    })
}

/// Double-word number `hi + lo`.
#[derive(Clone, Copy, Debug)]
struct Dd<T> {
    hi: T,
    lo: T,
}

impl<T: Real> Dd<T> {
    fn new(x: T) -> Self {
        Dd { hi: x, lo: T::zero() }
    }

    fn two_sum(a: T, b: T) -> Self {
        let s = a + b;
        let bb = s - a;
        let err = (a - (s - bb)) + (b - bb);
        Dd { hi: s, lo: err }
    }

    fn two_prod(a: T, b: T) -> Self {
        let p = a * b;
        Dd { hi: p, lo: a.mul_add(b, -p) }
    }

    fn add(self, o: Self) -> Self {
        let s = Self::two_sum(self.hi, o.hi);
        let lo = s.lo + self.lo + o.lo;
        Self::two_sum(s.hi, lo)
    }

    fn mul(self, o: Self) -> Self {
        let p = Self::two_prod(self.hi, o.hi);
        let lo = p.lo + (self.hi * o.lo + self.lo * o.hi);
        Self::two_sum(p.hi, lo)
    }

    fn div_scalar(self, d: T) -> Self {
        let q1 = self.hi / d;
        let p = Self::two_prod(q1, d);
        let r = (self.hi - p.hi - p.lo + self.lo) / d;
        Self::two_sum(q1, r)
    }

    fn neg(self) -> Self {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    fn value(self) -> T {
        self.hi + self.lo
    }
}

/// Power series `sum_m (-1)^m (z/2)^{2m+nu} / (m! (m+nu)!)` for `nu` in {0, 1}.
pub fn series<T: Real>(order: u32, z: T) -> T {
    let half = Dd::new(z * T::lit(0.5));
    let q = half.mul(half);
    let mut term = Dd::new(T::one());
    let mut sum = term;
    let tiny = T::epsilon() * T::epsilon();
    for m in 1..200u32 {
        let denom = T::from_u32(m * (m + order)).expect("small integer");
        term = term.mul(q).neg().div_scalar(denom);
        sum = sum.add(term);
        if term.hi.abs() < tiny && T::from_u32(m).unwrap() > q.hi {
            break;
        }
    }
    match order {
        0 => sum.value(),
        _ => sum.mul(half).value(),
    }
}

/// `(P, Q)` from the Laplace-type integral, by Gauss–Hermite quadrature. `z > 0`.
///
/// For order zero these are exactly the `P+` and `P-` of the integral
/// representation, and `|P|, |Q| <= 1` since `|1 + iu/(2z)| >= 1`.
pub fn pm_integral<T: Real>(order: u32, z: T) -> (T, T) {
    let two_z = z + z;
    let mut acc = Complex::new(T::zero(), T::zero());
    for &(s, w) in hermite_half() {
        let s = T::lit(s);
        let u = s * s;
        let base = Complex::new(T::one(), u / two_z);
        let g = match order {
            0 => base.sqrt().inv(),
            _ => base.sqrt() * u,
        };
        acc = acc + g * T::lit(w);
    }
    // Gamma(1/2) = sqrt(pi), Gamma(3/2) = sqrt(pi)/2
    let norm = match order {
        0 => T::one() / T::PI().sqrt(),
        _ => T::lit(2.0) / T::PI().sqrt(),
    };
    (acc.re * norm, acc.im * norm)
}

/// `(P, Q)` from their asymptotic series in `1/z`, truncated at the smallest term.
pub fn pm_asymptotic<T: Real>(order: u32, z: T) -> (T, T) {
    let mu = T::from_u32(4 * order * order).unwrap();
    let eight_z = T::lit(8.0) * z;
    let mut p = T::one();
    let mut q = T::zero();
    let mut term = T::one();
    let mut prev_mag = T::infinity();
    for k in 1..200u32 {
        let odd = T::from_u32(2 * k - 1).unwrap();
        term = term * (mu - odd * odd) / (T::from_u32(k).unwrap() * eight_z);
        let mag = term.abs();
        if mag > prev_mag || mag < T::epsilon() * T::lit(1e-3) {
            break;
        }
        prev_mag = mag;
        // k odd -> Q with sign (-1)^((k-1)/2); k even -> P with sign (-1)^(k/2)
        let sign = if (k / 2) % 2 == 0 { T::one() } else { -T::one() };
        if k % 2 == 1 {
            q = q + sign * term;
        } else {
            p = p + sign * term;
        }
    }
    (p, q)
}

fn hankel_form<T: Real>(order: u32, z: T, pq: (T, T)) -> T {
    let chi = z - T::from_u32(2 * order + 1).unwrap() * T::FRAC_PI_4();
    let amp = (T::lit(2.0) / (T::PI() * z)).sqrt();
    amp * (chi.cos() * pq.0 - chi.sin() * pq.1)
}

fn j_positive<T: Real>(order: u32, z: T) -> T {
    if z <= T::lit(SERIES_LIMIT) {
        series(order, z)
    } else if z <= T::lit(ASYMPTOTIC_LIMIT) {
        hankel_form(order, z, pm_integral(order, z))
    } else {
        hankel_form(order, z, pm_asymptotic(order, z))
    }
}

/// `J_0(z)`.
pub fn bessel_j0<T: Real>(z: T) -> T {
    if z.is_nan() {
        return z;
    }
    j_positive(0, z.abs())
}

/// `J_1(z)`; odd in `z`.
pub fn bessel_j1<T: Real>(z: T) -> T {
    if z.is_nan() {
        return z;
    }
    let v = j_positive(1, z.abs());
    if z < T::zero() {
        -v
    } else {
        v
    }
}

/// `J_0` through the integral representation of `P±` for any `z > 0`; used to
/// cross-check the fast paths.
pub fn bessel_j0_integral_form<T: Real>(z: T) -> T {
    let z = z.abs();
    hankel_form(0, z, pm_integral(0, z))
}

pub fn bessel_j1_integral_form<T: Real>(z: T) -> T {
    let a = z.abs();
    let v = hankel_form(1, a, pm_integral(1, a));
    if z < T::zero() {
        -v
    } else {
        v
    }
}

/// Envelope `|J_0(z)| <= 2 sqrt(2/pi) / sqrt(z)` implied by `|P±| <= 1`.
pub fn j0_envelope<T: Real>(z: T) -> T {
    T::lit(2.0) * (T::lit(2.0) / T::PI()).sqrt() / z.abs().sqrt()
}

const FAST_PIECES: usize = 40;
const FAST_WIDTH: f64 = ASYMPTOTIC_LIMIT / FAST_PIECES as f64;
const FAST_DEGREE: usize = 14;

/// Chebyshev coefficients of `J_0` on `[k w, (k+1) w]`, interpolated from [`bessel_j0`].
fn fast_table() -> &'static [[f64; FAST_DEGREE + 1]] {
    static TABLE: OnceLock<Vec<[f64; FAST_DEGREE + 1]>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = FAST_DEGREE + 1;
        let nodes: Vec<f64> = (0..n)
            .map(|j| (std::f64::consts::PI * (j as f64 + 0.5) / n as f64).cos())
            .collect();
        (0..FAST_PIECES)
            .map(|k| {
                let lo = k as f64 * FAST_WIDTH;
                let vals: Vec<f64> = nodes.iter().map(|t| bessel_j0(lo + 0.5 * FAST_WIDTH * (t + 1.0))).collect();
                let mut c = [0.0; FAST_DEGREE + 1];
                for (m, cm) in c.iter_mut().enumerate() {
                    let s: f64 = (0..n)
                        .map(|j| vals[j] * (std::f64::consts::PI * m as f64 * (j as f64 + 0.5) / n as f64).cos())
                        .sum();
                    *cm = 2.0 * s / n as f64;
                }
                c[0] *= 0.5;
                c
            })
            .collect()
    })
}

/// `J_0` for hot loops: piecewise Chebyshev interpolants of [`bessel_j0`] on
/// `[0, 20]`, the asymptotic Hankel form beyond. Absolute error below `5e-15`.
pub fn bessel_j0_fast(z: f64) -> f64 {
    let z = z.abs();
    if z.is_nan() {
        return z;
    }
    if z >= ASYMPTOTIC_LIMIT {
        return hankel_form(0, z, pm_asymptotic(0, z));
    }
    let k = ((z / FAST_WIDTH) as usize).min(FAST_PIECES - 1);
    let c = &fast_table()[k];
    let t = 2.0 * (z - k as f64 * FAST_WIDTH) / FAST_WIDTH - 1.0;
    let (mut b1, mut b2) = (0.0, 0.0);
    for &cm in c[1..].iter().rev() {
        let b0 = 2.0 * t * b1 - b2 + cm;
        b2 = b1;
        b1 = b0;
    }
    t * b1 - b2 + c[0]
}
