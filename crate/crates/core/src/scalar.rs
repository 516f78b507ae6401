//! Scalar abstraction shared by the deterministic numerics.

use std::fmt::{Debug, Display};

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive};

/// Floating point type the kernel, Bessel and quadrature code is generic over.
pub trait Real:
    Float + FloatConst + FromPrimitive + Debug + Display + Default + Send + Sync + QuadValue<Self> + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Values an adaptive rule can accumulate: reals and complex numbers over a [`Real`].
pub trait QuadValue<T>:
    Copy
    + Debug
    + Send
    + Sync
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<T, Output = Self>
{
    fn zero_value() -> Self;
    fn magnitude(&self) -> T;
}

macro_rules! quad_value_impl {
    ($t:ty) => {
        impl QuadValue<$t> for $t {
            fn zero_value() -> Self {
                0.0
            }
            fn magnitude(&self) -> $t {
                self.abs()
            }
        }
    };
}

impl<T: Float + Debug + Send + Sync> QuadValue<T> for Complex<T> {
    fn zero_value() -> Self {
        Complex::new(T::zero(), T::zero())
    }
    fn magnitude(&self) -> T {
        self.norm()
    }
}

quad_value_impl!(f32);
quad_value_impl!(f64);

/// Neumaier-compensated running sum; order-dependent only at the last ulp.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}
