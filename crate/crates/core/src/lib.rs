#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision, clippy::needless_range_loop)]

//! Fundamental solution, Fourier representation and random field simulation for
//! `L = ∂t² − 2∂t∂x₁ − x₁²∂x₂²` in two space dimensions, driven by spatially
//! homogeneous Gaussian noise.
//!
//! The deterministic numerics are generic over [`Real`]; the aliases below fix
//! the scalar to `f64`.

pub mod bessel;
pub mod error;
pub mod fourier;
pub mod kernel;
pub mod noise;
pub mod quadrature;
pub mod scalar;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
pub use scalar::Real;

pub type KernelPoint = kernel::KernelPoint<f64>;
pub type TestFunction = kernel::TestFunction<f64>;
pub type AxisProfile = kernel::AxisProfile<f64>;
pub type WeakResult = kernel::WeakResult<f64>;
pub type Frequency = fourier::Frequency<f64>;
pub type LaplaceFrequency = fourier::LaplaceFrequency<f64>;
pub type Complex64 = num_complex::Complex<f64>;
