//! Diffusion-prior phase retrieval from coded diffraction patterns.
//!
//! Numerical code is generic over the scalar type (`f32` or `f64`); the
//! aliases below fix it to `f64`, which the experiment runner uses.

pub mod cdp;
pub mod denoiser;
pub mod error;
pub mod experiments;
pub mod field;
pub mod samplers;
pub mod scalar;
pub mod schedule;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ImageField64 = field::ImageField<f64>;
pub type ImageField32 = field::ImageField<f32>;
pub type ComplexField64 = field::ComplexField<f64>;
pub type NoiseSchedule64 = schedule::NoiseSchedule<f64>;
pub type CdpOperator64 = cdp::CdpOperator<f64>;
pub type GaussianPrior64 = denoiser::GaussianPrior<f64>;
pub type TinyDenoiser64 = denoiser::TinyDenoiser<f64>;
pub type TinyDenoiser32 = denoiser::TinyDenoiser<f32>;
