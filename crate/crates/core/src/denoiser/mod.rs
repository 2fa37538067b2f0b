//! Noise predictors `ε(x^t, t)`.
//!
//! [`GaussianPrior`] gives the exact MMSE predictor for Gaussian data and is
//! the oracle the samplers are verified against. [`TinyDenoiser`] is a small
//! convolutional network trained with the ε-regression loss.

mod analytic;
mod checkpoint;
mod network;
mod train;

use crate::error::Result;
use crate::field::ImageField;
use crate::scalar::Scalar;
use crate::schedule::NoiseSchedule;

pub use analytic::{analytic_epsilon, GaussianPrior, PriorMean, ZeroDenoiser};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC,
};
pub use network::{Activation, DenoiserArch, TinyDenoiser};
pub use train::{
    continue_training, held_out_gap, held_out_loss, train_tiny_denoiser, TrainConfig, TrainOutput,
};

/// Predicts the noise component of `x^t` at step `t`.
pub trait EpsilonModel<T: Scalar>: Send + Sync {
    fn predict(
        &self,
        x_t: &ImageField<T>,
        t: usize,
        sched: &NoiseSchedule<T>,
    ) -> Result<ImageField<T>>;
}

impl<T: Scalar, M: EpsilonModel<T> + ?Sized> EpsilonModel<T> for &M {
    fn predict(
        &self,
        x_t: &ImageField<T>,
        t: usize,
        sched: &NoiseSchedule<T>,
    ) -> Result<ImageField<T>> {
        (**self).predict(x_t, t, sched)
    }
}

impl<T: Scalar, M: EpsilonModel<T> + ?Sized> EpsilonModel<T> for Box<M> {
    fn predict(
        &self,
        x_t: &ImageField<T>,
        t: usize,
        sched: &NoiseSchedule<T>,
    ) -> Result<ImageField<T>> {
        (**self).predict(x_t, t, sched)
    }
}
