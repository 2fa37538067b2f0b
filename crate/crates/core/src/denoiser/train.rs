use serde::{Deserialize, Serialize};

use super::analytic::analytic_epsilon;
use super::network::{DenoiserArch, TinyDenoiser};
use super::{EpsilonModel, GaussianPrior};
use crate::error::{Error, Result};
use crate::field::{sample_standard_gaussian, ImageField, SeededRng};
use crate::scalar::Scalar;
use crate::schedule::{forward_marginal_sample, NoiseSchedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub arch: DenoiserArch,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            arch: DenoiserArch::default(),
            epochs: 100,
            batch_size: 16,
            learning_rate: 0.001,
            momentum: 0.9,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Parameter("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Parameter("momentum must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput<T> {
    pub model: TinyDenoiser<T>,
    /// Mean per-sample loss `‖ε̂ − ε‖²` of each epoch.
    pub loss_trace: Vec<f64>,
}

/// Fresh initialization followed by [`continue_training`].
pub fn train_tiny_denoiser<T: Scalar>(
    dataset: &[ImageField<T>],
    sched: &NoiseSchedule<T>,
    cfg: &TrainConfig,
    rng: &mut SeededRng,
) -> Result<TrainOutput<T>> {
    cfg.validate()?;
    let model = TinyDenoiser::init(cfg.arch.clone(), rng)?;
    continue_training(model, dataset, sched, cfg, rng)
}

/// Minibatch SGD with momentum on the ε-regression loss.
///
/// Each epoch visits the dataset once in shuffled order. Every sample gets a
/// fresh `t ~ U{1..T}` and `ε ~ N(0, I)`, is noised with the closed-form
/// marginal, and the network regresses `ε`.
pub fn continue_training<T: Scalar>(
    mut model: TinyDenoiser<T>,
    dataset: &[ImageField<T>],
    sched: &NoiseSchedule<T>,
    cfg: &TrainConfig,
    rng: &mut SeededRng,
) -> Result<TrainOutput<T>> {
    cfg.validate()?;
    let first = dataset
        .first()
        .ok_or_else(|| Error::Parameter("training dataset is empty".into()))?;
    let shape = first.shape();
    for x in dataset {
        shape.ensure_eq(&x.shape())?;
    }
    if model.arch() != &cfg.arch {
        return Err(Error::Parameter(
            "model architecture differs from the training config".into(),
        ));
    }

    let n = model.params().len();
    let lr = T::lit(cfg.learning_rate);
    let mu = T::lit(cfg.momentum);
    let mut velocity = vec![T::zero(); n];
    let mut grad = vec![T::zero(); n];
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut loss_trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            grad.iter_mut().for_each(|g| *g = T::zero());
            let mut batch_loss = 0.0;
            for &i in batch {
                let t = 1 + rng.below(sched.steps());
                let eps = sample_standard_gaussian(rng, shape);
                let x_t = forward_marginal_sample(&dataset[i], t, sched, &eps)?;
                batch_loss += model
                    .loss_and_gradient(&x_t, t, sched, &eps, &mut grad)?
                    .as_f64();
            }
            if !batch_loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    batch: batch_idx,
                    detail: format!(
                        "loss became {batch_loss}; max |param| = {}",
                        model
                            .params()
                            .iter()
                            .fold(0.0f64, |m, p| m.max(p.as_f64().abs()))
                    ),
                });
            }
            epoch_loss += batch_loss;
            let scale = T::lit(1.0 / batch.len() as f64);
            for ((p, v), g) in model
                .params_mut()
                .iter_mut()
                .zip(velocity.iter_mut())
                .zip(&grad)
            {
                *v = mu * *v - lr * scale * *g;
                *p += *v;
            }
        }
        loss_trace.push(epoch_loss / dataset.len() as f64);
    }
    Ok(TrainOutput { model, loss_trace })
}

/// Mean `‖ε̂ − ε‖²` over `count` fresh `(x^0, t, ε)` draws from `dataset`.
pub fn held_out_loss<T: Scalar, M: EpsilonModel<T> + ?Sized>(
    model: &M,
    dataset: &[ImageField<T>],
    sched: &NoiseSchedule<T>,
    count: usize,
    rng: &mut SeededRng,
) -> Result<f64> {
    if dataset.is_empty() || count == 0 {
        return Err(Error::Parameter("empty held-out set".into()));
    }
    let mut total = 0.0;
    for k in 0..count {
        let x0 = &dataset[k % dataset.len()];
        let t = 1 + rng.below(sched.steps());
        let eps = sample_standard_gaussian(rng, x0.shape());
        let x_t = forward_marginal_sample(x0, t, sched, &eps)?;
        total += model.predict(&x_t, t, sched)?.sub(&eps)?.norm_sq().as_f64();
    }
    Ok(total / count as f64)
}

/// Mean per-pixel squared gap between `model` and the exact Gaussian-prior
/// predictor, over `count` held-out `x^t` drawn from the prior.
pub fn held_out_gap<T: Scalar, M: EpsilonModel<T> + ?Sized>(
    model: &M,
    prior: &GaussianPrior<T>,
    sched: &NoiseSchedule<T>,
    shape: crate::field::Shape,
    count: usize,
    rng: &mut SeededRng,
) -> Result<f64> {
    if count == 0 {
        return Err(Error::Parameter("empty held-out set".into()));
    }
    let mut total = 0.0;
    for _ in 0..count {
        let x0 = prior.sample(shape, rng)?;
        let t = 1 + rng.below(sched.steps());
        let eps = sample_standard_gaussian(rng, shape);
        let x_t = forward_marginal_sample(&x0, t, sched, &eps)?;
        let want = analytic_epsilon(prior, &x_t, t, sched)?;
        let got = model.predict(&x_t, t, sched)?;
        total += got.sub(&want)?.norm_sq().as_f64() / shape.len() as f64;
    }
    Ok(total / count as f64)
}
