use super::EpsilonModel;
use crate::error::{Error, Result};
use crate::field::{ImageField, Shape};
use crate::scalar::Scalar;
use crate::schedule::NoiseSchedule;

#[derive(Debug, Clone, PartialEq)]
pub enum PriorMean<T> {
    /// Same mean for every pixel.
    Uniform(T),
    Field(ImageField<T>),
}

/// Isotropic Gaussian prior `x^0 ~ N(μ, s² I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior<T> {
    mean: PriorMean<T>,
    variance: T,
}

impl<T: Scalar> GaussianPrior<T> {
    pub fn new(mean: PriorMean<T>, variance: T) -> Result<Self> {
        if !(variance > T::zero() && variance.is_finite()) {
            return Err(Error::Parameter(format!(
                "prior variance must be positive, got {variance}"
            )));
        }
        Ok(Self { mean, variance })
    }

    pub fn standard() -> Self {
        Self {
            mean: PriorMean::Uniform(T::zero()),
            variance: T::one(),
        }
    }

    pub fn variance(&self) -> T {
        self.variance
    }

    pub fn mean(&self) -> &PriorMean<T> {
        &self.mean
    }

    pub fn mean_field(&self, shape: Shape) -> Result<ImageField<T>> {
        match &self.mean {
            PriorMean::Uniform(m) => Ok(ImageField::filled(shape, *m)),
            PriorMean::Field(f) => {
                shape.ensure_eq(&f.shape())?;
                Ok(f.clone())
            }
        }
    }

    /// One draw `μ + s·z`.
    pub fn sample(&self, shape: Shape, rng: &mut crate::field::SeededRng) -> Result<ImageField<T>> {
        let z = crate::field::sample_standard_gaussian(rng, shape);
        self.mean_field(shape)?.axpy(self.variance.sqrt(), &z)
    }
}

/// `E[ε | x^t] = √(1−ᾱ) (x^t − √ᾱ μ) / (ᾱ s² + 1 − ᾱ)` for a Gaussian prior.
pub fn analytic_epsilon<T: Scalar>(
    prior: &GaussianPrior<T>,
    x_t: &ImageField<T>,
    t: usize,
    sched: &NoiseSchedule<T>,
) -> Result<ImageField<T>> {
    sched.check_index(t)?;
    let ab = sched.alpha_bar(t);
    analytic_epsilon_at(prior, x_t, ab)
}

pub(crate) fn analytic_epsilon_at<T: Scalar>(
    prior: &GaussianPrior<T>,
    x_t: &ImageField<T>,
    alpha_bar: T,
) -> Result<ImageField<T>> {
    let one = T::one();
    let gain = (one - alpha_bar).sqrt() / (alpha_bar * prior.variance + one - alpha_bar);
    let shift = alpha_bar.sqrt();
    match &prior.mean {
        PriorMean::Uniform(m) => {
            let c = shift * *m;
            Ok(x_t.map(|v| gain * (v - c)))
        }
        PriorMean::Field(mu) => x_t.zip_map(mu, |v, m| gain * (v - shift * m)),
    }
}

impl<T: Scalar> EpsilonModel<T> for GaussianPrior<T> {
    fn predict(
        &self,
        x_t: &ImageField<T>,
        t: usize,
        sched: &NoiseSchedule<T>,
    ) -> Result<ImageField<T>> {
        analytic_epsilon(self, x_t, t, sched)
    }
}

/// Always predicts zero noise.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroDenoiser;

impl<T: Scalar> EpsilonModel<T> for ZeroDenoiser {
    fn predict(
        &self,
        x_t: &ImageField<T>,
        t: usize,
        sched: &NoiseSchedule<T>,
    ) -> Result<ImageField<T>> {
        sched.check_index(t)?;
        Ok(ImageField::zeros(x_t.shape()))
    }
}
