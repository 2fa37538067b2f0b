//! DDPM variance schedule and the forward noising process.
//!
//! Steps are indexed `1..=T`; `alpha_bar(0)` is defined as 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{sample_standard_gaussian, ImageField, SeededRng};
use crate::scalar::Scalar;

/// How the per-step sampler noise scale `σ^t` is derived from the schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaMode {
    /// `σ^t = √β^t`.
    #[default]
    Beta,
    /// `σ^t = √(β^t (1 − ᾱ^{t−1}) / (1 − ᾱ^t))`, the posterior variance of `q(x^{t−1} | x^t, x^0)`.
    Posterior,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule<T> {
    beta: Vec<T>,
    alpha: Vec<T>,
    alpha_bar: Vec<T>,
    sigma: Vec<T>,
    sigma_mode: SigmaMode,
}

/// Linear `β` from `beta_start` to `beta_end` inclusive with `σ^t = √β^t`.
pub fn make_linear_schedule<T: Scalar>(
    steps: usize,
    beta_start: f64,
    beta_end: f64,
) -> Result<NoiseSchedule<T>> {
    if steps == 0 {
        return Err(Error::Parameter("schedule needs at least one step".into()));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::Parameter(format!(
            "need 0 < beta_start <= beta_end < 1, got [{beta_start}, {beta_end}]"
        )));
    }
    let betas = (0..steps)
        .map(|i| {
            if steps == 1 {
                beta_start
            } else {
                beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
            }
        })
        .map(T::lit)
        .collect();
    NoiseSchedule::from_betas(betas)
}

impl<T: Scalar> NoiseSchedule<T> {
    /// Builds a schedule from an explicit `β` sequence (`betas[0]` is `β^1`).
    pub fn from_betas(beta: Vec<T>) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::Parameter("schedule needs at least one step".into()));
        }
        if let Some((i, b)) = beta
            .iter()
            .enumerate()
            .find(|(_, &b)| !(b > T::zero() && b < T::one()))
        {
            return Err(Error::Parameter(format!(
                "beta at step {} is {b}, must lie in (0, 1)",
                i + 1
            )));
        }
        let alpha: Vec<T> = beta.iter().map(|&b| T::one() - b).collect();
        let mut alpha_bar = Vec::with_capacity(alpha.len());
        let mut acc = T::one();
        for &a in &alpha {
            acc *= a;
            alpha_bar.push(acc);
        }
        let sigma = beta.iter().map(|b| b.sqrt()).collect();
        Ok(Self {
            beta,
            alpha,
            alpha_bar,
            sigma,
            sigma_mode: SigmaMode::Beta,
        })
    }

    pub fn with_sigma_mode(mut self, mode: SigmaMode) -> Self {
        self.sigma = (1..=self.steps())
            .map(|t| match mode {
                SigmaMode::Beta => self.beta(t).sqrt(),
                SigmaMode::Posterior => (self.beta(t) * (T::one() - self.alpha_bar(t - 1))
                    / (T::one() - self.alpha_bar(t)))
                .sqrt(),
            })
            .collect();
        self.sigma_mode = mode;
        self
    }

    /// Replaces every `σ^t`; entries must be non-negative.
    pub fn with_sigmas(mut self, sigma: Vec<T>) -> Result<Self> {
        if sigma.len() != self.steps() {
            return Err(Error::Parameter(format!(
                "{} sigmas for a {}-step schedule",
                sigma.len(),
                self.steps()
            )));
        }
        if sigma.iter().any(|s| s.is_nan() || *s < T::zero()) {
            return Err(Error::Parameter("sigma must be non-negative".into()));
        }
        self.sigma = sigma;
        Ok(self)
    }

    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    pub fn sigma_mode(&self) -> SigmaMode {
        self.sigma_mode
    }

    pub fn check_index(&self, t: usize) -> Result<()> {
        if (1..=self.steps()).contains(&t) {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                t,
                steps: self.steps(),
            })
        }
    }

    /// Panics unless `1 <= t <= T`.
    pub fn beta(&self, t: usize) -> T {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> T {
        self.alpha[t - 1]
    }

    /// `ᾱ^t`, with `ᾱ^0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> T {
        if t == 0 {
            T::one()
        } else {
            self.alpha_bar[t - 1]
        }
    }

    pub fn sigma(&self, t: usize) -> T {
        self.sigma[t - 1]
    }

    pub fn betas(&self) -> &[T] {
        &self.beta
    }

    pub fn alpha_bars(&self) -> &[T] {
        &self.alpha_bar
    }
}

/// One forward transition: `√(1−β^t) x^{t−1} + √β^t z`, `z ~ N(0, I)`.
pub fn forward_step_sample<T: Scalar>(
    x_prev: &ImageField<T>,
    t: usize,
    sched: &NoiseSchedule<T>,
    rng: &mut SeededRng,
) -> Result<ImageField<T>> {
    sched.check_index(t)?;
    let z = sample_standard_gaussian(rng, x_prev.shape());
    let keep = (T::one() - sched.beta(t)).sqrt();
    x_prev.scale(keep).axpy(sched.beta(t).sqrt(), &z)
}

/// Closed-form marginal `√ᾱ^t x^0 + √(1−ᾱ^t) ε` with caller-supplied `ε`.
pub fn forward_marginal_sample<T: Scalar>(
    x0: &ImageField<T>,
    t: usize,
    sched: &NoiseSchedule<T>,
    eps: &ImageField<T>,
) -> Result<ImageField<T>> {
    sched.check_index(t)?;
    marginal_with_alpha_bar(x0, sched.alpha_bar(t), eps)
}

pub(crate) fn marginal_with_alpha_bar<T: Scalar>(
    x0: &ImageField<T>,
    alpha_bar: T,
    eps: &ImageField<T>,
) -> Result<ImageField<T>> {
    x0.scale(alpha_bar.sqrt())
        .axpy((T::one() - alpha_bar).sqrt(), eps)
}
