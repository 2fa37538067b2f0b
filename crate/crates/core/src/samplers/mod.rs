//! Reverse-diffusion sampling, diffusion-guided phase retrieval, and the
//! prior-free and TV-regularized baselines.

mod baselines;
mod dolph;
mod metrics;
mod trace;
mod tv;

use serde::{Deserialize, Serialize};

use crate::denoiser::EpsilonModel;
use crate::error::{Error, Result};
use crate::field::{sample_standard_gaussian, ImageField, SeededRng, Shape};
use crate::scalar::Scalar;
use crate::schedule::NoiseSchedule;

pub use baselines::{amplitude_flow_baseline, BaselineOutput};
pub use dolph::{data_consistency_step, dolph_run, dolph_step, DolphConfig, DolphOutput};
pub use metrics::{pairwise_distances, recon_snr, SNR_CAP_DB};
pub use trace::{write_trace_csv, TraceRow, TRACE_HEADER};
pub use tv::{
    total_variation, tune_tv_tau, tv_prox, tv_reconstruct, tv_reconstruct_from, TvConfig, TvOutput,
};

/// Whether the last reverse step (`t = 1`) adds `σ^1 δ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalStepNoise {
    /// `δ := 0` at `t = 1`.
    #[default]
    Zero,
    Keep,
}

/// Current latent `x^t` of one chain together with its random stream.
#[derive(Debug, Clone)]
pub struct SamplerState<T> {
    pub x: ImageField<T>,
    pub t: usize,
    pub rng: SeededRng,
}

impl<T: Scalar> SamplerState<T> {
    /// `x^T ~ N(0, I)`.
    pub fn initial(shape: Shape, steps: usize, mut rng: SeededRng) -> Self {
        let x = sample_standard_gaussian(&mut rng, shape);
        Self { x, t: steps, rng }
    }
}

/// One ancestral step with `δ := 0` at `t = 1`.
pub fn ddpm_reverse_step<T: Scalar, M: EpsilonModel<T> + ?Sized>(
    state: SamplerState<T>,
    model: &M,
    sched: &NoiseSchedule<T>,
) -> Result<SamplerState<T>> {
    ddpm_reverse_step_with(state, model, sched, FinalStepNoise::Zero)
}

/// `x^{t−1} = (x^t − (1−α^t)/√(1−ᾱ^t) · ε(x^t, t)) / √α^t + σ^t δ`.
pub fn ddpm_reverse_step_with<T: Scalar, M: EpsilonModel<T> + ?Sized>(
    mut state: SamplerState<T>,
    model: &M,
    sched: &NoiseSchedule<T>,
    final_noise: FinalStepNoise,
) -> Result<SamplerState<T>> {
    let t = state.t;
    if t == 0 {
        return Err(Error::Parameter(
            "chain already at t = 0; no reverse step left".into(),
        ));
    }
    sched.check_index(t)?;
    let eps = model.predict(&state.x, t, sched)?;
    let alpha = sched.alpha(t);
    // α^t = 1 makes the noise term vanish; avoid 0/0 when ᾱ^t is also 1.
    let coef = if alpha == T::one() {
        T::zero()
    } else {
        (T::one() - alpha) / (T::one() - sched.alpha_bar(t)).sqrt()
    };
    let inv_sqrt_alpha = alpha.sqrt().recip();
    let mut next = state.x.axpy(-coef, &eps)?.scale(inv_sqrt_alpha);
    if t > 1 || final_noise == FinalStepNoise::Keep {
        let sigma = sched.sigma(t);
        for v in next.data_mut() {
            *v += sigma * T::lit(state.rng.standard_normal());
        }
    }
    if !next.is_finite() {
        return Err(Error::Divergence {
            step: t,
            detail: "reverse step produced non-finite values".into(),
        });
    }
    state.x = next;
    state.t = t - 1;
    Ok(state)
}

/// Unconditional ancestral sampling from `x^T ~ N(0, I)` down to `x^0`.
pub fn ddpm_sample<T: Scalar, M: EpsilonModel<T> + ?Sized>(
    model: &M,
    sched: &NoiseSchedule<T>,
    shape: Shape,
    rng: SeededRng,
    final_noise: FinalStepNoise,
) -> Result<ImageField<T>> {
    let mut state = SamplerState::initial(shape, sched.steps(), rng);
    while state.t > 0 {
        state = ddpm_reverse_step_with(state, model, sched, final_noise)?;
    }
    Ok(state.x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::{GaussianPrior, ZeroDenoiser};
    use crate::schedule::make_linear_schedule;

    fn scalar(v: f64) -> ImageField<f64> {
        ImageField::filled(Shape::new(1, 1, 1), v)
    }

    #[test]
    fn identity_when_alpha_one_sigma_zero() {
        // β is tiny rather than 0, so α^t = 1 − 1e-300 rounds to exactly 1.
        let sched = NoiseSchedule::<f64>::from_betas(vec![1e-300; 3])
            .unwrap()
            .with_sigmas(vec![0.0; 3])
            .unwrap();
        let state = SamplerState {
            x: scalar(0.37),
            t: 3,
            rng: SeededRng::new(0),
        };
        let next = ddpm_reverse_step(state, &ZeroDenoiser, &sched).unwrap();
        assert_eq!(next.x.data()[0], 0.37);
        assert_eq!(next.t, 2);
    }

    #[test]
    fn scalar_step_with_gaussian_denoiser() {
        // Two-step schedule with ᾱ^2 = 0.75 and α^2 = 0.9: β^2 = 0.1, α^1 = 0.75 / 0.9.
        let a1 = 0.75 / 0.9;
        let sched = NoiseSchedule::<f64>::from_betas(vec![1.0 - a1, 0.1])
            .unwrap()
            .with_sigmas(vec![0.0, 0.0])
            .unwrap();
        assert!((sched.alpha_bar(2) - 0.75).abs() < 1e-15);
        let state = SamplerState {
            x: scalar(2.0),
            t: 2,
            rng: SeededRng::new(0),
        };
        let next = ddpm_reverse_step(state, &GaussianPrior::standard(), &sched).unwrap();
        // ε = √0.25·2 = 1; x' = (2 − 0.1/0.5·1)/√0.9 = 1.8/√0.9 = 2√0.9.
        let want = (2.0 - 0.1 / 0.5 * 1.0) / 0.9f64.sqrt();
        assert!((next.x.data()[0] - want).abs() < 1e-14);
        assert!((want - 2.0 * 0.9f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn rejects_exhausted_chain() {
        let sched = make_linear_schedule::<f64>(3, 1e-4, 0.02).unwrap();
        let state = SamplerState {
            x: scalar(0.0),
            t: 0,
            rng: SeededRng::new(0),
        };
        assert!(ddpm_reverse_step(state, &ZeroDenoiser, &sched).is_err());
    }

    #[test]
    fn final_step_noise_policy() {
        let sched = make_linear_schedule::<f64>(1, 0.1, 0.1).unwrap();
        let start = SamplerState {
            x: scalar(1.0),
            t: 1,
            rng: SeededRng::new(4),
        };
        let quiet = ddpm_reverse_step(start.clone(), &ZeroDenoiser, &sched).unwrap();
        assert_eq!(quiet.x.data()[0], 1.0 / 0.9f64.sqrt());
        let noisy =
            ddpm_reverse_step_with(start, &ZeroDenoiser, &sched, FinalStepNoise::Keep).unwrap();
        assert_ne!(noisy.x.data()[0], quiet.x.data()[0]);
    }

    #[test]
    fn sampling_is_seeded() {
        let sched = make_linear_schedule::<f64>(20, 1e-3, 0.1).unwrap();
        let prior = GaussianPrior::standard();
        let shape = Shape::new(2, 2, 1);
        let a = ddpm_sample(
            &prior,
            &sched,
            shape,
            SeededRng::new(5),
            FinalStepNoise::Zero,
        )
        .unwrap();
        let b = ddpm_sample(
            &prior,
            &sched,
            shape,
            SeededRng::new(5),
            FinalStepNoise::Zero,
        )
        .unwrap();
        let c = ddpm_sample(
            &prior,
            &sched,
            shape,
            SeededRng::new(6),
            FinalStepNoise::Zero,
        )
        .unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
