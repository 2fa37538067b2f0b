//! Reverse diffusion interleaved with amplitude data-consistency steps.
//!
//! Each iteration draws `z^{t−1}` from the learned reverse transition and then
//! takes `γ`-sized subgradient steps on `g(z) = ½‖y − |A z|‖²`. The loop runs
//! `t = T, …, 1` and returns `x^0`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::trace::TraceRow;
use super::{ddpm_reverse_step_with, FinalStepNoise, SamplerState};
use crate::cdp::CdpOperator;
use crate::denoiser::EpsilonModel;
use crate::error::{Error, Result};
use crate::field::{ImageField, SeededRng};
use crate::scalar::Scalar;
use crate::schedule::NoiseSchedule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DolphConfig {
    /// Data-consistency step size. Zero reduces the sampler to plain DDPM.
    pub gamma: f64,
    /// Subgradient steps after every reverse step.
    pub grad_steps: usize,
    pub final_step_noise: FinalStepNoise,
    /// Record `(t, g, ‖x‖)` after every step.
    pub record_trace: bool,
}

impl Default for DolphConfig {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            grad_steps: 1,
            final_step_noise: FinalStepNoise::Zero,
            record_trace: false,
        }
    }
}

impl DolphConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Parameter(format!(
                "gamma must be a finite non-negative step, got {}",
                self.gamma
            )));
        }
        if self.grad_steps == 0 {
            return Err(Error::Parameter("grad_steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// `z − γ ∂g(z)`, repeated `steps` times.
pub fn data_consistency_step<T: Scalar>(
    z: ImageField<T>,
    op: &CdpOperator<T>,
    y: &[ImageField<T>],
    gamma: f64,
    steps: usize,
) -> Result<ImageField<T>> {
    if gamma == 0.0 {
        return Ok(z);
    }
    let g = T::lit(gamma);
    let mut x = z;
    for _ in 0..steps {
        let sub = op.fidelity_subgradient(y, &x)?;
        x = x.axpy(-g, &sub)?;
    }
    Ok(x)
}

/// One reverse step followed by the data-consistency update.
pub fn dolph_step<T: Scalar, M: EpsilonModel<T> + ?Sized>(
    state: SamplerState<T>,
    model: &M,
    sched: &NoiseSchedule<T>,
    op: &CdpOperator<T>,
    y: &[ImageField<T>],
    cfg: &DolphConfig,
) -> Result<SamplerState<T>> {
    let t = state.t;
    let mut next = ddpm_reverse_step_with(state, model, sched, cfg.final_step_noise)?;
    next.x = data_consistency_step(next.x, op, y, cfg.gamma, cfg.grad_steps)?;
    if !next.x.is_finite() {
        return Err(Error::Divergence {
            step: t,
            detail: format!("data-consistency step with gamma {} blew up", cfg.gamma),
        });
    }
    Ok(next)
}

#[derive(Debug, Clone)]
pub struct DolphOutput<T> {
    pub x0: ImageField<T>,
    /// `g(x^T)` of the initial draw.
    pub initial_g: f64,
    pub final_g: f64,
    /// Empty unless [`DolphConfig::record_trace`] is set.
    pub trace: Vec<TraceRow>,
}

/// Full run from `x^T ~ N(0, I)` drawn from `rng`.
pub fn dolph_run<T: Scalar, M: EpsilonModel<T> + ?Sized>(
    y: &[ImageField<T>],
    op: &CdpOperator<T>,
    model: &M,
    sched: &NoiseSchedule<T>,
    cfg: &DolphConfig,
    rng: SeededRng,
) -> Result<DolphOutput<T>> {
    cfg.validate()?;
    let start = Instant::now();
    let mut state = SamplerState::initial(op.shape(), sched.steps(), rng);
    let initial_g = op.fidelity(y, &state.x)?.as_f64();
    let mut trace = Vec::new();
    let mut record = |state: &SamplerState<T>, g: f64| {
        if cfg.record_trace {
            trace.push(TraceRow {
                step: state.t,
                g_value: g,
                x_norm: state.x.norm().as_f64(),
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            });
        }
    };
    record(&state, initial_g);
    while state.t > 0 {
        state = dolph_step(state, model, sched, op, y, cfg)?;
        if cfg.record_trace {
            let g = op.fidelity(y, &state.x)?.as_f64();
            record(&state, g);
        }
    }
    let final_g = op.fidelity(y, &state.x)?.as_f64();
    Ok(DolphOutput {
        x0: state.x,
        initial_g,
        final_g,
        trace,
    })
}
