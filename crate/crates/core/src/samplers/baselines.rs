use crate::cdp::CdpOperator;
use crate::error::{Error, Result};
use crate::field::ImageField;
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct BaselineOutput<T> {
    /// Iterate with the smallest objective seen, including the starting point.
    pub x: ImageField<T>,
    pub best_objective: f64,
    /// `g` of the returned iterate.
    pub final_g: f64,
    pub iters: usize,
}

/// Plain subgradient descent on `g(x) = ½‖y − |A x|‖²` with a fixed step.
pub fn amplitude_flow_baseline<T: Scalar>(
    y: &[ImageField<T>],
    op: &CdpOperator<T>,
    x_init: &ImageField<T>,
    step: f64,
    iters: usize,
) -> Result<BaselineOutput<T>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Parameter(format!(
            "step must be positive, got {step}"
        )));
    }
    let step = T::lit(step);
    let mut x = x_init.clone();
    let (mut g, mut sub) = op.fidelity_with_subgradient(y, &x)?;
    let mut best = (g, x.clone());
    for k in 0..iters {
        x = x.axpy(-step, &sub)?;
        (g, sub) = op.fidelity_with_subgradient(y, &x)?;
        if !g.is_finite() || !x.is_finite() {
            return Err(Error::Divergence {
                step: k + 1,
                detail: "amplitude flow iterate is not finite".into(),
            });
        }
        if g < best.0 {
            best = (g, x.clone());
        }
    }
    let g = best.0.as_f64();
    Ok(BaselineOutput {
        x: best.1,
        best_objective: g,
        final_g: g,
        iters,
    })
}
