use crate::error::{Error, Result};
use crate::field::ImageField;
use crate::scalar::Scalar;

/// Reported in place of `+∞` for exact reconstructions.
pub const SNR_CAP_DB: f64 = 300.0;

/// `max_s 20 log10(‖x‖ / ‖x − s x̂‖)` over global sign `s = ±1`, capped at
/// [`SNR_CAP_DB`].
pub fn recon_snr<T: Scalar>(x_true: &ImageField<T>, x_hat: &ImageField<T>) -> Result<f64> {
    x_true.shape().ensure_eq(&x_hat.shape())?;
    let signal = x_true.norm().as_f64();
    if signal == 0.0 {
        return Err(Error::Parameter(
            "reconstruction SNR undefined for an all-zero ground truth".into(),
        ));
    }
    let err = |s: f64| {
        x_true
            .data()
            .iter()
            .zip(x_hat.data())
            .map(|(a, b)| (a.as_f64() - s * b.as_f64()).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let e = err(1.0).min(err(-1.0));
    if e == 0.0 {
        return Ok(SNR_CAP_DB);
    }
    Ok((20.0 * (signal / e).log10()).min(SNR_CAP_DB))
}

/// Symmetric matrix of Euclidean distances.
pub fn pairwise_distances<T: Scalar>(samples: &[ImageField<T>]) -> Result<Vec<Vec<f64>>> {
    let n = samples.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = samples[i].sub(&samples[j])?.norm().as_f64();
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    Ok(d)
}
