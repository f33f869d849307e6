use crate::error::{Error, Result};
use crate::signal::NdSignal;

/// `10·log₁₀(peak²·n / ‖x − ref‖²)` in dB. Identical inputs give `+∞`, the
/// saturation sentinel.
pub fn psnr(reference: &NdSignal, x: &NdSignal, peak: f64) -> Result<f64> {
    reference.check_same_shape(x)?;
    let sse: f64 = reference
        .as_slice()
        .iter()
        .zip(x.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    if sse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak * reference.len() as f64 / sse).log10())
}

/// Relative objective gap `(f̂ − f*)/f*`.
pub fn cost_accuracy(f_hat: f64, f_star: f64) -> Result<f64> {
    if f_star.is_nan() || f_star <= 0.0 {
        return Err(Error::InvalidParameter(format!("reference cost must be positive, got {f_star}")));
    }
    Ok((f_hat - f_star) / f_star)
}
