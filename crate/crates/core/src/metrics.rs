//! Image-quality metrics.

use crate::error::{invalid, Result};
use crate::tensor::Signal;

/// PSNR ceiling, reached when the error is negligible relative to the peak.
pub const PSNR_CAP_DB: f64 = 120.0;

/// `20 log10(peak) − 10 log10(MSE)`, capped at [`PSNR_CAP_DB`] once
/// `MSE < peak² · 1e-12`. The MSE runs over real channels.
pub fn psnr(x: &Signal, reference: &Signal, peak: f64) -> Result<f64> {
    if x.shape() != reference.shape() || x.channels() != reference.channels() {
        return invalid("psnr inputs differ in shape");
    }
    if !(peak > 0.0) {
        return invalid(format!("peak must be positive, got {peak}"));
    }
    let mse = x.sub(reference).norm().powi(2) / x.len() as f64;
    if mse < peak * peak * 1e-12 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((20.0 * peak.log10() - 10.0 * mse.log10()).min(PSNR_CAP_DB))
}

/// Largest absolute entry (complex magnitude for two-channel signals).
pub fn peak_magnitude(x: &Signal) -> f64 {
    if x.is_complex() {
        x.as_slice()
            .chunks_exact(2)
            .map(|c| c[0].hypot(c[1]))
            .fold(0.0, f64::max)
    } else {
        x.as_slice().iter().map(|v| v.abs()).fold(0.0, f64::max)
    }
}
