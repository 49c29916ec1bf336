//! Mean squared error.

use crate::error::{ensure_finite, Error, Result};

/// `(1/N) Σ (y_i − ŷ_i)²`.
pub fn mse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(Error::shape(
            "mse",
            format!("targets have length {}, predictions {}", y.len(), y_hat.len()),
        ));
    }
    if y.is_empty() {
        return Err(Error::usage("mse", "empty input"));
    }
    let sum: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    let out = sum / y.len() as f64;
    ensure_finite("mse", &[out])?;
    Ok(out)
}

/// Gradient of [`mse`] with respect to the predictions.
pub fn mse_backward(y: &[f64], y_hat: &[f64]) -> Vec<f64> {
    let scale = 2.0 / y.len() as f64;
    y.iter().zip(y_hat).map(|(a, b)| scale * (b - a)).collect()
}
