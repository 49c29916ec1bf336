//! Finite-difference derivatives at the native sample rate.

use crate::error::{Error, Result};

/// First derivative: central differences inside, one-sided at both ends.
pub fn derivative(x: &[f64], sample_rate: f64) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 3 {
        return Err(Error::usage("differentiate", format!("series of length {n} is shorter than 3")));
    }
    if !(sample_rate > 0.0) {
        return Err(Error::usage("differentiate", format!("sample rate {sample_rate} must be positive")));
    }
    let mut d = Vec::with_capacity(n);
    d.push((x[1] - x[0]) * sample_rate);
    d.extend(x.windows(3).map(|w| (w[2] - w[0]) * sample_rate / 2.0));
    d.push((x[n - 1] - x[n - 2]) * sample_rate);
    Ok(d)
}

/// Velocity and acceleration, the latter differentiating the former.
pub fn differentiate(x: &[f64], sample_rate: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let v = derivative(x, sample_rate)?;
    let a = derivative(&v, sample_rate)?;
    Ok((v, a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn ramp_has_constant_velocity() {
        let fs = 100.0;
        let k = 0.3;
        let x: Vec<f64> = (0..50).map(|i| k * i as f64).collect();
        let (v, a) = differentiate(&x, fs).unwrap();
        for i in 0..50 {
            assert!((v[i] - k * fs).abs() < 1e-9);
        }
        for &ai in &a[1..49] {
            assert!(ai.abs() < 1e-6);
        }
    }

    #[test]
    fn quadratic_has_constant_acceleration() {
        let fs = 50.0;
        let a2 = 1.7;
        let x: Vec<f64> = (0..40).map(|i| a2 * (i as f64 / fs).powi(2)).collect();
        let (_, acc) = differentiate(&x, fs).unwrap();
        for &v in &acc[2..38] {
            assert!((v - 2.0 * a2).abs() < 1e-8, "{v}");
        }
    }

    #[test]
    fn sine_within_taylor_bound() {
        let fs = 200.0;
        let f = 1.3;
        let amp = 0.4;
        let w = 2.0 * PI * f;
        let x: Vec<f64> = (0..1000).map(|i| amp * (w * i as f64 / fs).sin()).collect();
        let (v, a) = differentiate(&x, fs).unwrap();
        let bound = (w / fs).powi(2);
        for i in 2..998 {
            let t = i as f64 / fs;
            assert!((v[i] - amp * w * (w * t).cos()).abs() < bound * amp * w);
            assert!((a[i] + amp * w * w * (w * t).sin()).abs() < bound * amp * w * w);
        }
    }

    #[test]
    fn short_series_is_rejected() {
        assert!(differentiate(&[1.0, 2.0], 100.0).is_err());
    }
}
