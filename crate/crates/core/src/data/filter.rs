//! Zero-phase Butterworth low-pass filtering.
//!
//! The filter is designed as cascaded second-order sections from the analog
//! prototype through a prewarped bilinear transform, so the single-pass
//! magnitude at the cutoff is exactly 1/√2. Forward-backward application
//! squares the magnitude response and cancels the phase.

use crate::error::{Error, Result};

pub const DEFAULT_CUTOFF_HZ: f64 = 6.0;
pub const DEFAULT_ORDER: usize = 4;

/// One biquad `b0 + b1 z⁻¹ + b2 z⁻² / 1 + a1 z⁻¹ + a2 z⁻²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// Transposed direct form II state for a constant input `x0`.
    fn steady_state(&self, x0: f64) -> [f64; 2] {
        let z2 = (self.b[2] - self.a[1]) * x0;
        let z1 = (self.b[1] - self.a[0]) * x0 + z2;
        [z1, z2]
    }

    fn run(&self, x: &mut [f64]) {
        let Some(&x0) = x.first() else { return };
        let [mut z1, mut z2] = self.steady_state(x0);
        for v in x.iter_mut() {
            let input = *v;
            let y = self.b[0] * input + z1;
            z1 = self.b[1] * input - self.a[0] * y + z2;
            z2 = self.b[2] * input - self.a[1] * y;
            *v = y;
        }
    }
}

/// Second-order sections of a digital Butterworth low-pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Butterworth {
    pub sections: Vec<Biquad>,
}

impl Butterworth {
    pub fn lowpass(order: usize, cutoff: f64, sample_rate: f64) -> Result<Self> {
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::Config(format!("sample rate {sample_rate} Hz must be positive")));
        }
        if !(cutoff > 0.0 && cutoff < sample_rate / 2.0) {
            return Err(Error::Config(format!(
                "cutoff {cutoff} Hz outside (0, {}) for sample rate {sample_rate} Hz",
                sample_rate / 2.0
            )));
        }
        if order == 0 || order % 2 != 0 {
            return Err(Error::Config(format!("filter order {order} must be even and positive")));
        }
        let k = 2.0 * sample_rate;
        let wc = k * (std::f64::consts::PI * cutoff / sample_rate).tan();
        let w2 = wc * wc;
        let sections = (0..order / 2)
            .map(|i| {
                // Analog pole pair at angle θ from the negative real axis:
                // s² + 2 sin(π(2i+1)/2N) ωc s + ωc².
                let damping = 2.0 * (std::f64::consts::PI * (2 * i + 1) as f64 / (2 * order) as f64).sin() * wc;
                let a0 = k * k + damping * k + w2;
                Biquad {
                    b: [w2 / a0, 2.0 * w2 / a0, w2 / a0],
                    a: [(2.0 * w2 - 2.0 * k * k) / a0, (k * k - damping * k + w2) / a0],
                }
            })
            .collect();
        Ok(Butterworth { sections })
    }

    /// Single causal pass, starting from the steady state of the first sample.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for s in &self.sections {
            s.run(&mut y);
        }
        y
    }

    /// Forward-backward pass with odd-extension padding at both ends.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n < 2 {
            return x.to_vec();
        }
        let pad = (3 * (2 * self.sections.len() + 1)).min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

        let mut y = self.filter(&ext);
        y.reverse();
        let mut y = self.filter(&y);
        y.reverse();
        y[pad..pad + n].to_vec()
    }
}

/// Zero-phase low-pass of `x`; DC gain is exactly one.
pub fn butterworth_lowpass(x: &[f64], sample_rate: f64, cutoff: f64, order: usize) -> Result<Vec<f64>> {
    Ok(Butterworth::lowpass(order, cutoff, sample_rate)?.filtfilt(x))
}

/// Analytic single-pass magnitude of the digital Butterworth design.
pub fn magnitude_response(freq: f64, sample_rate: f64, cutoff: f64, order: usize) -> f64 {
    let pi = std::f64::consts::PI;
    let ratio = (pi * freq / sample_rate).tan() / (pi * cutoff / sample_rate).tan();
    1.0 / (1.0 + ratio.powi(2 * order as i32)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// Least-squares amplitude of a sinusoid of known frequency.
    fn amplitude(x: &[f64], freq: f64, fs: f64, range: std::ops::Range<usize>) -> f64 {
        let (mut ss, mut sc, mut cc, mut ys, mut yc) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in range {
            let (s, c) = (2.0 * PI * freq * i as f64 / fs).sin_cos();
            ss += s * s;
            sc += s * c;
            cc += c * c;
            ys += x[i] * s;
            yc += x[i] * c;
        }
        let det = ss * cc - sc * sc;
        let a = (ys * cc - yc * sc) / det;
        let b = (yc * ss - ys * sc) / det;
        (a * a + b * b).sqrt()
    }

    #[test]
    fn constant_is_unchanged() {
        let x = vec![3.25; 500];
        for v in butterworth_lowpass(&x, 200.0, 6.0, 4).unwrap() {
            assert!((v - 3.25).abs() < 1e-9);
        }
    }

    #[test]
    fn cutoff_is_half_power_after_two_passes() {
        let fs = 200.0;
        let x: Vec<f64> = (0..8000).map(|i| (2.0 * PI * 6.0 * i as f64 / fs).sin()).collect();
        let y = butterworth_lowpass(&x, fs, 6.0, 4).unwrap();
        let expected = magnitude_response(6.0, fs, 6.0, 4).powi(2);
        assert!((expected - 0.5).abs() < 1e-12);
        let got = amplitude(&y, 6.0, fs, 1000..7000);
        assert!((got - expected).abs() < 1e-3, "{got} vs {expected}");
    }

    #[test]
    fn slow_sine_is_preserved() {
        let fs = 200.0;
        let f = 6.0 / 20.0;
        let x: Vec<f64> = (0..8000).map(|i| 2.0 * (2.0 * PI * f * i as f64 / fs).sin()).collect();
        let y = butterworth_lowpass(&x, fs, 6.0, 4).unwrap();
        let got = amplitude(&y, f, fs, 1000..7000) / 2.0;
        assert!((got - 1.0).abs() < 0.01);
        assert!((got - magnitude_response(f, fs, 6.0, 4).powi(2)).abs() < 1e-4);
    }

    #[test]
    fn matches_analytic_response_across_band() {
        let fs = 200.0;
        for f in [1.0, 3.0, 6.0, 9.0, 15.0] {
            let x: Vec<f64> = (0..10000).map(|i| (2.0 * PI * f * i as f64 / fs).cos()).collect();
            let y = Butterworth::lowpass(4, 6.0, fs).unwrap().filter(&x);
            let got = amplitude(&y, f, fs, 2000..10000);
            assert!((got - magnitude_response(f, fs, 6.0, 4)).abs() < 1e-4, "f={f}");
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(butterworth_lowpass(&[1.0; 10], 200.0, 100.0, 4).is_err());
        assert!(butterworth_lowpass(&[1.0; 10], 200.0, 0.0, 4).is_err());
        assert!(butterworth_lowpass(&[1.0; 10], 200.0, 6.0, 3).is_err());
    }
}
