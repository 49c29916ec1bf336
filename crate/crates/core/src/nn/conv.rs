//! Dilated 1-D convolution over time-major series and global average pooling.

use super::tensor::{dot, Matrix, Vector};
use crate::error::{ensure_finite, Error, Result};

/// Time-major multichannel series: `len` rows of `channels` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    len: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Series {
    pub fn zeros(len: usize, channels: usize) -> Self {
        Series {
            len,
            channels,
            data: vec![0.0; len * channels],
        }
    }

    pub fn from_vec(len: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != len * channels {
            return Err(Error::shape(
                "Series::from_vec",
                format!("{len} steps x {channels} channels needs {} values, got {}", len * channels, data.len()),
            ));
        }
        Ok(Series { len, channels, data })
    }

    /// One channel per inner slice element, one row per step.
    pub fn from_rows<const C: usize>(rows: &[[f64; C]]) -> Self {
        Series {
            len: rows.len(),
            channels: C,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn step(&self, t: usize) -> &[f64] {
        &self.data[t * self.channels..(t + 1) * self.channels]
    }

    #[inline]
    pub fn step_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.channels..(t + 1) * self.channels]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Zero padding applied before and after the time axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Padding {
    pub left: usize,
    pub right: usize,
}

impl Padding {
    pub fn symmetric(p: usize) -> Self {
        Padding { left: p, right: p }
    }

    /// Left-only padding that keeps the output aligned with the input and causal.
    pub fn causal(kernel: usize, dilation: usize) -> Self {
        Padding {
            left: dilation * (kernel - 1),
            right: 0,
        }
    }
}

/// Geometry of one convolution. Weights are `out x (kernel * in)`, with tap `k`
/// occupying columns `k*in .. (k+1)*in`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv1d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub dilation: usize,
    pub padding: Padding,
}

impl Conv1d {
    pub fn out_len(&self, in_len: usize) -> Option<usize> {
        let padded = in_len + self.padding.left + self.padding.right;
        padded.checked_sub(self.dilation * (self.kernel - 1))
    }

    fn check(&self, w: &Matrix, b: &[f64], x: &Series) -> Result<usize> {
        if self.kernel == 0 || self.dilation == 0 {
            return Err(Error::usage("conv1d", "kernel and dilation must be positive"));
        }
        if x.channels() != self.in_channels {
            return Err(Error::shape(
                "conv1d",
                format!("input has {} channels, layer expects {}", x.channels(), self.in_channels),
            ));
        }
        if w.rows() != self.out_channels || w.cols() != self.kernel * self.in_channels {
            return Err(Error::shape(
                "conv1d",
                format!(
                    "weights are {}x{}, expected {}x{}",
                    w.rows(),
                    w.cols(),
                    self.out_channels,
                    self.kernel * self.in_channels
                ),
            ));
        }
        if b.len() != self.out_channels {
            return Err(Error::shape(
                "conv1d",
                format!("bias has length {}, expected {}", b.len(), self.out_channels),
            ));
        }
        self.out_len(x.len())
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::shape("conv1d", format!("input of length {} is shorter than the receptive field", x.len())))
    }

    /// `y[t, o] = b[o] + Σ_k Σ_i W[o, k, i] · x[t + k·d − left, i]`, zero outside the input.
    pub fn forward(&self, w: &Matrix, b: &[f64], x: &Series) -> Result<Series> {
        let out_len = self.check(w, b, x)?;
        let cin = self.in_channels;
        let mut y = Series::zeros(out_len, self.out_channels);
        for t in 0..out_len {
            let out = y.step_mut(t);
            out.copy_from_slice(b);
            for k in 0..self.kernel {
                let Some(src) = (t + k * self.dilation).checked_sub(self.padding.left) else {
                    continue;
                };
                if src >= x.len() {
                    continue;
                }
                let xs = x.step(src);
                for (o, acc) in out.iter_mut().enumerate() {
                    *acc += dot(&w.row(o)[k * cin..(k + 1) * cin], xs);
                }
            }
        }
        ensure_finite("conv1d_forward", y.as_slice())?;
        Ok(y)
    }

    /// Accumulates weight and bias gradients and returns the input gradient.
    pub fn backward(&self, w: &Matrix, x: &Series, dy: &Series, dw: &mut Matrix, db: &mut [f64]) -> Result<Series> {
        let out_len = self.out_len(x.len()).unwrap_or(0);
        if dy.len() != out_len || dy.channels() != self.out_channels {
            return Err(Error::shape("conv1d_backward", "upstream gradient does not match the forward output"));
        }
        let cin = self.in_channels;
        let mut dx = Series::zeros(x.len(), cin);
        for t in 0..out_len {
            let g = dy.step(t);
            for (acc, gi) in db.iter_mut().zip(g) {
                *acc += gi;
            }
            for k in 0..self.kernel {
                let Some(src) = (t + k * self.dilation).checked_sub(self.padding.left) else {
                    continue;
                };
                if src >= x.len() {
                    continue;
                }
                let xs = x.step(src);
                for (o, &go) in g.iter().enumerate() {
                    if go == 0.0 {
                        continue;
                    }
                    let wrow = &w.row(o)[k * cin..(k + 1) * cin];
                    let dwrow = &mut dw.as_mut_slice()[o * self.kernel * cin + k * cin..][..cin];
                    for (d, &xv) in dwrow.iter_mut().zip(xs) {
                        *d += go * xv;
                    }
                    for (d, &wv) in dx.step_mut(src).iter_mut().zip(wrow) {
                        *d += go * wv;
                    }
                }
            }
        }
        Ok(dx)
    }
}

/// Convenience wrapper matching the free-function form of the layer.
pub fn conv1d_forward(w: &Matrix, b: &[f64], x: &Series, kernel: usize, padding: Padding, dilation: usize) -> Result<Series> {
    let conv = Conv1d {
        in_channels: x.channels(),
        out_channels: b.len(),
        kernel,
        dilation,
        padding,
    };
    conv.forward(w, b, x)
}

/// Per-channel mean over the time axis.
pub fn adaptive_avg_pool(x: &Series) -> Result<Vector> {
    if x.is_empty() {
        return Err(Error::usage("adaptive_avg_pool", "empty series"));
    }
    let mut out = vec![0.0; x.channels()];
    for t in 0..x.len() {
        for (o, v) in out.iter_mut().zip(x.step(t)) {
            *o += v;
        }
    }
    let n = x.len() as f64;
    out.iter_mut().for_each(|v| *v /= n);
    ensure_finite("adaptive_avg_pool", &out)?;
    Ok(out.into())
}

pub fn adaptive_avg_pool_backward(len: usize, dy: &[f64]) -> Series {
    let mut dx = Series::zeros(len, dy.len());
    let scale = 1.0 / len as f64;
    for t in 0..len {
        for (d, g) in dx.step_mut(t).iter_mut().zip(dy) {
            *d = g * scale;
        }
    }
    dx
}
