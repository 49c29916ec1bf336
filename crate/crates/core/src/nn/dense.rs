//! Affine layer and LeakyReLU.

use super::tensor::{Matrix, Vector};
use crate::error::{ensure_finite, Error, Result};

/// Negative-branch slope used when none is configured.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

/// `y = W x + b`.
pub fn fc_forward(w: &Matrix, b: &[f64], x: &[f64]) -> Result<Vector> {
    check_fc_shapes(w, b, x)?;
    let mut y = b.to_vec();
    w.gemv_acc(x, &mut y);
    ensure_finite("fc_forward", &y)?;
    Ok(Vector::from(y))
}

pub(crate) fn check_fc_shapes(w: &Matrix, b: &[f64], x: &[f64]) -> Result<()> {
    if w.cols() != x.len() {
        return Err(Error::shape(
            "fc_forward",
            format!("W has {} columns but x has length {}", w.cols(), x.len()),
        ));
    }
    if w.rows() != b.len() {
        return Err(Error::shape(
            "fc_forward",
            format!("W has {} rows but b has length {}", w.rows(), b.len()),
        ));
    }
    Ok(())
}

/// Reverse pass of [`fc_forward`]: accumulates `dW += dy xᵀ`, `db += dy` and
/// returns `dx = Wᵀ dy`.
pub fn fc_backward(w: &Matrix, x: &[f64], dy: &[f64], dw: &mut Matrix, db: &mut [f64]) -> Result<Vector> {
    if dy.len() != w.rows() || x.len() != w.cols() {
        return Err(Error::shape(
            "fc_backward",
            format!("W is {}x{}, x has {}, dy has {}", w.rows(), w.cols(), x.len(), dy.len()),
        ));
    }
    if dw.rows() != w.rows() || dw.cols() != w.cols() || db.len() != w.rows() {
        return Err(Error::shape("fc_backward", "gradient buffers do not match W"));
    }
    dw.outer_acc(dy, x);
    for (g, d) in db.iter_mut().zip(dy) {
        *g += d;
    }
    let mut dx = vec![0.0; w.cols()];
    w.gemv_t_acc(dy, &mut dx);
    Ok(Vector::from(dx))
}

/// Elementwise `x` for `x >= 0`, `slope * x` otherwise.
pub fn leaky_relu(x: &[f64], slope: f64) -> Vector {
    x.iter().map(|&v| leaky(v, slope)).collect::<Vec<_>>().into()
}

#[inline]
pub(crate) fn leaky(v: f64, slope: f64) -> f64 {
    if v >= 0.0 {
        v
    } else {
        slope * v
    }
}

/// Gradient of [`leaky_relu`] given its *input* `x`.
pub fn leaky_relu_backward(x: &[f64], dy: &[f64], slope: f64) -> Vector {
    x.iter()
        .zip(dy)
        .map(|(&v, &d)| if v >= 0.0 { d } else { slope * d })
        .collect::<Vec<_>>()
        .into()
}

#[inline]
pub(crate) fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// `tanh` through a single `exp`, about three times cheaper than the libm
/// routine; the absolute error stays within a few ulps of 1.
#[inline]
pub(crate) fn tanh(v: f64) -> f64 {
    2.0 / (1.0 + (-2.0 * v).exp()) - 1.0
}
