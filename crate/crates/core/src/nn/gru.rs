//! Gated recurrent unit cell with an explicit reverse pass.
//!
//! One step maps `(x_t, h_{t-1})` to `h_t`:
//!
//! ```text
//! r = σ(W_xr x + W_hr h + b_r)
//! z = σ(W_xz x + W_hz h + b_z)
//! c = tanh(W_xc x + W_hc (r ⊙ h) + b_c)
//! h' = (1 - z) ⊙ h + z ⊙ c
//! ```
//!
//! Parameters live in a [`ParamSet`] under `{prefix}.W_xr`, `{prefix}.b_r`, etc.

use super::dense::{sigmoid, tanh};
use super::tensor::{GradientSet, Matrix, ParamSet, Shape, Vector};
use crate::error::{ensure_finite, Error, Result};

const MATRICES: [&str; 6] = ["W_hc", "W_hr", "W_hz", "W_xc", "W_xr", "W_xz"];
const BIASES: [&str; 3] = ["b_c", "b_r", "b_z"];

/// Dimensions and parameter prefix of one GRU layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GruCell {
    pub prefix: String,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

/// Borrowed weights of one GRU layer.
#[derive(Debug, Clone, Copy)]
pub struct GruWeights<'a> {
    pub w_xr: &'a Matrix,
    pub w_hr: &'a Matrix,
    pub b_r: &'a [f64],
    pub w_xz: &'a Matrix,
    pub w_hz: &'a Matrix,
    pub b_z: &'a [f64],
    pub w_xc: &'a Matrix,
    pub w_hc: &'a Matrix,
    pub b_c: &'a [f64],
}

/// Everything the reverse pass needs from one forward step.
#[derive(Debug, Clone, PartialEq)]
pub struct GruCache {
    input_dim: usize,
    hidden_dim: usize,
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub r: Vec<f64>,
    pub z: Vec<f64>,
    pub c: Vec<f64>,
}

impl GruCache {
    pub(crate) fn empty(input_dim: usize, hidden_dim: usize) -> Self {
        GruCache {
            input_dim,
            hidden_dim,
            x: vec![0.0; input_dim],
            h_prev: vec![0.0; hidden_dim],
            r: vec![0.0; hidden_dim],
            z: vec![0.0; hidden_dim],
            c: vec![0.0; hidden_dim],
        }
    }
}

/// Owned gradient buffers for one GRU layer.
#[derive(Debug, Clone)]
pub struct GruGrads {
    pub w_xr: Matrix,
    pub w_hr: Matrix,
    pub b_r: Vec<f64>,
    pub w_xz: Matrix,
    pub w_hz: Matrix,
    pub b_z: Vec<f64>,
    pub w_xc: Matrix,
    pub w_hc: Matrix,
    pub b_c: Vec<f64>,
}

impl GruCell {
    pub fn new(prefix: impl Into<String>, input_dim: usize, hidden_dim: usize) -> Self {
        GruCell {
            prefix: prefix.into(),
            input_dim,
            hidden_dim,
        }
    }

    fn name(&self, leaf: &str) -> String {
        format!("{}.{leaf}", self.prefix)
    }

    pub fn param_shapes(&self) -> Vec<(String, Shape)> {
        let (d, h) = (self.input_dim, self.hidden_dim);
        let mut out = Vec::with_capacity(9);
        for m in MATRICES {
            let cols = if m.starts_with("W_x") { d } else { h };
            out.push((self.name(m), Shape::Matrix { rows: h, cols }));
        }
        for b in BIASES {
            out.push((self.name(b), Shape::Vector { len: h }));
        }
        out
    }

    /// Resolves and shape-checks this layer's weights.
    pub fn weights<'a>(&self, params: &'a ParamSet) -> Result<GruWeights<'a>> {
        let m = |leaf: &str| params.matrix(&self.name(leaf));
        let v = |leaf: &str| params.vector(&self.name(leaf)).map(|v| &v[..]);
        let w = GruWeights {
            w_xr: m("W_xr")?,
            w_hr: m("W_hr")?,
            b_r: v("b_r")?,
            w_xz: m("W_xz")?,
            w_hz: m("W_hz")?,
            b_z: v("b_z")?,
            w_xc: m("W_xc")?,
            w_hc: m("W_hc")?,
            b_c: v("b_c")?,
        };
        let (d, h) = (self.input_dim, self.hidden_dim);
        for (name, mat, cols) in [
            ("W_xr", w.w_xr, d),
            ("W_xz", w.w_xz, d),
            ("W_xc", w.w_xc, d),
            ("W_hr", w.w_hr, h),
            ("W_hz", w.w_hz, h),
            ("W_hc", w.w_hc, h),
        ] {
            if mat.rows() != h || mat.cols() != cols {
                return Err(Error::shape(
                    "gru_cell",
                    format!("{} is {}x{}, expected {h}x{cols}", self.name(name), mat.rows(), mat.cols()),
                ));
            }
        }
        for (name, b) in [("b_r", w.b_r), ("b_z", w.b_z), ("b_c", w.b_c)] {
            if b.len() != h {
                return Err(Error::shape(
                    "gru_cell",
                    format!("{} has length {}, expected {h}", self.name(name), b.len()),
                ));
            }
        }
        Ok(w)
    }

    /// One checked forward step.
    pub fn forward(&self, params: &ParamSet, x: &[f64], h_prev: &[f64]) -> Result<(Vector, GruCache)> {
        let w = self.weights(params)?;
        self.check_inputs(x, h_prev)?;
        let mut cache = GruCache::empty(self.input_dim, self.hidden_dim);
        let mut h = vec![0.0; self.hidden_dim];
        w.step(x, h_prev, &mut cache, &mut h);
        ensure_finite("gru_cell_forward", &h)?;
        Ok((Vector::from(h), cache))
    }

    /// Reverse pass of one step; returns parameter gradients, `dx` and `dh_prev`.
    pub fn backward(
        &self,
        params: &ParamSet,
        cache: &GruCache,
        dh: &[f64],
    ) -> Result<(GradientSet, Vector, Vector)> {
        let w = self.weights(params)?;
        if cache.input_dim != self.input_dim || cache.hidden_dim != self.hidden_dim {
            return Err(Error::usage(
                "gru_cell_backward",
                format!(
                    "cache was recorded for a {}->{} cell, this cell is {}->{}",
                    cache.input_dim, cache.hidden_dim, self.input_dim, self.hidden_dim
                ),
            ));
        }
        if dh.len() != self.hidden_dim {
            return Err(Error::shape(
                "gru_cell_backward",
                format!("dH has length {}, expected {}", dh.len(), self.hidden_dim),
            ));
        }
        let mut grads = GruGrads::zeros(self.input_dim, self.hidden_dim);
        let mut dx = vec![0.0; self.input_dim];
        let mut dh_prev = vec![0.0; self.hidden_dim];
        w.step_backward(cache.record(), dh, &mut grads, &mut dx, &mut dh_prev, &mut GruScratch::new(self.hidden_dim));
        ensure_finite("gru_cell_backward", &dh_prev)?;
        ensure_finite("gru_cell_backward", &dx)?;
        let mut set = ParamSet::zeros(self.param_shapes().iter().map(|(n, s)| (n.as_str(), *s)));
        grads.add_into(&self.prefix, &mut set)?;
        Ok((set, Vector::from(dx), Vector::from(dh_prev)))
    }

    pub(crate) fn check_inputs(&self, x: &[f64], h_prev: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::shape(
                "gru_cell_forward",
                format!("x has length {}, expected {}", x.len(), self.input_dim),
            ));
        }
        if h_prev.len() != self.hidden_dim {
            return Err(Error::shape(
                "gru_cell_forward",
                format!("H_prev has length {}, expected {}", h_prev.len(), self.hidden_dim),
            ));
        }
        Ok(())
    }
}

/// Borrowed view of one recorded forward step.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StepRecord<'a> {
    pub x: &'a [f64],
    pub h_prev: &'a [f64],
    pub r: &'a [f64],
    pub z: &'a [f64],
    pub c: &'a [f64],
}

impl GruCache {
    pub(crate) fn record(&self) -> StepRecord<'_> {
        StepRecord {
            x: &self.x,
            h_prev: &self.h_prev,
            r: &self.r,
            z: &self.z,
            c: &self.c,
        }
    }
}

/// Forward record of a whole sequence in one flat buffer. Each step stores
/// `x, h_prev, r, z, c` back to back.
#[derive(Debug, Clone, PartialEq)]
pub struct GruTrace {
    input_dim: usize,
    hidden_dim: usize,
    data: Vec<f64>,
}

impl GruTrace {
    pub(crate) fn new(input_dim: usize, hidden_dim: usize, steps: usize) -> Self {
        GruTrace {
            input_dim,
            hidden_dim,
            data: vec![0.0; steps * (input_dim + 4 * hidden_dim)],
        }
    }

    fn stride(&self) -> usize {
        self.input_dim + 4 * self.hidden_dim
    }

    pub fn steps(&self) -> usize {
        self.data.len() / self.stride()
    }

    pub(crate) fn dims(&self) -> (usize, usize) {
        (self.input_dim, self.hidden_dim)
    }

    pub(crate) fn record(&self, t: usize) -> StepRecord<'_> {
        let (d, h) = (self.input_dim, self.hidden_dim);
        let s = &self.data[t * self.stride()..(t + 1) * self.stride()];
        let (x, rest) = s.split_at(d);
        let (h_prev, rest) = rest.split_at(h);
        let (r, rest) = rest.split_at(h);
        let (z, c) = rest.split_at(h);
        StepRecord { x, h_prev, r, z, c }
    }

    /// Runs step `t`, reading the previous state from `h` and overwriting it.
    pub(crate) fn run_step(&mut self, w: &GruWeights<'_>, t: usize, x: &[f64], h: &mut [f64]) {
        let (d, hd) = (self.input_dim, self.hidden_dim);
        let stride = self.stride();
        let s = &mut self.data[t * stride..(t + 1) * stride];
        let (xs, rest) = s.split_at_mut(d);
        let (h_prev, rest) = rest.split_at_mut(hd);
        let (r, rest) = rest.split_at_mut(hd);
        let (z, c) = rest.split_at_mut(hd);
        xs.copy_from_slice(x);
        h_prev.copy_from_slice(h);
        w.step_slices(xs, h_prev, r, z, c, h);
    }
}

/// Reusable buffers for [`GruWeights::step_backward`].
#[derive(Debug, Clone)]
pub(crate) struct GruScratch {
    da_r: Vec<f64>,
    da_z: Vec<f64>,
    da_c: Vec<f64>,
    rh: Vec<f64>,
    d_rh: Vec<f64>,
}

impl GruScratch {
    pub(crate) fn new(hidden_dim: usize) -> Self {
        let v = vec![0.0; hidden_dim];
        GruScratch {
            da_r: v.clone(),
            da_z: v.clone(),
            da_c: v.clone(),
            rh: v.clone(),
            d_rh: v,
        }
    }
}

impl GruWeights<'_> {
    /// Unchecked step writing `h_out` and filling `cache`.
    #[inline]
    pub(crate) fn step(&self, x: &[f64], h_prev: &[f64], cache: &mut GruCache, h_out: &mut [f64]) {
        cache.x.copy_from_slice(x);
        cache.h_prev.copy_from_slice(h_prev);
        self.step_slices(x, h_prev, &mut cache.r, &mut cache.z, &mut cache.c, h_out);
    }

    /// Gate activations into `r`, `z`, `c` and the new state into `h_out`.
    #[inline]
    pub(crate) fn step_slices(
        &self,
        x: &[f64],
        h_prev: &[f64],
        r: &mut [f64],
        z: &mut [f64],
        c: &mut [f64],
        h_out: &mut [f64],
    ) {
        r.copy_from_slice(self.b_r);
        self.w_xr.gemv_acc(x, r);
        self.w_hr.gemv_acc(h_prev, r);
        r.iter_mut().for_each(|v| *v = sigmoid(*v));

        z.copy_from_slice(self.b_z);
        self.w_xz.gemv_acc(x, z);
        self.w_hz.gemv_acc(h_prev, z);
        z.iter_mut().for_each(|v| *v = sigmoid(*v));

        // r ⊙ h staged in h_out, then overwritten by the new state.
        for ((o, &ri), &h) in h_out.iter_mut().zip(r.iter()).zip(h_prev) {
            *o = ri * h;
        }
        c.copy_from_slice(self.b_c);
        self.w_xc.gemv_acc(x, c);
        self.w_hc.gemv_acc(h_out, c);
        c.iter_mut().for_each(|v| *v = tanh(*v));

        for (i, o) in h_out.iter_mut().enumerate() {
            let zi = z[i];
            *o = (1.0 - zi) * h_prev[i] + zi * c[i];
        }
    }

    /// Reverse of one step, accumulating into `grads`; `dx` and `dh_prev` are overwritten.
    #[inline]
    pub(crate) fn step_backward(
        &self,
        rec: StepRecord<'_>,
        dh: &[f64],
        grads: &mut GruGrads,
        dx: &mut [f64],
        dh_prev: &mut [f64],
        scratch: &mut GruScratch,
    ) {
        let GruScratch {
            da_r,
            da_z,
            da_c,
            rh,
            d_rh,
        } = scratch;
        for i in 0..dh.len() {
            let (z, c, h) = (rec.z[i], rec.c[i], rec.h_prev[i]);
            da_z[i] = dh[i] * (c - h) * z * (1.0 - z);
            da_c[i] = dh[i] * z * (1.0 - c * c);
            dh_prev[i] = dh[i] * (1.0 - z);
            rh[i] = rec.r[i] * h;
            d_rh[i] = 0.0;
        }
        self.w_hc.gemv_t_acc(da_c, d_rh);
        for i in 0..dh.len() {
            let r = rec.r[i];
            da_r[i] = d_rh[i] * rec.h_prev[i] * r * (1.0 - r);
            dh_prev[i] += d_rh[i] * r;
        }
        self.w_hz.gemv_t_acc(da_z, dh_prev);
        self.w_hr.gemv_t_acc(da_r, dh_prev);

        dx.iter_mut().for_each(|v| *v = 0.0);
        self.w_xr.gemv_t_acc(da_r, dx);
        self.w_xz.gemv_t_acc(da_z, dx);
        self.w_xc.gemv_t_acc(da_c, dx);

        grads.w_xr.outer_acc(da_r, rec.x);
        grads.w_hr.outer_acc(da_r, rec.h_prev);
        grads.w_xz.outer_acc(da_z, rec.x);
        grads.w_hz.outer_acc(da_z, rec.h_prev);
        grads.w_xc.outer_acc(da_c, rec.x);
        grads.w_hc.outer_acc(da_c, rh);
        for i in 0..dh.len() {
            grads.b_r[i] += da_r[i];
            grads.b_z[i] += da_z[i];
            grads.b_c[i] += da_c[i];
        }
    }
}

impl GruGrads {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let (d, h) = (input_dim, hidden_dim);
        GruGrads {
            w_xr: Matrix::zeros(h, d),
            w_hr: Matrix::zeros(h, h),
            b_r: vec![0.0; h],
            w_xz: Matrix::zeros(h, d),
            w_hz: Matrix::zeros(h, h),
            b_z: vec![0.0; h],
            w_xc: Matrix::zeros(h, d),
            w_hc: Matrix::zeros(h, h),
            b_c: vec![0.0; h],
        }
    }

    /// Adds these buffers into the `{prefix}.*` entries of `set`.
    pub fn add_into(&self, prefix: &str, set: &mut GradientSet) -> Result<()> {
        let pairs: [(&str, &[f64]); 9] = [
            ("W_xr", self.w_xr.as_slice()),
            ("W_hr", self.w_hr.as_slice()),
            ("b_r", &self.b_r),
            ("W_xz", self.w_xz.as_slice()),
            ("W_hz", self.w_hz.as_slice()),
            ("b_z", &self.b_z),
            ("W_xc", self.w_xc.as_slice()),
            ("W_hc", self.w_hc.as_slice()),
            ("b_c", &self.b_c),
        ];
        for (leaf, src) in pairs {
            let name = format!("{prefix}.{leaf}");
            let dst = set
                .get_mut(&name)
                .ok_or_else(|| Error::usage("GruGrads::add_into", format!("missing gradient {name}")))?
                .as_mut_slice();
            if dst.len() != src.len() {
                return Err(Error::shape("GruGrads::add_into", name));
            }
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
        Ok(())
    }
}
