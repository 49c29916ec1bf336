//! Fully connected stack with LeakyReLU between layers.

use crate::error::{ensure_finite, Error, Result};
use crate::nn::dense::{check_fc_shapes, leaky};
use crate::nn::{GradientSet, Matrix, ParamSet, Shape};

/// Layer `i` maps `dims[i] → dims[i+1]` with parameters `{prefix}.l{i}.W` and
/// `{prefix}.l{i}.b`. Every layer except the last is followed by LeakyReLU;
/// the last one too when `activate_output` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    prefix: String,
    dims: Vec<usize>,
    slope: f64,
    activate_output: bool,
    names: Vec<(String, String)>,
}

/// Per-layer inputs and pre-activations recorded by [`Mlp::forward`].
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn new(prefix: impl Into<String>, dims: Vec<usize>, slope: f64, activate_output: bool) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least an input and an output width");
        let prefix = prefix.into();
        let names = (0..dims.len() - 1)
            .map(|i| (format!("{prefix}.l{i}.W"), format!("{prefix}.l{i}.b")))
            .collect();
        Mlp {
            prefix,
            dims,
            slope,
            activate_output,
            names,
        }
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn param_shapes(&self) -> Vec<(String, Shape)> {
        let mut out = Vec::new();
        for (i, (w, b)) in self.names.iter().enumerate() {
            out.push((
                w.clone(),
                Shape::Matrix {
                    rows: self.dims[i + 1],
                    cols: self.dims[i],
                },
            ));
            out.push((b.clone(), Shape::Vector { len: self.dims[i + 1] }));
        }
        out
    }

    fn layer<'a>(&self, params: &'a ParamSet, i: usize) -> Result<(&'a Matrix, &'a [f64])> {
        let (w, b) = &self.names[i];
        Ok((params.matrix(w)?, params.vector(b)?))
    }

    fn activates(&self, i: usize) -> bool {
        i + 1 < self.names.len() || self.activate_output
    }

    /// Forward pass without recording intermediates.
    pub fn predict(&self, params: &ParamSet, x: &[f64]) -> Result<Vec<f64>> {
        let mut h = x.to_vec();
        for i in 0..self.names.len() {
            let (w, b) = self.layer(params, i)?;
            check_fc_shapes(w, b, &h)?;
            let mut y = b.to_vec();
            w.gemv_acc(&h, &mut y);
            if self.activates(i) {
                y.iter_mut().for_each(|v| *v = leaky(*v, self.slope));
            }
            h = y;
        }
        ensure_finite("mlp_forward", &h)?;
        Ok(h)
    }

    pub fn forward(&self, params: &ParamSet, x: &[f64]) -> Result<(Vec<f64>, MlpCache)> {
        let mut cache = MlpCache::default();
        let mut h = x.to_vec();
        for i in 0..self.names.len() {
            let (w, b) = self.layer(params, i)?;
            check_fc_shapes(w, b, &h)?;
            let mut y = b.to_vec();
            w.gemv_acc(&h, &mut y);
            cache.inputs.push(h);
            if self.activates(i) {
                cache.pre.push(y.clone());
                y.iter_mut().for_each(|v| *v = leaky(*v, self.slope));
            } else {
                cache.pre.push(Vec::new());
            }
            h = y;
        }
        ensure_finite("mlp_forward", &h)?;
        Ok((h, cache))
    }

    /// Accumulates parameter gradients into `grads` and returns the input gradient.
    pub fn backward(&self, params: &ParamSet, cache: &MlpCache, dy: &[f64], grads: &mut GradientSet) -> Result<Vec<f64>> {
        if cache.inputs.len() != self.names.len() {
            return Err(Error::usage("mlp_backward", "cache does not belong to this network"));
        }
        let mut d = dy.to_vec();
        for i in (0..self.names.len()).rev() {
            let (w, _) = self.layer(params, i)?;
            if d.len() != w.rows() {
                return Err(Error::shape("mlp_backward", format!("layer {i} upstream gradient length")));
            }
            if self.activates(i) {
                for (g, &z) in d.iter_mut().zip(&cache.pre[i]) {
                    if z < 0.0 {
                        *g *= self.slope;
                    }
                }
            }
            let (wn, bn) = &self.names[i];
            grads.matrix_mut(wn)?.outer_acc(&d, &cache.inputs[i]);
            for (g, v) in grads.vector_mut(bn)?.iter_mut().zip(&d) {
                *g += v;
            }
            let mut dx = vec![0.0; w.cols()];
            w.gemv_t_acc(&d, &mut dx);
            d = dx;
        }
        Ok(d)
    }
}
