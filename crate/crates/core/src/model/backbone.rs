//! Window encoders shared by the estimator and the baselines.
//!
//! Every backbone consumes the same normalized `100 x 6` window and produces a
//! feature vector; a linear head on top turns it into one scalar.
//!
//! | kind | layers |
//! |------|--------|
//! | `gru` | one GRU layer, 16 hidden units, features = final hidden state |
//! | `ffn` | flattened 600 inputs → 32 → 16 → 16 |
//! | `cnn` | conv 6→32→64→32 (kernel 3, padding 1), global average pool |
//! | `tcn` | two residual blocks of causal convs (kernel 3, dilation 1 then 2), final step |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, MlpCache};
use super::types::{FRAME_DIM, HIDDEN_DIM, WINDOW_LEN};
use crate::error::{ensure_finite, Error, Result};
use crate::nn::conv::{adaptive_avg_pool_backward, Conv1d, Padding, Series};
use crate::nn::dense::leaky;
use crate::nn::gru::{GruCache, GruCell, GruGrads, GruScratch, GruTrace};
use crate::nn::{GradientSet, ParamSet, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneKind {
    Gru,
    Ffn,
    Cnn,
    Tcn,
}

impl BackboneKind {
    pub const ALL: [BackboneKind; 4] = [BackboneKind::Gru, BackboneKind::Ffn, BackboneKind::Cnn, BackboneKind::Tcn];

    pub fn as_str(&self) -> &'static str {
        match self {
            BackboneKind::Gru => "gru",
            BackboneKind::Ffn => "ffn",
            BackboneKind::Cnn => "cnn",
            BackboneKind::Tcn => "tcn",
        }
    }
}

impl fmt::Display for BackboneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BackboneKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gru" => Ok(BackboneKind::Gru),
            "ffn" | "fc" => Ok(BackboneKind::Ffn),
            "cnn" => Ok(BackboneKind::Cnn),
            "tcn" => Ok(BackboneKind::Tcn),
            other => Err(Error::Config(format!("unknown backbone {other:?} (expected gru, ffn, cnn or tcn)"))),
        }
    }
}

pub const FFN_WIDTHS: [usize; 3] = [32, 16, 16];
pub const CNN_CHANNELS: [usize; 3] = [32, 64, 32];
pub const DEFAULT_TCN_CHANNELS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
struct ConvLayer {
    geom: Conv1d,
    w: String,
    b: String,
}

impl ConvLayer {
    fn new(prefix: &str, in_channels: usize, out_channels: usize, kernel: usize, dilation: usize, padding: Padding) -> Self {
        ConvLayer {
            geom: Conv1d {
                in_channels,
                out_channels,
                kernel,
                dilation,
                padding,
            },
            w: format!("{prefix}.W"),
            b: format!("{prefix}.b"),
        }
    }

    fn shapes(&self, out: &mut Vec<(String, Shape)>) {
        out.push((
            self.w.clone(),
            Shape::Matrix {
                rows: self.geom.out_channels,
                cols: self.geom.kernel * self.geom.in_channels,
            },
        ));
        out.push((self.b.clone(), Shape::Vector { len: self.geom.out_channels }));
    }

    fn forward(&self, params: &ParamSet, x: &Series) -> Result<Series> {
        self.geom.forward(params.matrix(&self.w)?, params.vector(&self.b)?, x)
    }

    fn backward(&self, params: &ParamSet, x: &Series, dy: &Series, grads: &mut GradientSet) -> Result<Series> {
        let w = params.matrix(&self.w)?;
        let mut dw = std::mem::replace(grads.matrix_mut(&self.w)?, crate::nn::Matrix::zeros(0, 0));
        let mut db = std::mem::take(grads.vector_mut(&self.b)?);
        let out = self.geom.backward(w, x, dy, &mut dw, &mut db);
        *grads.matrix_mut(&self.w)? = dw;
        *grads.vector_mut(&self.b)? = db;
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
struct TcnBlock {
    conv1: ConvLayer,
    conv2: ConvLayer,
    skip: Option<ConvLayer>,
}

#[derive(Debug, Clone, PartialEq)]
enum Inner {
    Gru(GruCell),
    Ffn(Mlp),
    Cnn(Vec<ConvLayer>),
    Tcn(Vec<TcnBlock>),
}

/// A window encoder bound to a parameter prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct Backbone {
    kind: BackboneKind,
    slope: f64,
    inner: Inner,
}

/// Intermediates recorded by [`Backbone::forward`].
#[derive(Debug, Clone)]
pub enum BackboneCache {
    Gru(GruTrace),
    Ffn(MlpCache),
    Cnn {
        inputs: Vec<Series>,
        pre: Vec<Series>,
    },
    Tcn(Vec<TcnCache>),
}

#[derive(Debug, Clone)]
pub struct TcnCache {
    input: Series,
    pre1: Series,
    act1: Series,
    pre2: Series,
}

fn activate(s: &Series, slope: f64) -> Series {
    let mut out = s.clone();
    out.as_mut_slice().iter_mut().for_each(|v| *v = leaky(*v, slope));
    out
}

fn activate_backward(pre: &Series, dy: &mut Series, slope: f64) {
    for (g, &z) in dy.as_mut_slice().iter_mut().zip(pre.as_slice()) {
        if z < 0.0 {
            *g *= slope;
        }
    }
}

fn window_series(window: &[[f64; FRAME_DIM]]) -> Series {
    Series::from_rows(window)
}

impl Backbone {
    /// Parameters are named `{prefix}.{kind}.…`.
    pub fn new(kind: BackboneKind, prefix: &str, slope: f64, tcn_channels: usize) -> Self {
        let base = format!("{prefix}.{kind}");
        let inner = match kind {
            BackboneKind::Gru => Inner::Gru(GruCell::new(base, FRAME_DIM, HIDDEN_DIM)),
            BackboneKind::Ffn => {
                let mut dims = vec![FRAME_DIM * WINDOW_LEN];
                dims.extend(FFN_WIDTHS);
                Inner::Ffn(Mlp::new(base, dims, slope, true))
            }
            BackboneKind::Cnn => {
                let mut cin = FRAME_DIM;
                let layers = CNN_CHANNELS
                    .iter()
                    .enumerate()
                    .map(|(i, &cout)| {
                        let l = ConvLayer::new(&format!("{base}.conv{i}"), cin, cout, 3, 1, Padding::symmetric(1));
                        cin = cout;
                        l
                    })
                    .collect();
                Inner::Cnn(layers)
            }
            BackboneKind::Tcn => {
                let c = tcn_channels;
                let blocks = (0..2)
                    .map(|i| {
                        let cin = if i == 0 { FRAME_DIM } else { c };
                        let p = format!("{base}.block{i}");
                        TcnBlock {
                            conv1: ConvLayer::new(&format!("{p}.conv0"), cin, c, 3, 1, Padding::causal(3, 1)),
                            conv2: ConvLayer::new(&format!("{p}.conv1"), c, c, 3, 2, Padding::causal(3, 2)),
                            skip: (cin != c).then(|| ConvLayer::new(&format!("{p}.skip"), cin, c, 1, 1, Padding::symmetric(0))),
                        }
                    })
                    .collect();
                Inner::Tcn(blocks)
            }
        };
        Backbone { kind, slope, inner }
    }

    pub fn kind(&self) -> BackboneKind {
        self.kind
    }

    pub fn feature_dim(&self) -> usize {
        match &self.inner {
            Inner::Gru(cell) => cell.hidden_dim,
            Inner::Ffn(mlp) => mlp.output_dim(),
            Inner::Cnn(layers) => layers.last().unwrap().geom.out_channels,
            Inner::Tcn(blocks) => blocks.last().unwrap().conv2.geom.out_channels,
        }
    }

    pub(crate) fn gru_cell(&self) -> Option<&GruCell> {
        match &self.inner {
            Inner::Gru(cell) => Some(cell),
            _ => None,
        }
    }

    pub fn param_shapes(&self) -> Vec<(String, Shape)> {
        let mut out = Vec::new();
        match &self.inner {
            Inner::Gru(cell) => out.extend(cell.param_shapes()),
            Inner::Ffn(mlp) => out.extend(mlp.param_shapes()),
            Inner::Cnn(layers) => layers.iter().for_each(|l| l.shapes(&mut out)),
            Inner::Tcn(blocks) => {
                for b in blocks {
                    b.conv1.shapes(&mut out);
                    b.conv2.shapes(&mut out);
                    if let Some(s) = &b.skip {
                        s.shapes(&mut out);
                    }
                }
            }
        }
        out
    }

    fn check_window(window: &[[f64; FRAME_DIM]]) -> Result<()> {
        if window.len() != WINDOW_LEN {
            return Err(Error::shape(
                "backbone",
                format!("window has {} frames, expected {WINDOW_LEN}", window.len()),
            ));
        }
        Ok(())
    }

    /// Features without recording intermediates.
    pub fn features(&self, params: &ParamSet, window: &[[f64; FRAME_DIM]]) -> Result<Vec<f64>> {
        Self::check_window(window)?;
        match &self.inner {
            Inner::Gru(cell) => {
                let w = cell.weights(params)?;
                let mut scratch = GruCache::empty_for(cell);
                let mut h = vec![0.0; cell.hidden_dim];
                let mut next = vec![0.0; cell.hidden_dim];
                for x in window {
                    w.step(x, &h, &mut scratch, &mut next);
                    std::mem::swap(&mut h, &mut next);
                }
                ensure_finite("gru_window", &h)?;
                Ok(h)
            }
            Inner::Ffn(mlp) => mlp.predict(params, window.as_flattened()),
            Inner::Cnn(_) | Inner::Tcn(_) => self.forward(params, window).map(|(f, _)| f),
        }
    }

    pub fn forward(&self, params: &ParamSet, window: &[[f64; FRAME_DIM]]) -> Result<(Vec<f64>, BackboneCache)> {
        Self::check_window(window)?;
        match &self.inner {
            Inner::Gru(cell) => {
                let w = cell.weights(params)?;
                let mut trace = GruTrace::new(cell.input_dim, cell.hidden_dim, window.len());
                let mut h = vec![0.0; cell.hidden_dim];
                for (t, x) in window.iter().enumerate() {
                    trace.run_step(&w, t, x, &mut h);
                }
                ensure_finite("gru_window", &h)?;
                Ok((h, BackboneCache::Gru(trace)))
            }
            Inner::Ffn(mlp) => {
                let (y, cache) = mlp.forward(params, window.as_flattened())?;
                Ok((y, BackboneCache::Ffn(cache)))
            }
            Inner::Cnn(layers) => {
                let mut x = window_series(window);
                let (mut inputs, mut pre) = (Vec::new(), Vec::new());
                for l in layers {
                    let z = l.forward(params, &x)?;
                    let a = activate(&z, self.slope);
                    inputs.push(std::mem::replace(&mut x, a));
                    pre.push(z);
                }
                let pooled = crate::nn::adaptive_avg_pool(&x)?;
                Ok((pooled.into_inner(), BackboneCache::Cnn { inputs, pre }))
            }
            Inner::Tcn(blocks) => {
                let mut x = window_series(window);
                let mut caches = Vec::new();
                for b in blocks {
                    let pre1 = b.conv1.forward(params, &x)?;
                    let act1 = activate(&pre1, self.slope);
                    let pre2 = b.conv2.forward(params, &act1)?;
                    let mut out = activate(&pre2, self.slope);
                    let skip = match &b.skip {
                        Some(s) => s.forward(params, &x)?,
                        None => x.clone(),
                    };
                    for (o, s) in out.as_mut_slice().iter_mut().zip(skip.as_slice()) {
                        *o += s;
                    }
                    caches.push(TcnCache { input: x, pre1, act1, pre2 });
                    x = out;
                }
                let last = x.step(x.len() - 1).to_vec();
                ensure_finite("tcn_forward", &last)?;
                Ok((last, BackboneCache::Tcn(caches)))
            }
        }
    }

    /// Accumulates parameter gradients for upstream feature gradient `dfeat`.
    pub fn backward(&self, params: &ParamSet, cache: &BackboneCache, dfeat: &[f64], grads: &mut GradientSet) -> Result<()> {
        if dfeat.len() != self.feature_dim() {
            return Err(Error::shape("backbone_backward", "feature gradient length"));
        }
        match (&self.inner, cache) {
            (Inner::Gru(cell), BackboneCache::Gru(trace)) => {
                if trace.dims() != (cell.input_dim, cell.hidden_dim) {
                    return Err(Error::usage("backbone_backward", "trace was recorded by a different GRU"));
                }
                let w = cell.weights(params)?;
                let mut g = GruGrads::zeros(cell.input_dim, cell.hidden_dim);
                let mut scratch = GruScratch::new(cell.hidden_dim);
                let mut dh = dfeat.to_vec();
                let mut dh_prev = vec![0.0; cell.hidden_dim];
                let mut dx = vec![0.0; cell.input_dim];
                for t in (0..trace.steps()).rev() {
                    w.step_backward(trace.record(t), &dh, &mut g, &mut dx, &mut dh_prev, &mut scratch);
                    std::mem::swap(&mut dh, &mut dh_prev);
                }
                g.add_into(&cell.prefix, grads)
            }
            (Inner::Ffn(mlp), BackboneCache::Ffn(c)) => mlp.backward(params, c, dfeat, grads).map(|_| ()),
            (Inner::Cnn(layers), BackboneCache::Cnn { inputs, pre }) => {
                let len = pre.last().unwrap().len();
                let mut d = adaptive_avg_pool_backward(len, dfeat);
                for (i, l) in layers.iter().enumerate().rev() {
                    activate_backward(&pre[i], &mut d, self.slope);
                    d = l.backward(params, &inputs[i], &d, grads)?;
                }
                Ok(())
            }
            (Inner::Tcn(blocks), BackboneCache::Tcn(caches)) => {
                let last = caches.last().unwrap();
                let mut d = Series::zeros(last.pre2.len(), self.feature_dim());
                d.step_mut(last.pre2.len() - 1).copy_from_slice(dfeat);
                for (b, c) in blocks.iter().zip(caches).rev() {
                    let dskip = d.clone();
                    activate_backward(&c.pre2, &mut d, self.slope);
                    let mut da1 = b.conv2.backward(params, &c.act1, &d, grads)?;
                    activate_backward(&c.pre1, &mut da1, self.slope);
                    let mut dx = b.conv1.backward(params, &c.input, &da1, grads)?;
                    let dx_skip = match &b.skip {
                        Some(s) => s.backward(params, &c.input, &dskip, grads)?,
                        None => dskip,
                    };
                    for (a, s) in dx.as_mut_slice().iter_mut().zip(dx_skip.as_slice()) {
                        *a += s;
                    }
                    d = dx;
                }
                Ok(())
            }
            _ => Err(Error::usage("backbone_backward", "cache was recorded by a different backbone")),
        }
    }
}

impl GruCache {
    pub(crate) fn empty_for(cell: &GruCell) -> Self {
        GruCache::empty(cell.input_dim, cell.hidden_dim)
    }
}

/// Backbone followed by a linear head `feature_dim → 1` named `{prefix}.fc.*`.
#[derive(Debug, Clone, PartialEq)]
pub struct Regressor {
    pub backbone: Backbone,
    head_w: String,
    head_b: String,
}

#[derive(Debug, Clone)]
pub struct RegressorCache {
    pub features: Vec<f64>,
    pub backbone: BackboneCache,
}

impl Regressor {
    pub fn new(kind: BackboneKind, prefix: &str, slope: f64, tcn_channels: usize) -> Self {
        Regressor {
            backbone: Backbone::new(kind, prefix, slope, tcn_channels),
            head_w: format!("{prefix}.fc.W"),
            head_b: format!("{prefix}.fc.b"),
        }
    }

    pub fn param_shapes(&self) -> Vec<(String, Shape)> {
        let mut s = self.backbone.param_shapes();
        s.push((
            self.head_w.clone(),
            Shape::Matrix {
                rows: 1,
                cols: self.backbone.feature_dim(),
            },
        ));
        s.push((self.head_b.clone(), Shape::Vector { len: 1 }));
        s
    }

    /// Scalar readout of a feature vector.
    #[inline]
    pub fn head(&self, params: &ParamSet, features: &[f64]) -> Result<f64> {
        let w = params.matrix(&self.head_w)?;
        let b = params.vector(&self.head_b)?;
        crate::nn::dense::check_fc_shapes(w, b, features)?;
        let y = b[0] + crate::nn::tensor::dot(w.row(0), features);
        ensure_finite("regressor_head", &[y])?;
        Ok(y)
    }

    pub fn predict(&self, params: &ParamSet, window: &[[f64; FRAME_DIM]]) -> Result<f64> {
        let f = self.backbone.features(params, window)?;
        self.head(params, &f)
    }

    pub fn forward(&self, params: &ParamSet, window: &[[f64; FRAME_DIM]]) -> Result<(f64, RegressorCache)> {
        let (features, backbone) = self.backbone.forward(params, window)?;
        let y = self.head(params, &features)?;
        Ok((y, RegressorCache { features, backbone }))
    }

    pub fn backward(&self, params: &ParamSet, cache: &RegressorCache, dy: f64, grads: &mut GradientSet) -> Result<()> {
        if dy == 0.0 {
            return Ok(());
        }
        grads.matrix_mut(&self.head_w)?.outer_acc(&[dy], &cache.features);
        grads.vector_mut(&self.head_b)?[0] += dy;
        let w = params.matrix(&self.head_w)?;
        let dfeat: Vec<f64> = w.row(0).iter().map(|v| v * dy).collect();
        self.backbone.backward(params, &cache.backbone, &dfeat, grads)
    }
}
