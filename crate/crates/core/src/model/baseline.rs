//! Direct-regression comparison models.
//!
//! `BaselineNoQ` maps a kinematic window straight to the moment. `BaselineFusion`
//! additionally feeds normalized body parameters through a small branch whose
//! output is concatenated with the backbone features before the linear head.

use super::arch::{Architecture, ModelFamily};
use super::backbone::{Backbone, BackboneCache, Regressor, RegressorCache};
use super::gmf::check_param_layout;
use super::mlp::{Mlp, MlpCache};
use super::norm::Normalization;
use super::types::{BodyParams, KinematicWindow, FRAME_DIM};
use crate::error::{ensure_finite, Error, Result};
use crate::nn::tensor::dot;
use crate::nn::{init_params, GradientSet, ParamSet, Shape};

pub const NET: &str = "net";

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct FusionNet {
    backbone: Backbone,
    q_branch: Mlp,
    head_w: String,
    head_b: String,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum BaselineNet {
    NoQ(Regressor),
    Fusion(FusionNet),
}

#[derive(Debug, Clone)]
pub(crate) enum BaselineCache {
    NoQ(RegressorCache),
    Fusion {
        features: Vec<f64>,
        backbone: BackboneCache,
        q_out: Vec<f64>,
        q_cache: MlpCache,
    },
}

impl BaselineNet {
    fn new(arch: &Architecture) -> Result<Self> {
        match arch.family {
            ModelFamily::BaselineNoQ => Ok(BaselineNet::NoQ(Regressor::new(
                arch.backbone,
                NET,
                arch.leaky_slope,
                arch.tcn_channels,
            ))),
            ModelFamily::BaselineFusion => Ok(BaselineNet::Fusion(FusionNet {
                backbone: Backbone::new(arch.backbone, NET, arch.leaky_slope, arch.tcn_channels),
                q_branch: Mlp::new(
                    format!("{NET}.q"),
                    vec![2, arch.q_branch_width, arch.q_branch_width],
                    arch.leaky_slope,
                    true,
                ),
                head_w: format!("{NET}.fc.W"),
                head_b: format!("{NET}.fc.b"),
            })),
            ModelFamily::Gmf => Err(Error::Config("a GMF architecture is not a baseline".into())),
        }
    }

    fn shapes(&self) -> Vec<(String, Shape)> {
        match self {
            BaselineNet::NoQ(r) => r.param_shapes(),
            BaselineNet::Fusion(f) => {
                let mut s = f.backbone.param_shapes();
                s.extend(f.q_branch.param_shapes());
                let cols = f.backbone.feature_dim() + f.q_branch.output_dim();
                s.push((f.head_w.clone(), Shape::Matrix { rows: 1, cols }));
                s.push((f.head_b.clone(), Shape::Vector { len: 1 }));
                s
            }
        }
    }

    fn fusion_head(f: &FusionNet, params: &ParamSet, features: &[f64], q_out: &[f64]) -> Result<f64> {
        let w = params.matrix(&f.head_w)?;
        let b = params.vector(&f.head_b)?;
        let nf = features.len();
        if w.cols() != nf + q_out.len() {
            return Err(Error::shape("baseline_forward", "fusion head width"));
        }
        let row = w.row(0);
        let y = b[0] + dot(&row[..nf], features) + dot(&row[nf..], q_out);
        ensure_finite("baseline_forward", &[y])?;
        Ok(y)
    }

    pub(crate) fn predict(&self, params: &ParamSet, window: &[[f64; FRAME_DIM]], q: [f64; 2]) -> Result<f64> {
        match self {
            BaselineNet::NoQ(r) => r.predict(params, window),
            BaselineNet::Fusion(f) => {
                let features = f.backbone.features(params, window)?;
                let q_out = f.q_branch.predict(params, &q)?;
                Self::fusion_head(f, params, &features, &q_out)
            }
        }
    }

    pub(crate) fn forward(&self, params: &ParamSet, window: &[[f64; FRAME_DIM]], q: [f64; 2]) -> Result<(f64, BaselineCache)> {
        match self {
            BaselineNet::NoQ(r) => {
                let (y, c) = r.forward(params, window)?;
                Ok((y, BaselineCache::NoQ(c)))
            }
            BaselineNet::Fusion(f) => {
                let (features, backbone) = f.backbone.forward(params, window)?;
                let (q_out, q_cache) = f.q_branch.forward(params, &q)?;
                let y = Self::fusion_head(f, params, &features, &q_out)?;
                Ok((
                    y,
                    BaselineCache::Fusion {
                        features,
                        backbone,
                        q_out,
                        q_cache,
                    },
                ))
            }
        }
    }

    pub(crate) fn backward(&self, params: &ParamSet, cache: &BaselineCache, dy: f64, grads: &mut GradientSet) -> Result<()> {
        match (self, cache) {
            (BaselineNet::NoQ(r), BaselineCache::NoQ(c)) => r.backward(params, c, dy, grads),
            (
                BaselineNet::Fusion(f),
                BaselineCache::Fusion {
                    features,
                    backbone,
                    q_out,
                    q_cache,
                },
            ) => {
                let mut joined = features.clone();
                joined.extend_from_slice(q_out);
                grads.matrix_mut(&f.head_w)?.outer_acc(&[dy], &joined);
                grads.vector_mut(&f.head_b)?[0] += dy;
                let row = params.matrix(&f.head_w)?.row(0);
                let nf = features.len();
                let dfeat: Vec<f64> = row[..nf].iter().map(|w| w * dy).collect();
                let dq: Vec<f64> = row[nf..].iter().map(|w| w * dy).collect();
                f.q_branch.backward(params, q_cache, &dq, grads)?;
                f.backbone.backward(params, backbone, &dfeat, grads)
            }
            _ => Err(Error::usage("baseline_backward", "cache was recorded by a different model")),
        }
    }
}

/// A direct-regression model with its normalization statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    arch: Architecture,
    params: ParamSet,
    norm: Normalization,
    net: BaselineNet,
}

impl BaselineModel {
    pub fn init(arch: Architecture, norm: Normalization, seed: u64) -> Result<Self> {
        arch.validate()?;
        let net = BaselineNet::new(&arch)?;
        let params = init_params(&net.shapes(), seed);
        Ok(BaselineModel { arch, params, norm, net })
    }

    pub fn from_parts(arch: Architecture, params: ParamSet, norm: Normalization) -> Result<Self> {
        arch.validate()?;
        let net = BaselineNet::new(&arch)?;
        check_param_layout(&params, &net.shapes())?;
        Ok(BaselineModel { arch, params, norm, net })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn norm(&self) -> &Normalization {
        &self.norm
    }

    pub(crate) fn net(&self) -> &BaselineNet {
        &self.net
    }

    pub fn uses_body_params(&self) -> bool {
        self.arch.family == ModelFamily::BaselineFusion
    }

    /// Moment (Nm/kg) for one window. `q` is required by the fusion variant
    /// and ignored by the kinematics-only one.
    pub fn predict(&self, window: KinematicWindow<'_>, q: Option<&BodyParams>) -> Result<f64> {
        let x: Vec<[f64; FRAME_DIM]> = window
            .frames()
            .iter()
            .map(|f| {
                f.check_finite()?;
                Ok(self.norm.frame(f))
            })
            .collect::<Result<_>>()?;
        let qn = match (q, self.uses_body_params()) {
            (Some(q), true) => {
                ensure_finite("baseline_forward", &[q.mass, q.height])?;
                self.norm.body(q)
            }
            (None, true) => {
                return Err(Error::usage("baseline_forward", "the fusion baseline needs body parameters"));
            }
            _ => [0.0; 2],
        };
        self.net.predict(&self.params, &x, qn)
    }
}

/// Moment prediction of a baseline for one window.
pub fn baseline_forward(model: &BaselineModel, window: KinematicWindow<'_>, q: Option<&BodyParams>) -> Result<f64> {
    model.predict(window, q)
}
