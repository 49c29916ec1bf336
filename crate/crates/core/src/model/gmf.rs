//! The generator / estimator / decoder triple.
//!
//! Training uses all three networks: the generator maps body parameters and
//! the measured moment to a scalar latent target, the estimator learns to
//! predict that target from kinematics, and the decoder maps it back to a
//! moment. Prediction only uses the estimator and the decoder.

use super::arch::{Architecture, ModelFamily};
use super::backbone::{BackboneKind, Regressor};
use super::mlp::Mlp;
use super::norm::Normalization;
use super::types::{BodyParams, HiddenState, KinematicFrame, KinematicWindow, FRAME_DIM};
use crate::error::{ensure_finite, Error, Result};
use crate::nn::gru::{GruCache, GruWeights};
use crate::nn::{init_params, ParamSet, Shape};

pub const GENERATOR: &str = "generator";
pub const ESTIMATOR: &str = "estimator";
pub const DECODER: &str = "decoder";

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct GmfNets {
    pub generator: Mlp,
    pub decoder: Mlp,
    pub estimator: Regressor,
}

impl GmfNets {
    fn new(arch: &Architecture) -> Self {
        GmfNets {
            generator: Mlp::new(GENERATOR, arch.mlp_dims(), arch.leaky_slope, false),
            decoder: Mlp::new(DECODER, arch.mlp_dims(), arch.leaky_slope, false),
            estimator: Regressor::new(arch.backbone, ESTIMATOR, arch.leaky_slope, arch.tcn_channels),
        }
    }

    fn shapes(&self) -> Vec<(String, Shape)> {
        let mut s = self.generator.param_shapes();
        s.extend(self.decoder.param_shapes());
        s.extend(self.estimator.param_shapes());
        s
    }
}

/// A trained (or freshly initialized) moment estimator with its normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct GmfModel {
    arch: Architecture,
    params: ParamSet,
    norm: Normalization,
    nets: GmfNets,
}

/// Checks that `params` holds exactly `shapes`.
pub(crate) fn check_param_layout(params: &ParamSet, shapes: &[(String, Shape)]) -> Result<()> {
    let expected = ParamSet::zeros(shapes.iter().map(|(n, s)| (n.as_str(), *s)));
    expected.check_congruent(params, "model parameters")
}

impl GmfModel {
    /// Seeded initialization of all three networks.
    pub fn init(arch: Architecture, norm: Normalization, seed: u64) -> Result<Self> {
        arch.validate()?;
        if arch.family != ModelFamily::Gmf {
            return Err(Error::Config(format!("{} is not a GMF architecture", arch.family.as_str())));
        }
        let nets = GmfNets::new(&arch);
        let params = init_params(&nets.shapes(), seed);
        Ok(GmfModel { arch, params, norm, nets })
    }

    pub fn from_parts(arch: Architecture, params: ParamSet, norm: Normalization) -> Result<Self> {
        arch.validate()?;
        if arch.family != ModelFamily::Gmf {
            return Err(Error::Config(format!("{} is not a GMF architecture", arch.family.as_str())));
        }
        let nets = GmfNets::new(&arch);
        check_param_layout(&params, &nets.shapes())?;
        Ok(GmfModel { arch, params, norm, nets })
    }

    /// Same generator and decoder, freshly initialized estimator of another kind.
    pub fn with_new_estimator(&self, kind: BackboneKind, tcn_channels: usize, seed: u64) -> Result<Self> {
        let mut arch = self.arch.clone();
        arch.backbone = kind;
        arch.tcn_channels = tcn_channels;
        let nets = GmfNets::new(&arch);
        let mut params = self.params.clone();
        params.remove_prefix(&format!("{ESTIMATOR}."));
        params.extend(init_params(&nets.estimator.param_shapes(), seed));
        Self::from_parts(arch, params, self.norm)
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

    pub(crate) fn nets(&self) -> &GmfNets {
        &self.nets
    }

    /// Parameters of one of the three networks (`"generator"`, `"estimator"`, `"decoder"`).
    pub fn network_params(&self, network: &str) -> ParamSet {
        self.params.subset(&format!("{network}."))
    }

    pub(crate) fn generator_input(&self, q: &BodyParams, moment: f64) -> [f64; 3] {
        let [m, h] = self.norm.body(q);
        [m, h, self.norm.moment.apply(moment)]
    }

    pub(crate) fn decoder_input(&self, q: &BodyParams, gmf: f64) -> [f64; 3] {
        let [m, h] = self.norm.body(q);
        [m, h, gmf]
    }

    /// Latent target for body parameters `q` and measured moment `moment` (Nm/kg).
    pub fn generator_forward(&self, q: &BodyParams, moment: f64) -> Result<f64> {
        check_inputs(q, &[moment])?;
        let y = self.nets.generator.predict(&self.params, &self.generator_input(q, moment))?;
        Ok(y[0])
    }

    /// Moment (Nm/kg) decoded from a latent value.
    pub fn decoder_forward(&self, q: &BodyParams, gmf: f64) -> Result<f64> {
        check_inputs(q, &[gmf])?;
        let y = self.nets.decoder.predict(&self.params, &self.decoder_input(q, gmf))?;
        Ok(y[0])
    }

    pub fn normalize_window(&self, window: KinematicWindow<'_>) -> Result<Vec<[f64; FRAME_DIM]>> {
        window
            .frames()
            .iter()
            .map(|f| {
                f.check_finite()?;
                Ok(self.norm.frame(f))
            })
            .collect()
    }

    /// Latent estimate from a full window, starting the recurrence from zero.
    pub fn estimator_window(&self, window: KinematicWindow<'_>) -> Result<f64> {
        let x = self.normalize_window(window)?;
        self.nets.estimator.predict(&self.params, &x)
    }

    /// One streaming step: normalize the frame, advance the GRU, read out.
    pub fn estimator_step(&self, frame: &KinematicFrame, h_prev: &HiddenState) -> Result<(f64, HiddenState)> {
        let mut stream = self.stream_from(h_prev.clone())?;
        let g = stream.push(frame)?;
        Ok((g, stream.into_hidden()))
    }

    /// Moment prediction from kinematics and body parameters; the generator is not used.
    pub fn predict_moment(&self, window: KinematicWindow<'_>, q: &BodyParams) -> Result<f64> {
        let g = self.estimator_window(window)?;
        self.decoder_forward(q, g)
    }

    /// Streaming estimator starting from a zero hidden state.
    pub fn stream(&self) -> Result<GmfStream<'_>> {
        self.stream_from(HiddenState::zeros())
    }

    pub fn stream_from(&self, hidden: HiddenState) -> Result<GmfStream<'_>> {
        let cell = self.nets.estimator.backbone.gru_cell().ok_or_else(|| {
            Error::usage(
                "estimator_step",
                format!("streaming needs a GRU estimator, this model uses {}", self.arch.backbone),
            )
        })?;
        let weights = cell.weights(&self.params)?;
        if hidden.0.len() != cell.hidden_dim {
            return Err(Error::shape("estimator_step", "hidden state length"));
        }
        Ok(GmfStream {
            model: self,
            weights,
            scratch: GruCache::empty_for(cell),
            next: vec![0.0; cell.hidden_dim],
            hidden: hidden.0,
        })
    }
}

fn check_inputs(q: &BodyParams, values: &[f64]) -> Result<()> {
    ensure_finite("model input", &[q.mass, q.height])?;
    ensure_finite("model input", values)
}

/// Caller-owned streaming state over a shared model.
#[derive(Debug)]
pub struct GmfStream<'m> {
    model: &'m GmfModel,
    weights: GruWeights<'m>,
    scratch: GruCache,
    next: Vec<f64>,
    hidden: Vec<f64>,
}

impl GmfStream<'_> {
    /// Advances one frame and returns the latent estimate.
    pub fn push(&mut self, frame: &KinematicFrame) -> Result<f64> {
        frame.check_finite()?;
        let x = self.model.norm.frame(frame);
        self.weights.step(&x, &self.hidden, &mut self.scratch, &mut self.next);
        ensure_finite("estimator_step", &self.next)?;
        std::mem::swap(&mut self.hidden, &mut self.next);
        self.model.nets.estimator.head(&self.model.params, &self.hidden)
    }

    /// Advances one frame and decodes the moment.
    pub fn push_moment(&mut self, frame: &KinematicFrame, q: &BodyParams) -> Result<f64> {
        let g = self.push(frame)?;
        self.model.decoder_forward(q, g)
    }

    pub fn hidden(&self) -> &[f64] {
        &self.hidden
    }

    pub fn into_hidden(self) -> HiddenState {
        HiddenState(self.hidden)
    }

    pub fn reset(&mut self) {
        self.hidden.iter_mut().for_each(|v| *v = 0.0);
    }
}
