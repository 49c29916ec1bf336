//! Estimator networks, normalization and checkpoints.

pub mod arch;
pub mod backbone;
pub mod baseline;
pub mod checkpoint;
pub mod gmf;
pub mod mlp;
pub mod norm;
pub mod types;

pub use arch::{Architecture, ModelFamily};
pub use backbone::{Backbone, BackboneKind, Regressor};
pub use baseline::{baseline_forward, BaselineModel};
pub use checkpoint::{load_checkpoint, load_sidecar, save_checkpoint, Model, Sidecar};
pub use gmf::{GmfModel, GmfStream};
pub use mlp::Mlp;
pub use norm::{Normalization, Stat};
pub use types::{BodyParams, HiddenState, KinematicFrame, KinematicWindow, FRAME_DIM, HIDDEN_DIM, WINDOW_LEN};
