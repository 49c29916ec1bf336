//! Inputs and outputs of the moment estimator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-step input dimension.
pub const FRAME_DIM: usize = 6;
/// Frames per estimation window.
pub const WINDOW_LEN: usize = 100;
/// GRU hidden width.
pub const HIDDEN_DIM: usize = 16;

/// One time step of bilateral hip kinematics:
/// `[angle_l, angle_r, velocity_l, velocity_r, acceleration_l, acceleration_r]`
/// in rad, rad/s and rad/s².
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KinematicFrame(pub [f64; FRAME_DIM]);

impl KinematicFrame {
    pub fn check_finite(&self) -> Result<()> {
        if self.0.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite {
                op: "KinematicFrame",
                location: Some(format!("{:?}", self.0)),
            })
        }
    }
}

/// Exactly [`WINDOW_LEN`] consecutive frames of one trial, oldest first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicWindow<'a> {
    frames: &'a [KinematicFrame],
}

impl<'a> KinematicWindow<'a> {
    pub fn new(frames: &'a [KinematicFrame]) -> Result<Self> {
        if frames.len() != WINDOW_LEN {
            return Err(Error::shape(
                "KinematicWindow",
                format!("window needs {WINDOW_LEN} frames, got {}", frames.len()),
            ));
        }
        Ok(KinematicWindow { frames })
    }

    pub fn frames(&self) -> &'a [KinematicFrame] {
        self.frames
    }

    pub fn newest(&self) -> &'a KinematicFrame {
        &self.frames[WINDOW_LEN - 1]
    }
}

/// Subject mass (kg) and height (m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyParams {
    pub mass: f64,
    pub height: f64,
}

impl BodyParams {
    pub fn new(mass: f64, height: f64) -> Result<Self> {
        let q = BodyParams { mass, height };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass.is_finite() && self.mass > 0.0 && self.height.is_finite() && self.height > 0.0) {
            return Err(Error::Config(format!(
                "body parameters must be positive and finite, got m={} h={}",
                self.mass, self.height
            )));
        }
        Ok(())
    }
}

impl std::str::FromStr for BodyParams {
    type Err = Error;

    /// Parses `"m=70,h=1.7"`.
    fn from_str(s: &str) -> Result<Self> {
        let (mut m, mut h) = (None, None);
        for part in s.split(',') {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value in {s:?}")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad number {v:?} in {s:?}")))?;
            match k.trim() {
                "m" | "mass" => m = Some(v),
                "h" | "height" => h = Some(v),
                other => return Err(Error::Config(format!("unknown body parameter {other:?}"))),
            }
        }
        match (m, h) {
            (Some(m), Some(h)) => BodyParams::new(m, h),
            _ => Err(Error::Config(format!("body parameters need both m and h, got {s:?}"))),
        }
    }
}

/// GRU hidden state carried between streaming steps.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState(pub(crate) Vec<f64>);

impl HiddenState {
    pub fn zeros() -> Self {
        HiddenState(vec![0.0; HIDDEN_DIM])
    }

    pub fn from_vec(v: Vec<f64>) -> Result<Self> {
        if v.len() != HIDDEN_DIM {
            return Err(Error::shape(
                "HiddenState",
                format!("hidden state has {HIDDEN_DIM} entries, got {}", v.len()),
            ));
        }
        Ok(HiddenState(v))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl Default for HiddenState {
    fn default() -> Self {
        Self::zeros()
    }
}
