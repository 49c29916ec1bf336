//! Z-score statistics fitted on the training split.

use serde::{Deserialize, Serialize};

use super::types::{BodyParams, KinematicFrame, FRAME_DIM};
use crate::error::{Error, Result};

/// Mean and standard deviation of one feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub const IDENTITY: Stat = Stat { mean: 0.0, std: 1.0 };

    /// Population statistics; a zero spread maps to unit scale.
    pub fn fit(values: impl IntoIterator<Item = f64>) -> Self {
        let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
        for v in values {
            n += 1;
            sum += v;
            sq += v * v;
        }
        if n == 0 {
            return Stat::IDENTITY;
        }
        let mean = sum / n as f64;
        let var = (sq / n as f64 - mean * mean).max(0.0);
        let std = var.sqrt();
        Stat {
            mean,
            std: if std > 1e-12 { std } else { 1.0 },
        }
    }

    #[inline]
    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }
}

/// Input statistics stored with every model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub kinematics: [Stat; FRAME_DIM],
    pub mass: Stat,
    pub height: Stat,
    pub moment: Stat,
}

impl Default for Normalization {
    fn default() -> Self {
        Self::identity()
    }
}

impl Normalization {
    pub fn identity() -> Self {
        Normalization {
            kinematics: [Stat::IDENTITY; FRAME_DIM],
            mass: Stat::IDENTITY,
            height: Stat::IDENTITY,
            moment: Stat::IDENTITY,
        }
    }

    pub fn fit<'a>(
        frames: impl Iterator<Item = &'a KinematicFrame> + Clone,
        bodies: impl Iterator<Item = BodyParams> + Clone,
        moments: impl Iterator<Item = f64>,
    ) -> Self {
        let kinematics = std::array::from_fn(|c| Stat::fit(frames.clone().map(|f| f.0[c])));
        Normalization {
            kinematics,
            mass: Stat::fit(bodies.clone().map(|q| q.mass)),
            height: Stat::fit(bodies.map(|q| q.height)),
            moment: Stat::fit(moments),
        }
    }

    #[inline]
    pub fn frame(&self, f: &KinematicFrame) -> [f64; FRAME_DIM] {
        std::array::from_fn(|c| self.kinematics[c].apply(f.0[c]))
    }

    #[inline]
    pub fn body(&self, q: &BodyParams) -> [f64; 2] {
        [self.mass.apply(q.mass), self.height.apply(q.height)]
    }

    /// Flat layout used by the checkpoint: kinematic means, kinematic stds,
    /// then mass, height and moment as (mean, std).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.kinematics.iter().map(|s| s.mean).collect();
        out.extend(self.kinematics.iter().map(|s| s.std));
        for s in [self.mass, self.height, self.moment] {
            out.push(s.mean);
            out.push(s.std);
        }
        out
    }

    pub const FLAT_LEN: usize = 2 * FRAME_DIM + 6;

    pub fn from_flat(v: &[f64]) -> Result<Self> {
        if v.len() != Self::FLAT_LEN {
            return Err(Error::shape(
                "Normalization::from_flat",
                format!("expected {} values, got {}", Self::FLAT_LEN, v.len()),
            ));
        }
        if v.iter().any(|x| !x.is_finite()) || v[FRAME_DIM..2 * FRAME_DIM].iter().any(|&s| s <= 0.0) {
            return Err(Error::usage("Normalization::from_flat", "statistics must be finite with positive spread"));
        }
        let s = |i: usize| Stat { mean: v[i], std: v[i + 1] };
        Ok(Normalization {
            kinematics: std::array::from_fn(|c| Stat { mean: v[c], std: v[FRAME_DIM + c] }),
            mass: s(2 * FRAME_DIM),
            height: s(2 * FRAME_DIM + 2),
            moment: s(2 * FRAME_DIM + 4),
        })
    }
}
