//! Synthetic gait corpus with a known moment generator.
//!
//! Each subject draws mass and height uniformly; each walking speed sets the
//! stride period. The moment depends on height through both an inertial and a
//! gravitational term, so kinematics alone cannot recover it exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::trial::{RawTrial, SubjectMeta, Subjects};
use crate::error::{Error, Result};
use crate::model::BodyParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub speeds: Vec<f64>,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub angle_noise_std: f64,
    pub mass_range: (f64, f64),
    pub height_range: (f64, f64),
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_subjects: 10,
            speeds: vec![0.5, 0.85, 1.2, 1.55],
            duration_s: 10.0,
            sample_rate_hz: 200.0,
            angle_noise_std: 0.005,
            mass_range: (50.0, 90.0),
            height_range: (1.5, 1.9),
            seed: 0,
        }
    }
}

/// Stride period (s) at walking speed `v` (m/s).
pub fn stride_period(speed: f64) -> f64 {
    1.4 - 0.4 * (speed - 0.5) / 1.35
}

/// Left hip angle and its first two time derivatives.
pub fn left_angle(t: f64, period: f64) -> (f64, f64, f64) {
    let w = 2.0 * std::f64::consts::PI / period;
    let (s1, c1) = (w * t).sin_cos();
    let (s2, c2) = (2.0 * w * t + 0.6).sin_cos();
    let angle = 0.35 * s1 + 0.08 * s2;
    let vel = 0.35 * w * c1 + 0.16 * w * c2;
    let acc = -0.35 * w * w * s1 - 0.32 * w * w * s2;
    (angle, vel, acc)
}

/// Ground-truth hip moment (Nm/kg).
pub fn moment(height: f64, angle: f64, acceleration: f64) -> f64 {
    0.05 * height * height * acceleration + 0.3 * height * angle.sin()
}

pub fn subject_id(i: usize) -> String {
    format!("S{:02}", i + 1)
}

/// Generates `n_subjects × speeds` trials and the subject table.
pub fn synth_corpus(cfg: &SynthConfig) -> Result<(Vec<RawTrial>, Subjects)> {
    if cfg.n_subjects < 2 {
        return Err(Error::Config(format!("a corpus needs at least 2 subjects, got {}", cfg.n_subjects)));
    }
    if !(cfg.sample_rate_hz > 0.0) || !(cfg.duration_s > 0.0) || !(cfg.angle_noise_std >= 0.0) {
        return Err(Error::Config("sample rate and duration must be positive, noise non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.angle_noise_std).map_err(|e| Error::Config(e.to_string()))?;
    let fs = cfg.sample_rate_hz;
    let n = (cfg.duration_s * fs).round() as usize;

    // Body parameters are drawn before any noise so that they depend on the
    // seed alone, not on the number or length of trials.
    let mut subjects = Subjects::new();
    for s in 0..cfg.n_subjects {
        let id = subject_id(s);
        let mass = rng.gen_range(cfg.mass_range.0..cfg.mass_range.1);
        let height = rng.gen_range(cfg.height_range.0..cfg.height_range.1);
        subjects.insert(
            id.clone(),
            SubjectMeta {
                subject_id: id.clone(),
                body: BodyParams::new(mass, height)?,
            },
        );
    }
    let mut trials = Vec::new();
    for s in 0..cfg.n_subjects {
        let id = subject_id(s);
        let height = subjects[&id].body.height;
        for &speed in &cfg.speeds {
            let period = stride_period(speed);
            let mut trial = RawTrial {
                subject_id: id.clone(),
                speed,
                sample_rate: fs,
                time: Vec::with_capacity(n),
                angle_l: Vec::with_capacity(n),
                angle_r: Vec::with_capacity(n),
                moment: Vec::with_capacity(n),
                heel_strikes: Vec::new(),
            };
            for i in 0..n {
                let t = i as f64 / fs;
                let (al, _, accl) = left_angle(t, period);
                let (ar, _, _) = left_angle(t + period / 2.0, period);
                trial.time.push(t);
                trial.angle_l.push(al + noise.sample(&mut rng));
                trial.angle_r.push(ar + noise.sample(&mut rng));
                trial.moment.push(moment(height, al, accl));
            }
            trial.heel_strikes = (0..)
                .map(|k| (k as f64 * period * fs).round() as usize)
                .take_while(|&i| i < n)
                .collect();
            trials.push(trial);
        }
    }
    Ok((trials, subjects))
}
