//! Per-estimation latency of streaming and windowed estimators.
//!
//! One estimation consumes one new kinematic frame and produces one moment.
//! The streaming path advances a GRU by a single step with its hidden state
//! carried over; windowed paths keep the last 100 normalized frames and run
//! the whole window through the network every time. Each target is timed in
//! two stages: the estimator alone, then estimator plus decoder.
//!
//! The harness runs on the calling thread. Inputs are generated before the
//! timed loop and no labels are touched inside it.

use std::hint::black_box;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BodyParams, GmfModel, GmfStream, KinematicFrame, Model, Normalization, FRAME_DIM, WINDOW_LEN};

pub const LATENCY_HEADER: &str = "backbone,stage,mean_ms,std_ms,rounds,per_round";

/// Something that turns one incoming frame into one moment estimate.
pub trait LatencyTarget {
    fn name(&self) -> String;
    /// Clears any state carried between estimations.
    fn reset(&mut self);
    /// Estimator stage for the newest frame.
    fn estimate(&mut self, frame: &KinematicFrame) -> Result<f64>;
    /// Maps the estimator output to a moment; identity when there is no decoder.
    fn decode(&mut self, estimate: f64) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub rounds: usize,
    pub per_round: usize,
    /// Untimed estimations run before each round of each target.
    pub warmup: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            rounds: 20,
            per_round: 10_000,
            warmup: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyRow {
    pub backbone: String,
    /// `estimator` or `total`.
    pub stage: String,
    pub mean_ms: f64,
    pub std_ms: f64,
    pub rounds: usize,
    pub per_round: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub rows: Vec<LatencyRow>,
    /// Smallest non-zero step observed on the monotonic clock.
    pub timer_resolution_ns: f64,
    pub warnings: Vec<String>,
}

impl LatencyReport {
    pub fn row(&self, backbone: &str, stage: &str) -> Option<&LatencyRow> {
        self.rows.iter().find(|r| r.backbone == backbone && r.stage == stage)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{LATENCY_HEADER}\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.backbone, r.stage, r.mean_ms, r.std_ms, r.rounds, r.per_round
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

/// Smallest positive difference between consecutive clock readings.
pub fn timer_resolution() -> Duration {
    let mut best = Duration::MAX;
    for _ in 0..1000 {
        let a = Instant::now();
        let mut b = Instant::now();
        while b == a {
            b = Instant::now();
        }
        best = best.min(b - a);
    }
    best
}

/// Frames whose normalized values are standard normal under `norm`.
pub fn random_stream(norm: &Normalization, n: usize, seed: u64) -> Vec<KinematicFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            KinematicFrame(std::array::from_fn(|c| {
                let z: f64 = StandardNormal.sample(&mut rng);
                norm.kinematics[c].mean + norm.kinematics[c].std * z
            }))
        })
        .collect()
}

/// Times every target over `cfg.rounds` rounds. Rounds are interleaved
/// across targets so slow drifts of the machine affect all of them alike.
pub fn bench_latency(targets: &mut [Box<dyn LatencyTarget + '_>], cfg: &BenchConfig, norm: &Normalization) -> Result<LatencyReport> {
    if cfg.rounds == 0 || cfg.per_round == 0 {
        return Err(Error::Config("bench needs at least one round and one estimation per round".into()));
    }
    let mut names: Vec<String> = targets.iter().map(|t| t.name()).collect();
    names.sort();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::usage("bench_latency", format!("two targets are both named {}", w[0])));
    }

    let resolution = timer_resolution();
    let mut warnings = Vec::new();
    if resolution > Duration::from_micros(1) {
        let msg = format!("monotonic clock resolution is {resolution:?}, coarser than 1 µs");
        log::warn!("{msg}");
        warnings.push(msg);
    }

    // per target: per-round mean seconds for (estimator, total)
    let mut est_means = vec![Vec::with_capacity(cfg.rounds); targets.len()];
    let mut tot_means = vec![Vec::with_capacity(cfg.rounds); targets.len()];
    for round in 0..cfg.rounds {
        let frames = random_stream(norm, cfg.per_round, cfg.seed.wrapping_add(round as u64));
        for (ti, target) in targets.iter_mut().enumerate() {
            target.reset();
            for i in 0..cfg.warmup {
                let e = target.estimate(&frames[i % frames.len()])?;
                black_box(target.decode(e)?);
            }
            let (mut est, mut tot) = (Duration::ZERO, Duration::ZERO);
            for f in &frames {
                let t0 = Instant::now();
                let e = target.estimate(black_box(f))?;
                let t1 = Instant::now();
                let y = target.decode(e)?;
                let t2 = Instant::now();
                black_box(y);
                est += t1 - t0;
                tot += t2 - t0;
            }
            est_means[ti].push(est.as_secs_f64() / cfg.per_round as f64);
            tot_means[ti].push(tot.as_secs_f64() / cfg.per_round as f64);
        }
    }

    let mut rows = Vec::new();
    for (ti, target) in targets.iter().enumerate() {
        for (stage, means) in [("estimator", &est_means[ti]), ("total", &tot_means[ti])] {
            let (mean, std) = super::metrics::mean_std(means);
            rows.push(LatencyRow {
                backbone: target.name(),
                stage: stage.into(),
                mean_ms: mean * 1e3,
                std_ms: std * 1e3,
                rounds: cfg.rounds,
                per_round: cfg.per_round,
            });
        }
    }
    Ok(LatencyReport {
        rows,
        timer_resolution_ns: resolution.as_nanos() as f64,
        warnings,
    })
}

/// GRU estimator advanced one step per frame, then the decoder.
pub struct StreamingTarget<'m> {
    name: String,
    model: &'m GmfModel,
    stream: GmfStream<'m>,
    body: BodyParams,
}

impl<'m> StreamingTarget<'m> {
    pub fn new(name: impl Into<String>, model: &'m GmfModel, body: BodyParams) -> Result<Self> {
        Ok(StreamingTarget {
            name: name.into(),
            model,
            stream: model.stream()?,
            body,
        })
    }
}

impl LatencyTarget for StreamingTarget<'_> {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn reset(&mut self) {
        self.stream.reset();
    }

    fn estimate(&mut self, frame: &KinematicFrame) -> Result<f64> {
        self.stream.push(frame)
    }

    fn decode(&mut self, estimate: f64) -> Result<f64> {
        self.model.decoder_forward(&self.body, estimate)
    }
}

/// Any model re-run over its last 100 frames for every new frame.
pub struct WindowedTarget<'m> {
    name: String,
    model: &'m Model,
    body: BodyParams,
    body_norm: [f64; 2],
    window: Vec<[f64; FRAME_DIM]>,
}

impl<'m> WindowedTarget<'m> {
    pub fn new(name: impl Into<String>, model: &'m Model, body: BodyParams) -> Result<Self> {
        body.validate()?;
        Ok(WindowedTarget {
            name: name.into(),
            model,
            body,
            body_norm: model.norm().body(&body),
            window: vec![[0.0; FRAME_DIM]; WINDOW_LEN],
        })
    }
}

impl LatencyTarget for WindowedTarget<'_> {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn reset(&mut self) {
        self.window.iter_mut().for_each(|f| *f = [0.0; FRAME_DIM]);
    }

    fn estimate(&mut self, frame: &KinematicFrame) -> Result<f64> {
        frame.check_finite()?;
        self.window.copy_within(1.., 0);
        self.window[WINDOW_LEN - 1] = self.model.norm().frame(frame);
        match self.model {
            Model::Gmf(m) => m.nets().estimator.predict(m.params(), &self.window),
            Model::Baseline(m) => m.net().predict(m.params(), &self.window, self.body_norm),
        }
    }

    fn decode(&mut self, estimate: f64) -> Result<f64> {
        match self.model {
            Model::Gmf(m) => m.decoder_forward(&self.body, estimate),
            Model::Baseline(_) => Ok(estimate),
        }
    }
}

/// Streaming target for GMF models with a GRU estimator, windowed otherwise.
/// Targets are named after the model label; models must share window geometry.
pub fn targets_for<'m>(models: &'m [Model], body: BodyParams) -> Result<Vec<Box<dyn LatencyTarget + 'm>>> {
    let mut out: Vec<Box<dyn LatencyTarget + 'm>> = Vec::new();
    for m in models {
        let a = m.arch();
        if a.frame_dim != FRAME_DIM || a.window_len != WINDOW_LEN {
            return Err(Error::usage(
                "bench_latency",
                format!("{} uses {}x{} windows, expected {WINDOW_LEN}x{FRAME_DIM}", m.label(), a.window_len, a.frame_dim),
            ));
        }
        match m {
            Model::Gmf(g) if g.arch().backbone == crate::model::BackboneKind::Gru => {
                out.push(Box::new(StreamingTarget::new(m.label(), g, body)?));
            }
            _ => out.push(Box::new(WindowedTarget::new(m.label(), m, body)?)),
        }
    }
    Ok(out)
}
