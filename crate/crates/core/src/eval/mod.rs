//! Accuracy reports, gait-cycle curves and the latency harness.
//!
//! Predictions exist only for frames that close a full window, so the first
//! 99 frames of every trial never enter a metric, whatever the backbone.

pub mod bench;
pub mod curves;
pub mod metrics;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bench::{bench_latency, targets_for, BenchConfig, LatencyReport, LatencyRow, LatencyTarget};
pub use curves::{export_gait_curves, gait_curves, markers_from_period, CurveRow};
pub use metrics::{mean_std, mse, per_speed_rmse, per_subject_rmse, r_tv, rmse, Prediction, SpeedRmse, SubjectRmse};

use crate::data::{with_pool, Dataset, DatasetSplit, WindowedExample};
use crate::error::{Error, Result};
use crate::model::Model;

/// Predictions for each window, in window order.
pub fn predict_windows(model: &Model, windows: &[WindowedExample<'_>]) -> Result<Vec<Prediction>> {
    with_pool(|| {
        windows
            .par_iter()
            .map(|w| {
                Ok(Prediction {
                    subject_id: w.subject_id().to_string(),
                    speed: w.speed(),
                    time: w.time(),
                    truth: w.label(),
                    pred: model.predict(w.window(), &w.body)?,
                })
            })
            .collect()
    })
}

/// Test-set accuracy of one model configuration over its repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub repetitions: usize,
    /// Test windows per repetition.
    pub n: usize,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub rmse_runs: Vec<f64>,
    pub val_rmse_mean: Option<f64>,
    /// From the mean test and mean validation RMSE.
    pub r_tv: Option<f64>,
    /// Pooled over all repetitions.
    pub per_subject: Vec<SubjectRmse>,
    pub per_speed: Vec<SpeedRmse>,
}

impl MetricsReport {
    /// Builds the report from per-repetition test predictions and, when
    /// available, per-repetition validation predictions.
    pub fn from_predictions(model: &str, test: &[Vec<Prediction>], validation: Option<&[Vec<Prediction>]>) -> Result<Self> {
        if test.is_empty() {
            return Err(Error::usage("metrics", "no repetitions to report"));
        }
        let runs: Vec<f64> = test.iter().map(|p| metrics::prediction_rmse(p)).collect::<Result<_>>()?;
        let (rmse_mean, rmse_std) = mean_std(&runs);
        let val_rmse_mean = match validation {
            Some(v) if !v.is_empty() => {
                let vr: Vec<f64> = v.iter().map(|p| metrics::prediction_rmse(p)).collect::<Result<_>>()?;
                Some(mean_std(&vr).0)
            }
            _ => None,
        };
        let r_tv = val_rmse_mean.map(|v| r_tv(rmse_mean, v)).transpose()?;
        let pooled: Vec<Prediction> = test.iter().flatten().cloned().collect();
        Ok(MetricsReport {
            model: model.to_string(),
            repetitions: test.len(),
            n: test[0].len(),
            rmse_mean,
            rmse_std,
            rmse_runs: runs,
            val_rmse_mean,
            r_tv,
            per_subject: per_subject_rmse(&pooled),
            per_speed: per_speed_rmse(&pooled),
        })
    }

    pub fn summary_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "model,repetitions,n,rmse_mean,rmse_std,val_rmse_mean,r_tv\n{},{},{},{},{},{},{}\n",
            self.model,
            self.repetitions,
            self.n,
            self.rmse_mean,
            self.rmse_std,
            opt(self.val_rmse_mean),
            opt(self.r_tv)
        )
    }

    pub fn per_speed_csv(&self) -> String {
        let mut out = String::from("speed_mps,rmse,n\n");
        for s in &self.per_speed {
            out.push_str(&format!("{},{},{}\n", s.speed_mps, s.rmse, s.n));
        }
        out
    }

    pub fn per_subject_csv(&self) -> String {
        let mut out = String::from("subject_id,rmse,n\n");
        for s in &self.per_subject {
            out.push_str(&format!("{},{},{}\n", s.subject_id, s.rmse, s.n));
        }
        out
    }

    /// Writes `metrics.json`, `metrics.csv`, `per_speed.csv` and `per_subject.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        let json = serde_json::to_string_pretty(self).expect("report serializes");
        for (name, text) in [
            ("metrics.json", json + "\n"),
            ("metrics.csv", self.summary_csv()),
            ("per_speed.csv", self.per_speed_csv()),
            ("per_subject.csv", self.per_subject_csv()),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        }
        Ok(())
    }
}

/// Evaluates repetitions of one configuration on the test trials of
/// `split` (every window, `stride` apart) and on its validation trials.
pub fn evaluate(models: &[Model], data: &Dataset, split: &DatasetSplit, stride: usize) -> Result<MetricsReport> {
    let first = models.first().ok_or_else(|| Error::usage("evaluate", "no models given"))?;
    let test_windows = data.windows(&split.test, stride)?;
    if test_windows.is_empty() {
        return Err(Error::Config("the test split has no complete windows".into()));
    }
    let val_windows = data.windows(&split.validation, stride)?;
    let mut test = Vec::new();
    let mut val = Vec::new();
    for m in models {
        if m.label() != first.label() {
            return Err(Error::usage(
                "evaluate",
                format!("repetitions mix {} and {}", first.label(), m.label()),
            ));
        }
        test.push(predict_windows(m, &test_windows)?);
        if !val_windows.is_empty() {
            val.push(predict_windows(m, &val_windows)?);
        }
    }
    let val = (!val.is_empty()).then_some(val.as_slice());
    MetricsReport::from_predictions(&first.label(), &test, val)
}
