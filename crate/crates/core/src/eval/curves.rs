//! Per-cycle moment curves on a 0..100 % phase grid.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::TrialRecord;
use crate::error::{Error, Result};
use crate::model::{BodyParams, KinematicWindow, Model, WINDOW_LEN};

pub const CURVE_HEADER: &str = "phase_pct,truth_nm_per_kg,pred_nm_per_kg,cycle_id";
pub const PHASE_POINTS: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub phase_pct: f64,
    pub truth: f64,
    pub pred: f64,
    /// Index of the cycle's starting marker.
    pub cycle_id: usize,
}

/// Heel strikes every `period` seconds starting at frame 0.
pub fn markers_from_period(n_frames: usize, sample_rate: f64, period: f64) -> Result<Vec<usize>> {
    if !(period > 0.0 && sample_rate > 0.0) {
        return Err(Error::usage("markers_from_period", "period and sample rate must be positive"));
    }
    Ok((0..)
        .map(|k| (k as f64 * period * sample_rate).round() as usize)
        .take_while(|&i| i < n_frames)
        .collect())
}

fn lerp(series: &[f64], pos: f64) -> f64 {
    let i = pos.floor() as usize;
    if i + 1 >= series.len() {
        return series[series.len() - 1];
    }
    let frac = pos - i as f64;
    series[i] + frac * (series[i + 1] - series[i])
}

/// Resamples each marker-to-marker cycle to [`PHASE_POINTS`] points.
///
/// `pred[i]` is `None` where no prediction exists (the warm-up frames); a
/// cycle touching such a frame is skipped.
pub fn gait_curves(truth: &[f64], pred: &[Option<f64>], markers: &[usize]) -> Result<Vec<CurveRow>> {
    if markers.len() < 2 {
        return Err(Error::usage(
            "export_gait_curves",
            format!("need at least two heel-strike markers, got {}", markers.len()),
        ));
    }
    if truth.len() != pred.len() {
        return Err(Error::shape("export_gait_curves", "truth and prediction lengths differ"));
    }
    let mut rows = Vec::new();
    for (cycle_id, pair) in markers.windows(2).enumerate() {
        let (a, b) = (pair[0], pair[1]);
        if b <= a || b >= truth.len() {
            return Err(Error::usage(
                "export_gait_curves",
                format!("markers must increase and stay below {} (got {a} then {b})", truth.len()),
            ));
        }
        let Some(p): Option<Vec<f64>> = pred[a..=b].iter().copied().collect() else {
            continue;
        };
        let t = &truth[a..=b];
        let span = (b - a) as f64;
        for k in 0..PHASE_POINTS {
            let pos = span * k as f64 / (PHASE_POINTS - 1) as f64;
            rows.push(CurveRow {
                phase_pct: k as f64,
                truth: lerp(t, pos),
                pred: lerp(&p, pos),
                cycle_id,
            });
        }
    }
    if rows.is_empty() {
        return Err(Error::usage(
            "export_gait_curves",
            format!("no complete cycle lies past the {}-frame warm-up", WINDOW_LEN - 1),
        ));
    }
    Ok(rows)
}

/// Model predictions against the smoothed labels of `trial`, cut into cycles.
pub fn export_gait_curves(model: &Model, trial: &TrialRecord, body: &BodyParams, markers: &[usize]) -> Result<Vec<CurveRow>> {
    if markers.is_empty() {
        return Err(Error::usage("export_gait_curves", "trial has no heel-strike markers"));
    }
    let lo = markers[0].max(WINDOW_LEN - 1);
    let hi = (*markers.last().unwrap()).min(trial.len().saturating_sub(1));
    let mut pred = vec![None; trial.len()];
    for end in lo..=hi {
        let window = KinematicWindow::new(&trial.frames[end + 1 - WINDOW_LEN..=end])?;
        pred[end] = Some(model.predict(window, body)?);
    }
    gait_curves(&trial.moment, &pred, markers)
}

pub fn curves_to_csv(rows: &[CurveRow]) -> String {
    let mut out = format!("{CURVE_HEADER}\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.phase_pct, r.truth, r.pred, r.cycle_id));
    }
    out
}

pub fn write_curves(path: &Path, rows: &[CurveRow]) -> Result<()> {
    std::fs::write(path, curves_to_csv(rows)).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
