//! Fixed-length windows over processed trials.

use super::trial::TrialRecord;
use crate::error::{Error, Result};
use crate::model::{BodyParams, KinematicWindow, WINDOW_LEN};

/// A 100-frame window borrowed from one trial, labelled with the moment at
/// its final frame.
#[derive(Debug, Clone, Copy)]
pub struct WindowedExample<'a> {
    pub trial: &'a TrialRecord,
    /// Index of the final frame within the trial.
    pub end: usize,
    pub body: BodyParams,
}

impl<'a> WindowedExample<'a> {
    pub fn window(&self) -> KinematicWindow<'a> {
        KinematicWindow::new(&self.trial.frames[self.end + 1 - WINDOW_LEN..=self.end])
            .expect("window bounds are checked at construction")
    }

    pub fn label(&self) -> f64 {
        self.trial.moment[self.end]
    }

    pub fn subject_id(&self) -> &'a str {
        self.trial.subject_id()
    }

    pub fn speed(&self) -> f64 {
        self.trial.speed()
    }

    /// Time (s) of the final frame.
    pub fn time(&self) -> f64 {
        self.trial.raw.time[self.end]
    }
}

/// Windows ending at frames `99, 99 + stride, …`. A trial shorter than one
/// window yields nothing and logs a warning.
pub fn make_windows<'a>(trial: &'a TrialRecord, body: BodyParams, stride: usize) -> Result<Vec<WindowedExample<'a>>> {
    if stride == 0 {
        return Err(Error::Config("window stride must be at least 1".into()));
    }
    if trial.len() < WINDOW_LEN {
        log::warn!(
            "trial {} at {} m/s has {} frames, fewer than one {WINDOW_LEN}-frame window",
            trial.subject_id(),
            trial.speed(),
            trial.len()
        );
        return Ok(Vec::new());
    }
    Ok((WINDOW_LEN - 1..trial.len())
        .step_by(stride)
        .map(|end| WindowedExample { trial, end, body })
        .collect())
}

/// Fails if any subject contributes windows to both collections.
pub fn check_disjoint_subjects(a: &[WindowedExample<'_>], b: &[WindowedExample<'_>]) -> Result<()> {
    let left: std::collections::BTreeSet<&str> = a.iter().map(|w| w.subject_id()).collect();
    match b.iter().find(|w| left.contains(w.subject_id())) {
        None => Ok(()),
        Some(w) => Err(Error::Config(format!("subject {} appears on both sides of a split", w.subject_id()))),
    }
}
