//! Trial ingestion, smoothing, differentiation, windowing and splits.
//!
//! Per-trial parsing and processing run on a rayon pool whose size can be
//! fixed with the `GMF_THREADS` environment variable. Results are collected
//! in file-name order, so the thread count never changes the output.

pub mod diff;
pub mod filter;
pub mod import;
pub mod split;
pub mod synth;
pub mod trial;
pub mod window;

use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use diff::{derivative, differentiate};
pub use import::{import_corpus, ImportMap};
pub use filter::{butterworth_lowpass, magnitude_response, Butterworth};
pub use split::{DatasetSplit, SplitSpec};
pub use synth::{synth_corpus, SynthConfig};
pub use trial::{PipelineConfig, RawTrial, SplitTag, SubjectMeta, Subjects, TrialRecord};
pub use window::{check_disjoint_subjects, make_windows, WindowedExample};

use crate::error::{Error, Result};

/// Processed trials and the subject table they refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub trials: Vec<TrialRecord>,
    pub subjects: Subjects,
}

impl Dataset {
    /// Processes raw trials, checking that every trial's subject is known.
    pub fn from_raw(raw: Vec<RawTrial>, subjects: Subjects, cfg: &PipelineConfig) -> Result<Self> {
        for t in &raw {
            if !subjects.contains_key(&t.subject_id) {
                return Err(Error::Config(format!(
                    "trial at {} m/s refers to unknown subject {}",
                    t.speed, t.subject_id
                )));
            }
        }
        let trials = with_pool(|| {
            raw.into_par_iter()
                .map(|t| TrialRecord::process(t, cfg))
                .collect::<Result<Vec<_>>>()
        })?;
        Ok(Dataset { trials, subjects })
    }

    /// Windows of the given trials at `stride`, in trial order.
    pub fn windows(&self, trials: &[usize], stride: usize) -> Result<Vec<WindowedExample<'_>>> {
        let mut out = Vec::new();
        for &i in trials {
            let t = &self.trials[i];
            let body = self.subjects[t.subject_id()].body;
            out.extend(make_windows(t, body, stride)?);
        }
        Ok(out)
    }

    pub fn split(&self, spec: &SplitSpec) -> Result<DatasetSplit> {
        spec.assign(&self.trials, &self.subjects)
    }

    /// Writes `subjects.csv` and one file per trial under `trials/`.
    pub fn write_raw(root: &Path, trials: &[RawTrial], subjects: &Subjects) -> Result<()> {
        let (subjects_path, dir) = trial::corpus_paths(root);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        trial::write_subjects(&subjects_path, subjects)?;
        for t in trials {
            trial::write_trial(&dir.join(trial::trial_file_name(t)), t)?;
        }
        Ok(())
    }
}

/// Runs `f` on a pool sized by `GMF_THREADS` when set.
pub(crate) fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    match std::env::var("GMF_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        Some(n) if n > 0 => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        _ => f(),
    }
}

/// Reads the raw corpus under `root` without processing it.
pub fn read_raw(root: &Path, default_sample_rate: f64) -> Result<(Vec<RawTrial>, Subjects)> {
    let (subjects_path, dir) = trial::corpus_paths(root);
    let subjects = trial::read_subjects(&subjects_path)?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| Error::io(format!("listing {}", dir.display()), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    let trials = with_pool(|| {
        files
            .par_iter()
            .map(|p| trial::read_trial(p, default_sample_rate))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok((trials, subjects))
}

/// Loads and processes the corpus under `root` (`subjects.csv` + `trials/*.csv`).
pub fn load_dataset(root: &Path, cfg: &PipelineConfig) -> Result<Dataset> {
    let (raw, subjects) = read_raw(root, cfg.default_sample_rate_hz)?;
    Dataset::from_raw(raw, subjects, cfg)
}
