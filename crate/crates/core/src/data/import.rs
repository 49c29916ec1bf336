//! Conversion of an external trial layout into the corpus format.
//!
//! A TOML mapping file names the subject table, the columns to read and the
//! unit conversions, then lists every trial explicitly. Angles and moments
//! may live in separate files as long as their time columns agree.
//!
//! ```toml
//! angle_scale = 0.017453292519943295   # degrees to radians
//! moment_scale = 1.0
//! moment_per_kg = false                # divide by subject mass
//!
//! [subjects]
//! file = "subjects.csv"
//! id_column = "Subject"
//! mass_column = "Weight"
//! height_column = "Height"
//! height_scale = 0.01                  # cm to m
//!
//! [columns]
//! time = "Header"
//! angle_l = "hip_flexion_l"
//! angle_r = "hip_flexion_r"
//! moment = "hip_flexion_l_moment"
//!
//! [[trials]]
//! subject = "AB06"
//! speed_mps = 0.5
//! kinematics = "AB06/ik/treadmill_01.csv"
//! moment = "AB06/id/treadmill_01.csv"
//! start_s = 5.0
//! end_s = 35.0
//! ```

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::trial::{RawTrial, SubjectMeta, Subjects};
use crate::error::{Error, Result};
use crate::model::BodyParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImportMap {
    #[serde(default = "one")]
    pub angle_scale: f64,
    #[serde(default = "one")]
    pub moment_scale: f64,
    #[serde(default = "yes")]
    pub moment_per_kg: bool,
    /// Overrides the rate inferred from the time column.
    #[serde(default)]
    pub sample_rate_hz: Option<f64>,
    pub subjects: SubjectColumns,
    pub columns: TrialColumns,
    pub trials: Vec<TrialEntry>,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectColumns {
    pub file: PathBuf,
    pub id_column: String,
    pub mass_column: String,
    pub height_column: String,
    #[serde(default = "one")]
    pub height_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialColumns {
    pub time: String,
    pub angle_l: String,
    pub angle_r: String,
    pub moment: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialEntry {
    pub subject: String,
    pub speed_mps: f64,
    pub kinematics: PathBuf,
    /// Defaults to the kinematics file.
    #[serde(default)]
    pub moment: Option<PathBuf>,
    #[serde(default)]
    pub start_s: Option<f64>,
    #[serde(default)]
    pub end_s: Option<f64>,
    /// Heel-strike times (s) within the trial.
    #[serde(default)]
    pub heel_strikes_s: Vec<f64>,
}

impl ImportMap {
    pub fn from_toml(text: &str) -> Result<Self> {
        let map: ImportMap = toml::from_str(text).map_err(|e| Error::Config(format!("import map: {e}")))?;
        if map.trials.is_empty() {
            return Err(Error::Config("import map lists no trials".into()));
        }
        Ok(map)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Named numeric columns of one CSV file.
struct Table {
    path: PathBuf,
    columns: HashMap<String, Vec<f64>>,
}

impl Table {
    fn read(path: &Path, wanted: &[&str]) -> Result<Table> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let header = reader
            .headers()
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            .clone();
        let mut idx = Vec::new();
        for name in wanted {
            let i = header.iter().position(|h| h == *name).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                detail: format!("missing column {name}"),
            })?;
            idx.push(i);
        }
        let mut columns: HashMap<String, Vec<f64>> = wanted.iter().map(|n| (n.to_string(), Vec::new())).collect();
        for record in reader.records() {
            let record = record.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            for (name, &i) in wanted.iter().zip(&idx) {
                let s = record.get(i).unwrap_or("");
                let v: f64 = s.parse().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    detail: format!("column {name}: {s:?} is not a number"),
                })?;
                columns.get_mut(*name).unwrap().push(v);
            }
        }
        Ok(Table {
            path: path.to_path_buf(),
            columns,
        })
    }

    fn take(&mut self, name: &str) -> Vec<f64> {
        self.columns.remove(name).unwrap_or_default()
    }
}

fn read_subject_table(raw_root: &Path, cols: &SubjectColumns) -> Result<Subjects> {
    let path = raw_root.join(&cols.file);
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(&path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let header = reader
        .headers()
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        .clone();
    let find = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            path: path.clone(),
            line: 1,
            detail: format!("missing column {name}"),
        })
    };
    let (ci, cm, ch) = (find(&cols.id_column)?, find(&cols.mass_column)?, find(&cols.height_column)?);
    let mut out = Subjects::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let num = |i: usize| -> Result<f64> {
            let s = record.get(i).unwrap_or("");
            s.parse().map_err(|_| Error::Parse {
                path: path.clone(),
                line,
                detail: format!("{s:?} is not a number"),
            })
        };
        let id = record.get(ci).unwrap_or("").to_string();
        let body = BodyParams::new(num(cm)?, num(ch)? * cols.height_scale).map_err(|e| Error::Parse {
            path: path.clone(),
            line,
            detail: e.to_string(),
        })?;
        out.insert(id.clone(), SubjectMeta { subject_id: id, body });
    }
    Ok(out)
}

fn infer_rate(path: &Path, time: &[f64]) -> Result<f64> {
    let mut dt: Vec<f64> = time.windows(2).map(|w| w[1] - w[0]).collect();
    if dt.is_empty() {
        return Err(Error::Config(format!("{}: fewer than two samples", path.display())));
    }
    dt.sort_by(f64::total_cmp);
    let median = dt[dt.len() / 2];
    if !(median > 0.0) {
        return Err(Error::Config(format!("{}: time column does not increase", path.display())));
    }
    // time stamps are usually printed with few digits; snap to a micro-hertz grid
    Ok((1e6 / median).round() / 1e6)
}

fn convert_trial(raw_root: &Path, map: &ImportMap, entry: &TrialEntry, subjects: &Subjects) -> Result<RawTrial> {
    let meta = subjects.get(&entry.subject).ok_or_else(|| {
        Error::Config(format!("trial {} names subject {} missing from the subject table", entry.kinematics.display(), entry.subject))
    })?;
    let c = &map.columns;
    let kin_path = raw_root.join(&entry.kinematics);
    let (mut kin, mut mom) = match &entry.moment {
        None => {
            let t = Table::read(&kin_path, &[&c.time, &c.angle_l, &c.angle_r, &c.moment])?;
            (t, None)
        }
        Some(m) => {
            let k = Table::read(&kin_path, &[&c.time, &c.angle_l, &c.angle_r])?;
            let m = Table::read(&raw_root.join(m), &[&c.time, &c.moment])?;
            (k, Some(m))
        }
    };
    let time = kin.take(&c.time);
    let moment = match mom.as_mut() {
        None => kin.take(&c.moment),
        Some(m) => {
            let mt = m.take(&c.time);
            if mt.len() != time.len() || mt.iter().zip(&time).any(|(a, b)| (a - b).abs() > 1e-6) {
                return Err(Error::Config(format!(
                    "time columns of {} and {} do not line up",
                    kin.path.display(),
                    m.path.display()
                )));
            }
            m.take(&c.moment)
        }
    };
    let (al, ar) = (kin.take(&c.angle_l), kin.take(&c.angle_r));
    let sample_rate = match map.sample_rate_hz {
        Some(r) => r,
        None => infer_rate(&kin.path, &time)?,
    };
    let lo = entry.start_s.unwrap_or(f64::NEG_INFINITY);
    let hi = entry.end_s.unwrap_or(f64::INFINITY);
    let keep: Vec<usize> = (0..time.len()).filter(|&i| time[i] >= lo && time[i] <= hi).collect();
    let Some(&first) = keep.first() else {
        return Err(Error::Config(format!("{}: no samples between {lo} s and {hi} s", kin.path.display())));
    };
    let moment_factor = map.moment_scale / if map.moment_per_kg { 1.0 } else { meta.body.mass };
    let t0 = time[first];
    let mut heel_strikes: Vec<usize> = entry
        .heel_strikes_s
        .iter()
        .filter(|&&t| t >= lo && t <= hi)
        .map(|&t| ((t - t0) * sample_rate).round() as usize)
        .filter(|&i| i < keep.len())
        .collect();
    heel_strikes.dedup();
    let trial = RawTrial {
        subject_id: entry.subject.clone(),
        speed: entry.speed_mps,
        sample_rate,
        time: keep.iter().map(|&i| time[i] - t0).collect(),
        angle_l: keep.iter().map(|&i| al[i] * map.angle_scale).collect(),
        angle_r: keep.iter().map(|&i| ar[i] * map.angle_scale).collect(),
        moment: keep.iter().map(|&i| moment[i] * moment_factor).collect(),
        heel_strikes,
    };
    trial.validate(&kin_path)?;
    Ok(trial)
}

/// Reads every trial listed in `map` relative to `raw_root`. Only subjects
/// that own at least one trial are kept.
pub fn import_corpus(raw_root: &Path, map: &ImportMap) -> Result<(Vec<RawTrial>, Subjects)> {
    let all = read_subject_table(raw_root, &map.subjects)?;
    let trials: Vec<RawTrial> = map
        .trials
        .iter()
        .map(|e| convert_trial(raw_root, map, e, &all))
        .collect::<Result<_>>()?;
    let subjects = all
        .into_iter()
        .filter(|(id, _)| trials.iter().any(|t| &t.subject_id == id))
        .collect();
    Ok((trials, subjects))
}
