//! Trial and subject records and their CSV layouts.
//!
//! A trial file starts with optional `# key=value` metadata lines
//! (`subject_id`, `speed_mps`, `sample_rate_hz`, `heel_strikes` as a
//! `;`-separated index list) followed by a header row and one row per sample:
//!
//! ```text
//! # subject_id=S01
//! # speed_mps=1.2
//! # sample_rate_hz=200
//! time_s,hip_angle_l_rad,hip_angle_r_rad,moment_l_nm_per_kg
//! 0,0.01,-0.02,0.1
//! ```
//!
//! Files hold raw angles and the unsmoothed moment. Smoothing and the derived
//! channels are recomputed on load by [`TrialRecord::process`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::diff::differentiate;
use super::filter::{Butterworth, DEFAULT_CUTOFF_HZ, DEFAULT_ORDER};
use crate::error::{Error, Result};
use crate::model::{BodyParams, KinematicFrame};

pub const TRIAL_COLUMNS: [&str; 4] = ["time_s", "hip_angle_l_rad", "hip_angle_r_rad", "moment_l_nm_per_kg"];
pub const SUBJECT_COLUMNS: [&str; 3] = ["subject_id", "mass_kg", "height_m"];
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 200.0;

/// Largest plausible hip angle magnitude; larger values usually mean degrees.
const MAX_ANGLE_RAD: f64 = std::f64::consts::PI;
/// Largest plausible normalized hip moment.
const MAX_MOMENT_NM_PER_KG: f64 = 10.0;

/// Smoothing and differentiation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub cutoff_hz: f64,
    pub order: usize,
    /// Low-pass the angles before differentiating. The angle channel itself
    /// stays raw.
    pub smooth_before_differentiating: bool,
    pub default_sample_rate_hz: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            cutoff_hz: DEFAULT_CUTOFF_HZ,
            order: DEFAULT_ORDER,
            smooth_before_differentiating: true,
            default_sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
        }
    }
}

/// A trial exactly as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrial {
    pub subject_id: String,
    pub speed: f64,
    pub sample_rate: f64,
    pub time: Vec<f64>,
    pub angle_l: Vec<f64>,
    pub angle_r: Vec<f64>,
    pub moment: Vec<f64>,
    pub heel_strikes: Vec<usize>,
}

impl RawTrial {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn validate(&self, path: &Path) -> Result<()> {
        let err = |line: u64, detail: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            detail,
        };
        let n = self.time.len();
        if self.angle_l.len() != n || self.angle_r.len() != n || self.moment.len() != n {
            return Err(err(0, "channel lengths differ".into()));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(err(0, format!("sample rate {} must be positive", self.sample_rate)));
        }
        if !self.speed.is_finite() || self.speed < 0.0 {
            return Err(err(0, format!("speed {} must be non-negative", self.speed)));
        }
        if let Some(&hs) = self.heel_strikes.iter().find(|&&i| i >= n) {
            return Err(err(0, format!("heel strike index {hs} beyond trial length {n}")));
        }
        Ok(())
    }
}

/// A processed trial: raw data plus smoothed moment and derived kinematics.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub raw: RawTrial,
    /// Smoothed moment label (Nm/kg).
    pub moment: Vec<f64>,
    /// Per-sample `[angle_l, angle_r, vel_l, vel_r, acc_l, acc_r]`.
    pub frames: Vec<KinematicFrame>,
}

impl TrialRecord {
    pub fn process(raw: RawTrial, cfg: &PipelineConfig) -> Result<Self> {
        let n = raw.len();
        if n < 3 {
            return Err(Error::usage("process_trial", format!("trial of {} has {n} samples", raw.subject_id)));
        }
        let filter = Butterworth::lowpass(cfg.order, cfg.cutoff_hz, raw.sample_rate)?;
        let moment = filter.filtfilt(&raw.moment);
        let source = |x: &[f64]| {
            if cfg.smooth_before_differentiating {
                filter.filtfilt(x)
            } else {
                x.to_vec()
            }
        };
        let (vl, al) = differentiate(&source(&raw.angle_l), raw.sample_rate)?;
        let (vr, ar) = differentiate(&source(&raw.angle_r), raw.sample_rate)?;
        let frames = (0..n)
            .map(|i| KinematicFrame([raw.angle_l[i], raw.angle_r[i], vl[i], vr[i], al[i], ar[i]]))
            .collect();
        Ok(TrialRecord { raw, moment, frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn subject_id(&self) -> &str {
        &self.raw.subject_id
    }

    pub fn speed(&self) -> f64 {
        self.raw.speed
    }

    pub fn sample_rate(&self) -> f64 {
        self.raw.sample_rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectMeta {
    pub subject_id: String,
    pub body: BodyParams,
}

pub type Subjects = BTreeMap<String, SubjectMeta>;

fn parse_error(path: &Path, line: u64, detail: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        detail: detail.into(),
    }
}

fn parse_f64(path: &Path, line: u64, column: &str, s: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| parse_error(path, line, format!("column {column}: {s:?} is not a number")))?;
    if !v.is_finite() {
        return Err(parse_error(path, line, format!("column {column}: non-finite value {s}")));
    }
    Ok(v)
}

fn column_indices<const N: usize>(path: &Path, header: &csv::StringRecord, names: [&str; N]) -> Result<[usize; N]> {
    let mut out = [0; N];
    for (slot, name) in out.iter_mut().zip(names) {
        *slot = header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| parse_error(path, 1, format!("missing column {name}")))?;
    }
    Ok(out)
}

/// Parses a trial file. `fallback_rate` applies when the file has no
/// `sample_rate_hz` line; `fallback_subject` when it has no `subject_id`.
pub fn parse_trial(text: &str, path: &Path, fallback_rate: f64, fallback_subject: &str) -> Result<RawTrial> {
    parse_rows(text, path, fallback_rate, fallback_subject, true)
}

/// Like [`parse_trial`] but the moment column may be absent, in which case
/// the moment series is all zeros. Used for unlabelled inference streams.
pub fn parse_kinematics(text: &str, path: &Path, fallback_rate: f64) -> Result<RawTrial> {
    parse_rows(text, path, fallback_rate, "stream", false)
}

fn parse_rows(text: &str, path: &Path, fallback_rate: f64, fallback_subject: &str, need_moment: bool) -> Result<RawTrial> {
    let mut meta = BTreeMap::new();
    let mut meta_lines = 0u64;
    for line in text.lines() {
        let Some(rest) = line.trim_start().strip_prefix('#') else { break };
        meta_lines += 1;
        if let Some((k, v)) = rest.split_once('=') {
            meta.insert(k.trim().to_string(), (meta_lines, v.trim().to_string()));
        }
    }
    let meta_f64 = |key: &str| -> Result<Option<f64>> {
        meta.get(key)
            .map(|(line, v)| parse_f64(path, *line, key, v))
            .transpose()
    };
    let sample_rate = meta_f64("sample_rate_hz")?.unwrap_or(fallback_rate);
    let speed = meta_f64("speed_mps")?.unwrap_or(0.0);
    let subject_id = meta
        .get("subject_id")
        .map(|(_, v)| v.clone())
        .unwrap_or_else(|| fallback_subject.to_string());
    let heel_strikes = match meta.get("heel_strikes") {
        None => Vec::new(),
        Some((_, v)) if v.is_empty() => Vec::new(),
        Some((line, v)) => v
            .split(';')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| parse_error(path, *line, format!("heel_strikes: {s:?} is not an index")))
            })
            .collect::<Result<_>>()?,
    };

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| parse_error(path, meta_lines + 1, e.to_string()))?
        .clone();
    let kin_cols = column_indices(path, &header, [TRIAL_COLUMNS[0], TRIAL_COLUMNS[1], TRIAL_COLUMNS[2]])?;
    let moment_col = match column_indices(path, &header, [TRIAL_COLUMNS[3]]) {
        Ok([i]) => Some(i),
        Err(e) if need_moment => return Err(e),
        Err(_) => None,
    };

    let mut raw = RawTrial {
        subject_id,
        speed,
        sample_rate,
        time: Vec::new(),
        angle_l: Vec::new(),
        angle_r: Vec::new(),
        moment: Vec::new(),
        heel_strikes,
    };
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_error(path, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize, col: usize| -> Result<f64> {
            let name = TRIAL_COLUMNS[i];
            let s = record
                .get(col)
                .ok_or_else(|| parse_error(path, line, format!("missing field {name}")))?;
            parse_f64(path, line, name, s)
        };
        let (t, l, r) = (field(0, kin_cols[0])?, field(1, kin_cols[1])?, field(2, kin_cols[2])?);
        let m = match moment_col {
            Some(c) => field(3, c)?,
            None => 0.0,
        };
        if let Some(&prev) = raw.time.last() {
            if t <= prev {
                return Err(parse_error(path, line, format!("time {t} does not increase (previous {prev})")));
            }
        }
        for (name, v) in [(TRIAL_COLUMNS[1], l), (TRIAL_COLUMNS[2], r)] {
            if v.abs() > MAX_ANGLE_RAD {
                return Err(parse_error(path, line, format!("{name} = {v} exceeds π; angles must be in radians")));
            }
        }
        if m.abs() > MAX_MOMENT_NM_PER_KG {
            return Err(parse_error(
                path,
                line,
                format!("moment {m} exceeds {MAX_MOMENT_NM_PER_KG}; moments must be in Nm/kg"),
            ));
        }
        raw.time.push(t);
        raw.angle_l.push(l);
        raw.angle_r.push(r);
        raw.moment.push(m);
    }
    raw.validate(path)?;
    Ok(raw)
}

pub fn read_trial(path: &Path, fallback_rate: f64) -> Result<RawTrial> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("unknown");
    let fallback_subject = stem.split('_').next().unwrap_or(stem);
    parse_trial(&text, path, fallback_rate, fallback_subject)
}

/// Serializes a trial; values use shortest round-trip formatting.
pub fn format_trial(trial: &RawTrial) -> String {
    let mut out = String::new();
    out.push_str(&format!("# subject_id={}\n", trial.subject_id));
    out.push_str(&format!("# speed_mps={}\n", trial.speed));
    out.push_str(&format!("# sample_rate_hz={}\n", trial.sample_rate));
    if !trial.heel_strikes.is_empty() {
        let hs: Vec<String> = trial.heel_strikes.iter().map(|i| i.to_string()).collect();
        out.push_str(&format!("# heel_strikes={}\n", hs.join(";")));
    }
    out.push_str(&TRIAL_COLUMNS.join(","));
    out.push('\n');
    for i in 0..trial.len() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            trial.time[i], trial.angle_l[i], trial.angle_r[i], trial.moment[i]
        ));
    }
    out
}

pub fn write_trial(path: &Path, trial: &RawTrial) -> Result<()> {
    std::fs::write(path, format_trial(trial)).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// File name used for a trial inside a corpus directory.
pub fn trial_file_name(trial: &RawTrial) -> String {
    format!("{}_{:.2}mps.csv", trial.subject_id, trial.speed)
}

pub fn read_subjects(path: &Path) -> Result<Subjects> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(format!("reading {}", path.display()), io),
            other => parse_error(path, 0, format!("{other:?}")),
        })?;
    let header = reader.headers().map_err(|e| parse_error(path, 1, e.to_string()))?.clone();
    let cols = column_indices(path, &header, SUBJECT_COLUMNS)?;
    let mut out = Subjects::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_error(path, e.position().map(|p| p.line()).unwrap_or(0), e.to_string()))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let get = |i: usize| {
            record
                .get(cols[i])
                .ok_or_else(|| parse_error(path, line, format!("missing field {}", SUBJECT_COLUMNS[i])))
        };
        let id = get(0)?.to_string();
        let mass = parse_f64(path, line, SUBJECT_COLUMNS[1], get(1)?)?;
        let height = parse_f64(path, line, SUBJECT_COLUMNS[2], get(2)?)?;
        let body = BodyParams::new(mass, height).map_err(|e| parse_error(path, line, e.to_string()))?;
        if out.contains_key(&id) {
            return Err(parse_error(path, line, format!("duplicate subject {id}")));
        }
        out.insert(id.clone(), SubjectMeta { subject_id: id, body });
    }
    Ok(out)
}

pub fn write_subjects(path: &Path, subjects: &Subjects) -> Result<()> {
    let mut out = SUBJECT_COLUMNS.join(",");
    out.push('\n');
    for s in subjects.values() {
        out.push_str(&format!("{},{},{}\n", s.subject_id, s.body.mass, s.body.height));
    }
    std::fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Directory layout of a corpus: `subjects.csv` plus `trials/*.csv`.
pub fn corpus_paths(root: &Path) -> (PathBuf, PathBuf) {
    (root.join("subjects.csv"), root.join("trials"))
}
