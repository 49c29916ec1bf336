//! Subject-level train/test partition with a trial-level validation hold-out.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::trial::{SplitTag, Subjects, TrialRecord};
use crate::error::{Error, Result};

fn default_validation_fraction() -> f64 {
    0.2
}

/// Parsed from TOML:
///
/// ```toml
/// train = ["S01", "S02"]
/// test = ["S03"]
/// validation_fraction = 0.2
/// seed = 0
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<String>,
    pub test: Vec<String>,
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Trial indices per split, each list sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl DatasetSplit {
    pub fn get(&self, tag: SplitTag) -> &[usize] {
        match tag {
            SplitTag::Train => &self.train,
            SplitTag::Validation => &self.validation,
            SplitTag::Test => &self.test,
        }
    }
}

impl SplitSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: SplitSpec = toml::from_str(text).map_err(|e| Error::Config(format!("split file: {e}")))?;
        spec.check()?;
        Ok(spec)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("split serializes")
    }

    fn check(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config(format!(
                "validation fraction {} outside [0, 1)",
                self.validation_fraction
            )));
        }
        let train: BTreeSet<&String> = self.train.iter().collect();
        if let Some(s) = self.test.iter().find(|s| train.contains(s)) {
            return Err(Error::Config(format!("subject {s} is listed in both train and test")));
        }
        if self.train.is_empty() {
            return Err(Error::Config("no training subjects".into()));
        }
        Ok(())
    }

    pub fn tag(&self, subject: &str) -> Option<SplitTag> {
        if self.train.iter().any(|s| s == subject) {
            Some(SplitTag::Train)
        } else if self.test.iter().any(|s| s == subject) {
            Some(SplitTag::Test)
        } else {
            None
        }
    }

    /// Assigns trials. Trials of subjects in neither list are left out.
    pub fn assign(&self, trials: &[TrialRecord], subjects: &Subjects) -> Result<DatasetSplit> {
        self.check()?;
        for s in self.train.iter().chain(&self.test) {
            if !subjects.contains_key(s) {
                return Err(Error::Config(format!("split names unknown subject {s}")));
            }
        }
        let mut split = DatasetSplit::default();
        let mut train = Vec::new();
        for (i, t) in trials.iter().enumerate() {
            match self.tag(t.subject_id()) {
                Some(SplitTag::Train) => train.push(i),
                Some(SplitTag::Test) => split.test.push(i),
                _ => {}
            }
        }
        let n_val = if train.len() >= 2 {
            ((self.validation_fraction * train.len() as f64).round() as usize).min(train.len() - 1)
        } else {
            0
        };
        let mut shuffled = train.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(self.seed));
        split.validation = shuffled[..n_val].to_vec();
        split.train = shuffled[n_val..].to_vec();
        split.train.sort_unstable();
        split.validation.sort_unstable();
        Ok(split)
    }
}
