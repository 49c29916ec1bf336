use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LOG_HEADER: &str = "epoch,l1,l2,total,train_rmse,val_rmse,seconds";

/// Losses are sample means over the epoch, measured before each batch's
/// update. Baselines report their single loss as `l1` with `l2 = 0` and
/// `total = l1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub l1: f64,
    pub l2: f64,
    pub total: f64,
    pub train_rmse: f64,
    pub val_rmse: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    /// Epoch whose parameters were kept, if any epoch ran.
    pub best_epoch: Option<usize>,
    pub best_val_rmse: Option<f64>,
}

impl TrainLog {
    pub fn push(&mut self, entry: EpochLog) {
        debug_assert!(self.epochs.last().is_none_or(|e| e.epoch < entry.epoch));
        self.epochs.push(entry);
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    /// CSV text; `with_timing = false` writes zero seconds so that runs can
    /// be compared byte for byte.
    pub fn to_csv(&self, with_timing: bool) -> String {
        let mut out = String::from(LOG_HEADER);
        out.push('\n');
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                e.epoch,
                e.l1,
                e.l2,
                e.total,
                e.train_rmse,
                e.val_rmse,
                if with_timing { e.seconds } else { 0.0 }
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv(true)).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}
