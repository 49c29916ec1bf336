//! Error metrics over prediction lists.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One model output next to its label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub subject_id: String,
    pub speed: f64,
    /// Time (s) of the window's final frame.
    pub time: f64,
    pub truth: f64,
    pub pred: f64,
}

impl Prediction {
    fn sq_err(&self) -> f64 {
        (self.pred - self.truth).powi(2)
    }
}

fn check_pair(y: &[f64], y_hat: &[f64]) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(Error::shape(
            "rmse",
            format!("{} labels but {} predictions", y.len(), y_hat.len()),
        ));
    }
    if y.is_empty() {
        return Err(Error::usage("rmse", "no samples"));
    }
    Ok(())
}

pub fn mse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_pair(y, y_hat)?;
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64)
}

/// Root mean squared error.
pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    mse(y, y_hat).map(f64::sqrt)
}

/// Relative excess of the test error over the validation error.
pub fn r_tv(rmse_test: f64, rmse_val: f64) -> Result<f64> {
    if rmse_val == 0.0 || !rmse_val.is_finite() || !rmse_test.is_finite() {
        return Err(Error::usage(
            "r_tv",
            format!("needs a finite, non-zero validation RMSE (got {rmse_val})"),
        ));
    }
    Ok((rmse_test - rmse_val) / rmse_val)
}

pub fn prediction_rmse(preds: &[Prediction]) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::usage("rmse", "no samples"));
    }
    Ok((preds.iter().map(Prediction::sq_err).sum::<f64>() / preds.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedRmse {
    pub speed_mps: f64,
    pub rmse: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRmse {
    pub subject_id: String,
    pub rmse: f64,
    pub n: usize,
}

/// RMSE per distinct trial speed (exact equality), sorted by speed.
pub fn per_speed_rmse(preds: &[Prediction]) -> Vec<SpeedRmse> {
    let mut sorted: Vec<&Prediction> = preds.iter().collect();
    sorted.sort_by(|a, b| a.speed.total_cmp(&b.speed));
    let mut out: Vec<SpeedRmse> = Vec::new();
    let mut sums: Vec<f64> = Vec::new();
    for p in sorted {
        match out.last_mut() {
            Some(last) if last.speed_mps.total_cmp(&p.speed) == Ordering::Equal => {
                last.n += 1;
                *sums.last_mut().unwrap() += p.sq_err();
            }
            _ => {
                out.push(SpeedRmse {
                    speed_mps: p.speed,
                    rmse: 0.0,
                    n: 1,
                });
                sums.push(p.sq_err());
            }
        }
    }
    for (o, s) in out.iter_mut().zip(sums) {
        o.rmse = (s / o.n as f64).sqrt();
    }
    out
}

/// RMSE per subject, sorted by subject id.
pub fn per_subject_rmse(preds: &[Prediction]) -> Vec<SubjectRmse> {
    let mut acc: std::collections::BTreeMap<&str, (f64, usize)> = Default::default();
    for p in preds {
        let e = acc.entry(&p.subject_id).or_default();
        e.0 += p.sq_err();
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(s, (sum, n))| SubjectRmse {
            subject_id: s.to_string(),
            rmse: (sum / n as f64).sqrt(),
            n,
        })
        .collect()
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(speed: f64, truth: f64, pred: f64) -> Prediction {
        Prediction {
            subject_id: "S".into(),
            speed,
            time: 0.0,
            truth,
            pred,
        }
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[0.3, -1.0], &[0.3, -1.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[0.0; 4], &[1.0; 4]).unwrap(), 1.0);
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(rmse(&[], &[]).is_err());
    }

    #[test]
    fn r_tv_examples() {
        assert_eq!(r_tv(0.2, 0.2).unwrap(), 0.0);
        assert_eq!(r_tv(0.4, 0.2).unwrap(), 1.0);
        assert!((r_tv(0.3, 0.2).unwrap() - 0.5).abs() < 1e-15);
        assert!(r_tv(0.3, 0.0).is_err());
    }

    #[test]
    fn per_speed_groups_exactly() {
        let preds = vec![p(1.2, 0.0, 1.0), p(0.5, 0.0, 2.0), p(1.2, 0.0, 1.0)];
        let ps = per_speed_rmse(&preds);
        assert_eq!(ps.len(), 2);
        assert_eq!((ps[0].speed_mps, ps[0].rmse, ps[0].n), (0.5, 2.0, 1));
        assert_eq!((ps[1].speed_mps, ps[1].rmse, ps[1].n), (1.2, 1.0, 2));
        let single = vec![p(1.0, 0.1, 0.3), p(1.0, 0.2, 0.1)];
        assert_eq!(per_speed_rmse(&single)[0].rmse, prediction_rmse(&single).unwrap());
    }

    #[test]
    fn mean_std_uses_sample_deviation() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);
        assert_eq!(mean_std(&[5.0]), (5.0, 0.0));
    }
}
