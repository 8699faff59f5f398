use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::ScopeKey;

pub const STD_FLOOR: f64 = 1e-8;

/// Per-channel mean and standard deviation pooled over every trial and
/// time point of a scope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScoreStats {
    pub scope: ScopeKey,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub fn fit_zscore(trials: &[&Tensor<f64>], scope: ScopeKey) -> Result<ZScoreStats> {
    let first = trials
        .first()
        .ok_or_else(|| Error::Empty("z-score scope has no trials".into()))?;
    let (c, _) = first.dims2()?;
    let mut sum = vec![0.0; c];
    let mut count = 0usize;
    for x in trials {
        let (ci, t) = x.dims2()?;
        if ci != c {
            return Err(Error::shape("z-score scope mixes channel counts"));
        }
        for (ch, row) in x.data().chunks_exact(t.max(1)).take(c).enumerate() {
            sum[ch] += row.iter().sum::<f64>();
        }
        count += t;
    }
    if count == 0 {
        return Err(Error::Empty("z-score scope has no samples".into()));
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
    let mut ss = vec![0.0; c];
    for x in trials {
        let t = x.shape()[1];
        for (ch, row) in x.data().chunks_exact(t.max(1)).take(c).enumerate() {
            ss[ch] += row.iter().map(|v| (v - mean[ch]).powi(2)).sum::<f64>();
        }
    }
    let std = ss
        .iter()
        .map(|s| (s / count as f64).sqrt().max(STD_FLOOR))
        .collect();
    Ok(ZScoreStats { scope, mean, std })
}

pub fn apply_zscore(trial: &Tensor<f64>, stats: &ZScoreStats) -> Result<Tensor<f64>> {
    let (c, t) = trial.dims2()?;
    if c != stats.mean.len() {
        return Err(Error::shape(format!(
            "trial has {c} channels, z-score stats have {}",
            stats.mean.len()
        )));
    }
    let mut out = trial.data().to_vec();
    for (ch, row) in out.chunks_exact_mut(t.max(1)).take(c).enumerate() {
        let (m, s) = (stats.mean[ch], stats.std[ch]);
        for v in row {
            *v = (*v - m) / s;
        }
    }
    Tensor::from_vec(&[c, t], out)
}
