use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{Phase, TrialSource};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::preprocess::{FilterMode, ScopeKey};

use super::pipeline::{stack_f32, Prep};

/// Prediction for one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub trial: usize,
    pub predicted: usize,
    pub label: usize,
}

pub fn accuracy(preds: &[Prediction]) -> f64 {
    if preds.is_empty() {
        return 0.0;
    }
    let ok = preds.iter().filter(|p| p.predicted == p.label).count();
    ok as f64 / preds.len() as f64 * 100.0
}

/// Offline evaluation: every test scope is normalised with its own
/// statistics (alignment, z-score, and BN statistics when enabled), then
/// classified with an Eval-mode forward pass.
pub fn evaluate_offline(
    model: &Model<f32>,
    source: &dyn TrialSource,
    test: &[usize],
    prep: &Prep,
) -> Result<Vec<Prediction>> {
    if test.is_empty() {
        return Err(Error::Empty("offline evaluation scope has no trials".into()));
    }
    let meta = source.meta();
    let mut groups: BTreeMap<ScopeKey, Vec<usize>> = BTreeMap::new();
    for &i in test {
        groups.entry(prep.scope_of(meta, i)).or_default().push(i);
    }
    let mut out = Vec::with_capacity(test.len());
    for (scope, ids) in groups {
        let trials = ids
            .iter()
            .map(|&i| prep.condition(source, i, Phase::Predict, FilterMode::ZeroPhase))
            .collect::<Result<Vec<_>>>()?;
        let norm = prep.fit(&trials, scope)?;
        let trials = trials.iter().map(|x| norm.apply(x)).collect::<Result<Vec<_>>>()?;
        let batch = stack_f32(&trials)?;
        let adapted;
        let m = if prep.pipeline.use_bn_trick && ids.len() >= 2 {
            adapted = model.recompute_bn_stats(&batch)?;
            &adapted
        } else {
            model
        };
        let pred = m.predict(&batch)?;
        for (&i, p) in ids.iter().zip(pred) {
            source.mark_predicted(i);
            out.push(Prediction {
                trial: i,
                predicted: p,
                label: usize::from(meta.labels[i]),
            });
        }
    }
    // Report in the caller's order.
    let pos: std::collections::HashMap<usize, usize> = test.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    out.sort_by_key(|p| pos[&p.trial]);
    Ok(out)
}
