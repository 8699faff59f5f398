//! Online evaluation: trials arrive one at a time and every statistic comes
//! from data available before the session starts.

use crate::data::{Paradigm, Phase, TrialSource};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::preprocess::{FilterMode, Normalizer, ScopeKey};
use crate::tensor::Tensor;

use super::offline::Prediction;
use super::pipeline::{stack_f32, Prep};

/// Hands out test trials strictly one at a time. The next trial is only
/// available after a prediction for the current one has been submitted.
pub struct TrialStream<'a> {
    source: &'a dyn TrialSource,
    ids: Vec<usize>,
    next: usize,
    pending: Option<usize>,
    out: Vec<Prediction>,
}

impl<'a> TrialStream<'a> {
    pub fn new(source: &'a dyn TrialSource, ids: Vec<usize>) -> Self {
        TrialStream {
            source,
            ids,
            next: 0,
            pending: None,
            out: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Next raw trial, or `None` at the end of the stream.
    pub fn next_trial(&mut self) -> Result<Option<(usize, Tensor<f64>)>> {
        if let Some(i) = self.pending {
            return Err(Error::arg(format!("trial {i} has not been predicted yet")));
        }
        let Some(&i) = self.ids.get(self.next) else {
            return Ok(None);
        };
        self.next += 1;
        self.pending = Some(i);
        Ok(Some((i, self.source.fetch(i, Phase::Predict))))
    }

    pub fn submit(&mut self, predicted: usize) -> Result<()> {
        let i = self
            .pending
            .take()
            .ok_or_else(|| Error::arg("no trial awaiting a prediction"))?;
        self.source.mark_predicted(i);
        self.out.push(Prediction {
            trial: i,
            predicted,
            label: usize::from(self.source.meta().labels[i]),
        });
        Ok(())
    }

    pub fn finish(self) -> Result<Vec<Prediction>> {
        if self.pending.is_some() || self.next != self.ids.len() {
            return Err(Error::arg("stream closed before every trial was predicted"));
        }
        Ok(self.out)
    }
}

/// A model with its online normalisation, fitted before any test trial is seen.
#[derive(Debug, Clone)]
pub struct OnlineModel {
    pub model: Model<f32>,
    pub normalizer: Normalizer,
}

/// Fit the online statistics.
///
/// W-S, C-S F-T and MDL use the held-out subject's calibration trials for
/// alignment, z-score and BN statistics. C-S has no calibration data: no
/// alignment, z-score with the pooled statistics of the raw training trials,
/// and BN statistics from the training pool.
pub fn fit_online(
    model: &Model<f32>,
    source: &dyn TrialSource,
    paradigm: Paradigm,
    calibration: &[usize],
    train: &[usize],
    prep: &Prep,
) -> Result<OnlineModel> {
    let p = &prep.pipeline;
    let (ids, phase, normalizer_of): (&[usize], Phase, Box<dyn Fn(&[Tensor<f64>]) -> Result<Normalizer>>) =
        match paradigm {
            Paradigm::CS => {
                if p.use_ea {
                    return Err(Error::config("online cross-subject evaluation cannot use Euclidean Alignment"));
                }
                let zscore = p.use_zscore;
                (
                    train,
                    Phase::Train,
                    Box::new(move |t: &[Tensor<f64>]| {
                        let refs: Vec<&Tensor<f64>> = t.iter().collect();
                        Normalizer::fit(&refs, ScopeKey::Pooled, false, zscore)
                    }),
                )
            }
            _ => {
                let subject = calibration
                    .first()
                    .map(|&i| source.meta().subjects[i])
                    .ok_or_else(|| Error::Empty("online evaluation needs calibration trials".into()))?;
                (
                    calibration,
                    Phase::Calibrate,
                    Box::new(move |t: &[Tensor<f64>]| prep.fit(t, ScopeKey::Subject(subject))),
                )
            }
        };
    if ids.is_empty() {
        return Err(Error::Empty("no trials to fit online statistics on".into()));
    }
    let trials = ids
        .iter()
        .map(|&i| prep.condition(source, i, phase, FilterMode::Causal))
        .collect::<Result<Vec<_>>>()?;
    let normalizer = normalizer_of(&trials)?;
    let model = if p.use_bn_trick && trials.len() >= 2 {
        let normed = trials.iter().map(|x| normalizer.apply(x)).collect::<Result<Vec<_>>>()?;
        model.recompute_bn_stats(&stack_f32(&normed)?)?
    } else {
        model.clone()
    };
    Ok(OnlineModel { model, normalizer })
}

/// Predict each streamed trial on its own, in order.
pub fn evaluate_online(online: &OnlineModel, mut stream: TrialStream<'_>, prep: &Prep) -> Result<Vec<Prediction>> {
    while let Some((_, raw)) = stream.next_trial()? {
        let x = prep.select(raw)?;
        let x = prep.condition_tensor(&x, FilterMode::Causal)?;
        let x = online.normalizer.apply(&x)?;
        let batch = stack_f32(&[x])?;
        let pred = online.model.predict(&batch)?[0];
        stream.submit(pred)?;
    }
    stream.finish()
}
