//! Read access to trial samples, with an auditing wrapper.
//!
//! Evaluation code reads signal data only through [`TrialSource::fetch`],
//! naming the phase it is in. [`AuditedSource`] records every read so tests
//! can check that held-out samples are never touched before prediction.

use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

use super::archive::{ArchiveMeta, TrialArchive};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    /// Model fitting and training-pool statistics.
    Train,
    /// Fine-tuning and calibration statistics.
    Calibrate,
    /// Test-time statistics and prediction.
    Predict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Access {
    Read { trial: usize, phase: Phase },
    /// A prediction for this trial was committed.
    Predicted(usize),
}

pub trait TrialSource: Sync {
    fn meta(&self) -> &ArchiveMeta;

    /// Trial `i` as a `[C, T]` tensor.
    fn fetch(&self, i: usize, phase: Phase) -> Tensor<f64>;

    /// Record that trial `i` has been predicted.
    fn mark_predicted(&self, _i: usize) {}
}

impl TrialSource for TrialArchive {
    fn meta(&self) -> &ArchiveMeta {
        TrialArchive::meta(self)
    }

    fn fetch(&self, i: usize, _phase: Phase) -> Tensor<f64> {
        self.trial_tensor(i)
    }
}

/// Logs every access to an archive.
pub struct AuditedSource<'a> {
    inner: &'a TrialArchive,
    log: Mutex<Vec<Access>>,
}

impl<'a> AuditedSource<'a> {
    pub fn new(inner: &'a TrialArchive) -> Self {
        AuditedSource {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn log(&self) -> Vec<Access> {
        self.log.lock().expect("access log poisoned").clone()
    }

    fn push(&self, a: Access) {
        self.log.lock().expect("access log poisoned").push(a);
    }
}

impl TrialSource for AuditedSource<'_> {
    fn meta(&self) -> &ArchiveMeta {
        self.inner.meta()
    }

    fn fetch(&self, i: usize, phase: Phase) -> Tensor<f64> {
        self.push(Access::Read { trial: i, phase });
        self.inner.trial_tensor(i)
    }

    fn mark_predicted(&self, i: usize) {
        self.push(Access::Predicted(i));
    }
}

/// First position in `log` that reads one of `protected` outside the
/// prediction phase, if any.
pub fn read_outside_predict(log: &[Access], protected: &[usize]) -> Option<usize> {
    log.iter().position(|a| match a {
        Access::Read { trial, phase } => *phase != Phase::Predict && protected.contains(trial),
        Access::Predicted(_) => false,
    })
}

/// Check that `stream` trials were read strictly one at a time: each is read
/// only after every earlier stream trial was predicted, and never by another
/// phase. Returns a description of the first violation.
pub fn check_streamed(log: &[Access], stream: &[usize]) -> Result<(), String> {
    let order: std::collections::HashMap<usize, usize> =
        stream.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let mut predicted = 0usize;
    for (pos, a) in log.iter().enumerate() {
        match *a {
            Access::Read { trial, phase } => {
                if let Some(&k) = order.get(&trial) {
                    if phase != Phase::Predict {
                        return Err(format!("event {pos}: stream trial {trial} read during {phase:?}"));
                    }
                    if k != predicted {
                        return Err(format!(
                            "event {pos}: stream trial {trial} (position {k}) read while position {predicted} pending"
                        ));
                    }
                }
            }
            Access::Predicted(trial) => {
                if let Some(&k) = order.get(&trial) {
                    if k != predicted {
                        return Err(format!("event {pos}: trial {trial} predicted out of order"));
                    }
                    predicted += 1;
                }
            }
        }
    }
    if predicted != stream.len() {
        return Err(format!("{predicted} of {} stream trials predicted", stream.len()));
    }
    Ok(())
}
