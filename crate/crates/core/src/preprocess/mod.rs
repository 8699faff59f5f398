//! Signal conditioning and statistical normalisation.
//!
//! Stages always run in the order high-pass, resample, epoch, Euclidean
//! Alignment, z-score. Disabling a stage skips it; nothing reorders them.
//! The first three act on single recordings or trials; the last two are
//! fitted over a scope (a subject, a session, or a pooled set).

mod align;
mod epoch;
mod filter;
mod resample;
mod zscore;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::TrialArchive;
use crate::error::Result;
use crate::tensor::Tensor;

pub use align::{apply_ea, fit_ea, mean_covariance, EAReference, EIG_FLOOR};
pub use epoch::{epoch_from_cue, Cue, Recording};
pub use filter::{highpass, Biquad, FilterMode, SosFilter, DEFAULT_HIGHPASS_HZ, HIGHPASS_ORDER};
pub use resample::{resample, resampled_len, CUTOFF_FRACTION};
pub use zscore::{apply_zscore, fit_zscore, ZScoreStats, STD_FLOOR};

/// The data a normalisation statistic was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScopeKey {
    Subject(u16),
    Session { subject: u16, session: u16 },
    /// Several subjects at once (e.g. every training subject).
    Pooled,
}

impl fmt::Display for ScopeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScopeKey::Subject(s) => write!(f, "subject {s}"),
            ScopeKey::Session { subject, session } => {
                write!(f, "subject {subject} session {session}")
            }
            ScopeKey::Pooled => f.write_str("pooled"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    HighPass,
    Resample,
    Epoch,
    Align,
    ZScore,
}

/// Which stages are enabled, with their parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessPlan {
    pub highpass_hz: Option<f64>,
    pub filter_mode: FilterMode,
    pub resample_hz: Option<f64>,
    pub align: bool,
    pub zscore: bool,
}

impl Default for PreprocessPlan {
    fn default() -> Self {
        PreprocessPlan {
            highpass_hz: Some(DEFAULT_HIGHPASS_HZ),
            filter_mode: FilterMode::ZeroPhase,
            resample_hz: None,
            align: true,
            zscore: true,
        }
    }
}

impl PreprocessPlan {
    /// Enabled stages in execution order.
    pub fn stages(&self) -> Vec<Stage> {
        let mut out = Vec::new();
        if self.highpass_hz.is_some() {
            out.push(Stage::HighPass);
        }
        if self.resample_hz.is_some() {
            out.push(Stage::Resample);
        }
        out.push(Stage::Epoch);
        if self.align {
            out.push(Stage::Align);
        }
        if self.zscore {
            out.push(Stage::ZScore);
        }
        out
    }

    /// High-pass then resample one `[C, T]` signal. Returns the new rate.
    pub fn condition(&self, x: &Tensor<f64>, fs: f64) -> Result<(Tensor<f64>, f64)> {
        let mut y = match self.highpass_hz {
            Some(fc) => highpass(x, fs, fc, self.filter_mode)?,
            None => x.clone(),
        };
        let mut rate = fs;
        if let Some(to) = self.resample_hz {
            y = resample(&y, fs, to)?;
            rate = to;
        }
        Ok((y, rate))
    }

    /// The continuous-domain stages: condition the recording, then cut trials.
    pub fn epoch_recording(
        &self,
        recording: &Recording,
        cues: &[Cue],
        duration_s: f64,
        class_names: Vec<String>,
    ) -> Result<TrialArchive> {
        let (data, fs) = self.condition(&recording.data, recording.fs)?;
        let conditioned = Recording {
            data,
            fs,
            ..recording.clone()
        };
        epoch_from_cue(&conditioned, cues, duration_s, class_names)
    }
}

/// Fitted scope statistics: alignment first, then z-score on aligned data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub ea: Option<EAReference>,
    pub zscore: Option<ZScoreStats>,
}

impl Normalizer {
    pub fn identity() -> Self {
        Normalizer {
            ea: None,
            zscore: None,
        }
    }

    pub fn fit(trials: &[&Tensor<f64>], scope: ScopeKey, align: bool, zscore: bool) -> Result<Self> {
        let ea = if align {
            Some(fit_ea(trials, scope)?)
        } else {
            None
        };
        let zs = if zscore {
            match &ea {
                Some(r) => {
                    let aligned = trials
                        .iter()
                        .map(|x| apply_ea(x, r))
                        .collect::<Result<Vec<_>>>()?;
                    let refs: Vec<&Tensor<f64>> = aligned.iter().collect();
                    Some(fit_zscore(&refs, scope)?)
                }
                None => Some(fit_zscore(trials, scope)?),
            }
        } else {
            None
        };
        Ok(Normalizer { ea, zscore: zs })
    }

    pub fn apply(&self, trial: &Tensor<f64>) -> Result<Tensor<f64>> {
        let mut y = match &self.ea {
            Some(r) => apply_ea(trial, r)?,
            None => trial.clone(),
        };
        if let Some(z) = &self.zscore {
            y = apply_zscore(&y, z)?;
        }
        Ok(y)
    }
}
