use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{ArchiveMeta, ChannelKind, Paradigm, Phase, TrialSource};
use crate::error::{Error, Result};
use crate::preprocess::{FilterMode, Normalizer, PreprocessPlan, ScopeKey, DEFAULT_HIGHPASS_HZ};
use crate::tensor::Tensor;
use crate::training::TrainData;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatsScope {
    Subject,
    Session,
}

/// Which pipeline ingredients are active.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub use_ea: bool,
    pub use_zscore: bool,
    pub stats_scope: StatsScope,
    pub use_bn_trick: bool,
    pub use_mixup: bool,
    pub use_subject_reg: bool,
    pub include_eog: bool,
    pub online_mode: bool,
    /// `None` disables the high-pass stage.
    pub highpass_hz: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            use_ea: true,
            use_zscore: true,
            stats_scope: StatsScope::Session,
            use_bn_trick: true,
            use_mixup: true,
            use_subject_reg: true,
            include_eog: false,
            online_mode: false,
            highpass_hz: Some(DEFAULT_HIGHPASS_HZ),
        }
    }
}

impl PipelineConfig {
    /// The "- Everything" variant: no alignment, subject-scope statistics,
    /// no BN adaptation, no mixup, no subject loss.
    pub fn minus_everything(&self) -> Self {
        PipelineConfig {
            use_ea: false,
            stats_scope: StatsScope::Subject,
            use_bn_trick: false,
            use_mixup: false,
            use_subject_reg: false,
            ..self.clone()
        }
    }

    pub fn validate(&self, paradigm: Paradigm, meta: &ArchiveMeta) -> Result<()> {
        if self.online_mode && self.use_ea && paradigm == Paradigm::CS {
            return Err(Error::config(
                "online cross-subject evaluation cannot use Euclidean Alignment: \
                 no calibration data exists for the test subject",
            ));
        }
        if self.stats_scope == StatsScope::Session && !meta.is_multi_session() {
            return Err(Error::config(
                "session-scope statistics need at least two sessions per subject",
            ));
        }
        if let Some(fc) = self.highpass_hz {
            if !(fc > 0.0) {
                return Err(Error::config(format!("high-pass cutoff must be positive, got {fc}")));
            }
        }
        if !self.include_eog && !meta.channel_kinds.iter().any(|&k| k == ChannelKind::Eeg) {
            return Err(Error::config("archive has no EEG channels"));
        }
        Ok(())
    }
}

/// Channel selection, conditioning and scope normalisation for one archive.
#[derive(Debug, Clone)]
pub struct Prep {
    pub keep: Vec<usize>,
    pub fs: f64,
    pub target_hz: f64,
    pub pipeline: PipelineConfig,
}

impl Prep {
    pub fn new(meta: &ArchiveMeta, pipeline: &PipelineConfig, target_hz: f64) -> Self {
        let keep = (0..meta.n_channels)
            .filter(|&c| pipeline.include_eog || meta.channel_kinds[c] == ChannelKind::Eeg)
            .collect();
        Prep {
            keep,
            fs: f64::from(meta.fs),
            target_hz,
            pipeline: pipeline.clone(),
        }
    }

    pub fn n_channels(&self) -> usize {
        self.keep.len()
    }

    fn plan(&self, mode: FilterMode) -> PreprocessPlan {
        PreprocessPlan {
            highpass_hz: self.pipeline.highpass_hz,
            filter_mode: mode,
            resample_hz: ((self.target_hz - self.fs).abs() > 1e-9).then_some(self.target_hz),
            align: self.pipeline.use_ea,
            zscore: self.pipeline.use_zscore,
        }
    }

    /// Keep the selected channels of a raw `[C, T]` trial.
    pub fn select(&self, raw: Tensor<f64>) -> Result<Tensor<f64>> {
        let (c, t) = raw.dims2()?;
        if self.keep.len() == c {
            return Ok(raw);
        }
        let mut d = Vec::with_capacity(self.keep.len() * t);
        for &k in &self.keep {
            d.extend_from_slice(&raw.data()[k * t..(k + 1) * t]);
        }
        Tensor::from_vec(&[self.keep.len(), t], d)
    }

    /// High-pass and resample a channel-selected trial.
    pub fn condition_tensor(&self, x: &Tensor<f64>, mode: FilterMode) -> Result<Tensor<f64>> {
        Ok(self.plan(mode).condition(x, self.fs)?.0)
    }

    /// Selected channels of trial `i`, high-passed and resampled.
    pub fn condition(&self, source: &dyn TrialSource, i: usize, phase: Phase, mode: FilterMode) -> Result<Tensor<f64>> {
        let x = self.select(source.fetch(i, phase))?;
        self.condition_tensor(&x, mode)
    }

    pub fn scope_of(&self, meta: &ArchiveMeta, i: usize) -> ScopeKey {
        match self.pipeline.stats_scope {
            StatsScope::Subject => ScopeKey::Subject(meta.subjects[i]),
            StatsScope::Session => ScopeKey::Session {
                subject: meta.subjects[i],
                session: meta.sessions[i],
            },
        }
    }

    /// Condition trials and normalise each scope with statistics of that
    /// scope alone. Output order follows `ids`.
    pub fn prepare_scoped(&self, source: &dyn TrialSource, ids: &[usize], phase: Phase) -> Result<Vec<Tensor<f64>>> {
        let meta = source.meta();
        let mut groups: BTreeMap<ScopeKey, Vec<usize>> = BTreeMap::new();
        for (pos, &i) in ids.iter().enumerate() {
            groups.entry(self.scope_of(meta, i)).or_default().push(pos);
        }
        let mut out: Vec<Option<Tensor<f64>>> = vec![None; ids.len()];
        for (scope, members) in groups {
            let trials = members
                .iter()
                .map(|&p| self.condition(source, ids[p], phase, FilterMode::ZeroPhase))
                .collect::<Result<Vec<_>>>()?;
            let norm = self.fit(&trials, scope)?;
            for (&p, x) in members.iter().zip(&trials) {
                out[p] = Some(norm.apply(x)?);
            }
        }
        Ok(out.into_iter().map(|x| x.expect("every position filled")).collect())
    }

    pub fn fit(&self, trials: &[Tensor<f64>], scope: ScopeKey) -> Result<Normalizer> {
        let refs: Vec<&Tensor<f64>> = trials.iter().collect();
        Normalizer::fit(&refs, scope, self.pipeline.use_ea, self.pipeline.use_zscore)
    }

    /// Scope-normalised training set for `ids`.
    pub fn train_data(&self, source: &dyn TrialSource, ids: &[usize], phase: Phase) -> Result<TrainData> {
        let meta = source.meta();
        let trials = self.prepare_scoped(source, ids, phase)?;
        let labels = ids.iter().map(|&i| usize::from(meta.labels[i])).collect();
        let subjects: Vec<u16> = ids.iter().map(|&i| meta.subjects[i]).collect();
        TrainData::new(&trials, labels, &subjects)
    }
}

pub(crate) fn stack_f32(trials: &[Tensor<f64>]) -> Result<Tensor<f32>> {
    let (c, t) = trials
        .first()
        .ok_or_else(|| Error::Empty("no trials to stack".into()))?
        .dims2()?;
    let mut d = Vec::with_capacity(trials.len() * c * t);
    for x in trials {
        d.extend(x.data().iter().map(|&v| v as f32));
    }
    Tensor::from_vec(&[trials.len(), c, t], d)
}
