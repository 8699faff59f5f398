use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Paradigm, Scheme};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::training::{TrainConfig, TrainHistory};

use super::pipeline::PipelineConfig;

/// Accuracy of one held-out subject in one fold and run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectResult {
    pub fold: usize,
    pub run: usize,
    pub subject: u16,
    pub n_test: usize,
    /// `None` when only online scores were requested.
    pub offline: Option<f64>,
    /// Accuracy restricted to sessions after the subject's first.
    pub offline_later_sessions: Option<f64>,
    pub online: Option<f64>,
    /// C-S F-T only: the cross-subject model on the same test trials,
    /// before fine-tuning.
    pub before_finetune: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub fold: usize,
    pub run: usize,
    pub init_seed: u64,
    pub train_seed: u64,
    pub n_train: usize,
    pub train_seconds: f64,
    pub eval_seconds: f64,
    pub history: TrainHistory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectSummary {
    pub subject: u16,
    pub mean: f64,
    /// Population std across runs.
    pub std_runs: f64,
    pub n_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Std of per-subject means, dividing by n.
    pub std_subjects: f64,
    /// Std of per-subject means, dividing by n - 1.
    pub std_subjects_sample: f64,
    /// Std of per-run averages across runs, dividing by n.
    pub std_runs: f64,
    pub per_subject: Vec<SubjectSummary>,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn std(v: &[f64], ddof: usize) -> f64 {
    if v.len() <= ddof {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - ddof) as f64).sqrt()
}

/// Aggregate `(subject, run, accuracy)` triples: mean over runs per subject,
/// then over subjects. Order of the input does not matter.
pub fn aggregate(values: &[(u16, usize, f64)]) -> Summary {
    let mut by_subject: BTreeMap<u16, Vec<(usize, f64)>> = BTreeMap::new();
    let mut by_run: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for &(s, r, a) in values {
        by_subject.entry(s).or_default().push((r, a));
        by_run.entry(r).or_default().push(a);
    }
    let per_subject: Vec<SubjectSummary> = by_subject
        .into_iter()
        .map(|(subject, mut v)| {
            v.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
            let acc: Vec<f64> = v.iter().map(|x| x.1).collect();
            SubjectSummary {
                subject,
                mean: mean(&acc),
                std_runs: std(&acc, 0),
                n_runs: acc.len(),
            }
        })
        .collect();
    let means: Vec<f64> = per_subject.iter().map(|s| s.mean).collect();
    let run_means: Vec<f64> = by_run
        .into_values()
        .map(|mut v| {
            v.sort_by(f64::total_cmp);
            mean(&v)
        })
        .collect();
    Summary {
        mean: mean(&means),
        std_subjects: std(&means, 0),
        std_subjects_sample: std(&means, 1),
        std_runs: std(&run_means, 0),
        per_subject,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub pipeline: PipelineConfig,
    pub n_runs: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub paradigm: Paradigm,
    pub scheme: Scheme,
    pub config: ConfigSnapshot,
    pub results: Vec<SubjectResult>,
    pub runs: Vec<RunRecord>,
    pub offline: Option<Summary>,
    /// Sessions after each subject's first only (C-S on multi-session data).
    pub offline_later_sessions: Option<Summary>,
    pub online: Option<Summary>,
    pub before_finetune: Option<Summary>,
    pub notes: Vec<String>,
    pub total_seconds: f64,
}

impl EvalReport {
    pub(crate) fn summarise(&mut self) {
        let pick = |f: &dyn Fn(&SubjectResult) -> Option<f64>| -> Option<Summary> {
            let v: Vec<(u16, usize, f64)> = self
                .results
                .iter()
                .filter_map(|r| f(r).map(|a| (r.subject, r.run, a)))
                .collect();
            (!v.is_empty()).then(|| aggregate(&v))
        };
        self.offline = pick(&|r| r.offline);
        self.offline_later_sessions = pick(&|r| r.offline_later_sessions);
        self.online = pick(&|r| r.online);
        self.before_finetune = pick(&|r| r.before_finetune);
    }

    /// The headline accuracy: online when the pipeline is online, else offline.
    pub fn primary(&self) -> Option<&Summary> {
        if self.config.pipeline.online_mode {
            self.online.as_ref()
        } else {
            self.offline.as_ref()
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// One row per fold, run and subject.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
        let mut s = String::from("paradigm,fold,run,subject,n_test,offline,offline_later_sessions,online,before_finetune\n");
        for r in &self.results {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                self.paradigm,
                r.fold,
                r.run,
                r.subject,
                r.n_test,
                opt(r.offline),
                opt(r.offline_later_sessions),
                opt(r.online),
                opt(r.before_finetune)
            );
        }
        s
    }

    /// Write `<stem>.json` and `<stem>.csv` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join(format!("{stem}.json"));
        std::fs::write(&json, self.to_json()?).map_err(|e| Error::io(&json, e))?;
        let csv = dir.join(format!("{stem}.csv"));
        std::fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_values() {
        let v: Vec<_> = (0..4).flat_map(|s| (0..3).map(move |r| (s, r, 62.5))).collect();
        let s = aggregate(&v);
        assert_eq!(s.mean, 62.5);
        assert_eq!((s.std_subjects, s.std_subjects_sample, s.std_runs), (0.0, 0.0, 0.0));
        assert!(s.per_subject.iter().all(|p| p.n_runs == 3));
    }

    #[test]
    fn two_conventions() {
        let s = aggregate(&[(1, 0, 40.0), (2, 0, 60.0)]);
        assert_eq!(s.std_subjects, 10.0);
        assert!((s.std_subjects_sample - 200f64.sqrt()).abs() < 1e-12);
    }
}
