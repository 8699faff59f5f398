use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{make_splits, Fold, Paradigm, Phase, Scheme, SplitPlan, Target, TrialSource};
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::training::{finetune, train, TrainConfig};

use super::offline::{accuracy, evaluate_offline, Prediction};
use super::online::{evaluate_online, fit_online, TrialStream};
use super::pipeline::{PipelineConfig, Prep};
use super::report::{ConfigSnapshot, EvalReport, RunRecord, SubjectResult};

/// Everything needed to run one paradigm end to end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub paradigm: Paradigm,
    pub scheme: Scheme,
    /// `in_channels`, `n_classes` and `n_subjects` are filled in per fold.
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub pipeline: PipelineConfig,
    pub n_runs: usize,
    pub seed: u64,
    /// Worker threads over (fold, run) jobs.
    pub jobs: usize,
    /// In online mode, also score the same models offline.
    pub compare_offline: bool,
    /// Only run the first `n` folds.
    pub max_folds: Option<usize>,
}

impl RunSpec {
    pub fn new(paradigm: Paradigm, model: ModelConfig) -> Self {
        RunSpec {
            paradigm,
            scheme: Scheme::Loso,
            model,
            train: TrainConfig::default(),
            pipeline: PipelineConfig::default(),
            n_runs: 5,
            seed: 0,
            jobs: 1,
            compare_offline: true,
            max_folds: None,
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for `(fold, run, purpose)`, independent of the paradigm so paired
/// paradigms start from identical models.
pub fn derive_seed(base: u64, fold: usize, run: usize, purpose: u64) -> u64 {
    splitmix(splitmix(splitmix(base ^ purpose) ^ fold as u64) ^ ((run as u64) << 32))
}

fn later_sessions(source: &dyn TrialSource, target: &Target, preds: &[Prediction]) -> Option<f64> {
    let meta = source.meta();
    let first = *meta.session_ids(target.subject).first()?;
    let later: Vec<Prediction> = preds
        .iter()
        .copied()
        .filter(|p| meta.sessions[p.trial] != first)
        .collect();
    (!later.is_empty() && later.len() < preds.len()).then(|| accuracy(&later))
}

struct JobOutput {
    results: Vec<SubjectResult>,
    record: RunRecord,
}

fn run_job(source: &dyn TrialSource, spec: &RunSpec, prep: &Prep, fold: &Fold, run: usize) -> Result<JobOutput> {
    let meta = source.meta();
    let p = &spec.pipeline;
    let init_seed = derive_seed(spec.seed, fold.index, run, 0);
    let train_seed = derive_seed(spec.seed, fold.index, run, 1);
    let started = Instant::now();
    let data = prep.train_data(source, &fold.train, Phase::Train)?;
    let model_cfg = ModelConfig {
        in_channels: prep.n_channels(),
        n_classes: meta.n_classes(),
        n_subjects: if p.use_subject_reg && data.n_subjects >= 2 { data.n_subjects } else { 0 },
        ..spec.model.clone()
    };
    let tcfg = TrainConfig {
        seed: train_seed,
        mixup_alpha: if p.use_mixup { spec.train.mixup_alpha } else { 0.0 },
        subject_loss_weight: if p.use_subject_reg { spec.train.subject_loss_weight } else { 0.0 },
        ..spec.train.clone()
    };
    let outcome = train(Model::build(model_cfg, init_seed)?, &data, &tcfg)?;
    let train_seconds = started.elapsed().as_secs_f64();
    let eval_started = Instant::now();
    let mut results = Vec::with_capacity(fold.targets.len());
    for target in &fold.targets {
        let (model, before_finetune) = if spec.paradigm == Paradigm::CSFT {
            let before = if p.online_mode && !spec.compare_offline {
                None
            } else {
                Some(accuracy(&evaluate_offline(&outcome.model, source, &target.test, prep)?))
            };
            let calib = prep.train_data(source, &target.calibration, Phase::Calibrate)?;
            let mut opt = outcome.optimizer.clone();
            let (m, _) = finetune(outcome.model.clone(), &mut opt, &calib, &tcfg)?;
            (m, before)
        } else {
            (outcome.model.clone(), None)
        };
        let offline_preds = if !p.online_mode || spec.compare_offline {
            Some(evaluate_offline(&model, source, &target.test, prep)?)
        } else {
            None
        };
        let online = if p.online_mode {
            let om = fit_online(&model, source, spec.paradigm, &target.calibration, &fold.train, prep)?;
            let preds = evaluate_online(&om, TrialStream::new(source, target.test.clone()), prep)?;
            Some(accuracy(&preds))
        } else {
            None
        };
        let (offline, later) = match &offline_preds {
            Some(preds) => (Some(accuracy(preds)), later_sessions(source, target, preds)),
            None => (None, None),
        };
        results.push(SubjectResult {
            fold: fold.index,
            run,
            subject: target.subject,
            n_test: target.test.len(),
            offline,
            offline_later_sessions: later,
            online,
            before_finetune,
        });
    }
    Ok(JobOutput {
        results,
        record: RunRecord {
            fold: fold.index,
            run,
            init_seed,
            train_seed,
            n_train: data.len(),
            train_seconds,
            eval_seconds: eval_started.elapsed().as_secs_f64(),
            history: outcome.history,
        },
    })
}

/// Train and evaluate every fold `n_runs` times.
pub fn run_paradigm(source: &dyn TrialSource, spec: &RunSpec) -> Result<EvalReport> {
    let meta = source.meta();
    spec.pipeline.validate(spec.paradigm, meta)?;
    spec.train.validate()?;
    if spec.n_runs == 0 {
        return Err(Error::config("n_runs must be at least 1"));
    }
    let plan: SplitPlan = make_splits(meta, spec.paradigm, spec.scheme, spec.seed)?.with_runs(spec.n_runs);
    plan.validate(meta)?;
    let folds: Vec<&Fold> = plan.folds.iter().take(spec.max_folds.unwrap_or(usize::MAX)).collect();
    let prep = Prep::new(meta, &spec.pipeline, spec.model.resample_hz);
    let jobs: Vec<(usize, usize)> = (0..folds.len())
        .flat_map(|f| (0..spec.n_runs).map(move |r| (f, r)))
        .collect();
    let started = Instant::now();
    let next = AtomicUsize::new(0);
    let outputs: Mutex<Vec<(usize, Result<JobOutput>)>> = Mutex::new(Vec::new());
    let worker = || loop {
        let k = next.fetch_add(1, Ordering::Relaxed);
        let Some(&(f, r)) = jobs.get(k) else { break };
        let fold = folds[f];
        let out = run_job(source, spec, &prep, fold, r).map_err(|e| Error::Fold {
            fold: fold.index,
            run: r,
            source: Box::new(e),
        });
        let failed = out.is_err();
        outputs.lock().expect("results lock").push((k, out));
        if failed {
            // Stop handing out new work after the first failure.
            next.store(jobs.len(), Ordering::Relaxed);
        }
    };
    let threads = spec.jobs.clamp(1, jobs.len().max(1));
    if threads == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..threads {
                s.spawn(worker);
            }
        });
    }
    let mut outputs = outputs.into_inner().expect("results lock");
    outputs.sort_by_key(|(k, _)| *k);
    let mut results = Vec::new();
    let mut runs = Vec::new();
    for (_, out) in outputs {
        let out = out?;
        results.extend(out.results);
        runs.push(out.record);
    }
    let mut report = EvalReport {
        paradigm: spec.paradigm,
        scheme: plan.scheme,
        config: ConfigSnapshot {
            model: spec.model.clone(),
            train: spec.train.clone(),
            pipeline: spec.pipeline.clone(),
            n_runs: spec.n_runs,
            seed: spec.seed,
        },
        results,
        runs,
        offline: None,
        offline_later_sessions: None,
        online: None,
        before_finetune: None,
        notes: plan.notes,
        total_seconds: started.elapsed().as_secs_f64(),
    };
    report.summarise();
    if spec.pipeline.online_mode && !spec.compare_offline {
        report.notes.push("offline scores not computed (online only)".into());
    }
    Ok(report)
}
