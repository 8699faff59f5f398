//! End-to-end evaluation experiments on synthetic archives.

use std::time::Instant;

use simpleconv::data::{synth_generate, Paradigm, SynthConfig, TrialArchive};
use simpleconv::evaluation::{aggregate, run_paradigm, PipelineConfig, RunSpec, Summary};
use simpleconv::training::TrainConfig;

use super::oracles::REFERENCE_CS;
use super::training::desk_model;

pub fn reference_summary() -> Summary {
    let values: Vec<(u16, usize, f64)> = REFERENCE_CS.iter().enumerate().map(|(s, &a)| (s as u16 + 1, 0, a)).collect();
    aggregate(&values)
}

/// 6 subjects x 2 sessions x 60 trials, 8 channels at 70 Hz, 4 classes, 0 dB.
pub fn desk_archive(seed: u64) -> TrialArchive {
    synth_generate(&SynthConfig {
        n_subjects: 6,
        n_sessions: 2,
        trials_per_session: 60,
        n_channels: 8,
        fs: 70.0,
        duration_s: 2.0,
        n_classes: 4,
        noise_level: 1.0,
        seed,
        ..Default::default()
    })
    .unwrap()
}

pub fn desk_spec(paradigm: Paradigm, pipeline: PipelineConfig, seed: u64) -> RunSpec {
    RunSpec {
        pipeline,
        n_runs: 1,
        seed,
        train: TrainConfig::default(),
        ..RunSpec::new(paradigm, desk_model(8, 4, 0))
    }
}

#[derive(Debug, Clone)]
pub struct DeskRun {
    pub seed: u64,
    /// C-S offline mean, full pipeline.
    pub full: f64,
    /// C-S offline mean, "- Everything".
    pub minus_everything: f64,
    /// C-S full pipeline restricted to the later sessions.
    pub cs_later: f64,
    /// C-S F-T offline mean on the later sessions.
    pub csft: f64,
    pub seconds: f64,
}

pub fn desk_run(seed: u64) -> DeskRun {
    let started = Instant::now();
    let archive = desk_archive(seed);
    let full = PipelineConfig::default();
    let cs = run_paradigm(&archive, &desk_spec(Paradigm::CS, full.clone(), seed)).unwrap();
    let minus = run_paradigm(&archive, &desk_spec(Paradigm::CS, full.minus_everything(), seed)).unwrap();
    let ft = run_paradigm(&archive, &desk_spec(Paradigm::CSFT, full, seed)).unwrap();
    DeskRun {
        seed,
        full: cs.offline.as_ref().unwrap().mean,
        minus_everything: minus.offline.as_ref().unwrap().mean,
        cs_later: cs.offline_later_sessions.as_ref().unwrap().mean,
        csft: ft.offline.as_ref().unwrap().mean,
        seconds: started.elapsed().as_secs_f64(),
    }
}

/// Paired (offline, online) accuracies of the same first-fold C-S models.
/// Online C-S cannot align, so both sides run without alignment.
pub fn online_vs_offline(seed: u64) -> (f64, f64) {
    let archive = desk_archive(1000 + seed);
    let pipeline = PipelineConfig { use_ea: false, online_mode: true, ..PipelineConfig::default() };
    let spec = RunSpec { max_folds: Some(1), compare_offline: true, ..desk_spec(Paradigm::CS, pipeline, seed) };
    let report = run_paradigm(&archive, &spec).unwrap();
    (report.offline.unwrap().mean, report.online.unwrap().mean)
}
