//! Training checks shared by the training tests and the acceptance run.

use simpleconv::data::{synth_generate, Phase, SynthConfig};
use simpleconv::evaluation::{PipelineConfig, Prep};
use simpleconv::model::{Model, ModelConfig};
use simpleconv::training::{dataset_loss, train, TrainConfig, TrainData};

pub fn desk_model(in_channels: usize, n_classes: usize, n_subjects: usize) -> ModelConfig {
    ModelConfig { width: 8, depth: 2, kernel: 5, in_channels, n_classes, n_subjects, resample_hz: 70.0 }
}

/// Preprocessed synthetic trials: `subjects` x one session x `per_subject`.
pub fn synth_train_data(subjects: usize, per_subject: usize, noise: f64, seed: u64) -> TrainData {
    let archive = synth_generate(&SynthConfig {
        n_subjects: subjects,
        n_sessions: 1,
        trials_per_session: per_subject,
        noise_level: noise,
        seed,
        ..Default::default()
    })
    .unwrap();
    let prep = Prep::new(archive.meta(), &PipelineConfig::default(), 70.0);
    let ids: Vec<usize> = (0..archive.n_trials()).collect();
    prep.train_data(&archive, &ids, Phase::Train).unwrap()
}

/// Fraction of seeds for which one epoch lowers the mean training loss.
pub fn one_epoch_decrease_rate(seeds: u64) -> f64 {
    let data = synth_train_data(2, 48, 0.5, 77);
    let mut down = 0;
    for seed in 0..seeds {
        let model = Model::build(desk_model(data.n_channels, 4, 0), seed).unwrap();
        let (before, _) = dataset_loss(&model, &data).unwrap();
        let cfg = TrainConfig { epochs: 1, decay_epoch: 1, batch_size: 16, seed, ..TrainConfig::default() };
        let out = train(model, &data, &cfg).unwrap();
        let (after, _) = dataset_loss(&out.model, &data).unwrap();
        if after < before {
            down += 1;
        }
    }
    down as f64 / seeds as f64
}

/// Two identical runs, compared as checkpoint bytes.
pub fn checkpoints_identical(seed: u64) -> bool {
    let data = synth_train_data(2, 24, 1.0, seed);
    let run = || {
        let model = Model::build(desk_model(data.n_channels, 4, data.n_subjects), seed).unwrap();
        let cfg = TrainConfig { epochs: 3, decay_epoch: 2, batch_size: 16, seed, ..TrainConfig::default() };
        train(model, &data, &cfg).unwrap().model.to_bytes().unwrap()
    };
    run() == run()
}

/// Training-set accuracy after the full 50-epoch schedule on 200 noiseless
/// trials, mixup off, BN statistics from the training set.
pub fn noiseless_train_accuracy(seed: u64) -> f64 {
    let data = synth_train_data(2, 100, 0.0, seed);
    let model = Model::build(desk_model(data.n_channels, 4, 0), seed).unwrap();
    let cfg = TrainConfig { mixup_alpha: 0.0, subject_loss_weight: 0.0, seed, ..TrainConfig::default() };
    let out = train(model, &data, &cfg).unwrap();
    dataset_loss(&out.model, &data).unwrap().1
}

/// Positions where the lr trace changes, with the ratio of each change.
pub fn lr_steps(trace: &[f64]) -> Vec<(usize, f64)> {
    trace
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] != w[1])
        .map(|(k, w)| (k + 1, w[1] / w[0]))
        .collect()
}
