//! Supervised training with Adam, one learning-rate step, mixup and an
//! auxiliary subject-identification loss; fine-tuning and one-stage MDL.

mod mixup;

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::error::{Error, Result};
use crate::model::{argmax_rows, Model};
use crate::ops::{one_hot, softmax_cross_entropy, NormMode};
use crate::optim::{adam_step, AdamState};
use crate::tensor::{Scalar, Tensor};

pub use mixup::{mixup_batch, mixup_with, Mixed};

// Independent random streams derived from one seed.
const STREAM_SHUFFLE: u64 = 1;
const STREAM_MIXUP: u64 = 2;
const STREAM_FT_SHUFFLE: u64 = 3;
const STREAM_FT_MIXUP: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub decay_epoch: usize,
    pub decay_factor: f64,
    pub base_lr: f64,
    pub batch_size: usize,
    /// 0 disables mixup.
    pub mixup_alpha: f64,
    /// Weight of the subject loss; 0 disables it.
    pub subject_loss_weight: f64,
    pub seed: u64,
    pub finetune_epochs: usize,
    pub finetune_mixup: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            decay_epoch: 40,
            decay_factor: 0.1,
            base_lr: 1e-3,
            batch_size: 64,
            mixup_alpha: 0.2,
            subject_loss_weight: 0.1,
            seed: 0,
            finetune_epochs: 60,
            finetune_mixup: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.decay_epoch > self.epochs {
            return Err(Error::config(format!(
                "decay_epoch {} exceeds epochs {}",
                self.decay_epoch, self.epochs
            )));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::config(format!("decay_factor {} outside (0, 1]", self.decay_factor)));
        }
        if !(self.base_lr > 0.0) || !self.base_lr.is_finite() {
            return Err(Error::config(format!("base_lr must be positive, got {}", self.base_lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if !(self.mixup_alpha >= 0.0) {
            return Err(Error::config(format!("mixup_alpha must be >= 0, got {}", self.mixup_alpha)));
        }
        if !(self.subject_loss_weight >= 0.0) {
            return Err(Error::config(format!(
                "subject_loss_weight must be >= 0, got {}",
                self.subject_loss_weight
            )));
        }
        Ok(())
    }

    /// Learning rate used throughout epoch `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch < self.decay_epoch {
            self.base_lr
        } else {
            self.base_lr * self.decay_factor
        }
    }

    pub fn finetune_lr(&self) -> f64 {
        self.base_lr * self.decay_factor
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub loss_task: f64,
    pub loss_subject: f64,
    pub loss_total: f64,
    /// Against the dominant target of each (possibly mixed) training example.
    pub train_accuracy: f64,
    pub wall_s: f64,
    /// Fingerprint of the epoch's shuffle order.
    pub order_digest: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn lr_trace(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.lr).collect()
    }
}

/// Preprocessed trials ready for training, `[N, C, T]` in f32.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainData {
    pub x: Vec<f32>,
    pub n_channels: usize,
    pub n_samples: usize,
    pub labels: Vec<usize>,
    /// Contiguous subject indices in `[0, n_subjects)`.
    pub subjects: Vec<usize>,
    pub n_subjects: usize,
}

impl TrainData {
    /// Collect `[C, T]` trials; `subject_ids` are remapped to contiguous indices
    /// in ascending id order.
    pub fn new(trials: &[Tensor<f64>], labels: Vec<usize>, subject_ids: &[u16]) -> Result<Self> {
        if trials.len() != labels.len() || trials.len() != subject_ids.len() {
            return Err(Error::shape(format!(
                "{} trials, {} labels, {} subject ids",
                trials.len(),
                labels.len(),
                subject_ids.len()
            )));
        }
        let (c, t) = match trials.first() {
            Some(x) => x.dims2()?,
            None => (0, 0),
        };
        let mut x = Vec::with_capacity(trials.len() * c * t);
        for tr in trials {
            if tr.dims2()? != (c, t) {
                return Err(Error::shape("training trials differ in shape"));
            }
            x.extend(tr.data().iter().map(|&v| v as f32));
        }
        let mut ids: Vec<u16> = subject_ids.to_vec();
        ids.sort_unstable();
        ids.dedup();
        let subjects = subject_ids
            .iter()
            .map(|s| ids.binary_search(s).expect("id present"))
            .collect();
        Ok(TrainData {
            x,
            n_channels: c,
            n_samples: t,
            labels,
            subjects,
            n_subjects: ids.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Union of two sets; subject indices of `other` are shifted past ours.
    pub fn concat(&self, other: &TrainData) -> Result<TrainData> {
        if self.is_empty() {
            return Ok(other.clone());
        }
        if other.is_empty() {
            return Ok(self.clone());
        }
        if (self.n_channels, self.n_samples) != (other.n_channels, other.n_samples) {
            return Err(Error::shape("cannot merge training sets of different trial shapes"));
        }
        let mut out = self.clone();
        out.x.extend_from_slice(&other.x);
        out.labels.extend_from_slice(&other.labels);
        out.subjects.extend(other.subjects.iter().map(|s| s + self.n_subjects));
        out.n_subjects += other.n_subjects;
        Ok(out)
    }

    pub fn batch(&self, idx: &[usize]) -> Result<Tensor<f32>> {
        let len = self.n_channels * self.n_samples;
        let mut data = Vec::with_capacity(idx.len() * len);
        for &i in idx {
            data.extend_from_slice(&self.x[i * len..(i + 1) * len]);
        }
        Tensor::from_vec(&[idx.len(), self.n_channels, self.n_samples], data)
    }

    pub fn all(&self) -> Result<Tensor<f32>> {
        Tensor::from_vec(&[self.len(), self.n_channels, self.n_samples], self.x.clone())
    }
}

pub struct TrainOutcome {
    pub model: Model<f32>,
    pub history: TrainHistory,
    pub optimizer: AdamState<f32>,
}

struct Loop<'a> {
    cfg: &'a TrainConfig,
    shuffle: ChaCha8Rng,
    mix: ChaCha8Rng,
    use_subject: bool,
    mixup: bool,
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn run_epoch(
    lp: &mut Loop<'_>,
    model: &mut Model<f32>,
    opt: &mut AdamState<f32>,
    data: &TrainData,
    epoch: usize,
    lr: f64,
) -> Result<EpochRecord> {
    let started = Instant::now();
    let k = model.config().n_classes;
    let p = model.config().n_subjects;
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut lp.shuffle);
    let mut hasher = DefaultHasher::new();
    order.hash(&mut hasher);
    opt.lr = lr as f32;
    let (mut sum_task, mut sum_subj, mut sum_total, mut correct) = (0.0, 0.0, 0.0, 0usize);
    for idx in order.chunks(lp.cfg.batch_size) {
        let x = data.batch(idx)?;
        let labels: Vec<usize> = idx.iter().map(|&i| data.labels[i]).collect();
        let y = one_hot::<f32>(&labels, k);
        let s = if lp.use_subject {
            let subj: Vec<usize> = idx.iter().map(|&i| data.subjects[i]).collect();
            Some(one_hot::<f32>(&subj, p))
        } else {
            None
        };
        let (x, y, s, dominant) = if lp.mixup {
            let m = mixup_batch(&x, &y, s.as_ref(), lp.cfg.mixup_alpha, &mut lp.mix)?;
            let dominant: Vec<usize> = if m.lambda >= 0.5 {
                labels.clone()
            } else {
                m.perm.iter().map(|&j| labels[j]).collect()
            };
            (m.x, m.y, m.s, dominant)
        } else {
            (x, y, s, labels)
        };
        let mut g = Graph::new();
        let xv = g.leaf(x);
        let out = model.forward_graph(&mut g, xv, NormMode::Train)?;
        let task = g.cross_entropy(out.class_logits, y)?;
        let (loss, subj_loss) = match (s, out.subject_logits) {
            (Some(s), Some(sl)) => {
                let sv = g.cross_entropy(sl, s)?;
                (g.add_scaled(task, sv, lp.cfg.subject_loss_weight as f32)?, Some(sv))
            }
            _ => (task, None),
        };
        let b = idx.len() as f64;
        sum_task += f64::from(g.value(task).data()[0]) * b;
        sum_subj += subj_loss.map_or(0.0, |v| f64::from(g.value(v).data()[0])) * b;
        sum_total += f64::from(g.value(loss).data()[0]) * b;
        correct += argmax_rows(g.value(out.class_logits))
            .iter()
            .zip(&dominant)
            .filter(|(a, b)| a == b)
            .count();
        g.backward(loss)?;
        let grads: Vec<Option<&Tensor<f32>>> = out.params.iter().map(|&v| g.grad(v)).collect();
        let mut params = model.params_mut();
        adam_step(&mut params, &grads, opt)?;
    }
    let n = data.len() as f64;
    Ok(EpochRecord {
        epoch,
        lr,
        loss_task: sum_task / n,
        loss_subject: sum_subj / n,
        loss_total: sum_total / n,
        train_accuracy: correct as f64 / n * 100.0,
        wall_s: started.elapsed().as_secs_f64(),
        order_digest: hasher.finish(),
    })
}

fn check_data(model: &Model<f32>, data: &TrainData, what: &str) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Empty(format!("{what} set is empty")));
    }
    if data.n_channels != model.config().in_channels {
        return Err(Error::shape(format!(
            "{what} trials have {} channels, model expects {}",
            data.n_channels,
            model.config().in_channels
        )));
    }
    if let Some(&l) = data.labels.iter().find(|&&l| l >= model.config().n_classes) {
        return Err(Error::arg(format!("label {l} out of range for {} classes", model.config().n_classes)));
    }
    Ok(())
}

/// One full training run.
///
/// The subject loss is active when `subject_loss_weight > 0` and the model
/// has a subject head sized to `data.n_subjects`.
pub fn train(mut model: Model<f32>, data: &TrainData, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_data(&model, data, "training")?;
    let use_subject = cfg.subject_loss_weight > 0.0 && model.subject_head().is_some();
    if use_subject && model.config().n_subjects != data.n_subjects {
        return Err(Error::config(format!(
            "subject head has {} outputs but the training set has {} subjects",
            model.config().n_subjects,
            data.n_subjects
        )));
    }
    let mut opt = AdamState::new(&model.params(), cfg.base_lr as f32);
    let mut lp = Loop {
        cfg,
        shuffle: rng_stream(cfg.seed, STREAM_SHUFFLE),
        mix: rng_stream(cfg.seed, STREAM_MIXUP),
        use_subject,
        mixup: cfg.mixup_alpha > 0.0,
    };
    let mut history = TrainHistory::default();
    for epoch in 0..cfg.epochs {
        let rec = run_epoch(&mut lp, &mut model, &mut opt, data, epoch, cfg.lr_at(epoch))?;
        if !rec.loss_total.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        history.epochs.push(rec);
    }
    Ok(TrainOutcome {
        model,
        history,
        optimizer: opt,
    })
}

/// Continue training on one subject's calibration trials at the post-decay
/// learning rate, reusing the optimizer state. The subject head is frozen.
pub fn finetune(
    mut model: Model<f32>,
    optimizer: &mut AdamState<f32>,
    calibration: &TrainData,
    cfg: &TrainConfig,
) -> Result<(Model<f32>, TrainHistory)> {
    cfg.validate()?;
    check_data(&model, calibration, "calibration")?;
    let mut lp = Loop {
        cfg,
        shuffle: rng_stream(cfg.seed, STREAM_FT_SHUFFLE),
        mix: rng_stream(cfg.seed, STREAM_FT_MIXUP),
        use_subject: false,
        mixup: cfg.finetune_mixup && cfg.mixup_alpha > 0.0,
    };
    let mut history = TrainHistory::default();
    for epoch in 0..cfg.finetune_epochs {
        let rec = run_epoch(&mut lp, &mut model, optimizer, calibration, epoch, cfg.finetune_lr())?;
        if !rec.loss_total.is_finite() {
            return Err(Error::NonFinite("fine-tuning loss"));
        }
        history.epochs.push(rec);
    }
    Ok((model, history))
}

/// One-stage training on the union of the cross-subject pool and the
/// calibration trials.
pub fn train_mdl(
    model: Model<f32>,
    train_pool: &TrainData,
    calibration: &TrainData,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let merged = train_pool.concat(calibration)?;
    train(model, &merged, cfg)
}

/// Mean class cross-entropy and accuracy over a set, with BN statistics
/// taken from the set itself.
pub fn dataset_loss<F: Scalar>(model: &Model<F>, data: &TrainData) -> Result<(f64, f64)> {
    if data.len() < 2 {
        return Err(Error::Empty("need at least two trials to score a set".into()));
    }
    let x: Tensor<F> = data.all()?.cast();
    let adapted = model.recompute_bn_stats(&x)?;
    let out = adapted.infer(&x)?;
    let y = one_hot::<F>(&data.labels, model.config().n_classes);
    let (loss, _) = softmax_cross_entropy(&out.class_logits, &y)?;
    let pred = argmax_rows(&out.class_logits);
    let acc = pred.iter().zip(&data.labels).filter(|(a, b)| a == b).count() as f64 / data.len() as f64;
    Ok((loss.as_f64(), acc * 100.0))
}
