//! Independent reference computations shared by the integration tests and
//! the acceptance run.

use rand::Rng;
use simpleconv::model::{Model, ModelConfig};
use simpleconv::ops;
use simpleconv::preprocess::{apply_ea, fit_ea, ScopeKey};
use simpleconv::Tensor;

use super::{rng, uniform};

/// Direct triple loop with "same" padding, extra tap on the right for even kernels.
pub fn conv_loops(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
    let (bs, cin, t) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (cout, s) = (w.shape()[0], w.shape()[2]);
    let off = (s as isize - 1) / 2;
    let mut y = vec![0.0; bs * cout * t];
    for n in 0..bs {
        for o in 0..cout {
            for tt in 0..t {
                let mut acc = b.data()[o];
                for c in 0..cin {
                    for k in 0..s {
                        let src = tt as isize + k as isize - off;
                        if src >= 0 && (src as usize) < t {
                            acc += w.data()[(o * cin + c) * s + k] * x.data()[(n * cin + c) * t + src as usize];
                        }
                    }
                }
                y[(n * cout + o) * t + tt] = acc;
            }
        }
    }
    Tensor::from_vec(&[bs, cout, t], y).unwrap()
}

/// Largest absolute difference between `conv1d` and the loops over `instances` random cases.
pub fn conv_worst(instances: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let (b, cin, cout, t, s) = (r.gen_range(1..4), r.gen_range(1..5), r.gen_range(1..5), r.gen_range(1..16), r.gen_range(1..8));
        let x = uniform(&mut r, &[b, cin, t], -1.0, 1.0);
        let w = uniform(&mut r, &[cout, cin, s], -1.0, 1.0);
        let bias = uniform(&mut r, &[cout], -1.0, 1.0);
        let got = ops::conv1d(&x, &w, &bias).unwrap();
        let want = conv_loops(&x, &w, &bias);
        for (a, e) in got.data().iter().zip(want.data()) {
            worst = worst.max((a - e).abs());
        }
    }
    worst
}

/// `(1/n) sum X X^T` as a row-major `C x C` vector.
pub fn mean_cov(trials: &[Tensor<f64>]) -> Vec<f64> {
    let (c, t) = (trials[0].shape()[0], trials[0].shape()[1]);
    let mut r = vec![0.0; c * c];
    for x in trials {
        for i in 0..c {
            for j in 0..c {
                let s: f64 = (0..t).map(|k| x.data()[i * t + k] * x.data()[j * t + k]).sum();
                r[i * c + j] += s / trials.len() as f64;
            }
        }
    }
    r
}

/// `||R - I||_F / ||I||_F`.
pub fn identity_gap(r: &[f64], c: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..c {
        for j in 0..c {
            let e = if i == j { 1.0 } else { 0.0 };
            s += (r[i * c + j] - e).powi(2);
        }
    }
    s.sqrt() / (c as f64).sqrt()
}

/// Trials with a random channel mixing so the mean covariance is far from identity.
pub fn correlated_trials(r: &mut impl Rng, n: usize, c: usize, t: usize) -> Vec<Tensor<f64>> {
    let a: Vec<f64> = (0..c * c).map(|_| r.gen_range(-1.0..1.0)).collect();
    (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..c * t).map(|_| r.gen_range(-1.0..1.0)).collect();
            let mut x = vec![0.0; c * t];
            for i in 0..c {
                for j in 0..c {
                    for k in 0..t {
                        x[i * t + k] += a[i * c + j] * z[j * t + k];
                    }
                }
                // A scale per channel on top of the mixing.
                let g = 0.1 + i as f64;
                for k in 0..t {
                    x[i * t + k] *= g;
                }
            }
            Tensor::from_vec(&[c, t], x).unwrap()
        })
        .collect()
}

/// Worst post-alignment identity gap over `scopes` random scopes.
pub fn ea_worst(scopes: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for s in 0..scopes {
        let c = r.gen_range(2..9);
        let n = r.gen_range(1..12);
        let t = r.gen_range(4 * c..8 * c);
        // Numerically singular draws are floored and flagged, not whitened.
        let (trials, ea) = loop {
            let trials = correlated_trials(&mut r, n, c, t);
            let refs: Vec<&Tensor<f64>> = trials.iter().collect();
            let ea = fit_ea(&refs, ScopeKey::Subject(s as u16)).unwrap();
            let eig = ea.mean_cov_matrix().symmetric_eigenvalues();
            if eig.min() > 1e-6 * eig.max() {
                break (trials, ea);
            }
        };
        let aligned: Vec<Tensor<f64>> = trials.iter().map(|x| apply_ea(x, &ea).unwrap()).collect();
        worst = worst.max(identity_gap(&mean_cov(&aligned), c));
    }
    worst
}

/// Biased per-channel mean and variance over batch and time.
pub fn channel_moments(x: &Tensor<f64>) -> (Vec<f64>, Vec<f64>) {
    let (b, c, t) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let n = (b * t) as f64;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for ch in 0..c {
        let vals: Vec<f64> = (0..b).flat_map(|i| x.data()[(i * c + ch) * t..(i * c + ch + 1) * t].to_vec()).collect();
        mean[ch] = vals.iter().sum::<f64>() / n;
        var[ch] = vals.iter().map(|v| (v - mean[ch]).powi(2)).sum::<f64>() / n;
    }
    (mean, var)
}

pub struct BnTrickCheck {
    pub stats_err: f64,
    pub params_identical: bool,
    pub idempotence_err: f64,
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn stats_of(m: &Model<f64>) -> Vec<f64> {
    m.norms()
        .iter()
        .flat_map(|n| {
            let r = n.running.as_ref().expect("statistics present");
            r.mean.iter().chain(&r.var).copied().collect::<Vec<_>>()
        })
        .collect()
}

/// Recompute BN statistics of a trained-looking model on a held-out batch and
/// compare the first layer with moments of its input computed here.
pub fn bn_trick(seed: u64) -> BnTrickCheck {
    let mut r = rng(seed);
    let cfg = ModelConfig {
        width: r.gen_range(2..6),
        depth: r.gen_range(0..3),
        kernel: r.gen_range(1..6),
        in_channels: r.gen_range(1..4),
        n_classes: 3,
        n_subjects: 0,
        resample_hz: 70.0,
    };
    let mut model = Model::<f64>::build(cfg.clone(), seed).unwrap();
    let train = uniform(&mut r, &[6, cfg.in_channels, 24], -1.0, 1.0);
    model.forward(&train, ops::NormMode::Train).unwrap();
    let held_out = uniform(&mut r, &[5, cfg.in_channels, 24], -3.0, 2.0);
    let adapted = model.recompute_bn_stats(&held_out).unwrap();

    let conv = &model.convs()[0];
    let z = conv_loops(&held_out, &conv.weight, &conv.bias);
    let (mean, var) = channel_moments(&z);
    let first = adapted.norms()[0].running.as_ref().unwrap();
    let stats_err = max_diff(&first.mean, &mean).max(max_diff(&first.var, &var));

    let params_identical = model
        .params()
        .iter()
        .zip(adapted.params())
        .all(|(a, b)| a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    let again = adapted.recompute_bn_stats(&held_out).unwrap();
    BnTrickCheck {
        stats_err,
        params_identical,
        idempotence_err: max_diff(&stats_of(&adapted), &stats_of(&again)),
    }
}

/// Parameter count from the configuration alone.
pub fn param_formula(cfg: &ModelConfig) -> usize {
    let f: Vec<usize> = (0..=cfg.depth)
        .map(|i| (cfg.width as f64 * 2f64.powf(i as f64 / 2.0)).round() as usize)
        .collect();
    let conv_bn = |cin: usize, cout: usize| cin * cout * cfg.kernel + cout + 2 * cout;
    let mut n = conv_bn(cfg.in_channels, f[0]);
    for i in 1..=cfg.depth {
        n += conv_bn(f[i - 1], f[i]) + conv_bn(f[i], f[i]);
    }
    let last = f[cfg.depth];
    n += last * cfg.n_classes + cfg.n_classes;
    if cfg.n_subjects > 0 {
        n += last * cfg.n_subjects + cfg.n_subjects;
    }
    n
}

/// Failures of the shape laws over `configs` random configurations.
pub fn shape_law_failures(configs: usize, seed: u64) -> Vec<String> {
    let mut r = rng(seed);
    let mut fails = Vec::new();
    for _ in 0..configs {
        let cfg = ModelConfig {
            width: r.gen_range(1..20),
            depth: r.gen_range(0..5),
            kernel: r.gen_range(1..9),
            in_channels: r.gen_range(1..6),
            n_classes: r.gen_range(2..6),
            n_subjects: if r.gen_bool(0.5) { r.gen_range(2..5) } else { 0 },
            resample_hz: 70.0,
        };
        let model = Model::<f32>::build(cfg.clone(), r.gen()).unwrap();
        if cfg.layer_count() != 2 * cfg.depth + 2 || model.convs().len() + 1 != 2 * cfg.depth + 2 {
            fails.push(format!("{cfg:?}: layer count"));
        }
        let want: Vec<usize> = (0..=cfg.depth)
            .map(|i| (cfg.width as f64 * 2f64.powf(i as f64 / 2.0)).round() as usize)
            .collect();
        if cfg.channel_schedule() != want {
            fails.push(format!("{cfg:?}: schedule"));
        }
        // Walk the actual tensors for the reflection count.
        let reflected: usize = model.params().iter().map(|p| p.shape().iter().product::<usize>()).sum();
        if model.count_params() != reflected || reflected != param_formula(&cfg) {
            fails.push(format!("{cfg:?}: params {} vs {reflected} vs {}", model.count_params(), param_formula(&cfg)));
        }
        let t = (1 << cfg.depth) * r.gen_range(2..6);
        let batch = r.gen_range(2..4);
        for len in [t, 2 * t] {
            let x = Tensor::from_vec(&[batch, cfg.in_channels, len], (0..batch * cfg.in_channels * len).map(|_| r.gen_range(-1.0f32..1.0)).collect())
                .unwrap();
            let mut m = model.clone();
            let out = m.forward(&x, ops::NormMode::Train).unwrap();
            if out.class_logits.shape() != [batch, cfg.n_classes] {
                fails.push(format!("{cfg:?}: logits {:?} for length {len}", out.class_logits.shape()));
            }
        }
    }
    fails
}

/// Published per-subject C-S offline accuracies of a nine-subject dataset.
pub const REFERENCE_CS: [f64; 9] = [79.9, 55.7, 82.6, 65.0, 66.9, 66.8, 72.0, 74.3, 72.2];
