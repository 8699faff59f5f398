//! Deterministic synthetic motor-imagery-like trials.
//!
//! Class `c` drives a sinusoid at `8 + 4c` Hz on channels `3c, 3c+1, 3c+2`
//! (mod C). Each subject mixes the sources with its own random orthogonal
//! matrix; each session applies a per-channel gain to everything recorded,
//! noise included. Background activity is pink noise, spatially coloured by
//! a subject-specific mixing, and scaled so that within the class band
//! (`f_c +/- 2 Hz`) noise and signal power match at `noise_level = 1`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::archive::{ChannelKind, TrialArchive};

/// Pink-noise samples discarded before each session starts.
const NOISE_BURN_IN: usize = 2048;
/// Half width of the band over which the SNR is defined.
pub const SNR_HALF_BAND_HZ: f64 = 2.0;
/// log2 half-range of the background source scales.
const NOISE_COLOUR_SPREAD: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub n_sessions: usize,
    pub trials_per_session: usize,
    /// EEG channels.
    pub n_channels: usize,
    pub fs: f64,
    pub duration_s: f64,
    pub n_classes: usize,
    pub seed: u64,
    /// Noise amplitude relative to 0 dB in-band SNR; 0 gives noiseless trials.
    pub noise_level: f64,
    /// Extra EOG channels carrying class-independent slow artefacts.
    pub n_eog: usize,
    /// Spread of the per-channel session gains, as a log2 half-range.
    pub gain_spread: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_subjects: 4,
            n_sessions: 2,
            trials_per_session: 48,
            n_channels: 8,
            fs: 70.0,
            duration_s: 2.0,
            n_classes: 4,
            seed: 0,
            noise_level: 1.0,
            n_eog: 0,
            gain_spread: 1.0,
        }
    }
}

pub fn class_frequency(c: usize) -> f64 {
    8.0 + 4.0 * c as f64
}

/// Channels that carry class `c` before mixing.
pub fn class_channels(c: usize, n_channels: usize) -> [usize; 3] {
    [0, 1, 2].map(|j| (3 * c + j) % n_channels)
}

/// Haar-distributed orthogonal matrix via QR with sign correction.
fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Kellet's pink-noise filter applied to a white Gaussian stream.
fn pink_noise(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut b = [0.0f64; 7];
    let mut out = Vec::with_capacity(n);
    for i in 0..n + NOISE_BURN_IN {
        let w: f64 = rng.sample(StandardNormal);
        b[0] = 0.99886 * b[0] + w * 0.0555179;
        b[1] = 0.99332 * b[1] + w * 0.0750759;
        b[2] = 0.96900 * b[2] + w * 0.1538520;
        b[3] = 0.86650 * b[3] + w * 0.3104856;
        b[4] = 0.55000 * b[4] + w * 0.5329522;
        b[5] = -0.7616 * b[5] - w * 0.0168980;
        let p = b[0] + b[1] + b[2] + b[3] + b[4] + b[5] + b[6] + w * 0.5362;
        b[6] = w * 0.115926;
        if i >= NOISE_BURN_IN {
            out.push(p);
        }
    }
    out
}

/// Fraction of the power of `streams` that falls within `[lo, hi]` Hz,
/// from periodograms of consecutive `seg`-sample segments.
fn band_fraction(streams: &[Vec<f64>], seg: usize, fs: f64, lo: f64, hi: f64) -> f64 {
    let (mut band, mut total) = (0.0, 0.0);
    for x in streams {
        for chunk in x.chunks_exact(seg) {
            let m = chunk.iter().sum::<f64>() / seg as f64;
            total += chunk.iter().map(|v| (v - m).powi(2)).sum::<f64>();
            for k in 1..=seg / 2 {
                let f = k as f64 * fs / seg as f64;
                if f < lo || f > hi {
                    continue;
                }
                let (mut re, mut im) = (0.0, 0.0);
                for (n, v) in chunk.iter().enumerate() {
                    let ph = 2.0 * PI * (k * n) as f64 / seg as f64;
                    re += (v - m) * ph.cos();
                    im -= (v - m) * ph.sin();
                }
                // One-sided: bins below Nyquist carry twice their periodogram value.
                let w = if 2 * k == seg { 1.0 } else { 2.0 };
                band += w * (re * re + im * im) / seg as f64;
            }
        }
    }
    if total > 0.0 {
        band / total
    } else {
        0.0
    }
}

fn rms(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

pub fn synth_generate(cfg: &SynthConfig) -> Result<TrialArchive> {
    if cfg.n_subjects == 0
        || cfg.n_sessions == 0
        || cfg.trials_per_session == 0
        || cfg.n_channels == 0
        || cfg.n_classes == 0
    {
        return Err(Error::arg("synthetic counts must all be positive"));
    }
    if !(cfg.fs > 0.0) || !(cfg.duration_s > 0.0) || !(cfg.noise_level >= 0.0) || !(cfg.gain_spread >= 0.0) {
        return Err(Error::arg("sampling rate and duration must be positive, noise and gain spread non-negative"));
    }
    let f_max = class_frequency(cfg.n_classes - 1);
    if cfg.fs < 2.0 * f_max {
        return Err(Error::arg(format!(
            "sampling rate {} Hz is below twice the highest class frequency {f_max} Hz",
            cfg.fs
        )));
    }
    if cfg.n_subjects > usize::from(u16::MAX) || cfg.n_sessions > usize::from(u16::MAX) || cfg.n_classes > usize::from(u16::MAX) {
        return Err(Error::arg("synthetic counts exceed the 16-bit id range"));
    }
    let t = (cfg.duration_s * cfg.fs).round() as usize;
    if t == 0 {
        return Err(Error::arg("trial duration shorter than one sample"));
    }
    let c_eeg = cfg.n_channels;
    let c_all = c_eeg + cfg.n_eog;
    let n_total = cfg.n_subjects * cfg.n_sessions * cfg.trials_per_session;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut data = Vec::with_capacity(n_total * c_all * t);
    let (mut labels, mut subjects, mut sessions) = (Vec::new(), Vec::new(), Vec::new());

    for subject in 0..cfg.n_subjects {
        let mixing = random_orthogonal(c_eeg, &mut rng);
        let colour = random_orthogonal(c_eeg, &mut rng);
        let scales: Vec<f64> = (0..c_eeg)
            .map(|_| 2f64.powf(rng.gen_range(-NOISE_COLOUR_SPREAD..=NOISE_COLOUR_SPREAD)))
            .collect();
        let noise_mix = colour * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(scales));
        for session in 0..cfg.n_sessions {
            let gains: Vec<f64> = (0..c_all)
                .map(|_| 2f64.powf(rng.gen_range(-cfg.gain_spread..=cfg.gain_spread)))
                .collect();
            let mut session_labels: Vec<u16> = (0..cfg.trials_per_session)
                .map(|i| (i % cfg.n_classes) as u16)
                .collect();
            session_labels.shuffle(&mut rng);
            let stream_len = cfg.trials_per_session * t;
            // Independent pink sources, spatially coloured for the EEG channels.
            let sources: Vec<Vec<f64>> = (0..c_all).map(|_| pink_noise(stream_len, &mut rng)).collect();
            let mut noise = sources.clone();
            for (ch, row) in noise.iter_mut().enumerate().take(c_eeg) {
                for (n, v) in row.iter_mut().enumerate() {
                    *v = (0..c_eeg).map(|j| noise_mix[(ch, j)] * sources[j][n]).sum();
                }
            }
            // Normalise the mean EEG channel power (and each EOG channel) to one.
            let eeg_power = noise[..c_eeg].iter().map(|r| rms(r).powi(2)).sum::<f64>() / c_eeg as f64;
            for (ch, row) in noise.iter_mut().enumerate() {
                let p = if ch < c_eeg { eeg_power } else { rms(row).powi(2) };
                let k = 1.0 / p.sqrt().max(1e-12);
                row.iter_mut().for_each(|v| *v *= k);
            }
            let band: Vec<f64> = (0..cfg.n_classes)
                .map(|c| {
                    let f = class_frequency(c);
                    band_fraction(&sources[..c_eeg], t, cfg.fs, f - SNR_HALF_BAND_HZ, f + SNR_HALF_BAND_HZ)
                        .max(1e-9)
                })
                .collect();

            for (k, &label) in session_labels.iter().enumerate() {
                let c = usize::from(label);
                let f = class_frequency(c);
                let mut src = vec![0.0; c_eeg * t];
                for ch in class_channels(c, c_eeg) {
                    let amp = rng.gen_range(0.8..1.2);
                    let phase = rng.gen_range(0.0..2.0 * PI);
                    for (n, v) in src[ch * t..(ch + 1) * t].iter_mut().enumerate() {
                        *v += amp * (2.0 * PI * f * n as f64 / cfg.fs + phase).sin();
                    }
                }
                // Orthogonal mixing keeps the total signal power.
                let mixed = &mixing * DMatrix::from_row_slice(c_eeg, t, &src);
                let signal_power = src.iter().map(|v| v * v).sum::<f64>() / (c_eeg * t) as f64;
                // In-band noise power equals the mean per-channel signal power.
                let noise_scale = cfg.noise_level * (signal_power / band[c]).sqrt();
                for ch in 0..c_all {
                    let nz = &noise[ch][k * t..(k + 1) * t];
                    for n in 0..t {
                        let s = if ch < c_eeg { mixed[(ch, n)] } else { 0.0 };
                        data.push((gains[ch] * (s + noise_scale * nz[n])) as f32);
                    }
                }
                labels.push(label);
                subjects.push(subject as u16 + 1);
                sessions.push(session as u16 + 1);
            }
        }
    }

    let class_names = (0..cfg.n_classes).map(|c| format!("class{c}")).collect();
    let mut kinds = vec![ChannelKind::Eeg; c_eeg];
    kinds.extend(std::iter::repeat(ChannelKind::Eog).take(cfg.n_eog));
    TrialArchive::new(c_all, t, cfg.fs as f32, class_names, kinds, labels, subjects, sessions, data)
}
