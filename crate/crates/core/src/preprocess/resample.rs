//! Rational-rate polyphase resampling with a Kaiser-windowed sinc.
//!
//! The anti-alias cutoff sits at 0.9 of the lower Nyquist frequency. Phases
//! of the interpolation kernel repeat with period `L` for a rate ratio `L/M`
//! and are computed once per phase.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Fraction of the lower Nyquist rate passed by the anti-alias filter.
pub const CUTOFF_FRACTION: f64 = 0.9;
/// Kernel zero crossings on each side of the centre.
const ZERO_CROSSINGS: f64 = 16.0;
const KAISER_BETA: f64 = 8.0;
/// Rates are rationalised on this grid (1 mHz).
const RATE_GRID: f64 = 1000.0;
const MAX_CACHED_PHASES: u64 = 4096;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Output length for a resampling of `n` samples.
pub fn resampled_len(n: usize, fs_from: f64, fs_to: f64) -> usize {
    (n as f64 * fs_to / fs_from).round() as usize
}

struct Kernel {
    /// Cutoff in cycles per input sample.
    cutoff: f64,
    half_width: f64,
    norm: f64,
}

impl Kernel {
    fn new(fs_from: f64, fs_to: f64) -> Self {
        let cutoff = CUTOFF_FRACTION * fs_to.min(fs_from) / 2.0 / fs_from;
        let half_width = ZERO_CROSSINGS / (2.0 * cutoff);
        Kernel {
            cutoff,
            half_width,
            norm: bessel_i0(KAISER_BETA),
        }
    }

    fn weight(&self, tau: f64) -> f64 {
        let r = tau / self.half_width;
        if r.abs() >= 1.0 {
            return 0.0;
        }
        let window = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / self.norm;
        2.0 * self.cutoff * sinc(2.0 * self.cutoff * tau) * window
    }

    /// Taps for an output sample at fractional input position `base + frac`,
    /// normalised to unit DC gain. Returns `(first input index, taps)`.
    fn taps(&self, frac: f64) -> (isize, Vec<f64>) {
        let reach = self.half_width.ceil() as isize;
        let first = -reach + 1;
        let mut taps: Vec<f64> = (first..=reach)
            .map(|k| self.weight(frac - k as f64))
            .collect();
        let s: f64 = taps.iter().sum();
        if s.abs() > 0.0 {
            for t in &mut taps {
                *t /= s;
            }
        }
        (first, taps)
    }
}

/// Mirror an out-of-range index back into `[0, n)` (edge sample not repeated).
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= n as isize {
        j = period - j;
    }
    j as usize
}

/// Resample every channel of a `[C, T]` signal from `fs_from` to `fs_to` Hz.
pub fn resample(x: &Tensor<f64>, fs_from: f64, fs_to: f64) -> Result<Tensor<f64>> {
    if !(fs_to > 0.0) || !(fs_from > 0.0) {
        return Err(Error::arg(format!(
            "sampling rates must be positive, got {fs_from} -> {fs_to}"
        )));
    }
    let (c, t) = x.dims2()?;
    if fs_to == fs_from {
        return Ok(x.clone());
    }
    let up_raw = (fs_to * RATE_GRID).round() as u64;
    let down_raw = (fs_from * RATE_GRID).round() as u64;
    let g = gcd(up_raw, down_raw).max(1);
    let (up, down) = (up_raw / g, down_raw / g);
    let n_out = resampled_len(t, fs_from, fs_to);
    let kernel = Kernel::new(fs_from, fs_to);
    let mut cache: Vec<Option<(isize, Vec<f64>)>> = if up <= MAX_CACHED_PHASES {
        vec![None; up as usize]
    } else {
        Vec::new()
    };
    let mut out = vec![0.0; c * n_out];
    if t == 0 {
        return Tensor::from_vec(&[c, n_out], out);
    }
    for n in 0..n_out {
        let num = n as u64 * down;
        let base = (num / up) as isize;
        let phase = num % up;
        let frac = phase as f64 / up as f64;
        let computed;
        let (first, taps) = if cache.is_empty() {
            computed = kernel.taps(frac);
            (&computed.0, &computed.1)
        } else {
            let slot = &mut cache[phase as usize];
            let entry = slot.get_or_insert_with(|| kernel.taps(frac));
            (&entry.0, &entry.1)
        };
        for ch in 0..c {
            let row = &x.data()[ch * t..(ch + 1) * t];
            let mut acc = 0.0;
            for (j, &w) in taps.iter().enumerate() {
                acc += w * row[reflect(base + first + j as isize, t)];
            }
            out[ch * n_out + n] = acc;
        }
    }
    Tensor::from_vec(&[c, n_out], out)
}
