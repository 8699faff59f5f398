//! Butterworth high-pass as cascaded second-order sections.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_HIGHPASS_HZ: f64 = 0.5;
pub const HIGHPASS_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterMode {
    /// Forward-backward filtering, zero phase.
    ZeroPhase,
    /// Single forward pass, usable on a stream.
    Causal,
}

/// One biquad in transposed direct form II, `a0` normalised to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn highpass(fc: f64, fs: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * fc / fs;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / (2.0 * q);
        let a0 = 1.0 + alpha;
        let k = (1.0 + cos) / 2.0;
        Biquad {
            b: [k / a0, -2.0 * k / a0, k / a0],
            a: [-2.0 * cos / a0, (1.0 - alpha) / a0],
        }
    }

    /// DC gain `H(z = 1)`.
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// State that makes the section output steady for a constant input `u`.
    fn steady_state(&self, u: f64) -> [f64; 2] {
        let y = self.dc_gain() * u;
        let z2 = self.b[2] * u - self.a[1] * y;
        let z1 = self.b[1] * u - self.a[0] * y + z2;
        [z1, z2]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SosFilter {
    pub sections: Vec<Biquad>,
}

impl SosFilter {
    /// Even-order Butterworth high-pass via bilinear transform with prewarping.
    pub fn butterworth_highpass(order: usize, fc: f64, fs: f64) -> Result<Self> {
        if !(fs > 2.0 * fc) || !(fc > 0.0) {
            return Err(Error::arg(format!(
                "high-pass needs 0 < cutoff < fs/2, got cutoff {fc} Hz at fs {fs} Hz"
            )));
        }
        if order == 0 || order % 2 != 0 {
            return Err(Error::arg("Butterworth order must be even and positive"));
        }
        let sections = (1..=order / 2)
            .map(|k| {
                let theta = (2 * k - 1) as f64 * PI / (2 * order) as f64;
                Biquad::highpass(fc, fs, 1.0 / (2.0 * theta.sin()))
            })
            .collect();
        Ok(SosFilter { sections })
    }

    /// Causal filtering, each section started in steady state for `x[0]`.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        let Some(&first) = x.first() else {
            return y;
        };
        let mut u = first;
        for s in &self.sections {
            let [mut z1, mut z2] = s.steady_state(u);
            u *= s.dc_gain();
            for v in y.iter_mut() {
                let xin = *v;
                let out = s.b[0] * xin + z1;
                z1 = s.b[1] * xin - s.a[0] * out + z2;
                z2 = s.b[2] * xin - s.a[1] * out;
                *v = out;
            }
        }
        y
    }

    /// Zero-phase filtering: odd-reflection padding, forward pass, reverse pass.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n < 2 {
            return self.filter(x);
        }
        let pad = (3 * (2 * self.sections.len() + 1)).min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
        let mut fwd = self.filter(&ext);
        fwd.reverse();
        let mut back = self.filter(&fwd);
        back.reverse();
        back[pad..pad + n].to_vec()
    }

    /// Magnitude response at `f` Hz.
    pub fn magnitude(&self, f: f64, fs: f64) -> f64 {
        let w = 2.0 * PI * f / fs;
        let z1 = num_complex(-w);
        let z2 = num_complex(-2.0 * w);
        self.sections
            .iter()
            .map(|s| {
                let num = add3(s.b[0], scale(z1, s.b[1]), scale(z2, s.b[2]));
                let den = add3(1.0, scale(z1, s.a[0]), scale(z2, s.a[1]));
                abs(num) / abs(den)
            })
            .product()
    }
}

fn num_complex(phase: f64) -> (f64, f64) {
    (phase.cos(), phase.sin())
}

fn scale(z: (f64, f64), k: f64) -> (f64, f64) {
    (z.0 * k, z.1 * k)
}

fn add3(a: f64, b: (f64, f64), c: (f64, f64)) -> (f64, f64) {
    (a + b.0 + c.0, b.1 + c.1)
}

fn abs(z: (f64, f64)) -> f64 {
    z.0.hypot(z.1)
}

/// 4th-order Butterworth high-pass applied per channel of a `[C, T]` signal.
pub fn highpass(x: &Tensor<f64>, fs: f64, fc: f64, mode: FilterMode) -> Result<Tensor<f64>> {
    let (c, t) = x.dims2()?;
    let filt = SosFilter::butterworth_highpass(HIGHPASS_ORDER, fc, fs)?;
    let mut out = Vec::with_capacity(c * t);
    for row in x.data().chunks_exact(t.max(1)).take(c) {
        out.extend(match mode {
            FilterMode::ZeroPhase => filt.filtfilt(row),
            FilterMode::Causal => filt.filter(row),
        });
    }
    Tensor::from_vec(&[c, t], out)
}
