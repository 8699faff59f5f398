//! Batch normalisation over `[B, C, T]` activations, per channel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// How a batch-norm layer sources its normalisation statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormMode {
    /// Batch statistics; running statistics blended with momentum.
    Train,
    /// Stored running statistics.
    Eval,
    /// Batch statistics over the whole provided batch, written over the
    /// running statistics without blending.
    CaptureStats,
}

pub const DEFAULT_MOMENTUM: f64 = 0.1;
pub const DEFAULT_EPS: f64 = 1e-5;

/// Smallest variance stored in running statistics.
const VAR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<F> {
    pub mean: Vec<F>,
    pub var: Vec<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState<F> {
    pub gamma: Tensor<F>,
    pub beta: Tensor<F>,
    /// `None` until the first Train or CaptureStats pass.
    pub running: Option<RunningStats<F>>,
    pub momentum: F,
    pub eps: F,
    /// Mode used by the most recent forward pass.
    pub mode: NormMode,
}

impl<F: Scalar> BatchNormState<F> {
    pub fn new(channels: usize) -> Self {
        Self::with_hyper(channels, F::lit(DEFAULT_MOMENTUM), F::lit(DEFAULT_EPS))
    }

    pub fn with_hyper(channels: usize, momentum: F, eps: F) -> Self {
        BatchNormState {
            gamma: Tensor::full(&[channels], F::one()),
            beta: Tensor::zeros(&[channels]),
            running: None,
            momentum,
            eps,
            mode: NormMode::Eval,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

/// Values kept from the forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache<F> {
    pub xhat: Vec<F>,
    pub inv_std: Vec<F>,
    /// Whether the statistics came from the batch itself (gradient flows
    /// through mean and variance) or from stored running statistics.
    pub batch_stats: bool,
}

/// Per-channel biased mean and variance over the `(B, T)` axes.
///
/// Accumulation runs in `f64` regardless of `F`.
pub fn channel_stats<F: Scalar>(x: &Tensor<F>) -> Result<(Vec<f64>, Vec<f64>)> {
    let (b, c, t) = x.dims3()?;
    let n = (b * t) as f64;
    let d = x.data();
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for ch in 0..c {
        let mut s = 0.0;
        for bi in 0..b {
            s += d[(bi * c + ch) * t..(bi * c + ch + 1) * t]
                .iter()
                .map(|v| v.as_f64())
                .sum::<f64>();
        }
        let m = s / n;
        let mut ss = 0.0;
        for bi in 0..b {
            ss += d[(bi * c + ch) * t..(bi * c + ch + 1) * t]
                .iter()
                .map(|v| {
                    let e = v.as_f64() - m;
                    e * e
                })
                .sum::<f64>();
        }
        mean[ch] = m;
        var[ch] = ss / n;
    }
    Ok((mean, var))
}

/// Forward pass shared by the standalone op and the autodiff graph.
pub fn batch_norm_raw<F: Scalar>(
    x: &Tensor<F>,
    gamma: &Tensor<F>,
    beta: &Tensor<F>,
    running: &mut Option<RunningStats<F>>,
    momentum: F,
    eps: F,
    mode: NormMode,
) -> Result<(Tensor<F>, BatchNormCache<F>)> {
    let (b, c, t) = x.dims3()?;
    if gamma.len() != c || beta.len() != c {
        return Err(Error::shape(format!(
            "batchnorm: {c} channels but gamma/beta have {}/{}",
            gamma.len(),
            beta.len()
        )));
    }
    let (mean, var, batch_stats): (Vec<F>, Vec<F>, bool) = match mode {
        NormMode::Train | NormMode::CaptureStats => {
            if b * t < 2 {
                return Err(Error::arg(
                    "batchnorm: batch statistics need at least two values per channel",
                ));
            }
            let (m, v) = channel_stats(x)?;
            let mean: Vec<F> = m.iter().map(|&v| F::lit(v)).collect();
            let var: Vec<F> = v.iter().map(|&v| F::lit(v)).collect();
            let floored: Vec<F> = var.iter().map(|&v| v.max(F::lit(VAR_FLOOR))).collect();
            match (mode, running.as_mut()) {
                (NormMode::Train, Some(rs)) => {
                    let keep = F::one() - momentum;
                    for ch in 0..c {
                        rs.mean[ch] = keep * rs.mean[ch] + momentum * mean[ch];
                        rs.var[ch] = (keep * rs.var[ch] + momentum * floored[ch])
                            .max(F::lit(VAR_FLOOR));
                    }
                }
                (NormMode::Train, None) => {
                    // Blend from the conventional prior of zero mean, unit variance.
                    let keep = F::one() - momentum;
                    *running = Some(RunningStats {
                        mean: mean.iter().map(|&m| momentum * m).collect(),
                        var: floored.iter().map(|&v| keep + momentum * v).collect(),
                    });
                }
                _ => {
                    *running = Some(RunningStats {
                        mean: mean.clone(),
                        var: floored,
                    });
                }
            }
            (mean, var, true)
        }
        NormMode::Eval => {
            let rs = running.as_ref().ok_or_else(|| {
                Error::UninitializedStats("batchnorm evaluated before any statistics exist".into())
            })?;
            (rs.mean.clone(), rs.var.clone(), false)
        }
    };
    let inv_std: Vec<F> = var.iter().map(|&v| F::one() / (v + eps).sqrt()).collect();
    let xd = x.data();
    let mut xhat = vec![F::zero(); xd.len()];
    let mut y = vec![F::zero(); xd.len()];
    for bi in 0..b {
        for ch in 0..c {
            let off = (bi * c + ch) * t;
            let (m, is, g, be) = (mean[ch], inv_std[ch], gamma.data()[ch], beta.data()[ch]);
            for i in off..off + t {
                let h = (xd[i] - m) * is;
                xhat[i] = h;
                y[i] = g * h + be;
            }
        }
    }
    Ok((
        Tensor::from_vec(x.shape(), y)?,
        BatchNormCache {
            xhat,
            inv_std,
            batch_stats,
        },
    ))
}

/// Batch normalisation with the state's own affine parameters and statistics.
pub fn batchnorm<F: Scalar>(
    x: &Tensor<F>,
    state: &mut BatchNormState<F>,
    mode: NormMode,
) -> Result<(Tensor<F>, BatchNormCache<F>)> {
    state.mode = mode;
    let BatchNormState {
        gamma,
        beta,
        running,
        momentum,
        eps,
        ..
    } = state;
    batch_norm_raw(x, gamma, beta, running, *momentum, *eps, mode)
}

/// Eval-mode normalisation without touching the state.
///
/// Produces the same values as [`batchnorm`] in [`NormMode::Eval`].
pub fn batchnorm_eval<F: Scalar>(x: &Tensor<F>, state: &BatchNormState<F>) -> Result<Tensor<F>> {
    let (b, c, t) = x.dims3()?;
    if state.channels() != c {
        return Err(Error::shape(format!(
            "batchnorm: {c} channels but state has {}",
            state.channels()
        )));
    }
    let rs = state.running.as_ref().ok_or_else(|| {
        Error::UninitializedStats("batchnorm evaluated before any statistics exist".into())
    })?;
    let xd = x.data();
    let mut y = vec![F::zero(); xd.len()];
    for ch in 0..c {
        let is = F::one() / (rs.var[ch] + state.eps).sqrt();
        let (m, g, be) = (rs.mean[ch], state.gamma.data()[ch], state.beta.data()[ch]);
        for bi in 0..b {
            let off = (bi * c + ch) * t;
            for i in off..off + t {
                y[i] = g * ((xd[i] - m) * is) + be;
            }
        }
    }
    Tensor::from_vec(x.shape(), y)
}

/// Returns `(grad_x, grad_gamma, grad_beta)`.
pub fn batchnorm_backward<F: Scalar>(
    grad_y: &Tensor<F>,
    gamma: &Tensor<F>,
    cache: &BatchNormCache<F>,
) -> Result<(Tensor<F>, Tensor<F>, Tensor<F>)> {
    let (b, c, t) = grad_y.dims3()?;
    if cache.xhat.len() != grad_y.len() || gamma.len() != c {
        return Err(Error::shape("batchnorm_backward: cache does not match gradient"));
    }
    let gy = grad_y.data();
    let n = F::lit((b * t) as f64);
    let mut gx = vec![F::zero(); gy.len()];
    let mut gg = vec![F::zero(); c];
    let mut gb = vec![F::zero(); c];
    for ch in 0..c {
        let mut sum_g = F::zero();
        let mut sum_gx = F::zero();
        for bi in 0..b {
            let off = (bi * c + ch) * t;
            for i in off..off + t {
                sum_g += gy[i];
                sum_gx += gy[i] * cache.xhat[i];
            }
        }
        gb[ch] = sum_g;
        gg[ch] = sum_gx;
        let g = gamma.data()[ch];
        let is = cache.inv_std[ch];
        for bi in 0..b {
            let off = (bi * c + ch) * t;
            for i in off..off + t {
                gx[i] = if cache.batch_stats {
                    g * is * (gy[i] - sum_g / n - cache.xhat[i] * sum_gx / n)
                } else {
                    g * is * gy[i]
                };
            }
        }
    }
    Ok((
        Tensor::from_vec(grad_y.shape(), gx)?,
        Tensor::from_vec(&[c], gg)?,
        Tensor::from_vec(&[c], gb)?,
    ))
}
