//! Euclidean Alignment: whiten a scope's trials by the inverse square root
//! of their arithmetic-mean spatial covariance.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::ScopeKey;

/// Relative eigenvalue floor used when forming `R^{-1/2}`.
pub const EIG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EAReference {
    pub scope: ScopeKey,
    pub n_channels: usize,
    /// `(1/n) sum X_i X_i^T`, row-major `C x C`.
    pub mean_cov: Vec<f64>,
    /// `mean_cov^{-1/2}`, row-major `C x C`.
    pub whitener: Vec<f64>,
    pub n_trials: usize,
    /// Absolute floor applied to the eigenvalues.
    pub eig_floor: f64,
    /// Set when at least one eigenvalue was raised to the floor.
    pub warnings: Vec<String>,
}

/// Mean spatial covariance `(1/n) sum X X^T` of `[C, T]` trials.
pub fn mean_covariance(trials: &[&Tensor<f64>]) -> Result<DMatrix<f64>> {
    let first = trials
        .first()
        .ok_or_else(|| Error::Empty("Euclidean Alignment needs at least one trial".into()))?;
    let (c, _) = first.dims2()?;
    let mut acc = DMatrix::<f64>::zeros(c, c);
    for x in trials {
        let (ci, t) = x.dims2()?;
        if ci != c {
            return Err(Error::shape(format!(
                "EA scope mixes {c}- and {ci}-channel trials"
            )));
        }
        let d = x.data();
        for i in 0..c {
            let ri = &d[i * t..(i + 1) * t];
            for j in i..c {
                let rj = &d[j * t..(j + 1) * t];
                let v: f64 = ri.iter().zip(rj).map(|(a, b)| a * b).sum();
                acc[(i, j)] += v;
                if i != j {
                    acc[(j, i)] += v;
                }
            }
        }
    }
    Ok(acc / trials.len() as f64)
}

/// Fit the alignment reference of one scope.
pub fn fit_ea(trials: &[&Tensor<f64>], scope: ScopeKey) -> Result<EAReference> {
    let r = mean_covariance(trials)?;
    let c = r.nrows();
    let eig = SymmetricEigen::new(r.clone());
    let lmax = eig.eigenvalues.iter().copied().fold(0.0f64, f64::max);
    let floor = EIG_FLOOR * lmax;
    let mut warnings = Vec::new();
    let floored = eig.eigenvalues.iter().filter(|&&l| l < floor).count();
    if floored > 0 || lmax <= 0.0 {
        warnings.push(format!(
            "{floored} of {c} covariance eigenvalues below {floor:e}; floored (rank deficient)"
        ));
    }
    let inv_sqrt = eig.eigenvalues.map(|l| {
        let l = l.max(floor);
        if l > 0.0 {
            1.0 / l.sqrt()
        } else {
            0.0
        }
    });
    let u = &eig.eigenvectors;
    let w = u * DMatrix::from_diagonal(&inv_sqrt) * u.transpose();
    // Symmetrise away round-off.
    let w = (&w + w.transpose()) * 0.5;
    Ok(EAReference {
        scope,
        n_channels: c,
        mean_cov: row_major(&r),
        whitener: row_major(&w),
        n_trials: trials.len(),
        eig_floor: floor,
        warnings,
    })
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

impl EAReference {
    pub fn whitener_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n_channels, self.n_channels, &self.whitener)
    }

    pub fn mean_cov_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n_channels, self.n_channels, &self.mean_cov)
    }

    /// Reference that leaves trials unchanged.
    pub fn identity(n_channels: usize, scope: ScopeKey) -> Self {
        let eye = row_major(&DMatrix::identity(n_channels, n_channels));
        EAReference {
            scope,
            n_channels,
            mean_cov: eye.clone(),
            whitener: eye,
            n_trials: 0,
            eig_floor: 0.0,
            warnings: Vec::new(),
        }
    }
}

/// `X~ = R^{-1/2} X` for one `[C, T]` trial.
pub fn apply_ea(trial: &Tensor<f64>, reference: &EAReference) -> Result<Tensor<f64>> {
    let (c, t) = trial.dims2()?;
    if c != reference.n_channels {
        return Err(Error::shape(format!(
            "trial has {c} channels, alignment reference has {}",
            reference.n_channels
        )));
    }
    let x = trial.data();
    let w = &reference.whitener;
    let mut out = vec![0.0; c * t];
    for i in 0..c {
        let dst = &mut out[i * t..(i + 1) * t];
        for k in 0..c {
            let wik = w[i * c + k];
            if wik == 0.0 {
                continue;
            }
            for (d, &s) in dst.iter_mut().zip(&x[k * t..(k + 1) * t]) {
                *d += wik * s;
            }
        }
    }
    Tensor::from_vec(&[c, t], out)
}
