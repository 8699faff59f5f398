use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// A mixed batch: `x~ = lambda * x + (1 - lambda) * x[perm]`, targets alike.
#[derive(Debug, Clone)]
pub struct Mixed<F> {
    pub x: Tensor<F>,
    pub y: Tensor<F>,
    pub s: Option<Tensor<F>>,
    pub lambda: f64,
    pub perm: Vec<usize>,
}

fn mix_rows<F: Scalar>(t: &Tensor<F>, lambda: F, perm: &[usize]) -> Result<Tensor<F>> {
    let b = t.shape().first().copied().unwrap_or(0);
    if b != perm.len() {
        return Err(Error::shape(format!("mixup: batch of {b} rows, permutation of {}", perm.len())));
    }
    let row = if b == 0 { 0 } else { t.len() / b };
    let d = t.data();
    let one_minus = F::one() - lambda;
    let mut out = Vec::with_capacity(t.len());
    for (i, &j) in perm.iter().enumerate() {
        let (a, c) = (&d[i * row..(i + 1) * row], &d[j * row..(j + 1) * row]);
        out.extend(a.iter().zip(c).map(|(&u, &v)| lambda * u + one_minus * v));
    }
    Tensor::from_vec(t.shape(), out)
}

/// Mix with a given coefficient and pairing.
pub fn mixup_with<F: Scalar>(
    x: &Tensor<F>,
    y: &Tensor<F>,
    s: Option<&Tensor<F>>,
    lambda: f64,
    perm: Vec<usize>,
) -> Result<Mixed<F>> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::arg(format!("mixup coefficient {lambda} outside [0, 1]")));
    }
    let l = F::lit(lambda);
    Ok(Mixed {
        x: mix_rows(x, l, &perm)?,
        y: mix_rows(y, l, &perm)?,
        s: s.map(|s| mix_rows(s, l, &perm)).transpose()?,
        lambda,
        perm,
    })
}

/// Draw `lambda ~ Beta(alpha, alpha)` and a random pairing, then mix.
/// Batches of fewer than two trials come back unchanged with `lambda = 1`.
pub fn mixup_batch<F: Scalar, R: Rng + ?Sized>(
    x: &Tensor<F>,
    y: &Tensor<F>,
    s: Option<&Tensor<F>>,
    alpha: f64,
    rng: &mut R,
) -> Result<Mixed<F>> {
    if !(alpha > 0.0) {
        return Err(Error::arg(format!("mixup alpha must be positive, got {alpha}")));
    }
    let b = x.shape().first().copied().unwrap_or(0);
    if b < 2 {
        return Ok(Mixed {
            x: x.clone(),
            y: y.clone(),
            s: s.cloned(),
            lambda: 1.0,
            perm: (0..b).collect(),
        });
    }
    let beta = Beta::new(alpha, alpha).map_err(|e| Error::arg(format!("mixup alpha {alpha}: {e}")))?;
    let lambda: f64 = beta.sample(rng);
    let mut perm: Vec<usize> = (0..b).collect();
    perm.shuffle(rng);
    mixup_with(x, y, s, lambda, perm)
}
