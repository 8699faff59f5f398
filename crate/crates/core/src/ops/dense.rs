use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Affine map `[B, F] -> [B, O]` with weight `[O, F]`.
pub fn linear<F: Scalar>(x: &Tensor<F>, w: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    let (bsz, fin) = x.dims2()?;
    let (out, fw) = w.dims2()?;
    if fin != fw || b.len() != out {
        return Err(Error::shape(format!(
            "linear: input {:?}, weight {:?}, bias {:?}",
            x.shape(),
            w.shape(),
            b.shape()
        )));
    }
    let mut y = Vec::with_capacity(bsz * out);
    for row in x.data().chunks_exact(fin) {
        for (o, wrow) in w.data().chunks_exact(fin).enumerate() {
            let dot: F = row.iter().zip(wrow).map(|(&a, &b)| a * b).sum();
            y.push(dot + b.data()[o]);
        }
    }
    Tensor::from_vec(&[bsz, out], y)
}

/// Returns `(grad_x, grad_w, grad_b)`.
pub fn linear_backward<F: Scalar>(
    grad_y: &Tensor<F>,
    x: &Tensor<F>,
    w: &Tensor<F>,
) -> Result<(Tensor<F>, Tensor<F>, Tensor<F>)> {
    let (bsz, fin) = x.dims2()?;
    let (out, _) = w.dims2()?;
    if grad_y.shape() != [bsz, out] {
        return Err(Error::shape("linear_backward: gradient shape mismatch"));
    }
    let mut gx = vec![F::zero(); bsz * fin];
    let mut gw = vec![F::zero(); out * fin];
    let mut gb = vec![F::zero(); out];
    let (xd, wd, gy) = (x.data(), w.data(), grad_y.data());
    for i in 0..bsz {
        for o in 0..out {
            let g = gy[i * out + o];
            gb[o] += g;
            for f in 0..fin {
                gx[i * fin + f] += g * wd[o * fin + f];
                gw[o * fin + f] += g * xd[i * fin + f];
            }
        }
    }
    Ok((
        Tensor::from_vec(x.shape(), gx)?,
        Tensor::from_vec(w.shape(), gw)?,
        Tensor::from_vec(&[out], gb)?,
    ))
}

pub fn relu<F: Scalar>(x: &Tensor<F>) -> Tensor<F> {
    let data = x.data().iter().map(|&v| v.max(F::zero())).collect();
    Tensor::from_vec(x.shape(), data).expect("same shape")
}

pub fn relu_backward<F: Scalar>(grad_y: &Tensor<F>, x: &Tensor<F>) -> Result<Tensor<F>> {
    if grad_y.shape() != x.shape() {
        return Err(Error::shape("relu_backward: shape mismatch"));
    }
    let data = grad_y
        .data()
        .iter()
        .zip(x.data())
        .map(|(&g, &v)| if v > F::zero() { g } else { F::zero() })
        .collect();
    Tensor::from_vec(x.shape(), data)
}

/// Row-wise softmax with max subtraction.
pub fn softmax<F: Scalar>(logits: &Tensor<F>) -> Result<Tensor<F>> {
    let (_, k) = logits.dims2()?;
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.data().chunks_exact(k) {
        let m = row.iter().copied().fold(F::neg_infinity(), F::max);
        let exps: Vec<F> = row.iter().map(|&v| (v - m).exp()).collect();
        let z: F = exps.iter().copied().sum();
        out.extend(exps.into_iter().map(|e| e / z));
    }
    Tensor::from_vec(logits.shape(), out)
}

/// Mean soft-label cross entropy; returns `(loss, softmax probabilities)`.
///
/// The gradient with respect to the logits is `(probs - targets) / B`.
pub fn softmax_cross_entropy<F: Scalar>(
    logits: &Tensor<F>,
    targets: &Tensor<F>,
) -> Result<(F, Tensor<F>)> {
    let (b, k) = logits.dims2()?;
    if targets.shape() != logits.shape() {
        return Err(Error::shape(format!(
            "cross entropy: logits {:?} vs targets {:?}",
            logits.shape(),
            targets.shape()
        )));
    }
    if b == 0 {
        return Err(Error::Empty("cross entropy over an empty batch".into()));
    }
    if !logits.all_finite() {
        return Err(Error::NonFinite("cross-entropy logits"));
    }
    let mut total = F::zero();
    let mut probs = Vec::with_capacity(logits.len());
    for (row, tgt) in logits.data().chunks_exact(k).zip(targets.data().chunks_exact(k)) {
        let m = row.iter().copied().fold(F::neg_infinity(), F::max);
        let lse = row.iter().map(|&v| (v - m).exp()).sum::<F>().ln() + m;
        for (&v, &y) in row.iter().zip(tgt) {
            if y != F::zero() {
                total -= y * (v - lse);
            }
            probs.push((v - lse).exp());
        }
    }
    Ok((total / F::lit(b as f64), Tensor::from_vec(logits.shape(), probs)?))
}

pub fn softmax_cross_entropy_backward<F: Scalar>(
    probs: &Tensor<F>,
    targets: &Tensor<F>,
    grad_loss: F,
) -> Result<Tensor<F>> {
    let (b, _) = probs.dims2()?;
    let scale = grad_loss / F::lit(b as f64);
    let data = probs
        .data()
        .iter()
        .zip(targets.data())
        .map(|(&p, &y)| (p - y) * scale)
        .collect();
    Tensor::from_vec(probs.shape(), data)
}

/// One-hot rows for `labels` over `k` classes.
pub fn one_hot<F: Scalar>(labels: &[usize], k: usize) -> Tensor<F> {
    let mut t = Tensor::zeros(&[labels.len(), k]);
    for (i, &l) in labels.iter().enumerate() {
        t.data_mut()[i * k + l] = F::one();
    }
    t
}
