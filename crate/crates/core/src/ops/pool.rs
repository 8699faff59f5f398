use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Kernel-2 stride-2 max pooling over time. A trailing odd sample is dropped.
///
/// Returns the pooled tensor and, per output element, the flat input index
/// that won (the earlier sample on ties).
pub fn maxpool1d<F: Scalar>(x: &Tensor<F>) -> Result<(Tensor<F>, Vec<usize>)> {
    let (b, c, t) = x.dims3()?;
    if t < 2 {
        return Err(Error::shape(format!("maxpool1d: need T >= 2, got {t}")));
    }
    let half = t / 2;
    let xd = x.data();
    let mut out = Vec::with_capacity(b * c * half);
    let mut argmax = Vec::with_capacity(b * c * half);
    for row in 0..b * c {
        let base = row * t;
        for i in 0..half {
            let a = base + 2 * i;
            let (idx, v) = if xd[a] >= xd[a + 1] || xd[a + 1].is_nan() {
                (a, xd[a])
            } else {
                (a + 1, xd[a + 1])
            };
            out.push(v);
            argmax.push(idx);
        }
    }
    Ok((Tensor::from_vec(&[b, c, half], out)?, argmax))
}

pub fn maxpool1d_backward<F: Scalar>(
    grad_y: &Tensor<F>,
    input_shape: &[usize],
    argmax: &[usize],
) -> Result<Tensor<F>> {
    if grad_y.len() != argmax.len() {
        return Err(Error::shape("maxpool1d_backward: argmax/grad length mismatch"));
    }
    let mut gx = Tensor::zeros(input_shape);
    let d = gx.data_mut();
    for (&i, &g) in argmax.iter().zip(grad_y.data()) {
        d[i] += g;
    }
    Ok(gx)
}

/// Mean over the time axis, `[B, C, T] -> [B, C]`.
pub fn global_avg_pool_time<F: Scalar>(x: &Tensor<F>) -> Result<Tensor<F>> {
    let (b, c, t) = x.dims3()?;
    if t < 1 {
        return Err(Error::shape("global_avg_pool_time: empty time axis"));
    }
    let n = F::lit(t as f64);
    let out = x
        .data()
        .chunks_exact(t)
        .map(|row| row.iter().copied().sum::<F>() / n)
        .collect();
    Tensor::from_vec(&[b, c], out)
}

pub fn global_avg_pool_time_backward<F: Scalar>(
    grad_y: &Tensor<F>,
    input_shape: &[usize],
) -> Result<Tensor<F>> {
    let t = *input_shape
        .get(2)
        .ok_or_else(|| Error::shape("global_avg_pool_time_backward: expected rank-3 input"))?;
    let n = F::lit(t as f64);
    let mut data = Vec::with_capacity(grad_y.len() * t);
    for &g in grad_y.data() {
        data.extend(std::iter::repeat(g / n).take(t));
    }
    Tensor::from_vec(input_shape, data)
}
