use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Left padding for a "same" convolution of kernel length `kernel`.
///
/// Odd kernels are centred; even kernels take the extra tap from the right.
#[inline]
pub fn same_offset(kernel: usize) -> usize {
    (kernel - 1) / 2
}

/// Valid output-time range `[lo, hi)` for tap `k`, and the input shift it applies.
#[inline]
fn tap_range(k: usize, offset: usize, t: usize) -> (usize, usize, isize) {
    let shift = k as isize - offset as isize;
    let lo = if shift < 0 { ((-shift) as usize).min(t) } else { 0 };
    let hi = if shift > 0 {
        t.saturating_sub(shift as usize)
    } else {
        t
    };
    (lo, hi.max(lo), shift)
}

fn check_shapes<F: Scalar>(
    x: &Tensor<F>,
    w: &Tensor<F>,
) -> Result<((usize, usize, usize), (usize, usize, usize))> {
    let (b, cin, t) = x.dims3()?;
    let (cout, cin_w, s) = w.dims3()?;
    if cin != cin_w {
        return Err(Error::shape(format!(
            "conv1d: input has {cin} channels, kernel expects {cin_w}"
        )));
    }
    if t < 1 {
        return Err(Error::shape("conv1d: input length must be at least 1"));
    }
    if s < 1 {
        return Err(Error::shape("conv1d: kernel length must be at least 1"));
    }
    Ok(((b, cin, t), (cout, cin_w, s)))
}

/// Zero-padded "same" 1D convolution, `[B, Cin, T] * [Cout, Cin, S] -> [B, Cout, T]`.
pub fn conv1d<F: Scalar>(x: &Tensor<F>, w: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    let ((bsz, cin, t), (cout, _, s)) = check_shapes(x, w)?;
    if b.len() != cout {
        return Err(Error::shape(format!(
            "conv1d: bias has {} entries for {cout} output channels",
            b.len()
        )));
    }
    let offset = same_offset(s);
    let xd = x.data();
    let wd = w.data();
    let mut out = vec![F::zero(); bsz * cout * t];
    for bi in 0..bsz {
        for o in 0..cout {
            let y = &mut out[(bi * cout + o) * t..(bi * cout + o + 1) * t];
            y.fill(b.data()[o]);
            for c in 0..cin {
                let xrow = &xd[(bi * cin + c) * t..(bi * cin + c + 1) * t];
                let wrow = &wd[(o * cin + c) * s..(o * cin + c + 1) * s];
                for (k, &wv) in wrow.iter().enumerate() {
                    let (lo, hi, shift) = tap_range(k, offset, t);
                    if lo >= hi {
                        continue;
                    }
                    let src = &xrow[(lo as isize + shift) as usize..(hi as isize + shift) as usize];
                    for (yv, &xv) in y[lo..hi].iter_mut().zip(src) {
                        *yv += wv * xv;
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[bsz, cout, t], out)
}

/// Gradients of [`conv1d`] with respect to input, kernel and bias.
pub fn conv1d_backward<F: Scalar>(
    grad_y: &Tensor<F>,
    x: &Tensor<F>,
    w: &Tensor<F>,
) -> Result<(Tensor<F>, Tensor<F>, Tensor<F>)> {
    let ((bsz, cin, t), (cout, _, s)) = check_shapes(x, w)?;
    if grad_y.shape() != [bsz, cout, t] {
        return Err(Error::shape(format!(
            "conv1d_backward: grad has shape {:?}, expected {:?}",
            grad_y.shape(),
            [bsz, cout, t]
        )));
    }
    let offset = same_offset(s);
    let xd = x.data();
    let wd = w.data();
    let gy = grad_y.data();
    let mut gx = vec![F::zero(); xd.len()];
    let mut gw = vec![F::zero(); wd.len()];
    let mut gb = vec![F::zero(); cout];
    for bi in 0..bsz {
        for o in 0..cout {
            let g = &gy[(bi * cout + o) * t..(bi * cout + o + 1) * t];
            gb[o] += g.iter().copied().sum::<F>();
            for c in 0..cin {
                let xrow = &xd[(bi * cin + c) * t..(bi * cin + c + 1) * t];
                let gxrow = &mut gx[(bi * cin + c) * t..(bi * cin + c + 1) * t];
                let base = (o * cin + c) * s;
                for k in 0..s {
                    let (lo, hi, shift) = tap_range(k, offset, t);
                    if lo >= hi {
                        continue;
                    }
                    let a = (lo as isize + shift) as usize;
                    let z = (hi as isize + shift) as usize;
                    let mut acc = F::zero();
                    for (&gv, &xv) in g[lo..hi].iter().zip(&xrow[a..z]) {
                        acc += gv * xv;
                    }
                    gw[base + k] += acc;
                    let wv = wd[base + k];
                    for (gxv, &gv) in gxrow[a..z].iter_mut().zip(&g[lo..hi]) {
                        *gxv += wv * gv;
                    }
                }
            }
        }
    }
    Ok((
        Tensor::from_vec(x.shape(), gx)?,
        Tensor::from_vec(w.shape(), gw)?,
        Tensor::from_vec(&[cout], gb)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t3(shape: [usize; 3], data: Vec<f64>) -> Tensor<f64> {
        Tensor::from_vec(&shape, data).unwrap()
    }

    #[test]
    fn identity_kernel() {
        let x = t3([1, 1, 4], vec![1.0, 2.0, 3.0, 4.0]);
        let w = t3([1, 1, 1], vec![1.0]);
        let b = Tensor::from_vec(&[1], vec![0.0]).unwrap();
        assert_eq!(conv1d(&x, &w, &b).unwrap().data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn zero_input_yields_bias() {
        let x = Tensor::<f64>::zeros(&[2, 3, 5]);
        let w = Tensor::full(&[1, 3, 4], 0.7);
        let b = Tensor::from_vec(&[1], vec![5.0]).unwrap();
        let y = conv1d(&x, &w, &b).unwrap();
        assert!(y.data().iter().all(|&v| v == 5.0));
    }

    #[test]
    fn even_kernel_reads_right_neighbour() {
        // S=2: offset 0, so y[t] = x[t] + x[t+1], zero past the end.
        let x = t3([1, 1, 3], vec![1.0, 2.0, 3.0]);
        let w = t3([1, 1, 2], vec![1.0, 1.0]);
        let b = Tensor::from_vec(&[1], vec![0.0]).unwrap();
        assert_eq!(conv1d(&x, &w, &b).unwrap().data(), &[3.0, 5.0, 3.0]);
    }

    #[test]
    fn kernel_longer_than_signal() {
        let x = t3([1, 1, 2], vec![1.0, 2.0]);
        let w = t3([1, 1, 7], vec![1.0; 7]);
        let b = Tensor::from_vec(&[1], vec![0.0]).unwrap();
        assert_eq!(conv1d(&x, &w, &b).unwrap().data(), &[3.0, 3.0]);
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let x = Tensor::<f64>::zeros(&[1, 2, 4]);
        let w = Tensor::<f64>::zeros(&[1, 3, 3]);
        let b = Tensor::<f64>::zeros(&[1]);
        assert!(matches!(conv1d(&x, &w, &b), Err(Error::Shape(_))));
        let x = Tensor::<f64>::zeros(&[1, 3, 0]);
        assert!(conv1d(&x, &w, &b).is_err());
    }

    #[test]
    fn zero_upstream_gradient() {
        let x = Tensor::full(&[2, 2, 5], 0.3);
        let w = Tensor::full(&[3, 2, 3], -0.2);
        let gy = Tensor::<f64>::zeros(&[2, 3, 5]);
        let (gx, gw, gb) = conv1d_backward(&gy, &x, &w).unwrap();
        assert!(gx.data().iter().chain(gw.data()).chain(gb.data()).all(|&v| v == 0.0));
    }

    #[test]
    fn pointwise_backward_is_transpose() {
        // S=1 makes conv a per-timestep linear map W; grad_x = W^T grad_y.
        let w = t3([2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]);
        let x = Tensor::<f64>::zeros(&[1, 2, 1]);
        let gy = t3([1, 2, 1], vec![1.0, 10.0]);
        let (gx, _, _) = conv1d_backward(&gy, &x, &w).unwrap();
        assert_eq!(gx.data(), &[1.0 + 30.0, 2.0 + 40.0]);
    }
}
