use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Bias-corrected Adam moments for an ordered parameter list.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<F> {
    pub m: Vec<Vec<F>>,
    pub v: Vec<Vec<F>>,
    pub t: u64,
    pub lr: F,
    pub beta1: F,
    pub beta2: F,
    pub eps: F,
}

impl<F: Scalar> AdamState<F> {
    /// Fresh state with `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
    pub fn new(params: &[&Tensor<F>], lr: F) -> Self {
        AdamState {
            m: params.iter().map(|p| vec![F::zero(); p.len()]).collect(),
            v: params.iter().map(|p| vec![F::zero(); p.len()]).collect(),
            t: 0,
            lr,
            beta1: F::lit(0.9),
            beta2: F::lit(0.999),
            eps: F::lit(1e-8),
        }
    }
}

/// One Adam update. Parameters whose gradient is `None` are left untouched
/// and keep their moments.
pub fn adam_step<F: Scalar>(
    params: &mut [&mut Tensor<F>],
    grads: &[Option<&Tensor<F>>],
    state: &mut AdamState<F>,
) -> Result<()> {
    if !(state.lr > F::zero()) {
        return Err(Error::arg(format!("learning rate must be positive, got {}", state.lr)));
    }
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::shape(format!(
            "adam: {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if state.m[i].len() != p.len() || g.is_some_and(|g| g.len() != p.len()) {
            return Err(Error::shape(format!("adam: slot {i} size mismatch")));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = F::one() - b1.powi(t);
    let c2 = F::one() - b2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let Some(g) = g else { continue };
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (j, (pv, &gv)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            m[j] = b1 * m[j] + (F::one() - b1) * gv;
            v[j] = b2 * v[j] + (F::one() - b2) * gv * gv;
            let mhat = m[j] / c1;
            let vhat = v[j] / c2;
            *pv -= state.lr * mhat / (vhat.sqrt() + state.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Tensor::from_vec(&[3], vec![1.0f64, -2.0, 0.5]).unwrap();
        let before = p.clone();
        let mut st = AdamState::new(&[&p], 1e-3);
        let g = Tensor::zeros(&[3]);
        adam_step(&mut [&mut p], &[Some(&g)], &mut st).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = Tensor::scalar(1.0f64);
        let mut st = AdamState::new(&[&p], 0.01);
        adam_step(&mut [&mut p], &[Some(&Tensor::scalar(3.0))], &mut st).unwrap();
        assert!((p.data()[0] - (1.0 - 0.01)).abs() < 1e-8);
    }

    #[test]
    fn rejects_non_positive_lr() {
        let mut p = Tensor::scalar(1.0f64);
        let mut st = AdamState::new(&[&p], 0.0);
        assert!(adam_step(&mut [&mut p], &[Some(&Tensor::scalar(1.0))], &mut st).is_err());
    }
}
