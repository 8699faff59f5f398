//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records one forward pass. Each node owns its value and the
//! cache its backward rule needs; [`Graph::backward`] walks the tape in
//! reverse and accumulates gradients into every node that requires one.
//! The tape is discarded with the graph after use.

use crate::error::{Error, Result};
use crate::ops::{self, BatchNormCache, NormMode, RunningStats};
use crate::tensor::{Scalar, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<F> {
    Leaf,
    Conv1d { x: Var, w: Var, b: Var },
    BatchNorm { x: Var, gamma: Var, beta: Var, cache: BatchNormCache<F> },
    Relu { x: Var },
    MaxPool { x: Var, argmax: Vec<usize> },
    AvgTime { x: Var },
    Linear { x: Var, w: Var, b: Var },
    CrossEntropy { logits: Var, probs: Tensor<F>, targets: Tensor<F> },
    /// `a + k * b` on scalars.
    AddScaled { a: Var, b: Var, k: F },
}

struct Node<F> {
    value: Tensor<F>,
    grad: Option<Tensor<F>>,
    requires_grad: bool,
    op: Op<F>,
}

pub struct Graph<F> {
    nodes: Vec<Node<F>>,
}

impl<F: Scalar> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Graph<F> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>, parents: &[Var]) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Insert an input or parameter. The tensor's `requires_grad` flag is honoured.
    pub fn leaf(&mut self, value: Tensor<F>) -> Var {
        let requires_grad = value.requires_grad;
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor<F>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor<F>> {
        self.nodes[v.0].grad.take()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn conv1d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = ops::conv1d(self.value(x), self.value(w), self.value(b))?;
        Ok(self.push(y, Op::Conv1d { x, w, b }, &[x, w, b]))
    }

    /// Batch normalisation whose running statistics live outside the graph.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running: &mut Option<RunningStats<F>>,
        momentum: F,
        eps: F,
        mode: NormMode,
    ) -> Result<Var> {
        let (y, cache) = ops::batch_norm_raw(
            self.value(x),
            self.value(gamma),
            self.value(beta),
            running,
            momentum,
            eps,
            mode,
        )?;
        Ok(self.push(y, Op::BatchNorm { x, gamma, beta, cache }, &[x, gamma, beta]))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = ops::relu(self.value(x));
        self.push(y, Op::Relu { x }, &[x])
    }

    pub fn maxpool(&mut self, x: Var) -> Result<Var> {
        let (y, argmax) = ops::maxpool1d(self.value(x))?;
        Ok(self.push(y, Op::MaxPool { x, argmax }, &[x]))
    }

    pub fn avg_time(&mut self, x: Var) -> Result<Var> {
        let y = ops::global_avg_pool_time(self.value(x))?;
        Ok(self.push(y, Op::AvgTime { x }, &[x]))
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = ops::linear(self.value(x), self.value(w), self.value(b))?;
        Ok(self.push(y, Op::Linear { x, w, b }, &[x, w, b]))
    }

    /// Scalar mean soft-label cross entropy.
    pub fn cross_entropy(&mut self, logits: Var, targets: Tensor<F>) -> Result<Var> {
        let (loss, probs) = ops::softmax_cross_entropy(self.value(logits), &targets)?;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                probs,
                targets,
            },
            &[logits],
        ))
    }

    pub fn add_scaled(&mut self, a: Var, b: Var, k: F) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.len() != 1 || vb.len() != 1 {
            return Err(Error::shape("add_scaled operates on scalars"));
        }
        let v = va.data()[0] + k * vb.data()[0];
        Ok(self.push(Tensor::scalar(v), Op::AddScaled { a, b, k }, &[a, b]))
    }

    fn accumulate(&mut self, v: Var, g: Tensor<F>) {
        let node = &mut self.nodes[v.0];
        if !node.requires_grad {
            return;
        }
        match node.grad.as_mut() {
            Some(acc) => {
                for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += *b;
                }
            }
            None => node.grad = Some(g),
        }
    }

    /// Back-propagate from a scalar node, seeding its gradient with one.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape("backward must start from a scalar"));
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.nodes[loss.0].grad = Some(Tensor::scalar(F::one()));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(gy) = self.nodes[i].grad.take() else {
                continue;
            };
            // Leaves keep their gradient; interior nodes hand it to their parents.
            let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
            match &op {
                Op::Leaf => {
                    self.nodes[i].grad = Some(gy);
                }
                Op::Conv1d { x, w, b } => {
                    let (gx, gw, gb) = ops::conv1d_backward(&gy, self.value(*x), self.value(*w))?;
                    self.accumulate(*x, gx);
                    self.accumulate(*w, gw);
                    self.accumulate(*b, gb);
                }
                Op::BatchNorm {
                    x,
                    gamma,
                    beta,
                    cache,
                } => {
                    let (gx, gg, gb) = ops::batchnorm_backward(&gy, self.value(*gamma), cache)?;
                    self.accumulate(*x, gx);
                    self.accumulate(*gamma, gg);
                    self.accumulate(*beta, gb);
                }
                Op::Relu { x } => {
                    let gx = ops::relu_backward(&gy, self.value(*x))?;
                    self.accumulate(*x, gx);
                }
                Op::MaxPool { x, argmax } => {
                    let shape = self.value(*x).shape().to_vec();
                    let gx = ops::maxpool1d_backward(&gy, &shape, argmax)?;
                    self.accumulate(*x, gx);
                }
                Op::AvgTime { x } => {
                    let shape = self.value(*x).shape().to_vec();
                    let gx = ops::global_avg_pool_time_backward(&gy, &shape)?;
                    self.accumulate(*x, gx);
                }
                Op::Linear { x, w, b } => {
                    let (gx, gw, gb) = ops::linear_backward(&gy, self.value(*x), self.value(*w))?;
                    self.accumulate(*x, gx);
                    self.accumulate(*w, gw);
                    self.accumulate(*b, gb);
                }
                Op::CrossEntropy {
                    logits,
                    probs,
                    targets,
                } => {
                    let g = ops::softmax_cross_entropy_backward(probs, targets, gy.data()[0])?;
                    self.accumulate(*logits, g);
                }
                Op::AddScaled { a, b, k } => {
                    let g = gy.data()[0];
                    self.accumulate(*a, Tensor::scalar(g));
                    self.accumulate(*b, Tensor::scalar(*k * g));
                }
            }
            self.nodes[i].op = op;
        }
        Ok(())
    }
}
