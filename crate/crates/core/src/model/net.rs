use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::ops::{self, BatchNormState, NormMode};
use crate::tensor::{Scalar, Tensor};

use super::ModelConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct Conv<F> {
    pub weight: Tensor<F>,
    pub bias: Tensor<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<F> {
    pub weight: Tensor<F>,
    pub bias: Tensor<F>,
}

/// Output of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardOutput<F> {
    pub class_logits: Tensor<F>,
    pub subject_logits: Option<Tensor<F>>,
    /// Time-averaged activations feeding the heads, `[B, F_K]`.
    pub features: Tensor<F>,
}

/// Graph handles of a forward pass recorded on a [`Graph`].
#[derive(Debug, Clone)]
pub struct GraphForward {
    pub class_logits: Var,
    pub subject_logits: Option<Var>,
    pub features: Var,
    /// Parameter leaves, in [`Model::params`] order.
    pub params: Vec<Var>,
}

/// The network: embedding conv, `depth` blocks of
/// `[conv, BN, ReLU, conv, BN, ReLU, maxpool]`, time average, linear heads.
/// The embedding conv is also followed by BN and ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<F> {
    config: ModelConfig,
    convs: Vec<Conv<F>>,
    norms: Vec<BatchNormState<F>>,
    head: Dense<F>,
    subject_head: Option<Dense<F>>,
}

fn he_uniform<F: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor<F> {
    let bound = (6.0 / fan_in as f64).sqrt();
    let len = shape.iter().product();
    let data = (0..len).map(|_| F::lit(rng.gen_range(-bound..bound))).collect();
    Tensor::from_vec(shape, data).expect("shape matches length")
}

impl<F: Scalar> Model<F> {
    /// Build with He-uniform weights, zero biases, unit BN scale, zero BN shift.
    pub fn build(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = config.kernel;
        let mut convs = Vec::new();
        let mut norms = Vec::new();
        for (cin, cout) in config.conv_channels() {
            convs.push(Conv {
                weight: he_uniform(&mut rng, &[cout, cin, s], cin * s),
                bias: Tensor::zeros(&[cout]),
            });
            norms.push(BatchNormState::new(cout));
        }
        let feat = config.feature_dim();
        let head = Dense {
            weight: he_uniform(&mut rng, &[config.n_classes, feat], feat),
            bias: Tensor::zeros(&[config.n_classes]),
        };
        let subject_head = (config.n_subjects > 0).then(|| Dense {
            weight: he_uniform(&mut rng, &[config.n_subjects, feat], feat),
            bias: Tensor::zeros(&[config.n_subjects]),
        });
        Ok(Model {
            config,
            convs,
            norms,
            head,
            subject_head,
        })
    }

    pub(crate) fn from_parts(
        config: ModelConfig,
        convs: Vec<Conv<F>>,
        norms: Vec<BatchNormState<F>>,
        head: Dense<F>,
        subject_head: Option<Dense<F>>,
    ) -> Self {
        Model {
            config,
            convs,
            norms,
            head,
            subject_head,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn convs(&self) -> &[Conv<F>] {
        &self.convs
    }

    pub fn norms(&self) -> &[BatchNormState<F>] {
        &self.norms
    }

    pub fn norms_mut(&mut self) -> &mut [BatchNormState<F>] {
        &mut self.norms
    }

    pub fn head(&self) -> &Dense<F> {
        &self.head
    }

    pub fn subject_head(&self) -> Option<&Dense<F>> {
        self.subject_head.as_ref()
    }

    /// Learnable tensors in build order: per conv `weight, bias, gamma, beta`,
    /// then the class head, then the subject head if present.
    pub fn params(&self) -> Vec<&Tensor<F>> {
        let mut out = Vec::new();
        for (c, n) in self.convs.iter().zip(&self.norms) {
            out.extend([&c.weight, &c.bias, &n.gamma, &n.beta]);
        }
        out.extend([&self.head.weight, &self.head.bias]);
        if let Some(h) = &self.subject_head {
            out.extend([&h.weight, &h.bias]);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<F>> {
        let mut out = Vec::new();
        for (c, n) in self.convs.iter_mut().zip(self.norms.iter_mut()) {
            out.push(&mut c.weight);
            out.push(&mut c.bias);
            out.push(&mut n.gamma);
            out.push(&mut n.beta);
        }
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        if let Some(h) = &mut self.subject_head {
            out.push(&mut h.weight);
            out.push(&mut h.bias);
        }
        out
    }

    /// Index range of the subject-head tensors within [`Model::params`].
    pub fn subject_param_range(&self) -> Option<std::ops::Range<usize>> {
        self.subject_head.as_ref().map(|_| {
            let start = 4 * self.convs.len() + 2;
            start..start + 2
        })
    }

    /// Number of learnable scalars; running statistics are not counted.
    pub fn count_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn check_input(&self, x: &Tensor<F>) -> Result<()> {
        let (_, c, t) = x.dims3()?;
        if c != self.config.in_channels {
            return Err(Error::shape(format!(
                "model expects {} input channels, got {c}",
                self.config.in_channels
            )));
        }
        let min = self.config.min_length();
        if t < min {
            return Err(Error::TooShort { min, got: t });
        }
        Ok(())
    }

    fn pools_after(conv_index: usize) -> bool {
        conv_index >= 2 && conv_index % 2 == 0
    }

    /// Record a forward pass on `graph`. Parameters become leaves that
    /// require gradients when `mode` is [`NormMode::Train`].
    pub fn forward_graph(
        &mut self,
        graph: &mut Graph<F>,
        x: Var,
        mode: NormMode,
    ) -> Result<GraphForward> {
        self.check_input(graph.value(x))?;
        let train = mode == NormMode::Train;
        let leaf = |g: &mut Graph<F>, t: &Tensor<F>| {
            let mut t = t.clone();
            t.requires_grad = train;
            t.grad = None;
            g.leaf(t)
        };
        let mut params = Vec::new();
        let mut h = x;
        for (i, (conv, norm)) in self.convs.iter().zip(self.norms.iter_mut()).enumerate() {
            let w = leaf(graph, &conv.weight);
            let b = leaf(graph, &conv.bias);
            let gamma = leaf(graph, &norm.gamma);
            let beta = leaf(graph, &norm.beta);
            params.extend([w, b, gamma, beta]);
            h = graph.conv1d(h, w, b)?;
            norm.mode = mode;
            h = graph.batch_norm(h, gamma, beta, &mut norm.running, norm.momentum, norm.eps, mode)?;
            h = graph.relu(h);
            if Self::pools_after(i) {
                h = graph.maxpool(h)?;
            }
        }
        let features = graph.avg_time(h)?;
        let hw = leaf(graph, &self.head.weight);
        let hb = leaf(graph, &self.head.bias);
        params.extend([hw, hb]);
        let class_logits = graph.linear(features, hw, hb)?;
        let subject_logits = match &self.subject_head {
            Some(sh) => {
                let sw = leaf(graph, &sh.weight);
                let sb = leaf(graph, &sh.bias);
                params.extend([sw, sb]);
                Some(graph.linear(features, sw, sb)?)
            }
            None => None,
        };
        Ok(GraphForward {
            class_logits,
            subject_logits,
            features,
            params,
        })
    }

    /// Eval-mode forward pass; no state is touched.
    pub fn infer(&self, x: &Tensor<F>) -> Result<ForwardOutput<F>> {
        self.check_input(x)?;
        let mut h = x.clone();
        for (i, (conv, norm)) in self.convs.iter().zip(&self.norms).enumerate() {
            h = ops::conv1d(&h, &conv.weight, &conv.bias)?;
            h = ops::batchnorm_eval(&h, norm)?;
            h = ops::relu(&h);
            if Self::pools_after(i) {
                h = ops::maxpool1d(&h)?.0;
            }
        }
        let features = ops::global_avg_pool_time(&h)?;
        let class_logits = ops::linear(&features, &self.head.weight, &self.head.bias)?;
        let subject_logits = self
            .subject_head
            .as_ref()
            .map(|sh| ops::linear(&features, &sh.weight, &sh.bias))
            .transpose()?;
        Ok(ForwardOutput {
            class_logits,
            subject_logits,
            features,
        })
    }

    /// Forward pass in any mode. Train and CaptureStats update BN statistics.
    pub fn forward(&mut self, x: &Tensor<F>, mode: NormMode) -> Result<ForwardOutput<F>> {
        if mode == NormMode::Eval {
            return self.infer(x);
        }
        let mut graph = Graph::new();
        let xv = graph.leaf(x.clone());
        let out = self.forward_graph(&mut graph, xv, mode)?;
        Ok(ForwardOutput {
            class_logits: graph.value(out.class_logits).clone(),
            subject_logits: out.subject_logits.map(|v| graph.value(v).clone()),
            features: graph.value(out.features).clone(),
        })
    }

    /// Copy of the model whose BN running statistics are replaced by the
    /// statistics of `batch`, computed layer by layer in a single pass.
    pub fn recompute_bn_stats(&self, batch: &Tensor<F>) -> Result<Model<F>> {
        let (b, _, _) = batch.dims3()?;
        if b < 2 {
            return Err(Error::arg(format!(
                "recomputing BN statistics needs a batch of at least 2 trials, got {b}"
            )));
        }
        let mut adapted = self.clone();
        adapted.forward(batch, NormMode::CaptureStats)?;
        Ok(adapted)
    }

    /// Eval-mode pooled features for each trial, `[N, F_K]`, in chunks of `chunk` trials.
    pub fn extract_embeddings(&self, trials: &Tensor<F>, chunk: usize) -> Result<Tensor<F>> {
        let (n, c, t) = trials.dims3()?;
        let feat = self.config.feature_dim();
        let mut data = Vec::with_capacity(n * feat);
        for start in (0..n).step_by(chunk.max(1)) {
            let end = (start + chunk.max(1)).min(n);
            let slice = trials.data()[start * c * t..end * c * t].to_vec();
            let x = Tensor::from_vec(&[end - start, c, t], slice)?;
            data.extend_from_slice(self.infer(&x)?.features.data());
        }
        Tensor::from_vec(&[n, feat], data)
    }

    /// Element-type conversion of every parameter and statistic.
    pub fn cast<G: Scalar>(&self) -> Model<G> {
        let conv = |c: &Conv<F>| Conv {
            weight: c.weight.cast(),
            bias: c.bias.cast(),
        };
        let dense = |d: &Dense<F>| Dense {
            weight: d.weight.cast(),
            bias: d.bias.cast(),
        };
        Model {
            config: self.config.clone(),
            convs: self.convs.iter().map(conv).collect(),
            norms: self
                .norms
                .iter()
                .map(|n| BatchNormState {
                    gamma: n.gamma.cast(),
                    beta: n.beta.cast(),
                    running: n.running.as_ref().map(|r| ops::RunningStats {
                        mean: r.mean.iter().map(|v| G::lit(v.as_f64())).collect(),
                        var: r.var.iter().map(|v| G::lit(v.as_f64())).collect(),
                    }),
                    momentum: G::lit(n.momentum.as_f64()),
                    eps: G::lit(n.eps.as_f64()),
                    mode: n.mode,
                })
                .collect(),
            head: dense(&self.head),
            subject_head: self.subject_head.as_ref().map(dense),
        }
    }

    /// Argmax of the class logits for each trial.
    pub fn predict(&self, x: &Tensor<F>) -> Result<Vec<usize>> {
        let out = self.infer(x)?;
        Ok(argmax_rows(&out.class_logits))
    }
}

pub fn argmax_rows<F: Scalar>(logits: &Tensor<F>) -> Vec<usize> {
    let k = logits.shape()[1];
    logits
        .data()
        .chunks_exact(k)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}
