//! Finite-difference checks of every differentiable op, shared by the
//! gradient tests and the acceptance run.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use simpleconv::autodiff::Graph;
use simpleconv::model::{Model, ModelConfig};
use simpleconv::ops::{self, NormMode};
use simpleconv::Tensor;

use super::{away_from_zero, dot, numeric_grad, rel_err, rng, uniform};

pub const SMOOTH_TOL: f64 = 1e-5;
pub const KINKED_TOL: f64 = 1e-3;
pub const INSTANCES: usize = 20;
const H: f64 = 1e-6;

pub struct OpCheck {
    pub op: &'static str,
    pub instances: usize,
    pub worst: f64,
    pub tol: f64,
}

impl OpCheck {
    pub fn passed(&self) -> bool {
        self.instances >= INSTANCES && self.worst < self.tol
    }
}

fn run(op: &'static str, tol: f64, seed: u64, mut case: impl FnMut(&mut ChaCha8Rng) -> f64) -> OpCheck {
    let mut r = rng(seed);
    let worst = (0..INSTANCES).map(|_| case(&mut r)).fold(0.0, f64::max);
    OpCheck {
        op,
        instances: INSTANCES,
        worst,
        tol,
    }
}

fn conv(r: &mut ChaCha8Rng) -> f64 {
    let (b, cin, cout, t, s) = (r.gen_range(1..4), r.gen_range(1..4), r.gen_range(1..4), r.gen_range(3..10), r.gen_range(1..6));
    let x = uniform(r, &[b, cin, t], -1.0, 1.0);
    let w = uniform(r, &[cout, cin, s], -1.0, 1.0);
    let bias = uniform(r, &[cout], -1.0, 1.0);
    let gy = uniform(r, &[b, cout, t], -1.0, 1.0);
    let (gx, gw, gb) = ops::conv1d_backward(&gy, &x, &w).unwrap();
    let nx = numeric_grad(&x, H, |x| dot(&ops::conv1d(x, &w, &bias).unwrap(), &gy));
    let nw = numeric_grad(&w, H, |w| dot(&ops::conv1d(&x, w, &bias).unwrap(), &gy));
    let nb = numeric_grad(&bias, H, |bb| dot(&ops::conv1d(&x, &w, bb).unwrap(), &gy));
    rel_err(&gx, &nx).max(rel_err(&gw, &nw)).max(rel_err(&gb, &nb))
}

fn linear(r: &mut ChaCha8Rng) -> f64 {
    let (b, fin, out) = (r.gen_range(1..5), r.gen_range(1..6), r.gen_range(1..5));
    let x = uniform(r, &[b, fin], -1.0, 1.0);
    let w = uniform(r, &[out, fin], -1.0, 1.0);
    let bias = uniform(r, &[out], -1.0, 1.0);
    let gy = uniform(r, &[b, out], -1.0, 1.0);
    let (gx, gw, gb) = ops::linear_backward(&gy, &x, &w).unwrap();
    let nx = numeric_grad(&x, H, |x| dot(&ops::linear(x, &w, &bias).unwrap(), &gy));
    let nw = numeric_grad(&w, H, |w| dot(&ops::linear(&x, w, &bias).unwrap(), &gy));
    let nb = numeric_grad(&bias, H, |bb| dot(&ops::linear(&x, &w, bb).unwrap(), &gy));
    rel_err(&gx, &nx).max(rel_err(&gw, &nw)).max(rel_err(&gb, &nb))
}

fn batchnorm(r: &mut ChaCha8Rng) -> f64 {
    let (b, c, t) = (r.gen_range(2..4), r.gen_range(1..4), r.gen_range(2..7));
    let x = uniform(r, &[b, c, t], -2.0, 2.0);
    let gamma = uniform(r, &[c], 0.5, 1.5);
    let beta = uniform(r, &[c], -0.5, 0.5);
    let gy = uniform(r, &[b, c, t], -1.0, 1.0);
    let fwd = |x: &Tensor<f64>, g: &Tensor<f64>, be: &Tensor<f64>| {
        let mut running = None;
        ops::batch_norm_raw(x, g, be, &mut running, 0.1, 1e-5, NormMode::Train).unwrap()
    };
    let (_, cache) = fwd(&x, &gamma, &beta);
    let (gx, gg, gb) = ops::batchnorm_backward(&gy, &gamma, &cache).unwrap();
    let nx = numeric_grad(&x, H, |x| dot(&fwd(x, &gamma, &beta).0, &gy));
    let ng = numeric_grad(&gamma, H, |g| dot(&fwd(&x, g, &beta).0, &gy));
    let nb = numeric_grad(&beta, H, |be| dot(&fwd(&x, &gamma, be).0, &gy));
    rel_err(&gx, &nx).max(rel_err(&gg, &ng)).max(rel_err(&gb, &nb))
}

fn relu(r: &mut ChaCha8Rng) -> f64 {
    let shape = [r.gen_range(1..4), r.gen_range(1..4), r.gen_range(1..8)];
    let x = away_from_zero(r, &shape, 0.05, 1.0);
    let gy = uniform(r, &shape, -1.0, 1.0);
    let gx = ops::relu_backward(&gy, &x).unwrap();
    let nx = numeric_grad(&x, H, |x| dot(&ops::relu(x), &gy));
    rel_err(&gx, &nx)
}

fn maxpool(r: &mut ChaCha8Rng) -> f64 {
    let shape = [r.gen_range(1..4), r.gen_range(1..4), r.gen_range(2..10)];
    let n: usize = shape.iter().product();
    // Distinct levels 0.1 apart keep every pair away from a tie.
    let mut levels: Vec<usize> = (0..n).collect();
    levels.shuffle(r);
    let x = Tensor::from_vec(&shape, levels.iter().map(|&l| 0.1 * l as f64 + r.gen_range(0.0..0.01)).collect()).unwrap();
    let (y, argmax) = ops::maxpool1d(&x).unwrap();
    let gy = uniform(r, y.shape(), -1.0, 1.0);
    let gx = ops::maxpool1d_backward(&gy, x.shape(), &argmax).unwrap();
    let nx = numeric_grad(&x, H, |x| dot(&ops::maxpool1d(x).unwrap().0, &gy));
    rel_err(&gx, &nx)
}

fn avg_time(r: &mut ChaCha8Rng) -> f64 {
    let shape = [r.gen_range(1..4), r.gen_range(1..4), r.gen_range(1..8)];
    let x = uniform(r, &shape, -1.0, 1.0);
    let gy = uniform(r, &shape[..2], -1.0, 1.0);
    let gx = ops::global_avg_pool_time_backward(&gy, x.shape()).unwrap();
    let nx = numeric_grad(&x, H, |x| dot(&ops::global_avg_pool_time(x).unwrap(), &gy));
    rel_err(&gx, &nx)
}

fn cross_entropy(r: &mut ChaCha8Rng) -> f64 {
    let (b, k) = (r.gen_range(1..5), r.gen_range(2..6));
    let logits = uniform(r, &[b, k], -3.0, 3.0);
    let mut targets = uniform(r, &[b, k], 0.0, 1.0);
    for row in targets.data_mut().chunks_exact_mut(k) {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    let (_, probs) = ops::softmax_cross_entropy(&logits, &targets).unwrap();
    let g = ops::softmax_cross_entropy_backward(&probs, &targets, 1.0).unwrap();
    let n = numeric_grad(&logits, H, |l| ops::softmax_cross_entropy(l, &targets).unwrap().0);
    rel_err(&g, &n)
}

fn add_scaled(r: &mut ChaCha8Rng) -> f64 {
    let k = r.gen_range(-2.0..2.0);
    let a = uniform(r, &[1], -1.0, 1.0);
    let b = uniform(r, &[1], -1.0, 1.0);
    let mut g = Graph::new();
    let va = g.leaf(a.clone().with_grad());
    let vb = g.leaf(b.clone().with_grad());
    let out = g.add_scaled(va, vb, k).unwrap();
    g.backward(out).unwrap();
    let f = |a: &Tensor<f64>, b: &Tensor<f64>| a.data()[0] + k * b.data()[0];
    let na = numeric_grad(&a, H, |a| f(a, &b));
    let nb = numeric_grad(&b, H, |b| f(&a, b));
    rel_err(g.grad(va).unwrap(), &na).max(rel_err(g.grad(vb).unwrap(), &nb))
}

fn model_loss(model: &Model<f64>, x: &Tensor<f64>, y: &Tensor<f64>, s: Option<&Tensor<f64>>) -> f64 {
    let mut m = model.clone();
    let mut g = Graph::new();
    let xv = g.leaf(x.clone());
    let out = m.forward_graph(&mut g, xv, NormMode::Train).unwrap();
    let mut loss = g.cross_entropy(out.class_logits, y.clone()).unwrap();
    if let (Some(sl), Some(s)) = (out.subject_logits, s) {
        let sv = g.cross_entropy(sl, s.clone()).unwrap();
        loss = g.add_scaled(loss, sv, 0.1).unwrap();
    }
    g.value(loss).data()[0]
}

/// Whole network through the tape: every parameter and the input.
fn network(r: &mut ChaCha8Rng) -> f64 {
    let cfg = ModelConfig {
        width: r.gen_range(2..4),
        depth: r.gen_range(0..3),
        kernel: r.gen_range(1..5),
        in_channels: r.gen_range(1..3),
        n_classes: r.gen_range(2..4),
        n_subjects: if r.gen_bool(0.5) { 2 } else { 0 },
        resample_hz: 70.0,
    };
    let b = 3;
    let t = 12;
    let model = Model::<f64>::build(cfg.clone(), r.gen()).unwrap();
    let x = uniform(r, &[b, cfg.in_channels, t], -1.0, 1.0);
    let labels: Vec<usize> = (0..b).map(|_| r.gen_range(0..cfg.n_classes)).collect();
    let y: Tensor<f64> = ops::one_hot(&labels, cfg.n_classes);
    let s: Option<Tensor<f64>> = (cfg.n_subjects > 0).then(|| ops::one_hot(&[0, 1, 0], 2));

    let mut m = model.clone();
    let mut g = Graph::new();
    let xv = g.leaf(x.clone().with_grad());
    let out = m.forward_graph(&mut g, xv, NormMode::Train).unwrap();
    let mut loss = g.cross_entropy(out.class_logits, y.clone()).unwrap();
    if let (Some(sl), Some(s)) = (out.subject_logits, &s) {
        let sv = g.cross_entropy(sl, s.clone()).unwrap();
        loss = g.add_scaled(loss, sv, 0.1).unwrap();
    }
    g.backward(loss).unwrap();

    let nx = numeric_grad(&x, H, |x| model_loss(&model, x, &y, s.as_ref()));
    let mut worst = rel_err(g.grad(xv).unwrap(), &nx);
    for (k, &pv) in out.params.iter().enumerate() {
        let p = model.params()[k].clone();
        let np = numeric_grad(&p, H, |p| {
            let mut m = model.clone();
            *m.params_mut()[k] = p.clone();
            model_loss(&m, &x, &y, s.as_ref())
        });
        worst = worst.max(rel_err(g.grad(pv).unwrap(), &np));
    }
    worst
}

pub fn suite() -> Vec<OpCheck> {
    vec![
        run("conv1d", SMOOTH_TOL, 1, conv),
        run("linear", SMOOTH_TOL, 2, linear),
        run("batchnorm", SMOOTH_TOL, 3, batchnorm),
        run("cross_entropy", SMOOTH_TOL, 4, cross_entropy),
        run("avg_time", SMOOTH_TOL, 5, avg_time),
        run("add_scaled", SMOOTH_TOL, 6, add_scaled),
        run("relu", KINKED_TOL, 7, relu),
        run("maxpool", KINKED_TOL, 8, maxpool),
        run("network", KINKED_TOL, 9, network),
    ]
}
