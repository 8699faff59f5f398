//! Single-trial inference latency and model size.
//!
//! Trials are passed one at a time through an eval-mode forward pass on the
//! calling thread. Only the forward pass is timed: slicing the input and any
//! preprocessing happen outside the timed region.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::tensor::{Scalar, Tensor};

pub const DEFAULT_REPEATS: usize = 10;
pub const DEFAULT_WARMUP: usize = 50;
/// Relative difference in mean above which two measurements of the same
/// model are flagged as noisy.
pub const NOISE_BOUND: f64 = 0.2;

/// Time source for the harness; swapped out in tests.
pub trait Clock {
    /// Seconds since an arbitrary origin, non-decreasing.
    fn now(&mut self) -> f64;
}

/// Monotonic wall clock.
pub struct MonotonicClock {
    origin: Instant,
}

impl Default for MonotonicClock {
    fn default() -> Self {
        MonotonicClock { origin: Instant::now() }
    }
}

impl Clock for MonotonicClock {
    fn now(&mut self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub tag: String,
    pub n_passes: usize,
    pub warmup: usize,
    pub mean_s: f64,
    pub median_s: f64,
    pub p95_s: f64,
    pub min_s: f64,
    pub max_s: f64,
    pub params: usize,
    pub hardware: String,
    pub notes: Vec<String>,
}

impl LatencyReport {
    /// Whether `other` is within the noise bound of this report's mean.
    pub fn consistent_with(&self, other: &LatencyReport) -> bool {
        let scale = self.mean_s.max(other.mean_s);
        scale == 0.0 || (self.mean_s - other.mean_s).abs() / scale < NOISE_BOUND
    }

    /// Record a note when `other` falls outside the noise bound.
    pub fn flag_against(&mut self, other: &LatencyReport) {
        if !self.consistent_with(other) {
            self.notes.push(format!(
                "mean {:.3e}s differs from repeat measurement {:.3e}s by more than {:.0}%",
                self.mean_s,
                other.mean_s,
                NOISE_BOUND * 100.0
            ));
        }
    }
}

/// Short description of the machine running the benchmark.
pub fn hardware_descriptor() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| m.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".into());
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!("{cpu}; {} {}; {threads} hw threads; timed single-threaded", std::env::consts::OS, std::env::consts::ARCH)
}

/// Order statistics of a non-empty sample: mean, median, p95 (nearest rank), min, max.
pub fn summarize(samples: &[f64]) -> (f64, f64, f64, f64, f64) {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mean = v.iter().sum::<f64>() / n as f64;
    let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
    let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
    (mean, median, v[rank - 1], v[0], v[n - 1])
}

/// Time `repeats` passes over every input after `warmup` untimed passes.
/// The clock is read immediately before and after each `forward` call.
pub fn time_passes<T>(
    inputs: &[T],
    repeats: usize,
    warmup: usize,
    clock: &mut dyn Clock,
    mut forward: impl FnMut(&T) -> Result<()>,
) -> Result<Vec<f64>> {
    if inputs.is_empty() {
        return Err(Error::arg("latency measurement needs at least one trial"));
    }
    if repeats == 0 || warmup == 0 {
        return Err(Error::arg("latency measurement needs repeats >= 1 and warmup >= 1"));
    }
    for k in 0..warmup {
        forward(&inputs[k % inputs.len()])?;
    }
    let mut times = Vec::with_capacity(repeats * inputs.len());
    for _ in 0..repeats {
        for x in inputs {
            let t0 = clock.now();
            forward(x)?;
            let t1 = clock.now();
            times.push(t1 - t0);
        }
    }
    Ok(times)
}

fn single_trials<F: Scalar>(trials: &Tensor<F>) -> Result<Vec<Tensor<F>>> {
    let (n, c, t) = trials.dims3()?;
    (0..n)
        .map(|i| Tensor::from_vec(&[1, c, t], trials.data()[i * c * t..(i + 1) * c * t].to_vec()))
        .collect()
}

/// Mean, median and p95 latency of single-trial eval-mode forward passes
/// over `trials` (`[N, C, T]`), `repeats * N` timed passes in total.
pub fn measure_latency<F: Scalar>(
    model: &Model<F>,
    trials: &Tensor<F>,
    repeats: usize,
    warmup: usize,
) -> Result<LatencyReport> {
    measure_latency_with(model, trials, repeats, warmup, &mut MonotonicClock::default())
}

pub fn measure_latency_with<F: Scalar>(
    model: &Model<F>,
    trials: &Tensor<F>,
    repeats: usize,
    warmup: usize,
    clock: &mut dyn Clock,
) -> Result<LatencyReport> {
    // An untrained model has no BN statistics yet; take them from the trial
    // set, outside the timed region.
    let adapted;
    let model = if model.norms().iter().any(|n| n.running.is_none()) {
        adapted = model.recompute_bn_stats(trials)?;
        &adapted
    } else {
        model
    };
    let inputs = single_trials(trials)?;
    let times = time_passes(&inputs, repeats, warmup, clock, |x| {
        std::hint::black_box(model.infer(std::hint::black_box(x))?);
        Ok(())
    })?;
    let (mean_s, median_s, p95_s, min_s, max_s) = summarize(&times);
    let cfg = model.config();
    Ok(LatencyReport {
        tag: format!("W{} K{} S{}", cfg.width, cfg.depth, cfg.kernel),
        n_passes: times.len(),
        warmup,
        mean_s,
        median_s,
        p95_s,
        min_s,
        max_s,
        params: model.count_params(),
        hardware: hardware_descriptor(),
        notes: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub width: usize,
    pub depth: usize,
    pub kernel: usize,
    pub params: usize,
    pub mean_s: f64,
    pub median_s: f64,
    pub p95_s: f64,
}

/// Latency and size of each configuration on a shared trial set.
pub fn size_latency_sweep(
    configs: &[ModelConfig],
    trials: &Tensor<f32>,
    repeats: usize,
    warmup: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    configs
        .iter()
        .map(|cfg| {
            let model = Model::<f32>::build(cfg.clone(), seed)?;
            let r = measure_latency(&model, trials, repeats, warmup)?;
            Ok(SweepRow {
                width: cfg.width,
                depth: cfg.depth,
                kernel: cfg.kernel,
                params: r.params,
                mean_s: r.mean_s,
                median_s: r.median_s,
                p95_s: r.p95_s,
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("width,depth,kernel,params,mean_s,median_s,p95_s\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{:.6e},{:.6e},{:.6e}",
            r.width, r.depth, r.kernel, r.params, r.mean_s, r.median_s, r.p95_s
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::RefCell;

    struct TickClock<'a> {
        log: &'a RefCell<Vec<&'static str>>,
        t: f64,
    }

    impl Clock for TickClock<'_> {
        fn now(&mut self) -> f64 {
            self.log.borrow_mut().push("clock");
            self.t += 1.0;
            self.t
        }
    }

    #[test]
    fn timed_region_is_exactly_the_forward_pass() {
        let log = RefCell::new(Vec::new());
        let mut clock = TickClock { log: &log, t: 0.0 };
        let inputs = [1, 2, 3];
        let times = time_passes(&inputs, 2, 4, &mut clock, |_| {
            log.borrow_mut().push("forward");
            Ok(())
        })
        .unwrap();
        assert_eq!(times.len(), 6);
        let log = log.into_inner();
        assert!(log[..4].iter().all(|e| *e == "forward"));
        for w in log[4..].chunks(3) {
            assert_eq!(w, ["clock", "forward", "clock"]);
        }
    }

    #[test]
    fn zero_trials_is_an_error() {
        let mut clock = MonotonicClock::default();
        assert!(time_passes::<u8>(&[], 10, 50, &mut clock, |_| Ok(())).is_err());
        assert!(time_passes(&[0u8], 10, 0, &mut clock, |_| Ok(())).is_err());
    }

    #[test]
    fn order_statistics() {
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        let (mean, median, p95, min, max) = summarize(&v);
        assert_eq!((mean, median, p95, min, max), (10.5, 10.5, 19.0, 1.0, 20.0));
        assert_eq!(summarize(&[3.0]), (3.0, 3.0, 3.0, 3.0, 3.0));
    }

    #[test]
    fn pass_count_and_params() {
        let cfg = ModelConfig {
            width: 4,
            depth: 1,
            kernel: 3,
            in_channels: 2,
            n_classes: 2,
            n_subjects: 0,
            resample_hz: 70.0,
        };
        let model = Model::<f32>::build(cfg, 1).unwrap();
        let trials = Tensor::from_vec(&[3, 2, 16], vec![0.5f32; 96]).unwrap();
        let r = measure_latency(&model, &trials, 2, 1).unwrap();
        assert_eq!(r.n_passes, 6);
        assert_eq!(r.params, model.count_params());
        assert!(r.mean_s >= 0.0 && r.median_s <= r.p95_s);
    }

    #[test]
    fn noise_flag() {
        let base = LatencyReport {
            tag: "a".into(),
            n_passes: 1,
            warmup: 1,
            mean_s: 1.0,
            median_s: 1.0,
            p95_s: 1.0,
            min_s: 1.0,
            max_s: 1.0,
            params: 1,
            hardware: String::new(),
            notes: Vec::new(),
        };
        let mut slow = LatencyReport { mean_s: 1.5, ..base.clone() };
        assert!(base.consistent_with(&LatencyReport { mean_s: 1.1, ..base.clone() }));
        slow.flag_against(&base);
        assert_eq!(slow.notes.len(), 1);
    }
}
