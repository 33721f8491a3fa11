//! Minibatch SGD over region samples.
//!
//! Per-sample gradients may be computed on several worker threads, but
//! the reduction always sums them in sample order, so the result is
//! independent of the thread count.

use ndarray::Array3;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};
use serde::{Deserialize, Serialize};

use super::{Network, NetworkGrads};
use crate::error::{Error, Result};
use crate::labeling::{DetLabel, RegionSample};
use crate::losses::{loss_total, TaskWeights};

pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub weights: TaskWeights,
    pub seed: u64,
    /// Target fraction of detection-positive regions per minibatch.
    pub positive_fraction: f64,
    pub threads: usize,
    /// How often a loss-trace row is recorded (every n-th iteration).
    pub trace_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 32,
            iterations: 2000,
            weights: TaskWeights::new(1.0, 1.0, 1.0),
            seed: 0,
            positive_fraction: 0.25,
            threads: 1,
            trace_every: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossTraceRow {
    pub iteration: usize,
    pub total: f64,
    pub det: f64,
    pub pose: f64,
    pub action: f64,
}

/// Source of training examples. Items are fetched by index so tensors can
/// be rendered lazily.
pub trait TrainSet: Sync {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn item(&self, index: usize) -> (Array3<f64>, RegionSample);
    fn det_label(&self, index: usize) -> DetLabel;
}

/// In-memory training set.
pub struct VecTrainSet {
    pub items: Vec<(Array3<f64>, RegionSample)>,
}

impl TrainSet for VecTrainSet {
    fn len(&self) -> usize {
        self.items.len()
    }

    fn item(&self, index: usize) -> (Array3<f64>, RegionSample) {
        let (t, s) = &self.items[index];
        (t.clone(), s.clone())
    }

    fn det_label(&self, index: usize) -> DetLabel {
        self.items[index].1.det_label
    }
}

fn sample_batch(
    rng: &mut ChaCha8Rng,
    positives: &[usize],
    others: &[usize],
    all: usize,
    cfg: &TrainConfig,
) -> Vec<usize> {
    let mut batch = Vec::with_capacity(cfg.batch_size);
    if positives.is_empty() || others.is_empty() || cfg.positive_fraction <= 0.0 {
        for _ in 0..cfg.batch_size {
            batch.push(rng.gen_range(0..all));
        }
        return batch;
    }
    let n_pos = ((cfg.batch_size as f64 * cfg.positive_fraction).round() as usize)
        .clamp(1, cfg.batch_size);
    for _ in 0..n_pos {
        batch.push(*positives.choose(rng).expect("non-empty"));
    }
    for _ in n_pos..cfg.batch_size {
        batch.push(*others.choose(rng).expect("non-empty"));
    }
    batch
}

struct SampleResult {
    grads: NetworkGrads,
    total: f64,
    det: f64,
    pose: f64,
    action: f64,
}

fn sample_pass(net: &Network, input: &Array3<f64>, sample: &RegionSample, w: &TaskWeights) -> Result<SampleResult> {
    let (outputs, cache) = net.forward_cached(input)?;
    let breakdown = loss_total(&outputs, sample, w);
    let grads = net.backward(
        &cache,
        &breakdown.det_grad,
        &breakdown.pose_grad,
        &breakdown.action_grad,
    );
    Ok(SampleResult {
        grads,
        total: breakdown.total,
        det: breakdown.det,
        pose: breakdown.pose,
        action: breakdown.action,
    })
}

/// Train `net` in place. Deterministic for a fixed config (including
/// seed and regardless of `threads`). Returns the loss trace.
pub fn train(net: &mut Network, dataset: &dyn TrainSet, cfg: &TrainConfig) -> Result<Vec<LossTraceRow>> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    assert!(cfg.learning_rate > 0.0 && cfg.batch_size >= 1);
    let positives: Vec<usize> = (0..dataset.len())
        .filter(|&i| dataset.det_label(i) == DetLabel::Positive)
        .collect();
    let others: Vec<usize> = (0..dataset.len())
        .filter(|&i| dataset.det_label(i) != DetLabel::Positive)
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut velocity = net.zero_grads();
    let mut trace = Vec::new();
    let threads = cfg.threads.max(1);

    for iteration in 0..cfg.iterations {
        let batch = sample_batch(&mut rng, &positives, &others, dataset.len(), cfg);
        let results = run_batch(net, dataset, &batch, &cfg.weights, threads)?;

        let mut grads = net.zero_grads();
        let (mut total, mut det, mut pose, mut action) = (0.0, 0.0, 0.0, 0.0);
        for r in &results {
            grads.add_assign(&r.grads);
            total += r.total;
            det += r.det;
            pose += r.pose;
            action += r.action;
        }
        let n = batch.len() as f64;
        grads.scale(1.0 / n);
        total /= n;
        det /= n;
        pose /= n;
        action /= n;

        if !total.is_finite() || total > DIVERGENCE_LIMIT {
            return Err(Error::Diverged {
                iteration,
                loss: total,
            });
        }
        net.sgd_step(&mut velocity, &grads, cfg.learning_rate, cfg.momentum);

        if iteration % cfg.trace_every.max(1) == 0 || iteration + 1 == cfg.iterations {
            trace.push(LossTraceRow {
                iteration,
                total,
                det,
                pose,
                action,
            });
        }
    }
    Ok(trace)
}

fn run_batch(
    net: &Network,
    dataset: &dyn TrainSet,
    batch: &[usize],
    weights: &TaskWeights,
    threads: usize,
) -> Result<Vec<SampleResult>> {
    if threads <= 1 || batch.len() <= 1 {
        return batch
            .iter()
            .map(|&i| {
                let (input, sample) = dataset.item(i);
                sample_pass(net, &input, &sample, weights)
            })
            .collect();
    }
    let mut slots: Vec<Option<Result<SampleResult>>> = Vec::new();
    slots.resize_with(batch.len(), || None);
    std::thread::scope(|scope| {
        let mut rest = slots.as_mut_slice();
        let mut offset = 0;
        let mut handles = Vec::new();
        let chunk = batch.len().div_ceil(threads);
        while !rest.is_empty() {
            let take = chunk.min(rest.len());
            let (head, tail) = rest.split_at_mut(take);
            let start = offset;
            handles.push(scope.spawn(move || {
                for (j, slot) in head.iter_mut().enumerate() {
                    let idx = batch[start + j];
                    let (input, sample) = dataset.item(idx);
                    *slot = Some(sample_pass(net, &input, &sample, weights));
                }
            }));
            offset += take;
            rest = tail;
        }
        for h in handles {
            h.join().expect("worker thread panicked");
        }
    });
    slots
        .into_iter()
        .map(|s| s.expect("all slots filled"))
        .collect()
}
