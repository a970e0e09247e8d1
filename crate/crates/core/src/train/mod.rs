//! Objectives, optimizer, synthetic data and the training loop.

mod grammar;
mod loss;
mod optim;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, contract, Error, Result};
use crate::model::Model;
use crate::partition::{extract_windows, sample_anchors_event, sample_anchors_sliding, FeatureStream, Preset};
use crate::scalar::Scalar;
use crate::tape::Tape;

pub use grammar::{GrammarSpec, SyntheticGrammar};
pub use loss::{cross_entropy_block, total_loss, BlockLoss, LossBreakdown, LossWeights};
pub use optim::{AdamW, Schedule, BETA1, BETA2, EPSILON};

/// How anchors are drawn each epoch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Stride-`T_s` windows with a random start per stream.
    #[default]
    Sliding,
    /// Anchors drawn uniformly from action frames, one per sliding window count.
    Event,
}

/// Optimization hyperparameters. `epochs`/`warmup_epochs`, when set, override
/// the step counts using the number of batches in one pass over the anchors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub warmup_steps: usize,
    pub steps: usize,
    pub epochs: Option<usize>,
    pub warmup_epochs: Option<usize>,
    pub batch_size: usize,
    pub seed: u64,
    pub sampling: Sampling,
}

impl Default for TrainConfig {
    /// Desk-scale defaults.
    fn default() -> Self {
        Self {
            lambda1: 0.2,
            lambda2: 0.5,
            lr: 1e-3,
            weight_decay: 1e-4,
            warmup_steps: 100,
            steps: 2000,
            epochs: None,
            warmup_epochs: None,
            batch_size: 8,
            seed: 0,
            sampling: Sampling::Sliding,
        }
    }
}

impl TrainConfig {
    /// Optimization settings reported for each dataset.
    pub fn preset(preset: Preset) -> Self {
        let (lr, wd, warmup, sampling) = match preset {
            Preset::Th14 => (2e-4, 5e-5, 8, Sampling::Sliding),
            Preset::Crosstask => (7e-5, 1e-5, 5, Sampling::Sliding),
            Preset::Ek100 => (7e-5, 1e-4, 10, Sampling::Event),
        };
        Self {
            lr,
            weight_decay: wd,
            epochs: Some(12),
            warmup_epochs: Some(warmup),
            batch_size: 32,
            sampling,
            ..Self::default()
        }
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0) {
            return Err(config_err("lambda1", "must be >= 0"));
        }
        if !(self.lambda2 >= 0.0) {
            return Err(config_err("lambda2", "must be >= 0"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(config_err("lr", "must be positive"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(config_err("weight_decay", "must be >= 0"));
        }
        if self.batch_size == 0 {
            return Err(config_err("batch_size", "must be >= 1"));
        }
        if self.epochs == Some(0) || (self.epochs.is_none() && self.steps == 0) {
            return Err(config_err("steps", "training budget must be >= 1 step"));
        }
        Ok(())
    }

    /// `(total steps, warm-up steps)` given the batches per epoch.
    pub fn resolve_steps(&self, batches_per_epoch: usize) -> (usize, usize) {
        let per = batches_per_epoch.max(1);
        let total = self.epochs.map_or(self.steps, |e| e * per);
        let warmup = self.warmup_epochs.map_or(self.warmup_steps, |e| e * per);
        (total, warmup.min(total))
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    pub l_sa0: f64,
    pub l_sa1: f64,
    pub l_f: f64,
    pub total: f64,
    /// Mean short-term loss per relative position over the batch.
    pub per_position: Vec<Option<f64>>,
    pub lr: f64,
}

/// Loss and flattened gradients (canonical order) of one sample.
pub fn sample_gradients<S: Scalar>(
    model: &Model<S>,
    sample: &crate::partition::TrainingSample<S>,
    weights: LossWeights,
) -> Result<(LossBreakdown, Vec<Vec<S>>)> {
    let mut tape = Tape::new();
    let vars = model.register(&mut tape, true);
    let out = model.record(&mut tape, &vars, sample, None, false)?;
    let (loss, breakdown) = total_loss(&mut tape, &out, sample, weights)?;
    tape.backward(loss)?;
    let mut grads = Vec::new();
    vars.visit("", &mut |_, v| grads.push(tape.grad(*v).expect("trainable leaf").to_vec()));
    Ok((breakdown, grads))
}

/// Infinite, seeded supply of `(stream, anchor)` pairs, reshuffled per epoch.
struct AnchorPool<'a> {
    streams: &'a [FeatureStream],
    sampling: Sampling,
    cfg: crate::partition::PartitionConfig,
    queue: Vec<(usize, usize)>,
}

impl<'a> AnchorPool<'a> {
    fn epoch(&self, rng: &mut ChaCha8Rng) -> Result<Vec<(usize, usize)>> {
        let mut all = Vec::new();
        for (i, s) in self.streams.iter().enumerate() {
            let sliding = sample_anchors_sliding(s, &self.cfg, rng);
            let anchors = match self.sampling {
                Sampling::Sliding => sliding,
                Sampling::Event => sample_anchors_event(s, rng, sliding.len().max(1))?,
            };
            all.extend(anchors.into_iter().map(|t| (i, t)));
        }
        if all.is_empty() {
            return Err(contract("no training anchors: streams are shorter than the short-term window"));
        }
        all.shuffle(rng);
        Ok(all)
    }

    fn next_batch(&mut self, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<(usize, usize)>> {
        let mut batch = Vec::with_capacity(n);
        while batch.len() < n {
            if self.queue.is_empty() {
                self.queue = self.epoch(rng)?;
                self.queue.reverse();
            }
            batch.push(self.queue.pop().expect("refilled"));
        }
        Ok(batch)
    }
}

/// Trains `model` in place; `on_log` receives one record per step.
///
/// Deterministic for a fixed seed: per-sample work runs in parallel but
/// gradients are reduced in batch order. On divergence or a non-finite
/// gradient the error is returned and `model` keeps the last good weights.
pub fn train<S: Scalar>(
    model: &mut Model<S>,
    streams: &[FeatureStream],
    cfg: &TrainConfig,
    mut on_log: impl FnMut(&LogRecord),
) -> Result<Vec<LogRecord>> {
    cfg.validate()?;
    if streams.is_empty() {
        return Err(contract("training needs at least one stream"));
    }
    for s in streams {
        if s.dim() != model.partition.feature_dim || s.num_classes != model.partition.num_classes {
            return Err(Error::Shape {
                op: "train streams",
                lhs: vec![s.dim(), s.num_classes],
                rhs: vec![model.partition.feature_dim, model.partition.num_classes],
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pool = AnchorPool {
        streams,
        sampling: cfg.sampling,
        cfg: model.partition.clone(),
        queue: Vec::new(),
    };
    let per_epoch = pool.epoch(&mut rng.clone())?.len().div_ceil(cfg.batch_size);
    let (total, warmup) = cfg.resolve_steps(per_epoch);
    let schedule = Schedule {
        peak: cfg.lr,
        warmup,
        total,
    };
    let weights = cfg.weights();
    let mut opt = AdamW::new(&model.params, cfg.weight_decay);
    let mut log = Vec::with_capacity(total);
    let short = model.partition.short;

    for step in 1..=total {
        let batch = pool.next_batch(cfg.batch_size, &mut rng)?;
        let snapshot: &Model<S> = model;
        let results: Vec<Result<(LossBreakdown, Vec<Vec<S>>)>> = batch
            .par_iter()
            .map(|&(si, t)| {
                let sample = extract_windows(&streams[si], t, &snapshot.partition)?;
                sample_gradients(snapshot, &sample, weights)
            })
            .collect();
        let mut grads: Option<Vec<Vec<S>>> = None;
        let (mut l_sa0, mut l_sa1, mut l_f) = (0.0, 0.0, 0.0);
        let mut pos_sum = vec![0.0; short];
        let mut pos_n = vec![0usize; short];
        let n = results.len() as f64;
        for r in results {
            let (b, g) = r?;
            l_sa0 += b.l_sa0 / n;
            l_sa1 += b.l_sa1 / n;
            l_f += b.l_f / n;
            for (i, p) in b.per_position.iter().enumerate() {
                if let Some(p) = p {
                    pos_sum[i] += p;
                    pos_n[i] += 1;
                }
            }
            match &mut grads {
                None => grads = Some(g),
                Some(acc) => {
                    for (a, g) in acc.iter_mut().zip(g) {
                        for (x, y) in a.iter_mut().zip(g) {
                            *x = *x + y;
                        }
                    }
                }
            }
        }
        let total_loss = LossBreakdown::combine(l_sa0, l_sa1, l_f, weights);
        if !total_loss.is_finite() {
            return Err(Error::Diverged { step });
        }
        let mut grads = grads.expect("non-empty batch");
        let inv = S::c(1.0 / n);
        for g in grads.iter_mut().flat_map(|g| g.iter_mut()) {
            *g = *g * inv;
        }
        let lr = schedule.lr(step);
        opt.step(&mut model.params, &grads, lr)?;
        let record = LogRecord {
            step,
            l_sa0,
            l_sa1,
            l_f,
            total: total_loss,
            per_position: pos_sum
                .iter()
                .zip(&pos_n)
                .map(|(&s, &k)| (k > 0).then(|| s / k as f64))
                .collect(),
            lr,
        };
        on_log(&record);
        log.push(record);
    }
    Ok(log)
}
