use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::model::Model;
use crate::partition::{extract_windows, FeatureStream, TrainingSample};
use crate::scalar::Scalar;
use crate::tape::Tape;
use crate::tensor::Tensor;
use crate::train::cross_entropy_block;

/// Mean loss and top-1 accuracy of the prediction head per short-term position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerPositionReport {
    pub loss: Vec<f64>,
    pub accuracy: Vec<f64>,
    pub windows: usize,
}

impl PerPositionReport {
    /// CSV with header `position,loss,accuracy`, one row per position.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "position,loss,accuracy")?;
        for (i, (l, a)) in self.loss.iter().zip(&self.accuracy).enumerate() {
            writeln!(w, "{i},{l},{a}")?;
        }
        Ok(())
    }
}

/// Evaluates every window anchored at `T_s - 1 + k * stride` whose short-term
/// frames all carry labels, on every stream.
pub fn per_position_diagnostic<S: Scalar>(
    model: &Model<S>,
    streams: &[FeatureStream],
    stride: usize,
) -> Result<PerPositionReport> {
    if stride == 0 {
        return Err(contract("diagnostic stride must be >= 1"));
    }
    let short = model.partition.short;
    let anchors: Vec<(usize, usize)> = streams
        .iter()
        .enumerate()
        .flat_map(|(i, s)| (short - 1..s.len()).step_by(stride).map(move |t| (i, t)))
        .collect();
    if anchors.is_empty() {
        return Err(contract("no full short-term window in the given streams"));
    }
    let rows: Vec<Result<(Vec<f64>, Vec<bool>)>> = anchors
        .par_iter()
        .map(|&(i, t)| {
            let sample = extract_windows::<S>(&streams[i], t, &model.partition)?;
            let mut tape = Tape::new();
            let vars = model.register(&mut tape, false);
            let out = model.record(&mut tape, &vars, &sample, None, false)?;
            let logits = out.detection_logits();
            let ce = cross_entropy_block(&mut tape, logits, &sample.y_sa)?;
            let values = tape.value(logits);
            let mut loss = Vec::with_capacity(short);
            let mut hit = Vec::with_capacity(short);
            for p in 0..short {
                let y = sample.y_sa[p].expect("full window");
                loss.push(ce.per_position[p].expect("full window"));
                let row = values.row(p);
                let best = (0..row.len()).fold(0, |b, c| if row[c] > row[b] { c } else { b });
                hit.push(best == y);
            }
            Ok((loss, hit))
        })
        .collect();
    let mut loss = vec![0.0; short];
    let mut acc = vec![0.0; short];
    let n = rows.len() as f64;
    for r in rows {
        let (l, h) = r?;
        for p in 0..short {
            loss[p] += l[p] / n;
            acc[p] += if h[p] { 1.0 / n } else { 0.0 };
        }
    }
    Ok(PerPositionReport {
        loss,
        accuracy: acc,
        windows: anchors.len(),
    })
}

/// Input sensitivity of the short-term detection logits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub delta: usize,
    /// `sensitivity[i][j] = max_{c,k} |d logit[i, c] / d short[j, k]|`.
    pub sensitivity: Vec<Vec<f64>>,
    /// Maximum of `sensitivity[i][j]` over `j > i + delta` (0 if no such pair).
    pub max_noncausal: f64,
}

impl LeakageReport {
    /// CSV with header `i,j,sensitivity`.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "i,j,sensitivity")?;
        for (i, row) in self.sensitivity.iter().enumerate() {
            for (j, s) in row.iter().enumerate() {
                writeln!(w, "{i},{j},{s}")?;
            }
        }
        Ok(())
    }
}

/// A full-length window of standard-normal features.
pub fn random_sample<S: Scalar>(model: &Model<S>, seed: u64) -> Result<TrainingSample<S>> {
    let p = &model.partition;
    let len = p.long + p.near_past + 2 * p.short + p.anticipation + p.near_future;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..len * p.feature_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let labels = vec![0; len];
    let stream = FeatureStream::new(Tensor::new(vec![len, p.feature_dim], data)?, labels, p.fps, p.num_classes)?;
    extract_windows(&stream, len - 1, p)
}

/// Backpropagates every short-term detection logit to the raw short-term
/// input and records the largest absolute partial per `(i, j)` pair.
pub fn leakage_audit<S: Scalar>(model: &Model<S>, sample: &TrainingSample<S>) -> Result<LeakageReport> {
    let short = model.partition.short;
    let delta = model.partition.delta;
    let classes = model.num_classes();
    let dim = model.partition.feature_dim;
    let mut tape = Tape::new();
    let vars = model.register(&mut tape, false);
    let out = model.record(&mut tape, &vars, sample, None, true)?;
    let logits = out.detection_logits();
    let input = out.short_input.expect("tracked input");
    let numel = tape.value(logits).numel();
    let mut sensitivity = vec![vec![0.0f64; short]; short];
    for i in 0..short {
        for c in 0..classes {
            let mut seed = vec![S::zero(); numel];
            seed[i * classes + c] = S::one();
            tape.backward_with_seed(logits, seed)?;
            let g = tape.grad(input).expect("tracked input");
            for (j, s) in sensitivity[i].iter_mut().enumerate() {
                let m = g[j * dim..(j + 1) * dim]
                    .iter()
                    .fold(0.0f64, |m, x| m.max(x.to_f64_lossless().abs()));
                *s = s.max(m);
            }
        }
    }
    let max_noncausal = (0..short)
        .flat_map(|i| (i + delta + 1..short).map(move |j| (i, j)))
        .map(|(i, j)| sensitivity[i][j])
        .fold(0.0, f64::max);
    Ok(LeakageReport {
        delta,
        sensitivity,
        max_noncausal,
    })
}
