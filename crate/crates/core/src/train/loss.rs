use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::model::ForwardVars;
use crate::partition::TrainingSample;
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};

/// Recorded cross-entropy of one block of logits.
#[derive(Clone, Debug)]
pub struct BlockLoss {
    /// Mean over non-ignored positions (scalar node).
    pub mean: Var,
    /// Per-position loss; `None` where the target is ignored.
    pub per_position: Vec<Option<f64>>,
}

/// Mean of `-log softmax(logits)[target]` over positions whose target is `Some`.
pub fn cross_entropy_block<S: Scalar>(
    tape: &mut Tape<S>,
    logits: Var,
    targets: &[Option<usize>],
) -> Result<BlockLoss> {
    let shape = tape.shape(logits).to_vec();
    if shape.len() != 2 || shape[0] != targets.len() {
        return Err(crate::Error::Shape {
            op: "cross_entropy_block",
            lhs: shape,
            rhs: vec![targets.len()],
        });
    }
    let classes = shape[1];
    if let Some(bad) = targets.iter().flatten().find(|&&y| y >= classes) {
        return Err(contract(format!("target {bad} out of range for {classes} classes")));
    }
    let index: Vec<usize> = targets
        .iter()
        .enumerate()
        .filter_map(|(i, y)| y.map(|y| i * classes + y))
        .collect();
    if index.is_empty() {
        return Err(contract("cross-entropy block has every position ignored"));
    }
    let logp = tape.log_softmax_rows(logits)?;
    let picked = tape.gather(logp, &index)?;
    let mean = tape.mean(picked)?;
    let mean = tape.scale(mean, S::c(-1.0))?;
    let lp = tape.value(logp);
    let per_position = targets
        .iter()
        .enumerate()
        .map(|(i, y)| y.map(|y| -lp.get(i, y).to_f64_lossless()))
        .collect();
    Ok(BlockLoss { mean, per_position })
}

/// Loss weights of the three objectives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
}

/// Scalar losses of one sample or the mean over a batch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_sa0: f64,
    pub l_sa1: f64,
    pub l_f: f64,
    pub total: f64,
    /// Short-term loss of the prediction head by relative position;
    /// `None` where no target was available.
    pub per_position: Vec<Option<f64>>,
}

impl LossBreakdown {
    /// `l_sa1 + lambda1 * l_sa0 + lambda2 * l_f`.
    pub fn combine(l_sa0: f64, l_sa1: f64, l_f: f64, w: LossWeights) -> f64 {
        l_sa1 + w.lambda1 * l_sa0 + w.lambda2 * l_f
    }
}

/// Records the weighted training objective for one sample.
///
/// Without memory refinement the unrefined head stands in for the refined
/// one and the near-future term is zero. A block whose targets are all
/// ignored contributes zero.
pub fn total_loss<S: Scalar>(
    tape: &mut Tape<S>,
    out: &ForwardVars,
    sample: &TrainingSample<S>,
    w: LossWeights,
) -> Result<(Var, LossBreakdown)> {
    if w.lambda1 < 0.0 || w.lambda2 < 0.0 {
        return Err(crate::error::config_err("lambda", "loss weights must be >= 0"));
    }
    let short = sample.short_frames.len();
    let block = |tape: &mut Tape<S>, logits: Var, y: &[Option<usize>]| -> Result<Option<BlockLoss>> {
        if y.iter().all(Option::is_none) {
            Ok(None)
        } else {
            cross_entropy_block(tape, logits, y).map(Some)
        }
    };
    let sa0 = block(tape, out.logits_sa, &sample.y_sa)?;
    let sa1 = match out.logits_sa_refined {
        Some(l) => block(tape, l, &sample.y_sa)?,
        None => sa0.clone(),
    };
    let f = match out.logits_f {
        Some(l) => block(tape, l, &sample.y_f)?,
        None => None,
    };

    let value = |tape: &Tape<S>, b: &Option<BlockLoss>| b.as_ref().map_or(0.0, |b| tape.value(b.mean).data()[0].to_f64_lossless());
    let (l_sa0, l_sa1, l_f) = (value(tape, &sa0), value(tape, &sa1), value(tape, &f));

    let mut terms: Vec<Var> = Vec::with_capacity(3);
    if let Some(b) = &sa1 {
        terms.push(b.mean);
    }
    if let Some(b) = &sa0 {
        terms.push(tape.scale(b.mean, S::c(w.lambda1))?);
    }
    if let Some(b) = &f {
        terms.push(tape.scale(b.mean, S::c(w.lambda2))?);
    }
    let total = match terms.split_first() {
        None => return Err(contract("sample has no supervised position")),
        Some((&first, rest)) => rest.iter().try_fold(first, |acc, &t| tape.add(acc, t))?,
    };
    let per_position = sa1
        .as_ref()
        .map(|b| b.per_position[..short].to_vec())
        .unwrap_or_else(|| vec![None; short]);
    let breakdown = LossBreakdown {
        l_sa0,
        l_sa1,
        l_f,
        total: tape.value(total).data()[0].to_f64_lossless(),
        per_position,
    };
    Ok((total, breakdown))
}
