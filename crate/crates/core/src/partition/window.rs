use crate::error::{contract, Result};
use crate::partition::{ContextPlacement, FeatureStream, PartitionConfig};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Windows and targets for one anchor frame `t`.
///
/// Frame indices are absolute and may be negative; those rows are zero
/// vectors with the matching `*_pad` flag set. Targets are `None` where the
/// frame is padding or lies past the end of the stream.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSample<S> {
    pub anchor: usize,
    /// Subsampled long-term memory `[long_tokens x D]`.
    pub long: Tensor<S>,
    pub long_pad: Vec<bool>,
    pub long_frames: Vec<i64>,
    /// Near-past (or distant-past) context `[T_c x D]`; `None` when `T_c = 0`.
    pub context: Option<Tensor<S>>,
    pub context_pad: Vec<bool>,
    pub context_frames: Vec<i64>,
    /// Short-term memory `[T_s x D]`, frames `t_s..=t`.
    pub short: Tensor<S>,
    pub short_pad: Vec<bool>,
    pub short_frames: Vec<i64>,
    /// Labels of `t_s..=t` then `t+1..=t+T_a`.
    pub y_sa: Vec<Option<usize>>,
    /// Labels of the near-future span.
    pub y_f: Vec<Option<usize>>,
}

impl<S: Scalar> TrainingSample<S> {
    /// Key identifying the long-term content: its first sampled frame.
    pub fn long_key(&self) -> i64 {
        self.long_frames[0]
    }
}

fn gather<S: Scalar>(stream: &FeatureStream, frames: &[i64]) -> Result<(Tensor<S>, Vec<bool>)> {
    let d = stream.dim();
    let mut data = Vec::with_capacity(frames.len() * d);
    let mut pad = Vec::with_capacity(frames.len());
    for &f in frames {
        if f < 0 {
            data.extend(std::iter::repeat_n(S::zero(), d));
            pad.push(true);
        } else {
            data.extend(stream.features.row(f as usize).iter().map(|&x| S::c(x)));
            pad.push(false);
        }
    }
    Ok((Tensor::new(vec![frames.len(), d], data)?, pad))
}

fn labels_at(stream: &FeatureStream, frames: impl Iterator<Item = i64>) -> Vec<Option<usize>> {
    frames
        .map(|f| {
            if f < 0 || f as usize >= stream.len() {
                None
            } else {
                Some(stream.labels[f as usize])
            }
        })
        .collect()
}

/// Cuts the partitions for anchor `t`.
///
/// Long-term frames are `[t_l, t_s)` subsampled on the absolute grid
/// `f % long_subsample == 0`, so consecutive anchors share identical long-term
/// content until the grid shifts.
pub fn extract_windows<S: Scalar>(
    stream: &FeatureStream,
    t: usize,
    cfg: &PartitionConfig,
) -> Result<TrainingSample<S>> {
    if t >= stream.len() {
        return Err(contract(format!("anchor {t} outside stream of {} frames", stream.len())));
    }
    if stream.dim() != cfg.feature_dim {
        return Err(crate::Error::Shape {
            op: "extract_windows",
            lhs: vec![stream.dim()],
            rhs: vec![cfg.feature_dim],
        });
    }
    let ti = t as i64;
    let (ts, tl) = (ti - cfg.short as i64 + 1, ti - cfg.short as i64 + 1 - cfg.long as i64);
    let stride = cfg.long_subsample as i64;
    let first_long = tl + (stride - tl.rem_euclid(stride)) % stride;
    let long_frames: Vec<i64> = (0..cfg.long_tokens() as i64).map(|k| first_long + k * stride).collect();
    debug_assert!(long_frames.iter().all(|&f| f >= tl && f < ts));

    let ctx_start = match cfg.past_context {
        ContextPlacement::Near => ts - cfg.near_past as i64,
        ContextPlacement::Distant => ts - cfg.near_past as i64 - cfg.short as i64,
    };
    let context_frames: Vec<i64> = (ctx_start..ctx_start + cfg.near_past as i64).collect();
    let short_frames: Vec<i64> = (ts..=ti).collect();

    let (long, long_pad) = gather(stream, &long_frames)?;
    let (context, context_pad) = if cfg.near_past > 0 {
        let (c, p) = gather(stream, &context_frames)?;
        (Some(c), p)
    } else {
        (None, Vec::new())
    };
    let (short, short_pad) = gather(stream, &short_frames)?;

    let y_sa = labels_at(stream, ts..=ti + cfg.anticipation as i64);
    let fut_start = match cfg.future_context {
        ContextPlacement::Near => ts,
        ContextPlacement::Distant => ti,
    };
    let y_f = labels_at(stream, fut_start..fut_start + cfg.near_future as i64);

    Ok(TrainingSample {
        anchor: t,
        long,
        long_pad,
        long_frames,
        context,
        context_pad,
        context_frames,
        short,
        short_pad,
        short_frames,
        y_sa,
        y_f,
    })
}
