use rand::Rng;

use crate::error::{contract, Result};
use crate::partition::{FeatureStream, PartitionConfig};

/// Anchors `s0 + T_s - 1, s0 + 2 T_s - 1, ...` below `len`.
pub fn sliding_anchors_from(len: usize, short: usize, s0: usize) -> Vec<usize> {
    (1..)
        .map(|k| s0 + k * short - 1)
        .take_while(|&t| t < len)
        .collect()
}

/// Sliding-window anchors with a uniformly random start in `[0, T_s)` and stride `T_s`.
pub fn sample_anchors_sliding<R: Rng>(stream: &FeatureStream, cfg: &PartitionConfig, rng: &mut R) -> Vec<usize> {
    let s0 = rng.random_range(0..cfg.short);
    sliding_anchors_from(stream.len(), cfg.short, s0)
}

/// `n` anchors drawn uniformly (with replacement) from non-background frames.
pub fn sample_anchors_event<R: Rng>(stream: &FeatureStream, rng: &mut R, n: usize) -> Result<Vec<usize>> {
    let eligible: Vec<usize> = stream
        .labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l != 0)
        .map(|(i, _)| i)
        .collect();
    if eligible.is_empty() {
        return Err(contract("event sampling needs at least one non-background frame"));
    }
    Ok((0..n).map(|_| eligible[rng.random_range(0..eligible.len())]).collect())
}
