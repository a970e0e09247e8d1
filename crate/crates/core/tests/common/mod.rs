#![allow(dead_code)]

use cmert::model::ModelConfig;
use cmert::partition::{extract_windows, FeatureStream, PartitionConfig};
use cmert::{Model, Tensor, TrainingSample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// T_s=3, T_a=1, T_c=1, T_f=4 with two long-term tokens.
pub fn tiny_partition(delta: usize) -> PartitionConfig {
    PartitionConfig {
        long: 4,
        short: 3,
        anticipation: 1,
        near_past: 1,
        near_future: 4,
        feature_dim: 3,
        num_classes: 3,
        long_subsample: 2,
        delta,
        ..PartitionConfig::default()
    }
}

/// d_model 8, two heads, two compressed long-term tokens.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        d_model: 8,
        heads: 2,
        ffn_hidden: 16,
        long_queries: [2, 2],
        ..ModelConfig::default()
    }
}

pub fn tiny_model(seed: u64) -> Model {
    Model::new(tiny_partition(0), tiny_config(), seed).unwrap()
}

/// Larger geometry for causality checks: six short-term frames.
pub fn audit_partition(delta: usize) -> PartitionConfig {
    PartitionConfig {
        long: 8,
        short: 6,
        anticipation: 2,
        near_past: 1,
        near_future: 4,
        feature_dim: 3,
        num_classes: 3,
        delta,
        ..PartitionConfig::default()
    }
}

pub fn audit_model(delta: usize, leaky: bool, refine: bool, seed: u64) -> Model {
    let cfg = ModelConfig {
        memory_refinement: refine,
        leaky_anticipation: leaky,
        ..ModelConfig::desk(8)
    };
    Model::new(audit_partition(delta), cfg, seed).unwrap()
}

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| StandardNormal.sample(rng)).collect()).unwrap()
}

/// Standard-normal features with uniformly random labels.
pub fn random_stream(len: usize, cfg: &PartitionConfig, seed: u64) -> FeatureStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features = random_tensor(&mut rng, &[len, cfg.feature_dim]);
    let labels = (0..len).map(|_| rng.random_range(0..=cfg.num_classes)).collect();
    FeatureStream::new(features, labels, cfg.fps, cfg.num_classes).unwrap()
}

/// A window with every partition filled and every target labelled.
pub fn full_sample(model: &Model, seed: u64) -> TrainingSample {
    let p = &model.partition;
    let need = p.long + p.near_past + 2 * p.short + p.anticipation + p.near_future;
    let stream = random_stream(need + 4, p, seed);
    let anchor = p.long + p.near_past + 2 * p.short;
    extract_windows(&stream, anchor, p).unwrap()
}
