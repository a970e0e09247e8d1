//! Splits a feature stream at an anchor frame into long-term, near-past,
//! short-term, anticipation and near-future partitions, and builds the
//! attention masks that keep those partitions causal.

mod config;
mod masks;
mod sampling;
mod stream;
mod window;

pub use config::{ContextPlacement, PartitionConfig, Preset};
pub use masks::{
    build_encoder_cross_mask, build_encoder_self_mask, build_leaky_refinement_cross_mask,
    build_refinement_cross_mask, build_refinement_self_mask,
};
pub use sampling::{sample_anchors_event, sample_anchors_sliding, sliding_anchors_from};
pub use stream::{FeatureStream, StreamHeader, STREAM_FORMAT_VERSION};
pub use window::{extract_windows, TrainingSample};
