//! Context-enhanced memory-refined transformer for online action detection
//! and anticipation on streaming frame features.
//!
//! The numeric stack ([`tensor`], [`tape`], [`attention`], [`model`],
//! [`train`]) is generic over [`Scalar`]; the aliases at the crate root fix
//! it to `f64`, which is what the tools and tests use.

pub mod attention;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod gradcheck;
pub mod infer;
pub mod mask;
pub mod model;
pub mod params;
pub mod partition;
pub mod scalar;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use mask::{AttentionMask, MaskKind};
pub use scalar::Scalar;

pub type Tensor = tensor::Tensor<f64>;
pub type Tape = tape::Tape<f64>;
pub type Model = model::Model<f64>;
pub type TrainingSample = partition::TrainingSample<f64>;
pub type ForwardOutputs = model::ForwardOutputs<f64>;
