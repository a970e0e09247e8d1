//! Transformer decoder unit (self-attention, cross-attention, FFN, each with
//! residual + layer norm) and sinusoidal positional encoding.

mod pe;
mod tdu;

pub use crate::mask::{AttentionMask, MaskKind};
pub use pe::sinusoidal_pe;
pub use tdu::{
    cross_attention, self_attention, tdu_forward, AttnParams, FfnParams, NormParams, TduParams,
};
