use crate::error::{contract, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Sinusoidal encoding for absolute positions `offset..offset + length`.
///
/// Column `2i` holds `sin(pos / 10000^(2i/d))`, column `2i+1` the matching cosine.
pub fn sinusoidal_pe<S: Scalar>(length: usize, d_model: usize, offset: usize) -> Result<Tensor<S>> {
    if d_model == 0 || !d_model.is_multiple_of(2) {
        return Err(contract(format!("positional encoding needs an even d_model, got {d_model}")));
    }
    if length == 0 {
        return Err(contract("positional encoding length must be positive"));
    }
    let mut data = Vec::with_capacity(length * d_model);
    for row in 0..length {
        let pos = (offset + row) as f64;
        for i in 0..d_model / 2 {
            let freq = 10000f64.powf(2.0 * i as f64 / d_model as f64);
            let angle = pos / freq;
            data.push(S::c(angle.sin()));
            data.push(S::c(angle.cos()));
        }
    }
    Tensor::new(vec![length, d_model], data)
}
