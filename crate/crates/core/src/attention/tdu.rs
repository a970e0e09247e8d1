use rand::Rng;

use crate::error::{contract, Result};
use crate::mask::AttentionMask;
use crate::params::{glorot, param_struct};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

param_struct! {
    /// Multi-head attention projections. Weights are `[d_model x d_model]`,
    /// applied as `x * W + b`.
    pub struct AttnParams<T> { wq, bq, wk, bk, wv, bv, wo, bo }
}

param_struct! {
    /// Two affine layers with a rectifier in between.
    pub struct FfnParams<T> { w1, b1, w2, b2 }
}

param_struct! {
    pub struct NormParams<T> { gain, bias }
}

param_struct! {
    /// One transformer decoder unit.
    pub struct TduParams<T> {
        ;
        self_attn: AttnParams,
        cross_attn: AttnParams,
        ffn: FfnParams,
        norm1: NormParams,
        norm2: NormParams,
        norm3: NormParams,
    }
}

impl<S: Scalar> AttnParams<Tensor<S>> {
    pub fn init<R: Rng>(d_model: usize, rng: &mut R) -> Self {
        let z = || Tensor::zeros(&[d_model]);
        Self {
            wq: glorot(rng, d_model, d_model),
            bq: z(),
            wk: glorot(rng, d_model, d_model),
            bk: z(),
            wv: glorot(rng, d_model, d_model),
            bv: z(),
            wo: glorot(rng, d_model, d_model),
            bo: z(),
        }
    }
}

impl<S: Scalar> NormParams<Tensor<S>> {
    pub fn init(d_model: usize) -> Self {
        Self {
            gain: Tensor::full(&[d_model], S::one()),
            bias: Tensor::zeros(&[d_model]),
        }
    }
}

impl<S: Scalar> TduParams<Tensor<S>> {
    pub fn init<R: Rng>(d_model: usize, hidden: usize, rng: &mut R) -> Self {
        let self_attn = AttnParams::init(d_model, rng);
        let cross_attn = AttnParams::init(d_model, rng);
        let ffn = FfnParams {
            w1: glorot(rng, d_model, hidden),
            b1: Tensor::zeros(&[hidden]),
            w2: glorot(rng, hidden, d_model),
            b2: Tensor::zeros(&[d_model]),
        };
        Self {
            self_attn,
            cross_attn,
            ffn,
            norm1: NormParams::init(d_model),
            norm2: NormParams::init(d_model),
            norm3: NormParams::init(d_model),
        }
    }

    pub fn d_model(&self) -> usize {
        self.norm1.gain.numel()
    }
}

fn affine<S: Scalar>(tape: &mut Tape<S>, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = tape.matmul(x, w)?;
    tape.add_bias(y, b)
}

fn multi_head<S: Scalar>(
    tape: &mut Tape<S>,
    q: Var,
    k: Var,
    v: Var,
    mask: Option<&AttentionMask>,
    p: &AttnParams<Var>,
    heads: usize,
) -> Result<Var> {
    let d = tape.shape(q)[1];
    if heads == 0 || !d.is_multiple_of(heads) {
        return Err(contract(format!("d_model {d} not divisible by {heads} heads")));
    }
    let (lq, lk) = (tape.shape(q)[0], tape.shape(k)[0]);
    if let Some(m) = mask {
        if m.rows() != lq || m.cols() != lk {
            return Err(crate::Error::Shape {
                op: "attention mask",
                lhs: vec![lq, lk],
                rhs: vec![m.rows(), m.cols()],
            });
        }
    }
    let qp = affine(tape, q, p.wq, p.bq)?;
    let kp = affine(tape, k, p.wk, p.bk)?;
    let vp = affine(tape, v, p.wv, p.bv)?;
    let dh = d / heads;
    let scale = S::c(1.0 / (dh as f64).sqrt());
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let (a, b) = (h * dh, (h + 1) * dh);
        let (qh, kh, vh) = if heads == 1 {
            (qp, kp, vp)
        } else {
            (
                tape.slice(qp, 1, a, b)?,
                tape.slice(kp, 1, a, b)?,
                tape.slice(vp, 1, a, b)?,
            )
        };
        let kt = tape.transpose(kh)?;
        let logits = tape.matmul(qh, kt)?;
        let logits = tape.scale(logits, scale)?;
        let attn = tape.softmax_rows(logits, mask)?;
        outs.push(tape.matmul(attn, vh)?);
    }
    let merged = if heads == 1 { outs[0] } else { tape.concat(&outs, 1)? };
    affine(tape, merged, p.wo, p.bo)
}

/// Masked multi-head self-attention (no residual).
pub fn self_attention<S: Scalar>(
    tape: &mut Tape<S>,
    q: Var,
    mask: Option<&AttentionMask>,
    p: &AttnParams<Var>,
    heads: usize,
) -> Result<Var> {
    multi_head(tape, q, q, q, mask, p, heads)
}

/// Multi-head attention from `q` onto keys `k` / values `v` (no residual).
pub fn cross_attention<S: Scalar>(
    tape: &mut Tape<S>,
    q: Var,
    k: Var,
    v: Var,
    mask: Option<&AttentionMask>,
    p: &AttnParams<Var>,
    heads: usize,
) -> Result<Var> {
    if tape.shape(k) != tape.shape(v) {
        return Err(crate::Error::Shape {
            op: "cross_attention",
            lhs: tape.shape(k).to_vec(),
            rhs: tape.shape(v).to_vec(),
        });
    }
    multi_head(tape, q, k, v, mask, p, heads)
}

/// Post-norm decoder unit:
/// `Q' = LN(SA(Q) + Q)`, `Q'' = LN(CA(Q', K, V) + Q')`, `out = LN(FFN(Q'') + Q'')`.
#[allow(clippy::too_many_arguments)]
pub fn tdu_forward<S: Scalar>(
    tape: &mut Tape<S>,
    q: Var,
    k: Var,
    v: Var,
    self_mask: Option<&AttentionMask>,
    cross_mask: Option<&AttentionMask>,
    p: &TduParams<Var>,
    heads: usize,
) -> Result<Var> {
    let dq = tape.shape(q)[1];
    if tape.shape(k)[1] != dq || tape.shape(v)[1] != dq {
        return Err(crate::Error::Shape {
            op: "tdu_forward",
            lhs: tape.shape(q).to_vec(),
            rhs: tape.shape(k).to_vec(),
        });
    }
    let sa = self_attention(tape, q, self_mask, &p.self_attn, heads)?;
    let r1 = tape.add(sa, q)?;
    let q1 = tape.layer_norm(r1, p.norm1.gain, p.norm1.bias)?;

    let ca = cross_attention(tape, q1, k, v, cross_mask, &p.cross_attn, heads)?;
    let r2 = tape.add(ca, q1)?;
    let q2 = tape.layer_norm(r2, p.norm2.gain, p.norm2.bias)?;

    let h = affine(tape, q2, p.ffn.w1, p.ffn.b1)?;
    let h = tape.relu(h)?;
    let f = affine(tape, h, p.ffn.w2, p.ffn.b2)?;
    let r3 = tape.add(f, q2)?;
    tape.layer_norm(r3, p.norm3.gain, p.norm3.bias)
}
