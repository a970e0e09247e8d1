use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::model::ModelParams;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Linear warm-up to `peak` over `warmup` steps, then cosine decay to zero at
/// step `total`. Steps are 1-based; `lr(warmup) == peak`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub peak: f64,
    pub warmup: usize,
    pub total: usize,
}

impl Schedule {
    pub fn lr(&self, step: usize) -> f64 {
        if step == 0 {
            return 0.0;
        }
        if step <= self.warmup {
            return self.peak * step as f64 / self.warmup as f64;
        }
        if step >= self.total {
            return 0.0;
        }
        let progress = (step - self.warmup) as f64 / (self.total - self.warmup) as f64;
        0.5 * self.peak * (1.0 + (PI * progress).cos())
    }
}

/// Adam with decoupled weight decay. Moments are stored per parameter in
/// canonical visiting order.
#[derive(Clone, Debug)]
pub struct AdamW<S> {
    pub weight_decay: f64,
    step: usize,
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
}

impl<S: Scalar> AdamW<S> {
    pub fn new(params: &ModelParams<Tensor<S>>, weight_decay: f64) -> Self {
        let mut m = Vec::new();
        params.visit("", &mut |_, t| m.push(vec![S::zero(); t.numel()]));
        Self {
            weight_decay,
            step: 0,
            v: m.clone(),
            m,
        }
    }

    /// Number of updates applied so far.
    pub fn steps(&self) -> usize {
        self.step
    }

    /// Applies one update with learning rate `lr`. `grads` follow canonical
    /// order. Non-finite gradients abort before anything is modified.
    pub fn step(&mut self, params: &mut ModelParams<Tensor<S>>, grads: &[Vec<S>], lr: f64) -> Result<()> {
        if grads.len() != self.m.len() {
            return Err(contract(format!(
                "optimizer expects {} gradient tensors, got {}",
                self.m.len(),
                grads.len()
            )));
        }
        let mut names = Vec::new();
        params.visit("", &mut |n, _| names.push(n.to_string()));
        for (g, name) in grads.iter().zip(&names) {
            if !g.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFiniteGrad(name.clone()));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (S::c(BETA1), S::c(BETA2));
        let bc1 = S::one() - b1.powi(t);
        let bc2 = S::one() - b2.powi(t);
        let lr_s = S::c(lr);
        let decay = S::one() - S::c(lr * self.weight_decay);
        let eps = S::c(EPSILON);
        let (ms, vs) = (&mut self.m, &mut self.v);
        let mut k = 0;
        params.visit_mut("", &mut |_, p| {
            let (m, v, g) = (&mut ms[k], &mut vs[k], &grads[k]);
            for (((w, m), v), &g) in p.data_mut().iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g) {
                *m = b1 * *m + (S::one() - b1) * g;
                *v = b2 * *v + (S::one() - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w = *w * decay - lr_s * m_hat / (v_hat.sqrt() + eps);
            }
            k += 1;
        });
        Ok(())
    }
}
