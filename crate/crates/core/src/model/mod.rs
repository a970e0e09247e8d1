//! The full network: long-term compressor, context-enhanced detection and
//! anticipation encoder, near-future generator, memory-refined decoder and a
//! single classifier shared by all heads.

mod checkpoint;
mod graph;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::TduParams;
use crate::error::{config_err, Result};
use crate::params::{glorot, normal, param_struct};
use crate::partition::{PartitionConfig, Preset, TrainingSample};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub use checkpoint::CHECKPOINT_FORMAT_VERSION;
pub use graph::{ForwardVars, Graph, LongCache};

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_model: usize,
    pub heads: usize,
    pub ffn_hidden: usize,
    /// Learnable queries of the first and second compression stage.
    pub long_queries: [usize; 2],
    /// Near-future generation + memory refinement. When off, `M_SA` is
    /// classified directly.
    pub memory_refinement: bool,
    /// Opens every short/anticipation key column in the refinement
    /// cross-attention (diagnostic for non-causal leakage).
    pub leaky_anticipation: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 128,
            heads: 4,
            ffn_hidden: 512,
            long_queries: [16, 32],
            memory_refinement: true,
            leaky_anticipation: false,
        }
    }
}

impl ModelConfig {
    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Th14 | Preset::Crosstask => Self::default(),
            Preset::Ek100 => Self {
                long_queries: [16, 16],
                ..Self::default()
            },
        }
    }

    /// Small model used for desk-scale experiments.
    pub fn desk(d_model: usize) -> Self {
        Self {
            d_model,
            heads: 4,
            ffn_hidden: 4 * d_model,
            long_queries: [8, 8],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || !self.d_model.is_multiple_of(2) {
            return Err(config_err("d_model", "must be positive and even"));
        }
        if self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return Err(config_err("heads", "must divide d_model"));
        }
        if self.ffn_hidden == 0 {
            return Err(config_err("ffn_hidden", "must be >= 1"));
        }
        if self.long_queries.contains(&0) {
            return Err(config_err("long_queries", "must be >= 1"));
        }
        Ok(())
    }
}

param_struct! {
    /// Every learnable tensor of the network.
    pub struct ModelParams<T> {
        input_w, input_b,
        long_queries0, long_queries1,
        anticipation_queries, future_queries,
        classifier_w, classifier_b;
        compress0: TduParams,
        compress1: TduParams,
        encoder: TduParams,
        generator: TduParams,
        refine: TduParams,
    }
}

impl<T> ModelParams<T> {
    /// Parameter names in canonical order.
    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit("", &mut |n, _| out.push(n.to_string()));
        out
    }
}

/// Network weights plus the geometry they were built for.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<S> {
    pub partition: PartitionConfig,
    pub config: ModelConfig,
    pub params: ModelParams<Tensor<S>>,
}

/// Materialized outputs of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardOutputs<S> {
    /// Compressed long-term memory `[q_L1 x d]`.
    pub m_long: Tensor<S>,
    /// Encoded short-term + anticipation `[(T_s + T_a) x d]`.
    pub m_sa: Tensor<S>,
    /// Generated near-future `[T_f x d]`.
    pub m_f: Option<Tensor<S>>,
    /// Refined memory `[(T_s + T_a) x d]`.
    pub m_sa_refined: Option<Tensor<S>>,
    pub logits_sa: Tensor<S>,
    pub logits_sa_refined: Option<Tensor<S>>,
    pub logits_f: Option<Tensor<S>>,
}

impl<S> ForwardOutputs<S> {
    /// Logits used for prediction: refined when available.
    pub fn detection_logits(&self) -> &Tensor<S> {
        self.logits_sa_refined.as_ref().unwrap_or(&self.logits_sa)
    }
}

impl<S: Scalar> Model<S> {
    pub fn new(partition: PartitionConfig, config: ModelConfig, seed: u64) -> Result<Self> {
        partition.validate()?;
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.d_model;
        let h = config.ffn_hidden;
        let classes = partition.num_classes + 1;
        let params = ModelParams {
            input_w: glorot(&mut rng, partition.feature_dim, d),
            input_b: Tensor::zeros(&[d]),
            long_queries0: normal(&mut rng, &[config.long_queries[0], d], 1.0),
            long_queries1: normal(&mut rng, &[config.long_queries[1], d], 1.0),
            anticipation_queries: normal(&mut rng, &[partition.anticipation, d], 1.0),
            future_queries: normal(&mut rng, &[partition.near_future, d], 1.0),
            classifier_w: glorot(&mut rng, d, classes),
            classifier_b: Tensor::zeros(&[classes]),
            compress0: TduParams::init(d, h, &mut rng),
            compress1: TduParams::init(d, h, &mut rng),
            encoder: TduParams::init(d, h, &mut rng),
            generator: TduParams::init(d, h, &mut rng),
            refine: TduParams::init(d, h, &mut rng),
        };
        Ok(Self {
            partition,
            config,
            params,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.partition.num_classes + 1
    }

    pub fn num_parameters(&self) -> usize {
        let mut n = 0;
        self.params.visit("", &mut |_, t| n += t.numel());
        n
    }

    /// Puts every parameter on `tape`; `trainable` decides whether gradients are tracked.
    pub fn register(&self, tape: &mut Tape<S>, trainable: bool) -> ModelParams<Var> {
        self.params.map("", &mut |_, t| {
            let mut t = t.clone();
            t.requires_grad = trainable;
            tape.leaf(t)
        })
    }

    /// Records the full forward pass for `sample` on `tape`.
    pub fn record(
        &self,
        tape: &mut Tape<S>,
        vars: &ModelParams<Var>,
        sample: &TrainingSample<S>,
        cache: Option<&LongCache<S>>,
        track_short_input: bool,
    ) -> Result<ForwardVars> {
        Graph::new(tape, vars, &self.config, &self.partition).forward(sample, cache, track_short_input)
    }

    /// Inference-only forward pass.
    pub fn forward(&self, sample: &TrainingSample<S>) -> Result<ForwardOutputs<S>> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, false);
        let fv = self.record(&mut tape, &vars, sample, None, false)?;
        Ok(fv.materialize(&tape))
    }
}
