use crate::attention::{sinusoidal_pe, tdu_forward};
use crate::error::{contract, Result};
use crate::mask::{AttentionMask, MaskKind};
use crate::model::{ForwardOutputs, ModelConfig, ModelParams};
use crate::partition::{
    build_encoder_cross_mask, build_encoder_self_mask, build_leaky_refinement_cross_mask,
    build_refinement_cross_mask, build_refinement_self_mask, PartitionConfig, TrainingSample,
};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Output of the long-term branch, reusable across anchors that share the same
/// long-term content.
#[derive(Clone, Debug, PartialEq)]
pub struct LongCache<S> {
    /// First sampled long-term frame of the window this cache was built from.
    pub key: i64,
    pub m_long: Tensor<S>,
    pub m_f: Option<Tensor<S>>,
}

/// Tape handles of one recorded forward pass.
#[derive(Clone, Debug)]
pub struct ForwardVars {
    pub m_long: Var,
    pub m_sa: Var,
    pub m_f: Option<Var>,
    pub m_sa_refined: Option<Var>,
    pub logits_sa: Var,
    pub logits_sa_refined: Option<Var>,
    pub logits_f: Option<Var>,
    /// Raw short-term input leaf when recorded with tracking enabled.
    pub short_input: Option<Var>,
}

impl ForwardVars {
    /// Logits used for prediction: refined when available.
    pub fn detection_logits(&self) -> Var {
        self.logits_sa_refined.unwrap_or(self.logits_sa)
    }

    pub fn materialize<S: Scalar>(&self, tape: &Tape<S>) -> ForwardOutputs<S> {
        let get = |v: Var| tape.value(v).clone();
        ForwardOutputs {
            m_long: get(self.m_long),
            m_sa: get(self.m_sa),
            m_f: self.m_f.map(get),
            m_sa_refined: self.m_sa_refined.map(get),
            logits_sa: get(self.logits_sa),
            logits_sa_refined: self.logits_sa_refined.map(get),
            logits_f: self.logits_f.map(get),
        }
    }
}

/// Records the network's stages onto a tape.
pub struct Graph<'a, S: Scalar> {
    tape: &'a mut Tape<S>,
    p: &'a ModelParams<Var>,
    cfg: &'a ModelConfig,
    part: &'a PartitionConfig,
}

impl<'a, S: Scalar> Graph<'a, S> {
    pub fn new(
        tape: &'a mut Tape<S>,
        p: &'a ModelParams<Var>,
        cfg: &'a ModelConfig,
        part: &'a PartitionConfig,
    ) -> Self {
        Self { tape, p, cfg, part }
    }

    fn pe(&mut self, rows: usize, offset: usize) -> Result<Var> {
        let pe = sinusoidal_pe(rows, self.cfg.d_model, offset)?;
        Ok(self.tape.constant(pe))
    }

    fn with_pe(&mut self, x: Var, offset: usize) -> Result<Var> {
        let rows = self.tape.shape(x)[0];
        let pe = self.pe(rows, offset)?;
        self.tape.add(x, pe)
    }

    /// Projects raw features `[n x D]` to `[n x d]`.
    fn project(&mut self, x: Var) -> Result<Var> {
        let y = self.tape.matmul(x, self.p.input_w)?;
        self.tape.add_bias(y, self.p.input_b)
    }

    /// Two-stage compression of the subsampled long-term window into
    /// `long_queries[1]` tokens. Long-term tokens carry no positional
    /// encoding; padded frames are excluded from the first stage's keys.
    pub fn compress_long(&mut self, long: &Tensor<S>, long_pad: &[bool]) -> Result<Var> {
        let heads = self.cfg.heads;
        let d = self.cfg.d_model;
        let n_valid = long_pad.iter().filter(|&&p| !p).count();
        let (keys, mask) = if n_valid == 0 {
            (self.tape.constant(Tensor::zeros(&[1, d])), None)
        } else {
            let x = self.tape.constant(long.clone());
            let x = self.project(x)?;
            let q0 = self.tape.shape(self.p.long_queries0)[0];
            let mask = if n_valid == long_pad.len() {
                None
            } else {
                Some(AttentionMask::from_fn(q0, long_pad.len(), MaskKind::Custom, |_, j| !long_pad[j])?)
            };
            (x, mask)
        };
        let stage1 = tdu_forward(
            self.tape,
            self.p.long_queries0,
            keys,
            keys,
            None,
            mask.as_ref(),
            &self.p.compress0,
            heads,
        )?;
        tdu_forward(
            self.tape,
            self.p.long_queries1,
            stage1,
            stage1,
            None,
            None,
            &self.p.compress1,
            heads,
        )
    }

    /// Encodes `[near-past | short | anticipation queries]` against
    /// `[compressed long | short | anticipation]` and returns the rows of the
    /// short and anticipation tokens.
    pub fn encode_detection_anticipation(
        &mut self,
        m_long: Var,
        context: Option<&Tensor<S>>,
        short: Var,
    ) -> Result<Var> {
        let part = self.part;
        let m_s = self.project(short)?;
        let mut rows = Vec::with_capacity(3);
        if let Some(ctx) = context {
            let c = self.tape.constant(ctx.clone());
            rows.push(self.project(c)?);
        }
        rows.push(m_s);
        rows.push(self.p.anticipation_queries);
        let queries = self.tape.concat(&rows, 0)?;
        let queries = self.with_pe(queries, 0)?;

        let sa = self.tape.concat(&[m_s, self.p.anticipation_queries], 0)?;
        let sa = self.with_pe(sa, part.near_past)?;
        let keys = self.tape.concat(&[m_long, sa], 0)?;

        let lq = self.tape.shape(m_long)[0];
        let self_mask = build_encoder_self_mask(part)?;
        let cross_mask = build_encoder_cross_mask(part, lq)?;
        let out = tdu_forward(
            self.tape,
            queries,
            keys,
            keys,
            Some(&self_mask),
            Some(&cross_mask),
            &self.p.encoder,
            self.cfg.heads,
        )?;
        self.tape.slice(out, 0, part.near_past, part.encoder_len())
    }

    /// Generates the near-future memory from the compressed long-term memory.
    pub fn generate_near_future(&mut self, m_long: Var) -> Result<Var> {
        let q = self.with_pe(self.p.future_queries, self.part.future_offset())?;
        tdu_forward(self.tape, q, m_long, m_long, None, None, &self.p.generator, self.cfg.heads)
    }

    /// Refines `M_SA` against `[compressed long | M_SA | near-future]`.
    ///
    /// The refinement masks are built with zero latency so the end-to-end
    /// look-ahead stays at the encoder's latency.
    pub fn refine_memory(&mut self, m_long: Var, m_sa: Var, m_f: Var) -> Result<Var> {
        let part = self.part.with_delta(0);
        let sa = self.with_pe(m_sa, part.near_past)?;
        let fut = self.with_pe(m_f, part.future_offset())?;
        let keys = self.tape.concat(&[m_long, sa, fut], 0)?;
        let lq = self.tape.shape(m_long)[0];
        let self_mask = build_refinement_self_mask(&part)?;
        let cross_mask = if self.cfg.leaky_anticipation {
            build_leaky_refinement_cross_mask(&part, lq)
        } else {
            build_refinement_cross_mask(&part, lq)?
        };
        tdu_forward(
            self.tape,
            m_sa,
            keys,
            keys,
            Some(&self_mask),
            Some(&cross_mask),
            &self.p.refine,
            self.cfg.heads,
        )
    }

    /// Shared linear classifier `[n x d] -> [n x (C + 1)]`.
    pub fn classify(&mut self, x: Var) -> Result<Var> {
        let y = self.tape.matmul(x, self.p.classifier_w)?;
        self.tape.add_bias(y, self.p.classifier_b)
    }

    /// Long-term branch values for `sample`, for reuse by later anchors.
    pub fn long_branch(&mut self, sample: &TrainingSample<S>) -> Result<(Var, Option<Var>)> {
        let m_long = self.compress_long(&sample.long, &sample.long_pad)?;
        let m_f = if self.cfg.memory_refinement {
            Some(self.generate_near_future(m_long)?)
        } else {
            None
        };
        Ok((m_long, m_f))
    }

    pub fn forward(
        mut self,
        sample: &TrainingSample<S>,
        cache: Option<&LongCache<S>>,
        track_short_input: bool,
    ) -> Result<ForwardVars> {
        let (m_long, m_f) = match cache {
            Some(c) => {
                if c.key != sample.long_key() {
                    return Err(contract(format!(
                        "long cache built for frame {} used with frame {}",
                        c.key,
                        sample.long_key()
                    )));
                }
                if c.m_f.is_some() != self.cfg.memory_refinement {
                    return Err(contract("long cache does not match the refinement setting"));
                }
                let m_long = self.tape.constant(c.m_long.clone());
                let m_f = c.m_f.as_ref().map(|t| self.tape.constant(t.clone()));
                (m_long, m_f)
            }
            None => self.long_branch(sample)?,
        };

        let mut short = sample.short.clone();
        short.requires_grad = track_short_input;
        let short = self.tape.leaf(short);
        let m_sa = self.encode_detection_anticipation(m_long, sample.context.as_ref(), short)?;
        let logits_sa = self.classify(m_sa)?;

        let (m_sa_refined, logits_sa_refined, logits_f) = match m_f {
            Some(m_f) => {
                let refined = self.refine_memory(m_long, m_sa, m_f)?;
                let lr = self.classify(refined)?;
                let lf = self.classify(m_f)?;
                (Some(refined), Some(lr), Some(lf))
            }
            None => (None, None, None),
        };
        Ok(ForwardVars {
            m_long,
            m_sa,
            m_f,
            m_sa_refined,
            logits_sa,
            logits_sa_refined,
            logits_f,
            short_input: track_short_input.then_some(short),
        })
    }
}

impl<S: Scalar> crate::model::Model<S> {
    /// Computes the long-term branch once so it can be reused by every anchor
    /// with the same `long_key`.
    pub fn long_cache(&self, sample: &TrainingSample<S>) -> Result<LongCache<S>> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, false);
        let (m_long, m_f) = Graph::new(&mut tape, &vars, &self.config, &self.partition).long_branch(sample)?;
        Ok(LongCache {
            key: sample.long_key(),
            m_long: tape.value(m_long).clone(),
            m_f: m_f.map(|v| tape.value(v).clone()),
        })
    }

    /// Inference forward pass that reuses a cached long-term branch.
    pub fn forward_cached(&self, sample: &TrainingSample<S>, cache: &LongCache<S>) -> Result<ForwardOutputs<S>> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape, false);
        let fv = self.record(&mut tape, &vars, sample, Some(cache), false)?;
        Ok(fv.materialize(&tape))
    }
}
