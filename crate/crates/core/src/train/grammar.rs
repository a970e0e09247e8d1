//! Procedural action streams: a Markov chain over segments with an optional
//! long-range rule that makes earlier actions predictive of later ones.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, contract, Result};
use crate::partition::FeatureStream;
use crate::tensor::Tensor;

/// Segment-level grammar. State 0 is background, `1..=num_classes` are actions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticGrammar {
    pub num_classes: usize,
    pub dim: usize,
    pub fps: f64,
    /// `[(C+1) x (C+1)]` row-stochastic segment transitions with zero diagonal.
    pub transitions: Vec<Vec<f64>>,
    /// Inclusive duration range in frames per state.
    pub durations: Vec<(usize, usize)>,
    /// One prototype feature vector per state.
    pub prototypes: Vec<Vec<f64>>,
    /// Standard deviation of the per-frame Gaussian feature noise.
    pub noise: f64,
    /// When on, every action after the first two is `rule(a_{k-2}, a_{k-1})`.
    pub long_range_rule: bool,
}

/// Knobs for [`SyntheticGrammar::random`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrammarSpec {
    pub num_classes: usize,
    pub dim: usize,
    pub fps: f64,
    /// Probability of returning to background after an action.
    pub background_prob: f64,
    pub action_duration: (usize, usize),
    pub background_duration: (usize, usize),
    pub prototype_scale: f64,
    pub noise: f64,
    pub long_range_rule: bool,
}

impl Default for GrammarSpec {
    fn default() -> Self {
        Self {
            num_classes: 4,
            dim: 16,
            fps: 4.0,
            background_prob: 0.5,
            action_duration: (6, 14),
            background_duration: (3, 8),
            prototype_scale: 1.0,
            noise: 1.0,
            long_range_rule: true,
        }
    }
}

impl GrammarSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(config_err("num_classes", "must be >= 1"));
        }
        if self.dim == 0 {
            return Err(config_err("dim", "must be >= 1"));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(config_err("fps", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.background_prob) {
            return Err(config_err("background_prob", "must lie in [0, 1]"));
        }
        if self.num_classes == 1 && self.background_prob < 1.0 {
            return Err(config_err("background_prob", "must be 1 with a single action class"));
        }
        for (field, (lo, hi)) in [
            ("action_duration", self.action_duration),
            ("background_duration", self.background_duration),
        ] {
            if lo == 0 || lo > hi {
                return Err(config_err(field, "needs 1 <= min <= max"));
            }
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(config_err("noise", "must be >= 0"));
        }
        if !(self.prototype_scale.is_finite() && self.prototype_scale > 0.0) {
            return Err(config_err("prototype_scale", "must be positive"));
        }
        Ok(())
    }
}

impl SyntheticGrammar {
    /// Background moves to a uniformly chosen action; an action moves to
    /// background with `background_prob`, otherwise to another action
    /// uniformly. Prototypes are Gaussian with std `prototype_scale`.
    pub fn random<R: Rng>(spec: &GrammarSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let n = spec.num_classes + 1;
        let c = spec.num_classes as f64;
        let mut transitions = vec![vec![0.0; n]; n];
        for (i, row) in transitions.iter_mut().enumerate() {
            for (j, p) in row.iter_mut().enumerate() {
                *p = match (i, j) {
                    (i, j) if i == j => 0.0,
                    (0, _) => 1.0 / c,
                    (_, 0) => spec.background_prob,
                    _ => (1.0 - spec.background_prob) / (c - 1.0),
                };
            }
        }
        let mut durations = vec![spec.action_duration; n];
        durations[0] = spec.background_duration;
        let normal = Normal::new(0.0, spec.prototype_scale).expect("positive scale");
        let prototypes = (0..n)
            .map(|_| (0..spec.dim).map(|_| normal.sample(rng)).collect())
            .collect();
        let g = Self {
            num_classes: spec.num_classes,
            dim: spec.dim,
            fps: spec.fps,
            transitions,
            durations,
            prototypes,
            noise: spec.noise,
            long_range_rule: spec.long_range_rule,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_classes + 1;
        if self.transitions.len() != n || self.transitions.iter().any(|r| r.len() != n) {
            return Err(config_err("transitions", format!("must be {n} x {n}")));
        }
        for (i, row) in self.transitions.iter().enumerate() {
            if row.iter().any(|&p| !(p >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(config_err("transitions", format!("row {i} is not a distribution")));
            }
            if row[i] != 0.0 {
                return Err(config_err("transitions", format!("row {i} has a self-transition")));
            }
        }
        if self.durations.len() != n || self.durations.iter().any(|&(lo, hi)| lo == 0 || lo > hi) {
            return Err(config_err("durations", "need one 1 <= min <= max range per state"));
        }
        if self.prototypes.len() != n || self.prototypes.iter().any(|p| p.len() != self.dim) {
            return Err(config_err("prototypes", format!("need {n} vectors of length {}", self.dim)));
        }
        for i in 0..n {
            for j in i + 1..n {
                if self.prototypes[i] == self.prototypes[j] {
                    return Err(config_err("prototypes", format!("states {i} and {j} coincide")));
                }
            }
        }
        Ok(())
    }

    /// The deterministic long-range rule over action labels `1..=C`.
    pub fn rule(&self, a: usize, b: usize) -> usize {
        (a + b) % self.num_classes + 1
    }

    /// Samples the segment sequence `(state, duration)` covering `length` frames.
    pub fn sample_segments<R: Rng>(&self, length: usize, rng: &mut R) -> Vec<(usize, usize)> {
        let n = self.num_classes + 1;
        let mut segs = Vec::new();
        let mut actions: Vec<usize> = Vec::new();
        let mut state = 0;
        let mut covered = 0;
        while covered < length {
            let (lo, hi) = self.durations[state];
            let dur = rng.random_range(lo..=hi);
            segs.push((state, dur));
            covered += dur;
            if state != 0 {
                actions.push(state);
            }
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut next = n - 1;
            for (j, &p) in self.transitions[state].iter().enumerate() {
                acc += p;
                if u < acc {
                    next = j;
                    break;
                }
            }
            if self.long_range_rule && next != 0 && actions.len() >= 2 {
                let forced = self.rule(actions[actions.len() - 2], actions[actions.len() - 1]);
                // A repeat of the current action would merge segments; insert background.
                next = if forced == state { 0 } else { forced };
            }
            state = next;
        }
        segs
    }

    /// Features are `prototype[label] + N(0, noise^2)` per frame.
    pub fn generate_stream<R: Rng>(&self, length: usize, rng: &mut R) -> Result<FeatureStream> {
        if length == 0 {
            return Err(contract("stream length must be >= 1"));
        }
        let mut labels = Vec::with_capacity(length);
        for (state, dur) in self.sample_segments(length, rng) {
            labels.extend(std::iter::repeat_n(state, dur));
        }
        labels.truncate(length);
        let mut data = Vec::with_capacity(length * self.dim);
        let noise = (self.noise > 0.0).then(|| Normal::new(0.0, self.noise).expect("positive noise"));
        for &l in &labels {
            for &p in &self.prototypes[l] {
                data.push(match &noise {
                    Some(n) => p + n.sample(rng),
                    None => p,
                });
            }
        }
        FeatureStream::new(Tensor::new(vec![length, self.dim], data)?, labels, self.fps, self.num_classes)
    }
}
