//! Synthetic benchmark used to compare architectural variants: one seeded
//! grammar, training and held-out streams, a fixed training budget, and
//! held-out scores plus the per-position loss profile.

use serde::{Deserialize, Serialize};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::eval::{evaluate_streams, per_position_diagnostic, EvalOptions, MetricReport};
use crate::infer::{run_stream, StreamOptions};
use crate::model::{Model, ModelConfig};
use crate::partition::{ContextPlacement, FeatureStream, PartitionConfig};
use crate::train::{train, GrammarSpec, SyntheticGrammar, TrainConfig};

/// Architectural variants compared on the benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Near-past context and memory refinement.
    Full,
    /// Memory refinement without near-past context.
    RefinementOnly,
    /// Near-past context without memory refinement.
    ContextOnly,
    /// Neither near-past context nor memory refinement.
    Baseline,
    /// Full model whose refinement lets early positions see later frames.
    Leaky,
    /// Full model with the generated future starting at the anchor frame.
    DistantFuture,
    /// Full model with the given latency in frames.
    Latency(usize),
}

impl Variant {
    pub fn name(&self) -> String {
        match self {
            Self::Full => "full".into(),
            Self::RefinementOnly => "refinement_only".into(),
            Self::ContextOnly => "context_only".into(),
            Self::Baseline => "baseline".into(),
            Self::Leaky => "leaky".into(),
            Self::DistantFuture => "distant_future".into(),
            Self::Latency(d) => format!("latency{d}"),
        }
    }

    fn apply(&self, part: &mut PartitionConfig, model: &mut ModelConfig) {
        match *self {
            Self::Full => {}
            Self::RefinementOnly => part.near_past = 0,
            Self::ContextOnly => model.memory_refinement = false,
            Self::Baseline => {
                part.near_past = 0;
                model.memory_refinement = false;
            }
            Self::Leaky => model.leaky_anticipation = true,
            Self::DistantFuture => part.future_context = ContextPlacement::Distant,
            Self::Latency(d) => part.delta = d,
        }
    }
}

/// Benchmark definition. The default is the desk-scale setting: long
/// actions separated by long background gaps, heavy feature noise, and a
/// long-term window spanning several segments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    pub grammar: GrammarSpec,
    pub train_streams: usize,
    pub test_streams: usize,
    pub stream_len: usize,
    pub partition: PartitionConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for Benchmark {
    fn default() -> Self {
        let grammar = GrammarSpec {
            noise: 4.0,
            action_duration: (30, 60),
            background_duration: (10, 25),
            ..GrammarSpec::default()
        };
        let partition = PartitionConfig {
            long: 128,
            long_subsample: 8,
            short: 8,
            feature_dim: grammar.dim,
            num_classes: grammar.num_classes,
            fps: grammar.fps,
            ..PartitionConfig::default()
        };
        let model = ModelConfig {
            long_queries: [8, 8],
            ..ModelConfig::desk(32)
        };
        Self {
            grammar,
            train_streams: 64,
            test_streams: 4,
            stream_len: 600,
            partition,
            model,
            train: TrainConfig {
                steps: 1000,
                ..TrainConfig::default()
            },
        }
    }
}

/// Training and held-out streams drawn from one seeded grammar.
pub struct BenchmarkData {
    pub train: Vec<FeatureStream>,
    pub test: Vec<FeatureStream>,
}

/// Outcome of training one variant with one seed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VariantResult {
    pub variant: Variant,
    pub seed: u64,
    pub final_loss: f64,
    pub report: MetricReport,
    /// Held-out loss of the prediction head per short-term position.
    pub loss_profile: Vec<f64>,
    pub accuracy_profile: Vec<f64>,
}

impl Benchmark {
    /// Streams for `seed`; every variant trained with this seed sees the same data.
    pub fn data(&self, seed: u64) -> Result<BenchmarkData> {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let grammar = SyntheticGrammar::random(&self.grammar, &mut rng)?;
        let mut draw = |n: usize| -> Result<Vec<FeatureStream>> {
            (0..n).map(|_| grammar.generate_stream(self.stream_len, &mut rng)).collect()
        };
        let train = draw(self.train_streams)?;
        let test = draw(self.test_streams)?;
        Ok(BenchmarkData { train, test })
    }

    /// Trains `variant` from `seed` and scores it on the held-out streams.
    pub fn run(&self, variant: Variant, seed: u64, data: &BenchmarkData) -> Result<VariantResult> {
        let (mut part, mut cfg) = (self.partition.clone(), self.model.clone());
        variant.apply(&mut part, &mut cfg);
        let mut model = Model::<f64>::new(part, cfg, seed)?;
        let tc = TrainConfig {
            seed,
            ..self.train.clone()
        };
        let log = train(&mut model, &data.train, &tc, |_| {})?;
        let records: Vec<_> = data
            .test
            .iter()
            .map(|s| run_stream(&model, s, StreamOptions { cache: true }))
            .collect::<Result<_>>()?;
        let pairs: Vec<_> = records.iter().zip(&data.test).map(|(r, s)| (r.as_slice(), s.labels.as_slice())).collect();
        let report = evaluate_streams(&pairs, self.grammar.fps, EvalOptions::default())?;
        let profile = per_position_diagnostic(&model, &data.test, 1)?;
        Ok(VariantResult {
            variant,
            seed,
            final_loss: log.last().map_or(f64::NAN, |r| r.total),
            report,
            loss_profile: profile.loss,
            accuracy_profile: profile.accuracy,
        })
    }
}

/// Every step is non-increasing up to `tol`, and the last value is below the first.
pub fn is_monotone_decreasing(profile: &[f64], tol: f64) -> bool {
    profile.len() >= 2 && profile.windows(2).all(|w| w[1] <= w[0] + tol) && profile[profile.len() - 1] < profile[0]
}

/// The minimum is at an interior position and both ends exceed it by at least `margin`.
pub fn is_valley(profile: &[f64], margin: f64) -> bool {
    let Some((argmin, &min)) = profile.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)) else {
        return false;
    };
    argmin > 0
        && argmin + 1 < profile.len()
        && profile[0] - min >= margin
        && profile[profile.len() - 1] - min >= margin
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_shapes() {
        assert!(is_monotone_decreasing(&[3.0, 2.0, 2.0, 1.0], 0.0));
        assert!(!is_monotone_decreasing(&[3.0, 2.0, 2.5, 1.0], 0.1));
        assert!(!is_monotone_decreasing(&[1.0, 1.0], 0.0));
        assert!(is_valley(&[1.0, 0.5, 0.9], 0.2));
        assert!(!is_valley(&[1.0, 0.5, 0.6], 0.2));
        assert!(!is_valley(&[0.4, 0.5, 0.9], 0.0));
        assert!(!is_valley(&[], 0.0));
    }

    #[test]
    fn variants_toggle_one_mechanism() {
        let b = Benchmark::default();
        let mut p = b.partition.clone();
        let mut m = b.model.clone();
        Variant::Baseline.apply(&mut p, &mut m);
        assert_eq!((p.near_past, m.memory_refinement), (0, false));
        assert_eq!(Variant::Latency(4).name(), "latency4");
    }
}
