//! Shape contracts, perturbation oracles and causality of the full network.

mod common;

use cmert::attention::tdu_forward;
use cmert::eval::{leakage_audit, random_sample};
use cmert::model::{Graph, ModelConfig};
use cmert::partition::{extract_windows, PartitionConfig};
use cmert::{Model, Tape, Tensor, TrainingSample};
use common::{audit_model, audit_partition, full_sample, random_stream, tiny_config, tiny_model, tiny_partition};

fn perturb_row(t: &mut Tensor, row: usize, by: f64) {
    let d = t.cols();
    for v in &mut t.data_mut()[row * d..(row + 1) * d] {
        *v += by;
    }
}

fn row_diff(a: &Tensor, b: &Tensor, row: usize) -> f64 {
    a.row(row).iter().zip(b.row(row)).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn output_shapes_follow_the_partition() {
    let configs = [
        (tiny_partition(0), tiny_config()),
        (audit_partition(2), ModelConfig::desk(8)),
        (
            PartitionConfig {
                near_past: 0,
                ..PartitionConfig::default()
            },
            ModelConfig {
                long_queries: [6, 3],
                ..ModelConfig::desk(16)
            },
        ),
    ];
    for (part, cfg) in configs {
        let model = Model::new(part.clone(), cfg.clone(), 1).unwrap();
        let out = model.forward(&full_sample(&model, 2)).unwrap();
        let d = cfg.d_model;
        let c = part.num_classes + 1;
        assert_eq!(out.m_long.shape(), &[cfg.long_queries[1], d]);
        assert_eq!(out.m_sa.shape(), &[part.short + part.anticipation, d]);
        assert_eq!(out.m_f.as_ref().unwrap().shape(), &[part.near_future, d]);
        assert_eq!(out.m_sa_refined.as_ref().unwrap().shape(), &[part.short + part.anticipation, d]);
        assert_eq!(out.logits_sa.shape(), &[part.short + part.anticipation, c]);
        assert_eq!(out.logits_sa_refined.as_ref().unwrap().shape(), &[part.short + part.anticipation, c]);
        assert_eq!(out.logits_f.as_ref().unwrap().shape(), &[part.near_future, c]);
    }
}

#[test]
fn compressed_length_is_independent_of_long_window() {
    for long in [4, 16, 64] {
        let part = PartitionConfig {
            long,
            ..tiny_partition(0)
        };
        let model = Model::new(part, tiny_config(), 0).unwrap();
        let out = model.forward(&full_sample(&model, 1)).unwrap();
        assert_eq!(out.m_long.shape(), &[2, 8]);
    }
}

#[test]
fn logits_finite_on_fifty_samples() {
    let model = audit_model(0, false, true, 4);
    let stream = random_stream(120, &model.partition, 9);
    for k in 0..50 {
        let sample: TrainingSample = extract_windows(&stream, (k * 7) % 120, &model.partition).unwrap();
        let out = model.forward(&sample).unwrap();
        assert!(out.logits_sa.all_finite());
        assert!(out.logits_sa_refined.unwrap().all_finite());
        assert!(out.logits_f.unwrap().all_finite());
    }
}

#[test]
fn fully_padded_long_window_uses_a_single_zero_key() {
    let model = tiny_model(3);
    let stream = random_stream(10, &model.partition, 3);
    let sample: TrainingSample = extract_windows(&stream, model.partition.short - 1, &model.partition).unwrap();
    assert!(sample.long_pad.iter().all(|&p| p));

    let mut tape = Tape::new();
    let vars = model.register(&mut tape, false);
    let got = Graph::new(&mut tape, &vars, &model.config, &model.partition)
        .compress_long(&sample.long, &sample.long_pad)
        .unwrap();
    let got = tape.value(got).clone();

    let zero = tape.constant(Tensor::zeros(&[1, 8]));
    let s1 = tdu_forward(&mut tape, vars.long_queries0, zero, zero, None, None, &vars.compress0, 2).unwrap();
    let s2 = tdu_forward(&mut tape, vars.long_queries1, s1, s1, None, None, &vars.compress1, 2).unwrap();
    assert_eq!(&got, tape.value(s2));
    assert!(got.all_finite());
    assert!(model.forward(&sample).unwrap().logits_sa.all_finite());
}

#[test]
fn padded_long_frames_are_ignored() {
    let model = audit_model(0, false, true, 5);
    let stream = random_stream(40, &model.partition, 5);
    let p = &model.partition;
    let anchor = p.short + 2;
    let sample: TrainingSample = extract_windows(&stream, anchor, p).unwrap();
    assert!(sample.long_pad.iter().any(|&x| x) && sample.long_pad.iter().any(|&x| !x));
    let mut altered = sample.clone();
    for (i, &pad) in sample.long_pad.iter().enumerate() {
        if pad {
            perturb_row(&mut altered.long, i, 3.0);
        }
    }
    assert_eq!(model.forward(&sample).unwrap().m_long, model.forward(&altered).unwrap().m_long);
}

#[test]
fn near_future_depends_only_on_long_memory() {
    let model = audit_model(0, false, true, 6);
    let sample = full_sample(&model, 6);
    let base = model.forward(&sample).unwrap();

    let mut s = sample.clone();
    for j in 0..model.partition.short {
        perturb_row(&mut s.short, j, 1.0);
    }
    if let Some(c) = s.context.as_mut() {
        perturb_row(c, 0, 1.0);
    }
    let out = model.forward(&s).unwrap();
    assert_eq!(out.m_f, base.m_f);
    assert_eq!(out.logits_f, base.logits_f);
    assert_ne!(out.m_sa, base.m_sa);

    let mut l = sample.clone();
    perturb_row(&mut l.long, 1, 1.0);
    let out = model.forward(&l).unwrap();
    assert!(out.m_f.unwrap().max_abs_diff(base.m_f.as_ref().unwrap()) > 1e-6);
}

#[test]
fn classifier_is_shared_by_all_heads() {
    let mut model = tiny_model(7);
    let sample = full_sample(&model, 7);
    let out = model.forward(&sample).unwrap();
    let (w, b) = (&model.params.classifier_w, &model.params.classifier_b);
    let apply = |x: &Tensor| {
        let (n, d, c) = (x.rows(), x.cols(), w.cols());
        let mut y = vec![0.0; n * c];
        for i in 0..n {
            for j in 0..c {
                y[i * c + j] = b.data()[j] + (0..d).map(|k| x.get(i, k) * w.get(k, j)).sum::<f64>();
            }
        }
        Tensor::new(vec![n, c], y).unwrap()
    };
    assert!(apply(&out.m_sa).max_abs_diff(&out.logits_sa) < 1e-12);
    assert!(apply(out.m_sa_refined.as_ref().unwrap()).max_abs_diff(out.logits_sa_refined.as_ref().unwrap()) < 1e-12);
    assert!(apply(out.m_f.as_ref().unwrap()).max_abs_diff(out.logits_f.as_ref().unwrap()) < 1e-12);

    let names = model.params.names();
    assert_eq!(names.iter().filter(|n| n.starts_with("classifier")).count(), 2);

    model.params.classifier_w.data_mut()[0] += 1.0;
    let moved = model.forward(&sample).unwrap();
    assert_ne!(moved.logits_sa, out.logits_sa);
    assert_ne!(moved.logits_sa_refined, out.logits_sa_refined);
    assert_ne!(moved.logits_f, out.logits_f);
}

#[test]
fn disabling_refinement_classifies_the_encoder_output() {
    let part = tiny_partition(0);
    let cfg = ModelConfig {
        memory_refinement: false,
        ..tiny_config()
    };
    let model = Model::new(part, cfg, 2).unwrap();
    let out = model.forward(&full_sample(&model, 2)).unwrap();
    assert!(out.m_f.is_none() && out.logits_sa_refined.is_none() && out.logits_f.is_none());
    assert_eq!(out.detection_logits(), &out.logits_sa);
}

#[test]
fn encoder_rows_ignore_later_short_frames() {
    for seed in 0..5 {
        let model = audit_model(0, false, true, seed);
        let sample = full_sample(&model, 10 + seed);
        let base = model.forward(&sample).unwrap();
        let short = model.partition.short;
        for j in 0..short {
            let mut s = sample.clone();
            perturb_row(&mut s.short, j, 0.7);
            let out = model.forward(&s).unwrap();
            for i in 0..short {
                let enc = row_diff(&out.m_sa, &base.m_sa, i);
                let refined = row_diff(
                    out.m_sa_refined.as_ref().unwrap(),
                    base.m_sa_refined.as_ref().unwrap(),
                    i,
                );
                if i < j {
                    assert!(enc < 1e-10, "encoder row {i} moved by {enc} for frame {j}");
                    assert!(refined < 1e-10, "refined row {i} moved by {refined} for frame {j}");
                } else {
                    assert!(enc > 1e-9 && refined > 1e-9, "row {i} insensitive to frame {j}");
                }
            }
        }
    }
}

#[test]
fn leaky_refinement_lets_earlier_rows_see_later_frames() {
    for seed in 0..5 {
        let model = audit_model(0, true, true, seed);
        let sample = full_sample(&model, 20 + seed);
        let base = model.forward(&sample).unwrap();
        let last = model.partition.short - 1;
        let mut s = sample.clone();
        perturb_row(&mut s.short, last, 0.7);
        let out = model.forward(&s).unwrap();
        let moved = row_diff(
            out.m_sa_refined.as_ref().unwrap(),
            base.m_sa_refined.as_ref().unwrap(),
            0,
        );
        assert!(moved > 1e-6, "seed {seed}: row 0 did not react to frame {last}");
        // The encoder itself stays causal; only the refinement leaks.
        assert!(row_diff(&out.m_sa, &base.m_sa, 0) < 1e-10);
    }
}

#[test]
fn zero_latency_audit_is_exactly_causal() {
    for refine in [true, false] {
        for seed in 0..5 {
            let model = audit_model(0, false, refine, seed);
            let r = leakage_audit(&model, &random_sample(&model, seed).unwrap()).unwrap();
            assert!(r.max_noncausal < 1e-9, "refine={refine} seed {seed}: {}", r.max_noncausal);
            for i in 0..model.partition.short {
                assert!(r.sensitivity[i][i] > 1e-9, "position {i} ignores its own frame");
            }
        }
    }
}

#[test]
fn leaky_audit_finds_a_noncausal_path_for_every_seed() {
    for seed in 0..5 {
        let model = audit_model(0, true, true, seed);
        let r = leakage_audit(&model, &random_sample(&model, seed).unwrap()).unwrap();
        assert!(r.max_noncausal > 1e-6, "seed {seed}: {}", r.max_noncausal);
    }
}

#[test]
fn latency_reach_is_exactly_delta() {
    for delta in [1, 2, 4] {
        for seed in 0..3 {
            let model = audit_model(delta, false, true, seed);
            let short = model.partition.short;
            let r = leakage_audit(&model, &random_sample(&model, seed).unwrap()).unwrap();
            assert!(r.max_noncausal < 1e-9, "delta {delta}: {}", r.max_noncausal);
            for i in 0..short {
                let edge = i + delta;
                if edge < short {
                    assert!(r.sensitivity[i][edge] > 1e-9, "delta {delta}: row {i} misses frame {edge}");
                }
                for j in edge + 1..short {
                    assert_eq!(r.sensitivity[i][j], 0.0);
                }
            }
        }
    }
}

#[test]
fn cached_long_branch_reproduces_the_forward_pass() {
    let model = audit_model(0, false, true, 8);
    let sample = full_sample(&model, 8);
    let cache = model.long_cache(&sample).unwrap();
    let a = model.forward(&sample).unwrap();
    let b = model.forward_cached(&sample, &cache).unwrap();
    assert_eq!(a.logits_sa, b.logits_sa);
    assert_eq!(a.logits_sa_refined, b.logits_sa_refined);
    assert_eq!(a.logits_f, b.logits_f);

    let mut other = sample.clone();
    other.long_frames[0] += model.partition.long_subsample as i64;
    assert!(model.forward_cached(&other, &cache).is_err());
}
