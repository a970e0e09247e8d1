//! Online simulation: bookkeeping, truncation invariance and cache equivalence.

mod common;

use std::time::Instant;

use cmert::infer::{cache_compression, run_stream, PredictionRecord, StreamOptions};
use cmert::model::ModelConfig;
use cmert::partition::{extract_windows, PartitionConfig, Preset};
use cmert::{Model, TrainingSample};
use common::{audit_model, random_stream};

/// Predictions only; wall time is diagnostic.
fn same(a: &PredictionRecord, b: &PredictionRecord) -> bool {
    a.t == b.t && a.det == b.det && a.ant == b.ant
}

fn softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

#[test]
fn one_frame_stream_gives_one_record() {
    let model = audit_model(0, false, true, 1);
    let stream = random_stream(1, &model.partition, 1);
    let recs = run_stream(&model, &stream, StreamOptions::default()).unwrap();
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0].t, 0);
    assert_eq!(recs[0].det.len(), model.num_classes());
    assert_eq!(recs[0].ant.len(), model.partition.anticipation);
}

#[test]
fn every_vector_is_a_distribution() {
    let model = audit_model(1, false, true, 2);
    let stream = random_stream(40, &model.partition, 2);
    for r in run_stream(&model, &stream, StreamOptions::default()).unwrap() {
        for p in std::iter::once(&r.det).chain(r.ant.values()) {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }
}

#[test]
fn records_read_the_documented_rows() {
    for delta in [0, 1, 2] {
        let model = audit_model(delta, false, true, 3);
        let p = model.partition.clone();
        let stream = random_stream(30, &p, 3);
        let recs = run_stream(&model, &stream, StreamOptions::default()).unwrap();
        let logits = |t: usize| {
            let s: TrainingSample = extract_windows(&stream, t, &p).unwrap();
            model.forward(&s).unwrap().detection_logits().clone()
        };
        for t in [0, 5, 17, 29] {
            let here = logits(t);
            for tau in 1..=p.anticipation {
                assert_eq!(recs[t].ant[&tau], softmax(here.row(p.short + tau - 1)));
            }
            // With latency the decision for frame t is taken at t + delta.
            let det = if t + delta < stream.len() {
                softmax(logits(t + delta).row(p.short - 1 - delta))
            } else {
                softmax(logits(stream.len() - 1).row(p.short - 1 - (stream.len() - 1 - t)))
            };
            assert_eq!(recs[t].det, det, "delta {delta} frame {t}");
        }
    }
}

#[test]
fn latency_one_on_a_constant_stream_only_shifts_emission() {
    let mut part = common::audit_partition(0);
    part.long = 8;
    let cfg = ModelConfig::desk(8);
    let m0 = Model::new(part.clone(), cfg.clone(), 4).unwrap();
    let m1 = Model {
        partition: part.with_delta(1),
        ..m0.clone()
    };
    let mut stream = random_stream(30, &part, 4);
    let row: Vec<f64> = stream.features.row(0).to_vec();
    for t in 0..stream.len() {
        let d = stream.dim();
        stream.features.data_mut()[t * d..(t + 1) * d].copy_from_slice(&row);
        stream.labels[t] = 1;
    }
    let r0 = run_stream(&m0, &stream, StreamOptions::default()).unwrap();
    let r1 = run_stream(&m1, &stream, StreamOptions::default()).unwrap();
    assert_eq!(r0.len(), r1.len());
    for (a, b) in r0.iter().zip(&r1) {
        assert_eq!(a.t, b.t);
        assert_eq!(a.det.len(), b.det.len());
        assert_eq!(a.ant.keys().collect::<Vec<_>>(), b.ant.keys().collect::<Vec<_>>());
    }
}

#[test]
fn truncation_invariance() {
    for delta in [0, 2] {
        let model = audit_model(delta, false, true, 5);
        let stream = random_stream(48, &model.partition, 5);
        let full = run_stream(&model, &stream, StreamOptions::default()).unwrap();
        for t in 0..stream.len() {
            let cut = stream.truncated(t + 1).unwrap();
            let part = run_stream(&model, &cut, StreamOptions::default()).unwrap();
            // Anticipation at t only uses the window anchored at t.
            assert_eq!(part[t].ant, full[t].ant, "delta {delta} frame {t}");
            // Detection for frame k is final once frame k + delta has arrived.
            for (k, rec) in part.iter().enumerate().take((t + 1).saturating_sub(delta)) {
                assert_eq!(rec.det, full[k].det, "delta {delta}: frame {k} changed after truncation at {t}");
            }
        }
    }
}

#[test]
fn cache_is_bit_exact_over_five_hundred_frames() {
    let part = PartitionConfig {
        long: 64,
        long_subsample: 4,
        ..PartitionConfig::default()
    };
    let model = Model::new(part.clone(), ModelConfig::desk(16), 6).unwrap();
    let stream = random_stream(500, &part, 6);
    let plain = run_stream(&model, &stream, StreamOptions::default()).unwrap();
    let cached = cache_compression(&model, &stream).unwrap();
    let mut max_diff: f64 = 0.0;
    for (a, b) in plain.iter().zip(&cached) {
        for (x, y) in a.det.iter().zip(&b.det).chain(a.ant.values().flatten().zip(b.ant.values().flatten())) {
            max_diff = max_diff.max((x - y).abs());
        }
        assert!(same(a, b));
    }
    assert_eq!(max_diff, 0.0);
    let off = run_stream(&model, &stream, StreamOptions { cache: false }).unwrap();
    assert!(off.iter().zip(&plain).all(|(a, b)| same(a, b)));
}

#[test]
fn cache_speeds_up_th14_shaped_streaming() {
    let part = PartitionConfig {
        feature_dim: 16,
        ..PartitionConfig::preset(Preset::Th14)
    };
    let cfg = ModelConfig {
        d_model: 16,
        heads: 4,
        ffn_hidden: 64,
        ..ModelConfig::preset(Preset::Th14)
    };
    let model = Model::new(part.clone(), cfg, 7).unwrap();
    let stream = random_stream(1200, &part, 7);
    let time = |cache: bool| {
        let start = Instant::now();
        let recs = run_stream(&model, &stream, StreamOptions { cache }).unwrap();
        (start.elapsed().as_secs_f64(), recs)
    };
    let (plain_s, plain) = time(false);
    let (cached_s, cached) = time(true);
    assert!(plain.iter().zip(&cached).all(|(a, b)| same(a, b)));
    let speedup = plain_s / cached_s;
    println!("uncached {plain_s:.2}s cached {cached_s:.2}s speedup {speedup:.2}x");
    assert!(speedup >= 1.2, "speedup {speedup:.2}");
}
