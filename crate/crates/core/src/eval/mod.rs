//! Frame-wise and event-wise metrics plus model diagnostics.

mod diagnostics;
mod metrics;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::infer::PredictionRecord;

pub use diagnostics::{leakage_audit, per_position_diagnostic, random_sample, LeakageReport, PerPositionReport};
pub use metrics::{
    argmax_labels, average_precision, f1_percent, edit_score, extract_segments, levenshtein, per_class_ap, per_frame_map,
    point_f1, point_matches, segment_f1, segment_matches, top5_recall, topk_recall, EventSegment,
};

/// Thresholds of the event-wise metrics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Start-point tolerance in seconds.
    pub pf1_threshold_s: f64,
    /// IoU threshold of the segment F1.
    pub sf1_iou: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            pf1_threshold_s: 1.0,
            sf1_iou: 0.25,
        }
    }
}

/// Scores in percent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub frames: usize,
    pub per_frame_map: f64,
    pub per_class_ap: BTreeMap<usize, f64>,
    /// Only defined with at least five classes.
    pub mean_top5_recall: Option<f64>,
    /// Top-1 frame accuracy.
    pub accuracy: f64,
    pub pf1: f64,
    pub pf1_threshold_s: f64,
    pub sf1: f64,
    pub sf1_iou: f64,
    pub edit: f64,
    /// mAP of anticipations at each horizon against the label `tau` frames ahead.
    pub anticipation_map: BTreeMap<usize, f64>,
}

/// Scores a prediction dump against ground-truth labels of the same stream.
pub fn evaluate(records: &[PredictionRecord], labels: &[usize], fps: f64, opts: EvalOptions) -> Result<MetricReport> {
    evaluate_streams(&[(records, labels)], fps, opts)
}

/// Scores several streams: frame-level metrics pool every frame, event
/// metrics pool matches, and the edit score is averaged over streams.
pub fn evaluate_streams(
    streams: &[(&[PredictionRecord], &[usize])],
    fps: f64,
    opts: EvalOptions,
) -> Result<MetricReport> {
    if streams.is_empty() {
        return Err(contract("evaluation needs at least one stream"));
    }
    let mut probs: Vec<Vec<f64>> = Vec::new();
    let mut all_labels: Vec<usize> = Vec::new();
    let mut ant: BTreeMap<usize, (Vec<Vec<f64>>, Vec<usize>)> = BTreeMap::new();
    let (mut ptp, mut stp, mut n_pred, mut n_gt) = (0, 0, 0, 0);
    let mut edits = Vec::with_capacity(streams.len());
    for &(records, labels) in streams {
        if records.len() != labels.len() {
            return Err(crate::Error::Shape {
                op: "evaluate",
                lhs: vec![records.len()],
                rhs: vec![labels.len()],
            });
        }
        if let Some((i, r)) = records.iter().enumerate().find(|(i, r)| r.t != *i) {
            return Err(contract(format!("record {i} is for frame {}; dumps must be in frame order", r.t)));
        }
        let p: Vec<Vec<f64>> = records.iter().map(|r| r.det.clone()).collect();
        let pred_segs = extract_segments(&argmax_labels(&p));
        let gt_segs = extract_segments(labels);
        ptp += point_matches(&pred_segs, &gt_segs, opts.pf1_threshold_s * fps);
        stp += segment_matches(&pred_segs, &gt_segs, opts.sf1_iou);
        n_pred += pred_segs.len();
        n_gt += gt_segs.len();
        edits.push(edit_score(&pred_segs, &gt_segs));
        for r in records {
            for (&tau, v) in &r.ant {
                if r.t + tau < labels.len() {
                    let e = ant.entry(tau).or_default();
                    e.0.push(v.clone());
                    e.1.push(labels[r.t + tau]);
                }
            }
        }
        probs.extend(p);
        all_labels.extend_from_slice(labels);
    }
    if !(opts.pf1_threshold_s > 0.0 && fps > 0.0) {
        return Err(contract("point F1 needs a positive threshold and fps"));
    }
    if !(opts.sf1_iou > 0.0 && opts.sf1_iou <= 1.0) {
        return Err(contract("IoU threshold must lie in (0, 1]"));
    }
    let per_class = per_class_ap(&probs, &all_labels)?;
    if per_class.is_empty() {
        return Err(contract("no action class has a positive frame"));
    }
    let map = per_class.values().sum::<f64>() / per_class.len() as f64;
    let top5 = if probs[0].len() >= 5 {
        Some(top5_recall(&probs, &all_labels)?)
    } else {
        None
    };
    let correct = argmax_labels(&probs).iter().zip(&all_labels).filter(|(a, b)| a == b).count();
    let anticipation_map = ant
        .into_iter()
        .filter_map(|(tau, (p, y))| per_frame_map(&p, &y).ok().map(|m| (tau, m)))
        .collect();

    Ok(MetricReport {
        frames: all_labels.len(),
        per_frame_map: map,
        per_class_ap: per_class,
        mean_top5_recall: top5,
        accuracy: 100.0 * correct as f64 / all_labels.len() as f64,
        pf1: f1_percent(ptp, n_pred, n_gt),
        pf1_threshold_s: opts.pf1_threshold_s,
        sf1: f1_percent(stp, n_pred, n_gt),
        sf1_iou: opts.sf1_iou,
        edit: edits.iter().sum::<f64>() / edits.len() as f64,
        anticipation_map,
    })
}
