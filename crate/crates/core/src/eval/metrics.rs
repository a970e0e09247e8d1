use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// Maximal run of one non-background label, inclusive bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSegment {
    pub start: usize,
    pub end: usize,
    pub label: usize,
}

impl EventSegment {
    /// Number of frames covered.
    pub fn frames(&self) -> usize {
        self.end - self.start + 1
    }

    /// Temporal intersection-over-union in frames.
    pub fn iou(&self, other: &Self) -> f64 {
        let lo = self.start.max(other.start);
        let hi = self.end.min(other.end);
        let inter = if hi >= lo { hi - lo + 1 } else { 0 };
        let union = self.frames() + other.frames() - inter;
        inter as f64 / union as f64
    }
}

/// Maximal constant-label runs with label != 0, in temporal order.
pub fn extract_segments(labels: &[usize]) -> Vec<EventSegment> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < labels.len() {
        let l = labels[i];
        let mut j = i;
        while j + 1 < labels.len() && labels[j + 1] == l {
            j += 1;
        }
        if l != 0 {
            out.push(EventSegment {
                start: i,
                end: j,
                label: l,
            });
        }
        i = j + 1;
    }
    out
}

/// Per-frame argmax (first maximum wins).
pub fn argmax_labels(probs: &[Vec<f64>]) -> Vec<usize> {
    probs
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
                .0
        })
        .collect()
}

fn check_probs(probs: &[Vec<f64>], labels: &[usize]) -> Result<usize> {
    if probs.is_empty() || probs.len() != labels.len() {
        return Err(crate::Error::Shape {
            op: "metric inputs",
            lhs: vec![probs.len()],
            rhs: vec![labels.len()],
        });
    }
    let k = probs[0].len();
    if probs.iter().any(|r| r.len() != k) {
        return Err(contract("probability rows have differing class counts"));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= k) {
        return Err(contract(format!("label {l} out of range for {k} classes")));
    }
    Ok(k)
}

/// Average precision (fraction) of one class: frames ranked by descending
/// score with ties broken by ascending frame index. `None` without positives.
pub fn average_precision(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if positive[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    (hits > 0).then(|| sum / hits as f64)
}

/// Per-class AP (percent) for every non-background class with positives.
pub fn per_class_ap(probs: &[Vec<f64>], labels: &[usize]) -> Result<BTreeMap<usize, f64>> {
    let k = check_probs(probs, labels)?;
    let mut out = BTreeMap::new();
    for c in 1..k {
        let scores: Vec<f64> = probs.iter().map(|r| r[c]).collect();
        let pos: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        if let Some(ap) = average_precision(&scores, &pos) {
            out.insert(c, 100.0 * ap);
        }
    }
    Ok(out)
}

/// Per-frame mAP in percent over non-background classes present in `labels`.
pub fn per_frame_map(probs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    let aps = per_class_ap(probs, labels)?;
    if aps.is_empty() {
        return Err(contract("no action class has a positive frame"));
    }
    Ok(aps.values().sum::<f64>() / aps.len() as f64)
}

/// Mean per-class top-k recall in percent, over non-background classes with
/// at least one frame. Ranking ties favour the lower class index.
pub fn topk_recall(probs: &[Vec<f64>], labels: &[usize], k: usize) -> Result<f64> {
    let classes = check_probs(probs, labels)?;
    if classes < k {
        return Err(contract(format!("top-{k} recall needs at least {k} classes, got {classes}")));
    }
    let mut hits = vec![0usize; classes];
    let mut count = vec![0usize; classes];
    for (row, &l) in probs.iter().zip(labels) {
        count[l] += 1;
        let mut order: Vec<usize> = (0..classes).collect();
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        if order[..k].contains(&l) {
            hits[l] += 1;
        }
    }
    let recalls: Vec<f64> = (1..classes)
        .filter(|&c| count[c] > 0)
        .map(|c| hits[c] as f64 / count[c] as f64)
        .collect();
    if recalls.is_empty() {
        return Err(contract("no action class has a frame"));
    }
    Ok(100.0 * recalls.iter().sum::<f64>() / recalls.len() as f64)
}

/// Mean top-5 recall in percent.
pub fn top5_recall(probs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    topk_recall(probs, labels, 5)
}

/// F1 in percent from match counts; both lists empty scores 100.
pub fn f1_percent(tp: usize, n_pred: usize, n_gt: usize) -> f64 {
    if n_pred == 0 && n_gt == 0 {
        return 100.0;
    }
    if tp == 0 {
        return 0.0;
    }
    let p = tp as f64 / n_pred as f64;
    let r = tp as f64 / n_gt as f64;
    100.0 * 2.0 * p * r / (p + r)
}

/// True positives of the start-point matching: predictions in start order,
/// each taking the earliest-starting unmatched ground truth of the same label
/// with `|start_pred - start_gt| <= tolerance_frames`.
pub fn point_matches(pred: &[EventSegment], gt: &[EventSegment], tolerance_frames: f64) -> usize {
    let mut preds: Vec<&EventSegment> = pred.iter().collect();
    preds.sort_by_key(|s| (s.start, s.end, s.label));
    let mut gts: Vec<&EventSegment> = gt.iter().collect();
    gts.sort_by_key(|s| (s.start, s.end, s.label));
    let mut used = vec![false; gts.len()];
    let mut tp = 0;
    for p in preds {
        let hit = gts.iter().enumerate().find(|(j, g)| {
            !used[*j] && g.label == p.label && (p.start as f64 - g.start as f64).abs() <= tolerance_frames
        });
        if let Some((j, _)) = hit {
            used[j] = true;
            tp += 1;
        }
    }
    tp
}

/// Point-wise F1 (percent) with a tolerance of `threshold_s` seconds.
pub fn point_f1(pred: &[EventSegment], gt: &[EventSegment], threshold_s: f64, fps: f64) -> Result<f64> {
    if !(threshold_s > 0.0 && fps > 0.0) {
        return Err(contract("point F1 needs a positive threshold and fps"));
    }
    let tp = point_matches(pred, gt, threshold_s * fps);
    Ok(f1_percent(tp, pred.len(), gt.len()))
}

/// True positives of greedy same-label matching by descending IoU (ties by
/// prediction then ground-truth index), keeping pairs with IoU >= threshold.
pub fn segment_matches(pred: &[EventSegment], gt: &[EventSegment], iou_threshold: f64) -> usize {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        for (j, g) in gt.iter().enumerate() {
            if p.label == g.label {
                let iou = p.iou(g);
                if iou >= iou_threshold {
                    pairs.push((iou, i, j));
                }
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut pu = vec![false; pred.len()];
    let mut gu = vec![false; gt.len()];
    let mut tp = 0;
    for (_, i, j) in pairs {
        if !pu[i] && !gu[j] {
            pu[i] = true;
            gu[j] = true;
            tp += 1;
        }
    }
    tp
}

/// Segment-wise F1 (percent) at an IoU threshold in `(0, 1]`.
pub fn segment_f1(pred: &[EventSegment], gt: &[EventSegment], iou_threshold: f64) -> Result<f64> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(contract("IoU threshold must lie in (0, 1]"));
    }
    let tp = segment_matches(pred, gt, iou_threshold);
    Ok(f1_percent(tp, pred.len(), gt.len()))
}

/// Levenshtein distance between two label sequences.
pub fn levenshtein(a: &[usize], b: &[usize]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit score (percent) normalized by the longer segment sequence.
pub fn edit_score(pred: &[EventSegment], gt: &[EventSegment]) -> f64 {
    let a: Vec<usize> = pred.iter().map(|s| s.label).collect();
    let b: Vec<usize> = gt.iter().map(|s| s.label).collect();
    let n = a.len().max(b.len());
    if n == 0 {
        return 100.0;
    }
    100.0 * (1.0 - levenshtein(&a, &b) as f64 / n as f64)
}
