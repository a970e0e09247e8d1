//! Brute-force reference implementations of the metrics, written without
//! sorting or shared helpers so they fail independently of the library.
#![allow(dead_code)]

use std::collections::HashMap;

use cmert::eval::EventSegment;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Precision at the rank of every positive, counting frames that beat it
/// (higher score, or equal score and lower index).
pub fn brute_ap(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    if n_pos == 0 {
        return None;
    }
    let ahead = |i: usize, j: usize| scores[j] > scores[i] || (scores[j] == scores[i] && j <= i);
    let mut total = 0.0;
    for i in (0..scores.len()).filter(|&i| positive[i]) {
        let rank = (0..scores.len()).filter(|&j| ahead(i, j)).count();
        let hits = (0..scores.len()).filter(|&j| positive[j] && ahead(i, j)).count();
        total += hits as f64 / rank as f64;
    }
    Some(total / n_pos as f64)
}

/// Mean AP in percent over non-background classes with positives.
pub fn brute_map(probs: &[Vec<f64>], labels: &[usize]) -> Option<f64> {
    let classes = probs[0].len();
    let aps: Vec<f64> = (1..classes)
        .filter_map(|c| {
            let scores: Vec<f64> = probs.iter().map(|p| p[c]).collect();
            let pos: Vec<bool> = labels.iter().map(|&l| l == c).collect();
            brute_ap(&scores, &pos)
        })
        .collect();
    (!aps.is_empty()).then(|| 100.0 * aps.iter().sum::<f64>() / aps.len() as f64)
}

/// A frame hits when fewer than five classes outrank its label (higher
/// probability, or equal probability and lower index).
pub fn brute_top5(probs: &[Vec<f64>], labels: &[usize]) -> Option<f64> {
    let classes = probs[0].len();
    let mut recalls = Vec::new();
    for c in 1..classes {
        let frames: Vec<usize> = (0..labels.len()).filter(|&t| labels[t] == c).collect();
        if frames.is_empty() {
            continue;
        }
        let hits = frames
            .iter()
            .filter(|&&t| {
                let p = &probs[t];
                (0..classes).filter(|&k| p[k] > p[c] || (p[k] == p[c] && k < c)).count() < 5
            })
            .count();
        recalls.push(hits as f64 / frames.len() as f64);
    }
    (!recalls.is_empty()).then(|| 100.0 * recalls.iter().sum::<f64>() / recalls.len() as f64)
}

/// Segments by marking run boundaries in one pass.
pub fn scan_segments(labels: &[usize]) -> Vec<EventSegment> {
    let mut out: Vec<EventSegment> = Vec::new();
    for (t, &l) in labels.iter().enumerate() {
        let continues = t > 0 && labels[t - 1] == l;
        if l == 0 {
            continue;
        }
        if continues {
            out.last_mut().expect("open run").end = t;
        } else {
            out.push(EventSegment { start: t, end: t, label: l });
        }
    }
    out
}

/// Maximum number of disjoint pairs among `eligible(i, j)`, by exhaustive
/// search over assignments with memoization on the used ground-truth set.
pub fn optimal_matching(n_pred: usize, n_gt: usize, eligible: impl Fn(usize, usize) -> bool) -> usize {
    assert!(n_gt <= 64);
    fn go(
        i: usize,
        used: u64,
        n_pred: usize,
        n_gt: usize,
        eligible: &dyn Fn(usize, usize) -> bool,
        memo: &mut HashMap<(usize, u64), usize>,
    ) -> usize {
        if i == n_pred {
            return 0;
        }
        if let Some(&v) = memo.get(&(i, used)) {
            return v;
        }
        let mut best = go(i + 1, used, n_pred, n_gt, eligible, memo);
        for j in 0..n_gt {
            if used & (1 << j) == 0 && eligible(i, j) {
                best = best.max(1 + go(i + 1, used | (1 << j), n_pred, n_gt, eligible, memo));
            }
        }
        memo.insert((i, used), best);
        best
    }
    go(0, 0, n_pred, n_gt, &eligible, &mut HashMap::new())
}

pub fn start_eligible(p: &EventSegment, g: &EventSegment, tol: f64) -> bool {
    p.label == g.label && (p.start as f64 - g.start as f64).abs() <= tol
}

/// Brute-force IoU: count shared frames one by one.
pub fn brute_iou(a: &EventSegment, b: &EventSegment) -> f64 {
    let inter = (a.start..=a.end).filter(|t| (b.start..=b.end).contains(t)).count();
    let union = (a.start.min(b.start)..=a.end.max(b.end))
        .filter(|t| (a.start..=a.end).contains(t) || (b.start..=b.end).contains(t))
        .count();
    inter as f64 / union as f64
}

/// Greedy by repeatedly scanning every unmatched pair for the largest IoU
/// (first prediction, then first ground truth, on ties).
pub fn brute_segment_matches(pred: &[EventSegment], gt: &[EventSegment], thr: f64) -> usize {
    let mut pu = vec![false; pred.len()];
    let mut gu = vec![false; gt.len()];
    let mut tp = 0;
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..pred.len() {
            for j in 0..gt.len() {
                if pu[i] || gu[j] || pred[i].label != gt[j].label {
                    continue;
                }
                let iou = brute_iou(&pred[i], &gt[j]);
                if iou >= thr && best.is_none_or(|b| iou > b.0) {
                    best = Some((iou, i, j));
                }
            }
        }
        match best {
            Some((_, i, j)) => {
                pu[i] = true;
                gu[j] = true;
                tp += 1;
            }
            None => return tp,
        }
    }
}

/// Levenshtein distance by memoized recursion over suffixes.
pub fn recursive_levenshtein(a: &[usize], b: &[usize]) -> usize {
    fn go(a: &[usize], b: &[usize], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if i == a.len() {
            return b.len() - j;
        }
        if j == b.len() {
            return a.len() - i;
        }
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let v = if a[i] == b[j] {
            go(a, b, i + 1, j + 1, memo)
        } else {
            1 + go(a, b, i + 1, j + 1, memo)
                .min(go(a, b, i + 1, j, memo))
                .min(go(a, b, i, j + 1, memo))
        };
        memo.insert((i, j), v);
        v
    }
    go(a, b, 0, 0, &mut HashMap::new())
}

pub fn f1(tp: usize, n_pred: usize, n_gt: usize) -> f64 {
    if n_pred == 0 && n_gt == 0 {
        return 100.0;
    }
    if tp == 0 {
        return 0.0;
    }
    200.0 * tp as f64 / (n_pred + n_gt) as f64
}

/// Labels made of runs of 1..=max_run frames, background included.
pub fn random_labels(rng: &mut impl Rng, len: usize, classes: usize, max_run: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(len);
    while out.len() < len {
        let l = rng.random_range(0..=classes);
        let run = rng.random_range(1..=max_run);
        out.extend(std::iter::repeat_n(l, run.min(len - out.len())));
    }
    out
}

/// Noisy probabilities that favour the true label, quantized to force ties.
pub fn random_probs(rng: &mut impl Rng, labels: &[usize], classes: usize, quantize: bool) -> Vec<Vec<f64>> {
    labels
        .iter()
        .map(|&l| {
            let mut row: Vec<f64> = (0..=classes).map(|_| rng.random::<f64>()).collect();
            row[l] += rng.random::<f64>();
            if quantize {
                for v in &mut row {
                    *v = (*v * 4.0).round() / 4.0;
                }
            }
            row
        })
        .collect()
}

/// One randomized instance: labels, predictions derived by corrupting them,
/// and frame probabilities.
pub struct Instance {
    pub labels: Vec<usize>,
    pub pred_labels: Vec<usize>,
    pub probs: Vec<Vec<f64>>,
}

pub fn instance(seed: u64, classes: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = rng.random_range(5..=50);
    let labels = random_labels(&mut rng, len, classes, 6);
    let pred_labels = labels
        .iter()
        .map(|&l| if rng.random::<f64>() < 0.25 { rng.random_range(0..=classes) } else { l })
        .collect();
    let probs = random_probs(&mut rng, &labels, classes, seed.is_multiple_of(3));
    Instance {
        labels,
        pred_labels,
        probs,
    }
}
