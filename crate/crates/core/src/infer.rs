//! Online simulation: a stride-1 sliding window from frame 0 that emits one
//! detection per frame (delayed by the model's latency) plus anticipations.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::model::{ForwardOutputs, LongCache, Model};
use crate::partition::{extract_windows, FeatureStream};
use crate::scalar::Scalar;

/// Predictions for one frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub t: usize,
    /// Detection probabilities over `C + 1` classes.
    pub det: Vec<f64>,
    /// Anticipation probabilities keyed by horizon `tau` in `1..=T_a`, issued at time `t`.
    pub ant: BTreeMap<usize, Vec<f64>>,
    /// Seconds spent on the window that produced the detection (diagnostic; not serialized).
    #[serde(skip)]
    pub wall_time: f64,
}

/// Streaming options.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StreamOptions {
    /// Reuse the long-term branch across windows with unchanged long-term content.
    pub cache: bool,
}

fn softmax_row(row: &[f64]) -> Vec<f64> {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|&x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Detection for frame `t - delta` comes from the window anchored at `t`,
/// short-term row `T_s - 1 - delta`. The last `delta` frames are read from the
/// final window. Anticipation for record `t` uses the window anchored at `t`.
pub fn run_stream<S: Scalar>(model: &Model<S>, stream: &FeatureStream, opts: StreamOptions) -> Result<Vec<PredictionRecord>> {
    if stream.is_empty() {
        return Err(contract("stream must have at least one frame"));
    }
    if stream.dim() != model.partition.feature_dim {
        return Err(Error::Shape {
            op: "run_stream feature dim",
            lhs: vec![stream.dim()],
            rhs: vec![model.partition.feature_dim],
        });
    }
    let p = &model.partition;
    let (short, delta, ant) = (p.short, p.delta, p.anticipation);
    let n = stream.len();
    let mut records: Vec<PredictionRecord> = (0..n)
        .map(|t| PredictionRecord {
            t,
            det: Vec::new(),
            ant: BTreeMap::new(),
            wall_time: 0.0,
        })
        .collect();
    let mut cache: Option<LongCache<S>> = None;

    for t in 0..n {
        let start = Instant::now();
        let sample = extract_windows::<S>(stream, t, p)?;
        let out: ForwardOutputs<S> = if opts.cache {
            let key = sample.long_key();
            if cache.as_ref().is_none_or(|c| c.key != key) {
                cache = Some(model.long_cache(&sample)?);
            }
            model.forward_cached(&sample, cache.as_ref().expect("filled"))?
        } else {
            model.forward(&sample)?
        };
        let logits = out.detection_logits().cast::<f64>();
        let elapsed = start.elapsed().as_secs_f64();

        for tau in 1..=ant {
            records[t].ant.insert(tau, softmax_row(logits.row(short + tau - 1)));
        }
        if t >= delta {
            let r = &mut records[t - delta];
            r.det = softmax_row(logits.row(short - 1 - delta));
            r.wall_time = elapsed;
        }
        if t == n - 1 {
            for k in 0..delta.min(n) {
                let r = &mut records[n - 1 - k];
                r.det = softmax_row(logits.row(short - 1 - k));
                r.wall_time = elapsed;
            }
        }
    }
    Ok(records)
}

/// [`run_stream`] with the long-term branch cached.
pub fn cache_compression<S: Scalar>(model: &Model<S>, stream: &FeatureStream) -> Result<Vec<PredictionRecord>> {
    run_stream(model, stream, StreamOptions { cache: true })
}

/// Writes records as line-delimited JSON.
pub fn write_dump(records: &[PredictionRecord], mut w: impl Write) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a line-delimited JSON dump; errors name the 1-based line.
pub fn read_dump(r: impl BufRead) -> Result<Vec<PredictionRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PredictionRecord =
            serde_json::from_str(&line).map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_is_a_distribution() {
        let p = softmax_row(&[1.0, -2.0, 1000.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[2] > 0.999);
    }

    #[test]
    fn dump_roundtrip_and_line_errors() {
        let rec = PredictionRecord {
            t: 3,
            det: vec![0.25, 0.75],
            ant: BTreeMap::from([(1, vec![0.5, 0.5])]),
            wall_time: 1.0,
        };
        let mut buf = Vec::new();
        write_dump(std::slice::from_ref(&rec), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text, "{\"t\":3,\"det\":[0.25,0.75],\"ant\":{\"1\":[0.5,0.5]}}\n");
        let back = read_dump(buf.as_slice()).unwrap();
        assert_eq!(back[0].det, rec.det);
        buf.extend_from_slice(b"{oops\n");
        let err = read_dump(buf.as_slice()).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }
}
