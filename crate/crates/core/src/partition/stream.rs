use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"CMERTSTR";
pub const STREAM_FORMAT_VERSION: u32 = 1;

/// JSON header of the stream container.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamHeader {
    pub t_total: usize,
    pub dim: usize,
    pub fps: f64,
    pub num_classes: usize,
}

/// Pre-extracted frame features with per-frame labels in `0..=num_classes`
/// (0 is background).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStream {
    pub features: Tensor<f64>,
    pub labels: Vec<usize>,
    pub fps: f64,
    pub num_classes: usize,
}

impl FeatureStream {
    pub fn new(features: Tensor<f64>, labels: Vec<usize>, fps: f64, num_classes: usize) -> Result<Self> {
        let s = Self {
            features,
            labels,
            fps,
            num_classes,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let (t, _) = self.features.expect_matrix("stream features")?;
        if t != self.labels.len() {
            return Err(Error::Shape {
                op: "stream labels",
                lhs: self.features.shape().to_vec(),
                rhs: vec![self.labels.len()],
            });
        }
        if let Some((i, &l)) = self.labels.iter().enumerate().find(|(_, &l)| l > self.num_classes) {
            return Err(contract(format!(
                "label {l} at frame {i} exceeds num_classes {}",
                self.num_classes
            )));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(contract("stream fps must be positive"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn header(&self) -> StreamHeader {
        StreamHeader {
            t_total: self.len(),
            dim: self.dim(),
            fps: self.fps,
            num_classes: self.num_classes,
        }
    }

    /// First `len` frames.
    pub fn truncated(&self, len: usize) -> Result<Self> {
        if len == 0 || len > self.len() {
            return Err(contract(format!("cannot truncate stream of {} to {len}", self.len())));
        }
        let d = self.dim();
        let feats = Tensor::new(vec![len, d], self.features.data()[..len * d].to_vec())?;
        Self::new(feats, self.labels[..len].to_vec(), self.fps, self.num_classes)
    }

    /// Container layout (little-endian):
    /// magic `CMERTSTR`, u32 version, u32 header length, JSON header,
    /// `t_total * dim` f64 features (row-major), `t_total` u32 labels.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header())?;
        let mut out = Vec::with_capacity(16 + header.len() + self.features.numel() * 8 + self.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&STREAM_FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for &x in self.features.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
        for &l in &self.labels {
            out.extend_from_slice(&(l as u32).to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| Error::Format("truncated stream magic".into()))?;
        if &magic != MAGIC {
            return Err(Error::Format("not a feature stream file".into()));
        }
        let version = read_u32(&mut r)?;
        if version != STREAM_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported stream version {version}")));
        }
        let hlen = read_u32(&mut r)? as usize;
        if r.len() < hlen {
            return Err(Error::Format("truncated stream header".into()));
        }
        let header: StreamHeader = serde_json::from_slice(&r[..hlen])?;
        r = &r[hlen..];
        let n = header.t_total * header.dim;
        if r.len() != n * 8 + header.t_total * 4 {
            return Err(Error::Format(format!(
                "stream payload has {} bytes, header implies {}",
                r.len(),
                n * 8 + header.t_total * 4
            )));
        }
        let (fbytes, lbytes) = r.split_at(n * 8);
        let feats = fbytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let labels = lbytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
            .collect();
        let features = Tensor::new(vec![header.t_total, header.dim], feats)?;
        Self::new(features, labels, header.fps, header.num_classes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| Error::Format("truncated stream".into()))?;
    Ok(u32::from_le_bytes(b))
}
