//! Binary checkpoint: magic `CMERTCKP`, u32 version, u32 header length, JSON
//! header, then every parameter as little-endian f64 in canonical order.

use std::fs;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::partition::PartitionConfig;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"CMERTCKP";
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    dtype: String,
    partition: PartitionConfig,
    model: ModelConfig,
    params: Vec<ParamEntry>,
}

impl<S: Scalar> Model<S> {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut entries = Vec::new();
        let mut data = Vec::new();
        self.params.visit("", &mut |name, t| {
            entries.push(ParamEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
            });
            for &x in t.data() {
                data.extend_from_slice(&x.to_f64_lossless().to_le_bytes());
            }
        });
        let header = serde_json::to_vec(&Header {
            format_version: CHECKPOINT_FORMAT_VERSION,
            dtype: S::DTYPE.to_string(),
            partition: self.partition.clone(),
            model: self.config.clone(),
            params: entries,
        })?;
        let mut out = Vec::with_capacity(16 + header.len() + data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&data);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| Error::Format("truncated checkpoint".into()))?;
        if &magic != MAGIC {
            return Err(Error::Format("not a checkpoint file".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word).map_err(|_| Error::Format("truncated checkpoint".into()))?;
        let version = u32::from_le_bytes(word);
        if version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        r.read_exact(&mut word).map_err(|_| Error::Format("truncated checkpoint".into()))?;
        let hlen = u32::from_le_bytes(word) as usize;
        if r.len() < hlen {
            return Err(Error::Format("truncated checkpoint header".into()));
        }
        let header: Header = serde_json::from_slice(&r[..hlen])?;
        let mut payload = &r[hlen..];

        // Rebuild the structure, then overwrite every tensor from the payload.
        let mut model = Model::<S>::new(header.partition, header.model, 0)?;
        let mut entries = header.params.into_iter();
        let mut failure: Option<Error> = None;
        model.params.visit_mut("", &mut |name, t| {
            if failure.is_some() {
                return;
            }
            let Some(entry) = entries.next() else {
                failure = Some(Error::Format(format!("checkpoint is missing parameter {name}")));
                return;
            };
            if entry.name != name || entry.shape != t.shape() {
                failure = Some(Error::Format(format!(
                    "checkpoint parameter {} {:?} does not match {name} {:?}",
                    entry.name,
                    entry.shape,
                    t.shape()
                )));
                return;
            }
            let n = t.numel();
            if payload.len() < n * 8 {
                failure = Some(Error::Format("truncated checkpoint payload".into()));
                return;
            }
            let (chunk, rest) = payload.split_at(n * 8);
            payload = rest;
            let values = chunk
                .chunks_exact(8)
                .map(|c| S::from_f64_lossy(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
                .collect();
            *t = Tensor::new(entry.shape.clone(), values).expect("shape checked");
        });
        if let Some(e) = failure {
            return Err(e);
        }
        if entries.next().is_some() || !payload.is_empty() {
            return Err(Error::Format("checkpoint has trailing data".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
