//! Per-directory record of what produced the files in it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use cmert::model::CHECKPOINT_FORMAT_VERSION;
use cmert::partition::STREAM_FORMAT_VERSION;
use serde::{Deserialize, Serialize};

use crate::error::CliResult;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT_VERSION: u32 = 1;
/// Version of the line-delimited prediction dump and training log.
pub const DUMP_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub artifact_version: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub formats: BTreeMap<String, u32>,
    pub status: String,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
}

pub fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

impl RunManifest {
    pub fn new(command: &str, config_hash: String, seed: Option<u64>) -> Self {
        let formats = BTreeMap::from([
            ("manifest".to_string(), MANIFEST_FORMAT_VERSION),
            ("stream".to_string(), STREAM_FORMAT_VERSION),
            ("checkpoint".to_string(), CHECKPOINT_FORMAT_VERSION),
            ("dump".to_string(), DUMP_FORMAT_VERSION),
        ]);
        Self {
            command: command.to_string(),
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            formats,
            status: "ok".to_string(),
            started_unix_s: now(),
            finished_unix_s: 0.0,
        }
    }

    /// Writes `manifest.json` into `dir`, replacing any earlier one.
    pub fn write(mut self, dir: &Path) -> CliResult<()> {
        self.finished_unix_s = now();
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, serde_json::to_vec_pretty(&self)?)?;
        Ok(())
    }
}
