//! Run configuration: defaults or a dataset preset, overlaid with a JSON file.

use std::path::Path;

use cmert::experiment::Benchmark;
use cmert::model::ModelConfig;
use cmert::partition::{PartitionConfig, Preset};
use cmert::train::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{input_err, CliError, CliResult};

/// Everything that determines a trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub partition: PartitionConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    /// Desk-scale defaults, or the settings reported for a dataset.
    pub fn base(preset: Option<Preset>) -> Self {
        match preset {
            Some(p) => Self {
                partition: PartitionConfig::preset(p),
                model: ModelConfig::preset(p),
                train: TrainConfig::preset(p),
            },
            None => {
                let b = Benchmark::default();
                Self {
                    partition: b.partition,
                    model: b.model,
                    train: TrainConfig::default(),
                }
            }
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        self.partition.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        Ok(())
    }
}

/// Reads a JSON object from `path`.
pub fn read_json(path: &Path) -> CliResult<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| input_err(path, e))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| input_err(path, e))?;
    if !v.is_object() {
        return Err(input_err(path, "config must be a JSON object"));
    }
    Ok(v)
}

/// Recursively overwrites `base` with the leaves of `overlay`.
pub fn merge(base: &mut Value, overlay: &Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

/// First key path of `user` that does not survive into `resolved`.
fn unknown_key(user: &Value, resolved: &Value, prefix: &str) -> Option<String> {
    let (Value::Object(u), Value::Object(r)) = (user, resolved) else {
        return None;
    };
    for (k, v) in u {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match r.get(k) {
            None => return Some(path),
            Some(rv) => {
                if let Some(p) = unknown_key(v, rv, &path) {
                    return Some(p);
                }
            }
        }
    }
    None
}

/// Overlays `user` on `base` and rejects fields that do not exist.
pub fn overlay<T: Serialize + for<'de> Deserialize<'de>>(base: &T, user: &Value) -> CliResult<T> {
    let mut v = serde_json::to_value(base)?;
    merge(&mut v, user);
    let out: T = serde_json::from_value(v).map_err(|e| CliError::Input(format!("invalid config: {e}")))?;
    if let Some(key) = unknown_key(user, &serde_json::to_value(&out)?, "") {
        return Err(CliError::Input(format!("unknown config field `{key}`")));
    }
    Ok(out)
}

/// Hex SHA-256 of the canonical JSON form.
pub fn config_hash<T: Serialize>(config: &T) -> CliResult<String> {
    let bytes = serde_json::to_vec(config)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn overlay_replaces_leaves_only() {
        let base = RunConfig::base(None);
        let got: RunConfig = overlay(&base, &json!({"partition": {"short": 5}, "train": {"lr": 0.5}})).unwrap();
        assert_eq!(got.partition.short, 5);
        assert_eq!(got.partition.long, base.partition.long);
        assert_eq!(got.train.lr, 0.5);
        assert_eq!(got.model, base.model);
    }

    #[test]
    fn unknown_fields_are_named() {
        let base = RunConfig::base(None);
        let err = overlay(&base, &json!({"model": {"dmodel": 3}})).unwrap_err();
        assert!(err.to_string().contains("model.dmodel"), "{err}");
        assert!(overlay(&base, &json!({"extra": 1})).is_err());
    }

    #[test]
    fn presets_resolve_reported_values() {
        let th = RunConfig::base(Some(Preset::Th14));
        assert_eq!(th.partition.seconds(), (256.0, 4.0, 2.0, 0.5, 12.0));
        let ct = RunConfig::base(Some(Preset::Crosstask));
        assert_eq!((ct.train.lambda1, ct.train.lambda2), (0.2, 0.5));
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::base(None);
        let mut b = a.clone();
        assert_eq!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        b.train.seed += 1;
        assert_ne!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        assert_eq!(config_hash(&a).unwrap().len(), 64);
    }
}
