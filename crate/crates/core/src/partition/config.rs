use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

/// Where a context partition sits relative to the short-term window.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextPlacement {
    /// Near-past: `[t_s - T_c, t_s)`. Near-future: `[t_s, t_s + T_f)`.
    #[default]
    Near,
    /// Distant-past: `[t_s - T_c - T_s, t_s - T_s)`. Distant-future: `[t, t + T_f)`.
    Distant,
}

/// Dataset presets for partition lengths and training hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Th14,
    Ek100,
    Crosstask,
}

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "th14" | "thumos" => Ok(Self::Th14),
            "ek100" => Ok(Self::Ek100),
            "crosstask" | "ct" => Ok(Self::Crosstask),
            other => Err(format!("unknown preset `{other}` (expected th14, ek100 or crosstask)")),
        }
    }
}

/// Frame counts of the five partitions plus stream geometry.
///
/// `num_classes` counts action classes only; label 0 is background, so
/// classifiers emit `num_classes + 1` logits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PartitionConfig {
    pub long: usize,
    pub short: usize,
    pub anticipation: usize,
    pub near_past: usize,
    pub near_future: usize,
    pub fps: f64,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub delta: usize,
    pub long_subsample: usize,
    pub past_context: ContextPlacement,
    pub future_context: ContextPlacement,
}

impl Default for PartitionConfig {
    /// Desk-scale geometry used by the synthetic benchmark.
    fn default() -> Self {
        Self {
            long: 32,
            short: 8,
            anticipation: 2,
            near_past: 2,
            near_future: 12,
            fps: 4.0,
            feature_dim: 16,
            num_classes: 4,
            delta: 0,
            long_subsample: 2,
            past_context: ContextPlacement::Near,
            future_context: ContextPlacement::Near,
        }
    }
}

fn frames(seconds: f64, fps: f64) -> usize {
    (seconds * fps).round() as usize
}

impl PartitionConfig {
    /// Builds a config from partition lengths in seconds.
    #[allow(clippy::too_many_arguments)]
    pub fn from_seconds(
        long: f64,
        short: f64,
        anticipation: f64,
        near_past: f64,
        near_future: f64,
        fps: f64,
        long_subsample: usize,
    ) -> Self {
        Self {
            long: frames(long, fps),
            short: frames(short, fps),
            anticipation: frames(anticipation, fps),
            near_past: frames(near_past, fps),
            near_future: frames(near_future, fps),
            fps,
            long_subsample,
            ..Self::default()
        }
    }

    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Th14 => Self::from_seconds(256.0, 4.0, 2.0, 0.5, 12.0, 4.0, 4),
            Preset::Ek100 => Self::from_seconds(128.0, 8.0, 2.0, 2.0, 8.0, 4.0, 4),
            Preset::Crosstask => Self::from_seconds(128.0, 10.0, 2.0, 8.0, 12.0, 1.0, 4),
        }
    }

    /// Partition lengths in seconds: (long, short, anticipation, near-past, near-future).
    pub fn seconds(&self) -> (f64, f64, f64, f64, f64) {
        let s = |n: usize| n as f64 / self.fps;
        (
            s(self.long),
            s(self.short),
            s(self.anticipation),
            s(self.near_past),
            s(self.near_future),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("long", self.long),
            ("short", self.short),
            ("anticipation", self.anticipation),
            ("near_future", self.near_future),
            ("feature_dim", self.feature_dim),
            ("num_classes", self.num_classes),
            ("long_subsample", self.long_subsample),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(config_err(field, "must be >= 1"));
            }
        }
        if self.near_past >= self.long {
            return Err(config_err("near_past", "must be smaller than long"));
        }
        if !self.long.is_multiple_of(self.long_subsample) {
            return Err(config_err("long_subsample", "must divide long"));
        }
        if self.delta >= self.short {
            return Err(config_err("delta", "must be smaller than short"));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(config_err("fps", "must be positive"));
        }
        Ok(())
    }

    /// Number of long-term tokens after subsampling.
    pub fn long_tokens(&self) -> usize {
        self.long / self.long_subsample
    }

    /// Encoder query length: near-past + short + anticipation.
    pub fn encoder_len(&self) -> usize {
        self.near_past + self.short + self.anticipation
    }

    /// Short + anticipation.
    pub fn sa_len(&self) -> usize {
        self.short + self.anticipation
    }

    /// Timeline position of the first near-future token. Timeline position 0
    /// is the first near-past token.
    pub fn future_offset(&self) -> usize {
        match self.future_context {
            ContextPlacement::Near => self.near_past,
            ContextPlacement::Distant => self.near_past + self.short - 1,
        }
    }

    pub fn with_delta(&self, delta: usize) -> Self {
        Self {
            delta,
            ..self.clone()
        }
    }
}
