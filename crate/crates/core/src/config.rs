//! The run configuration: every knob of an experiment in one document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dataio::{Split, SyntheticConfig};
use crate::metrics::EvalConfig;
use crate::model::ModelConfig;
use crate::pipeline::{InferenceConfig, TrainConfig};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset directory (or its `index.json`); synthetic data is rendered
    /// in memory when absent.
    pub root: Option<PathBuf>,
    pub train_split: Split,
    pub eval_split: Split,
    pub synthetic: SyntheticConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { root: None, train_split: Split::Train, eval_split: Split::Test, synthetic: SyntheticConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub nms_iou: f64,
    pub confidence: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { nms_iou: 0.6, confidence: 0.001 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub thresholds: Thresholds,
    pub eval: EvalConfig,
}

impl RunConfig {
    /// Desk-scale setup: 64x64 synthetic frames, three-frame clips and the
    /// toy network.
    pub fn toy() -> Self {
        let mut cfg = Self { model: ModelConfig::toy(), ..Self::default() };
        cfg.data.synthetic = SyntheticConfig {
            num_videos: 60,
            frames_per_video: 32,
            resolution: (64, 64),
            target_size_range: ((5.0, 4.0), (10.0, 8.0)),
            target_speed_range: (0.5, 1.5),
            ego_motion_amplitude: 0.5,
            test_fraction: 1.0 / 6.0,
            ..SyntheticConfig::default()
        };
        cfg.train.tau = 3;
        cfg.train.resolution = 64;
        cfg.train.total_steps = 2000;
        cfg.train.batch_size = 2;
        cfg.train.lr0 = 2e-3;
        cfg.train.warmup_steps = 50;
        cfg.train.grad_clip = Some(10.0);
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.data.synthetic.validate()?;
        self.model.validate(self.train.tau)?;
        self.train.validate()?;
        self.inference().validate()?;
        self.eval.validate()
    }

    pub fn inference(&self) -> InferenceConfig {
        InferenceConfig {
            resolution: self.train.resolution,
            nms_iou: self.thresholds.nms_iou,
            confidence_threshold: self.thresholds.confidence,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::json(path.display().to_string(), e))?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path.display().to_string(), e))
    }

    /// Apply `key.path=value` overrides. Values parse as JSON, falling back
    /// to a plain string; the key must already exist.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut doc = serde_json::to_value(self).map_err(|e| Error::json("config", e))?;
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) =
                o.split_once('=').ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            let mut node = &mut doc;
            for part in key.split('.') {
                node = match node {
                    Value::Object(map) => map.get_mut(part),
                    Value::Array(items) => part.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
                    _ => None,
                }
                .ok_or_else(|| Error::Config(format!("unknown config key {key:?}")))?;
            }
            *node = value;
        }
        let cfg: Self = serde_json::from_value(doc).map_err(|e| Error::json("config override", e))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_stated_values() {
        let c = RunConfig::default();
        assert_eq!(c.train.tau, 5);
        assert_eq!((c.train.loss.lambda_noobj, c.train.loss.lambda_coord), (5.0, 5.0));
        assert_eq!((c.thresholds.nms_iou, c.thresholds.confidence), (0.6, 0.001));
        assert_eq!((c.eval.iou_threshold, c.eval.eval_stride), (0.5, 4));
        assert_eq!((c.train.lr0, c.train.momentum), (3e-5, 0.843));
        c.validate().unwrap();
        RunConfig::toy().validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"train": {"lr": 0.1}}"#).unwrap_err();
        assert!(err.to_string().contains("unknown field"));
        let partial: RunConfig = serde_json::from_str(r#"{"train": {"tau": 3}}"#).unwrap();
        assert_eq!(partial.train.tau, 3);
        assert_eq!(partial.train.resolution, 640);
    }

    #[test]
    fn overrides() {
        let c = RunConfig::default()
            .with_overrides(&["train.tau=3", "model.attention.0.geometry.depth=2", "data.root=/tmp/x"])
            .unwrap();
        assert_eq!(c.train.tau, 3);
        assert_eq!(c.model.attention[0].geometry.depth, 2);
        assert_eq!(c.data.root.as_deref(), Some(Path::new("/tmp/x")));
        assert!(matches!(RunConfig::default().with_overrides(&["train.nope=1"]), Err(Error::Config(_))));
        assert!(RunConfig::default().with_overrides(&["train.resolution=100"]).is_err());
        assert!(RunConfig::default().with_overrides(&["train.tau"]).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.json");
        let c = RunConfig::toy();
        c.save(&p).unwrap();
        assert_eq!(RunConfig::load(&p).unwrap(), c);
    }
}
