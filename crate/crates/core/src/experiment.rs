//! Train-then-evaluate runs and ablation variants built from a [`RunConfig`].

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::dataio::{render_split, DatasetIndex, Split, Video};
use crate::head::DetectionRecord;
use crate::metrics::{evaluate, EvalConfig, Evaluation, VideoTruth};
use crate::model::Detector;
use crate::nn::ParamSet;
use crate::pipeline::{infer_video, train, InferenceConfig, TrainOutcome};
use crate::{Error, Result};

/// Videos of `split`, read from the configured dataset or rendered.
pub fn load_videos(cfg: &RunConfig, split: Split) -> Result<Vec<Video>> {
    match &cfg.data.root {
        Some(root) => DatasetIndex::load(root)?.load_split(split),
        None => render_split(&cfg.data.synthetic, split),
    }
}

/// Detections for every frame of every video.
pub fn predict_records(
    detector: &Detector,
    params: &ParamSet<f32>,
    videos: &[Video],
    inference: &InferenceConfig,
) -> Result<Vec<DetectionRecord>> {
    let mut out = Vec::new();
    for v in videos {
        let dets = infer_video(detector, params, v, inference)?;
        out.extend(dets.iter().map(|d| DetectionRecord::from_detection(&v.meta.video_id, d)));
    }
    Ok(out)
}

pub fn evaluate_videos(records: &[DetectionRecord], videos: &[Video], cfg: &EvalConfig) -> Result<Evaluation> {
    let truth: Vec<VideoTruth<'_>> =
        videos.iter().map(|v| VideoTruth { meta: &v.meta, annotations: &v.annotations }).collect();
    evaluate(records, &truth, cfg)
}

pub struct ExperimentResult {
    pub outcome: TrainOutcome,
    pub records: Vec<DetectionRecord>,
    pub evaluation: Evaluation,
}

pub fn train_and_evaluate(
    cfg: &RunConfig,
    train_videos: &[Video],
    eval_videos: &[Video],
    checkpoint_dir: Option<&Path>,
) -> Result<ExperimentResult> {
    cfg.validate()?;
    let outcome = train(&cfg.model, &cfg.train, train_videos, checkpoint_dir)?;
    let records = predict_records(&outcome.detector, &outcome.checkpoint.params, eval_videos, &cfg.inference())?;
    let evaluation = evaluate_videos(&records, eval_videos, &cfg.eval)?;
    Ok(ExperimentResult { outcome, records, evaluation })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AblationAxis {
    Tau,
    Resolution,
    Tca,
    Attention,
}

impl FromStr for AblationAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tau" => Ok(Self::Tau),
            "resolution" => Ok(Self::Resolution),
            "tca" => Ok(Self::Tca),
            "attention" => Ok(Self::Attention),
            other => Err(Error::Config(format!("unknown ablation axis {other:?} (tau, resolution, tca, attention)"))),
        }
    }
}

impl fmt::Display for AblationAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Tau => "tau",
            Self::Resolution => "resolution",
            Self::Tca => "tca",
            Self::Attention => "attention",
        })
    }
}

/// Named variants of `base` along `axis`:
/// - tau: 1, 3 and 5 frames
/// - resolution: the base side, 1.25x and 2x (rounded up to multiples of 32)
/// - tca: consistent and per-frame (inconsistent) augmentation
/// - attention: 0, 1 and 2 attention layer pairs on every scale
pub fn ablation_variants(base: &RunConfig, axis: AblationAxis) -> Vec<(String, RunConfig)> {
    let with = |name: String, f: &dyn Fn(&mut RunConfig)| {
        let mut c = base.clone();
        f(&mut c);
        (name, c)
    };
    match axis {
        AblationAxis::Tau => [1, 3, 5].iter().map(|&t| with(format!("tau={t}"), &|c| c.train.tau = t)).collect(),
        AblationAxis::Resolution => {
            let r = base.train.resolution;
            [r, (r * 5 / 4).div_ceil(32) * 32, 2 * r]
                .iter()
                .map(|&r| with(format!("resolution={r}"), &|c| c.train.resolution = r))
                .collect()
        }
        AblationAxis::Tca => [true, false]
            .iter()
            .map(|&k| {
                let name = if k { "tca=consistent" } else { "tca=inconsistent" };
                with(name.into(), &|c| {
                    c.train.augment.enabled = true;
                    c.train.augment.consistent = k;
                })
            })
            .collect(),
        AblationAxis::Attention => [0, 1, 2]
            .iter()
            .map(|&d| {
                with(format!("depth={d}"), &|c| {
                    for a in &mut c.model.attention {
                        a.geometry.depth = d;
                    }
                })
            })
            .collect(),
    }
}
