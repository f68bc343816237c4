use serde::{Deserialize, Serialize};

use super::train::frames_tensor;
use crate::dataio::{sliding_windows, Frame, Video};
use crate::geometry::{BBox, Detection};
use crate::head::nms;
use crate::model::Detector;
use crate::nn::ParamSet;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    /// Square network input side; frames are resized to it.
    pub resolution: usize,
    pub nms_iou: f64,
    pub confidence_threshold: f64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self { resolution: 640, nms_iou: 0.6, confidence_threshold: 0.001 }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        crate::backbone::check_divisible(self.resolution, self.resolution, crate::backbone::MAX_STRIDE)?;
        if !(0.0..=1.0).contains(&self.nms_iou) || !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(Error::Config("NMS and confidence thresholds must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Decoded and suppressed detections for `frames` (one window of exactly
/// `tau` frames), in original pixel coordinates. `indices` labels the
/// frames; only the first `keep` of them are reported.
fn run_window(
    detector: &Detector,
    params: &ParamSet<f32>,
    frames: &[&Frame],
    indices: &[usize],
    keep: usize,
    cfg: &InferenceConfig,
) -> Result<Vec<Detection>> {
    let r = cfg.resolution as u32;
    let (w, h) = (frames[0].width(), frames[0].height());
    let resized: Vec<Frame>;
    let input = if (w, h) == (r, r) {
        frames_tensor(frames.iter().copied())
    } else {
        resized = frames.iter().map(|f| f.resize(r, r)).collect();
        frames_tensor(&resized)
    };
    let preds = detector.predict(params, input)?;
    let (sx, sy) = (w as f64 / r as f64, h as f64 / r as f64);
    let mut out = Vec::new();
    for (scales, &index) in preds.iter().zip(indices).take(keep) {
        let mut dets = Vec::new();
        for p in scales {
            for d in p.decode(index, r, r, cfg.confidence_threshold) {
                let b = d.bbox.scaled(sx, sy);
                let bbox = BBox {
                    x1: b.x1.min(w as f64),
                    x2: b.x2.min(w as f64),
                    y1: b.y1.min(h as f64),
                    y2: b.y2.min(h as f64),
                    ..b
                };
                if bbox.validate().is_ok() {
                    dets.push(Detection { bbox, ..d });
                }
            }
        }
        out.extend(nms(&dets, cfg.confidence_threshold, cfg.nms_iou));
    }
    Ok(out)
}

/// Predict every frame of `video` once, using non-overlapping windows of the
/// detector's `tau` frames; the last window is padded by repeating the final
/// frame.
pub fn infer_video(
    detector: &Detector,
    params: &ParamSet<f32>,
    video: &Video,
    cfg: &InferenceConfig,
) -> Result<Vec<Detection>> {
    cfg.validate()?;
    let n = video.frames.len().min(video.meta.frame_count);
    if n == 0 {
        return Err(Error::NoFrames);
    }
    let tau = detector.tau();
    let mut out = Vec::new();
    for (w, idx) in sliding_windows(n, tau).into_iter().enumerate() {
        let frames: Vec<&Frame> = idx.iter().map(|&i| &video.frames[i]).collect();
        let keep = (n - w * tau).min(tau);
        out.extend(run_window(detector, params, &frames, &idx, keep, cfg)?);
    }
    Ok(out)
}
