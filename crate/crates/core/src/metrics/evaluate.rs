use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ap_from_curve, best_f1_point, flight_detected, fppi, match_detections, pr_curve, MatchResult, PrCurve};
use crate::dataio::Annotations;
use crate::geometry::{Detection, GroundTruth, VideoMeta};
use crate::head::DetectionRecord;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Score every this many frames, starting at frame 0.
    pub eval_stride: usize,
    pub iou_threshold: f64,
    /// Continuous-detection window for the encounter rate.
    pub encounter_seconds: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { eval_stride: 4, iou_threshold: 0.5, encounter_seconds: 3.0 }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eval_stride == 0 || !(0.0..=1.0).contains(&self.iou_threshold) || !(self.encounter_seconds > 0.0) {
            return Err(Error::Config("eval stride and encounter window must be positive, IoU in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Unweighted mean of the per-class 11-point AP.
    pub ap: f64,
    pub per_class_ap: BTreeMap<usize, f64>,
    pub best_f1: f64,
    pub precision_at_best_f1: f64,
    pub recall_at_best_f1: f64,
    pub confidence_at_best_f1: f64,
    /// False positives at the best-F1 operating point per evaluated frame.
    pub fppi: f64,
    pub encounter_rate: f64,
    pub fps: Option<f64>,
    pub evaluated_frames: usize,
    pub num_ground_truth: usize,
    pub num_detections: usize,
    pub false_positives: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub curve: PrCurve,
}

/// Ground truth of one video.
#[derive(Clone, Copy, Debug)]
pub struct VideoTruth<'a> {
    pub meta: &'a VideoMeta,
    pub annotations: &'a Annotations,
}

/// Score detections against ground truth on every `eval_stride`-th frame.
pub fn evaluate(records: &[DetectionRecord], videos: &[VideoTruth<'_>], cfg: &EvalConfig) -> Result<Evaluation> {
    cfg.validate()?;
    let by_id: BTreeMap<&str, usize> = videos.iter().enumerate().map(|(i, v)| (v.meta.video_id.as_str(), i)).collect();
    let mut per_video: Vec<Vec<Detection>> = vec![Vec::new(); videos.len()];
    let mut unknown = BTreeSet::new();
    for r in records {
        match by_id.get(r.video_id.as_str()) {
            Some(&i) if r.frame_index < videos[i].meta.frame_count => {
                if r.frame_index % cfg.eval_stride == 0 {
                    per_video[i].push(r.to_detection()?);
                }
            }
            _ => {
                unknown.insert(format!("{}#{}", r.video_id, r.frame_index));
            }
        }
    }
    if !unknown.is_empty() {
        let list: Vec<String> = unknown.into_iter().collect();
        let shown = list.iter().take(20).cloned().collect::<Vec<_>>().join(", ");
        let more = if list.len() > 20 { format!(" and {} more", list.len() - 20) } else { String::new() };
        return Err(Error::UnknownReferences(format!("{shown}{more}")));
    }

    let mut parts = Vec::with_capacity(videos.len());
    let mut all_gts: Vec<GroundTruth> = Vec::new();
    let mut frames = 0;
    let mut gt_frames: Vec<Vec<usize>> = Vec::with_capacity(videos.len());
    for (v, dets) in videos.iter().zip(&per_video) {
        let n = v.meta.frame_count.min(v.annotations.frames.len());
        let eval: Vec<usize> = (0..v.meta.frame_count).step_by(cfg.eval_stride).collect();
        frames += eval.len();
        let gts: Vec<GroundTruth> =
            eval.iter().filter(|&&f| f < n).flat_map(|&f| v.annotations.frames[f].iter().copied()).collect();
        gt_frames.push(eval.iter().copied().filter(|&f| f < n && !v.annotations.frames[f].is_empty()).collect());
        let mut m = match_detections(dets, &gts, cfg.iou_threshold);
        // ground-truth ids index the concatenation over videos
        let offset = all_gts.len();
        for d in &mut m.detections {
            d.gt = d.gt.map(|g| g + offset);
        }
        all_gts.extend(gts);
        parts.push(m);
    }
    let merged = MatchResult::merge(parts.iter().cloned());
    let curve = pr_curve(&merged);

    let classes: BTreeSet<usize> =
        all_gts.iter().map(|g| g.class_id).chain(merged.detections.iter().map(|d| d.class_id)).collect();
    let per_class_ap: BTreeMap<usize, f64> =
        classes.iter().map(|&c| (c, ap_from_curve(&pr_curve(&merged.for_class(c, &all_gts))))).collect();
    let ap = if per_class_ap.is_empty() { 1.0 } else { per_class_ap.values().sum::<f64>() / per_class_ap.len() as f64 };

    let best = best_f1_point(&curve).ok();
    let threshold = best.map_or(f64::INFINITY, |b| b.confidence);
    let kept = |d: &super::MatchedDetection| d.confidence >= threshold;
    let false_positives = merged.detections.iter().filter(|d| kept(d) && !d.is_tp()).count();

    let mut flights = Vec::new();
    for ((v, frames_with_gt), part) in videos.iter().zip(&gt_frames).zip(&parts) {
        if frames_with_gt.is_empty() {
            continue;
        }
        let hits: BTreeSet<usize> =
            part.detections.iter().filter(|d| d.is_tp() && kept(d)).map(|d| d.frame_index).collect();
        let flight: Vec<(usize, bool)> = frames_with_gt.iter().map(|&f| (f, hits.contains(&f))).collect();
        flights.push(flight_detected(&flight, v.meta.fps, cfg.encounter_seconds, cfg.eval_stride));
    }
    let encounter =
        if flights.is_empty() { 0.0 } else { flights.iter().filter(|&&d| d).count() as f64 / flights.len() as f64 };

    let report = MetricsReport {
        ap,
        per_class_ap,
        best_f1: best.map_or(0.0, |b| b.f1),
        precision_at_best_f1: best.map_or(0.0, |b| b.precision),
        recall_at_best_f1: best.map_or(0.0, |b| b.recall),
        confidence_at_best_f1: best.map_or(0.0, |b| b.confidence),
        fppi: fppi(false_positives, frames.max(1))?,
        encounter_rate: encounter,
        fps: None,
        evaluated_frames: frames,
        num_ground_truth: all_gts.len(),
        num_detections: merged.detections.len(),
        false_positives,
    };
    Ok(Evaluation { report, curve })
}

pub fn write_report_json(path: &Path, report: &MetricsReport) -> Result<()> {
    let json = serde_json::to_string_pretty(report).map_err(|e| Error::json(path.display().to_string(), e))?;
    std::fs::write(path, json + "\n").map_err(|e| Error::io(path.display().to_string(), e))
}

/// `confidence,precision,recall` rows in descending confidence.
pub fn write_pr_csv(path: &Path, curve: &PrCurve) -> Result<()> {
    let ctx = || path.display().to_string();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(ctx(), e.into()))?;
    w.write_record(["confidence", "precision", "recall"]).map_err(|e| Error::io(ctx(), e.into()))?;
    for p in &curve.points {
        w.write_record([p.confidence.to_string(), p.precision.to_string(), p.recall.to_string()])
            .map_err(|e| Error::io(ctx(), e.into()))?;
    }
    w.flush().map_err(|e| Error::io(ctx(), e))
}
