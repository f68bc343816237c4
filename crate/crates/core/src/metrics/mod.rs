//! Frame-level detection metrics: greedy matching, precision-recall,
//! 11-point AP, best-F1 operating point, FPPI and encounter rate.

mod curve;
mod evaluate;
mod matching;
mod overlay;
mod rates;

pub use curve::{
    ap_from_curve, average_precision_11pt, best_f1_point, interpolated_precision, pr_curve, F1Point, PrCurve, PrPoint,
};
pub use evaluate::{evaluate, write_pr_csv, write_report_json, EvalConfig, Evaluation, MetricsReport, VideoTruth};
pub use matching::{match_detections, MatchResult, MatchedDetection};
pub use overlay::{draw_overlay, DETECTION_COLOR, GT_COLOR};
pub use rates::{encounter_rate, encounter_threshold_frames, flight_detected, fppi};
