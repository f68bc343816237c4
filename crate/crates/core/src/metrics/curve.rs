use serde::{Deserialize, Serialize};

use super::MatchResult;
use crate::{Error, Result};

/// Operating point obtained by keeping every detection with confidence at
/// least `confidence`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub confidence: f64,
    pub precision: f64,
    pub recall: f64,
    pub true_positives: usize,
    pub detections: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    /// One point per distinct confidence, in descending confidence.
    pub points: Vec<PrPoint>,
    pub total_gt: usize,
}

pub fn pr_curve(matches: &MatchResult) -> PrCurve {
    let total_gt = matches.total_gt();
    let dets = &matches.detections;
    let mut points = Vec::new();
    let mut tp = 0;
    for (i, d) in dets.iter().enumerate() {
        tp += d.is_tp() as usize;
        let last_of_level = dets.get(i + 1).is_none_or(|n| n.confidence != d.confidence);
        if last_of_level {
            let n = i + 1;
            points.push(PrPoint {
                confidence: d.confidence,
                precision: tp as f64 / n as f64,
                recall: if total_gt == 0 { 0.0 } else { tp as f64 / total_gt as f64 },
                true_positives: tp,
                detections: n,
            });
        }
    }
    PrCurve { points, total_gt }
}

/// Interpolated precision at recall `level / 10`: the best precision among
/// points whose recall reaches it, or 0.
pub fn interpolated_precision(curve: &PrCurve, level: usize) -> f64 {
    curve
        .points
        .iter()
        .filter(|p| 10 * p.true_positives >= level * curve.total_gt)
        .map(|p| p.precision)
        .fold(0.0, f64::max)
}

/// Mean interpolated precision over recall 0, 0.1, ..., 1. With no ground
/// truth the result is 1 when there are also no detections and 0 otherwise.
pub fn average_precision_11pt(matches: &MatchResult) -> f64 {
    ap_from_curve(&pr_curve(matches))
}

pub fn ap_from_curve(curve: &PrCurve) -> f64 {
    if curve.total_gt == 0 {
        return if curve.points.is_empty() { 1.0 } else { 0.0 };
    }
    (0..=10).map(|l| interpolated_precision(curve, l)).sum::<f64>() / 11.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct F1Point {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confidence: f64,
    pub true_positives: usize,
    pub detections: usize,
}

/// The point maximizing `2PR / (P + R)`, preferring higher recall on ties.
/// F1 equals `2 TP / (detections + GT)`, so it is compared exactly.
pub fn best_f1_point(curve: &PrCurve) -> Result<F1Point> {
    let g = curve.total_gt as u128;
    let better = |a: &PrPoint, b: &PrPoint| {
        let lhs = a.true_positives as u128 * (b.detections as u128 + g);
        let rhs = b.true_positives as u128 * (a.detections as u128 + g);
        lhs > rhs || (lhs == rhs && a.true_positives > b.true_positives)
    };
    let best = curve.points.iter().fold(None::<&PrPoint>, |acc, p| match acc {
        Some(b) if !better(p, b) => Some(b),
        _ => Some(p),
    });
    let p = best.ok_or(Error::EmptyCurve)?;
    let denom = p.detections + curve.total_gt;
    Ok(F1Point {
        precision: p.precision,
        recall: p.recall,
        f1: if denom == 0 { 0.0 } else { 2.0 * p.true_positives as f64 / denom as f64 },
        confidence: p.confidence,
        true_positives: p.true_positives,
        detections: p.detections,
    })
}
