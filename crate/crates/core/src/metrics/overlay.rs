use crate::dataio::Frame;
use crate::geometry::{BBox, Detection, GroundTruth};

pub const GT_COLOR: [f32; 3] = [0.0, 1.0, 0.0];
pub const DETECTION_COLOR: [f32; 3] = [1.0, 0.0, 0.0];

fn outline(frame: &mut Frame, b: &BBox, color: [f32; 3]) {
    let (w, h) = (frame.width() as i64, frame.height() as i64);
    if w == 0 || h == 0 {
        return;
    }
    let clampx = |v: f64| (v.floor() as i64).clamp(0, w - 1) as u32;
    let clampy = |v: f64| (v.floor() as i64).clamp(0, h - 1) as u32;
    let (x1, x2) = (clampx(b.x1), clampx(b.x2 - 1e-9));
    let (y1, y2) = (clampy(b.y1), clampy(b.y2 - 1e-9));
    for x in x1..=x2 {
        frame.set_pixel(x, y1, color);
        frame.set_pixel(x, y2, color);
    }
    for y in y1..=y2 {
        frame.set_pixel(x1, y, color);
        frame.set_pixel(x2, y, color);
    }
}

/// Copy of `frame` with ground truth outlined in green and detections at or
/// above `min_confidence` in red.
pub fn draw_overlay(frame: &Frame, gts: &[GroundTruth], detections: &[Detection], min_confidence: f64) -> Frame {
    let mut out = frame.clone();
    for g in gts {
        outline(&mut out, &g.bbox, GT_COLOR);
    }
    for d in detections.iter().filter(|d| d.confidence >= min_confidence) {
        outline(&mut out, &d.bbox, DETECTION_COLOR);
    }
    out
}
