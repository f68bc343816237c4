//! Grid decoding, target assignment, losses and suppression.

mod loss;
mod nms;
mod records;
mod targets;

use serde::{Deserialize, Serialize};

pub use loss::{
    classification_loss, decode_vars, localization_loss, objectness_loss, scale_losses, total_loss, Decoded, LossTerms,
    LossWeights,
};
pub use nms::nms;
pub use records::{read_detections_jsonl, write_detections_jsonl, DetectionRecord};
pub use targets::{assign_targets, TargetMap};

use crate::geometry::{BBox, Detection};
use crate::tensor::{Scalar, Tensor};

/// Bound on `tw`/`th` before exponentiation.
pub const SIZE_LOGIT_CLAMP: f64 = 4.0;

/// Shape of one scale's output grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub rows: usize,
    pub cols: usize,
    pub stride: usize,
    /// Boxes predicted per cell.
    pub boxes: usize,
    pub classes: usize,
}

impl GridGeometry {
    /// Values per box: `tx, ty, tw, th, obj` and the class logits.
    pub fn fields(&self) -> usize {
        5 + self.classes
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }
}

/// Raw head output of one frame at one scale, `[rows, cols, boxes, 5 + C]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridPrediction<T> {
    pub raw: Tensor<T>,
    pub geometry: GridGeometry,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<T: Scalar> GridPrediction<T> {
    pub fn new(raw: Tensor<T>, geometry: GridGeometry) -> Self {
        assert_eq!(
            raw.shape(),
            &[geometry.rows, geometry.cols, geometry.boxes, geometry.fields()],
            "grid prediction shape does not match its geometry"
        );
        Self { raw, geometry }
    }

    /// Detections in pixel space for a `width` x `height` frame, skipping
    /// those below `min_confidence`. Boxes are clamped to the frame.
    pub fn decode(&self, frame_index: usize, width: u32, height: u32, min_confidence: f64) -> Vec<Detection> {
        let g = self.geometry;
        let s = g.stride as f64;
        let f = g.fields();
        let mut out = Vec::new();
        for (cell, chunk) in self.raw.data().chunks_exact(g.boxes * f).enumerate() {
            let (row, col) = (cell / g.cols, cell % g.cols);
            for p in chunk.chunks_exact(f) {
                let p: Vec<f64> = p.iter().map(|v| v.as_f64()).collect();
                let obj = sigmoid(p[4]);
                let (class_id, cls) = (0..g.classes)
                    .map(|c| (c, sigmoid(p[5 + c])))
                    .fold((0, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best });
                let confidence = if g.classes == 0 { obj } else { obj * cls };
                if !(confidence >= min_confidence) {
                    continue;
                }
                let cx = (col as f64 + sigmoid(p[0])) * s;
                let cy = (row as f64 + sigmoid(p[1])) * s;
                let w = s * p[2].clamp(-SIZE_LOGIT_CLAMP, SIZE_LOGIT_CLAMP).exp();
                let h = s * p[3].clamp(-SIZE_LOGIT_CLAMP, SIZE_LOGIT_CLAMP).exp();
                let raw = BBox { x1: cx - w / 2.0, y1: cy - h / 2.0, x2: cx + w / 2.0, y2: cy + h / 2.0, frame_index };
                if let Ok(bbox) = raw.clamp_to_frame(width, height) {
                    out.push(Detection { bbox, confidence, class_id });
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: usize, cols: usize, stride: usize) -> GridGeometry {
        GridGeometry { rows, cols, stride, boxes: 1, classes: 1 }
    }

    fn one_hot(geom: GridGeometry, row: usize, col: usize, vals: [f64; 6]) -> GridPrediction<f64> {
        let mut raw = vec![-20.0; geom.cells() * 6];
        let base = (row * geom.cols + col) * 6;
        raw[base..base + 6].copy_from_slice(&vals);
        GridPrediction::new(Tensor::from_vec(&[geom.rows, geom.cols, 1, 6], raw), geom)
    }

    #[test]
    fn midpoint_offsets_and_unit_size() {
        let d = one_hot(grid(4, 4, 8), 0, 0, [0.0, 0.0, 0.0, 0.0, 10.0, 10.0]).decode(0, 64, 64, 0.5);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].bbox.center(), (4.0, 4.0));
        assert_eq!((d[0].bbox.width(), d[0].bbox.height()), (8.0, 8.0));
    }

    #[test]
    fn decode_arithmetic() {
        // cell (row 3, col 2) at stride 16, tw = ln 2
        let d = one_hot(grid(8, 8, 16), 3, 2, [0.0, 0.0, 2f64.ln(), 0.0, 10.0, 10.0]).decode(0, 128, 128, 0.5);
        let (cx, cy, w, h) = d[0].bbox.to_center_form();
        assert!((cx - 40.0).abs() < 1e-12 && (cy - 56.0).abs() < 1e-12);
        assert!((w - 32.0).abs() < 1e-12 && (h - 16.0).abs() < 1e-12);
    }

    #[test]
    fn confidence_is_objectness_times_class() {
        let d = one_hot(grid(1, 1, 8), 0, 0, [0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).decode(0, 8, 8, 0.0);
        assert!((d[0].confidence - 0.25).abs() < 1e-12);
    }

    #[test]
    fn size_logits_are_clamped_and_boxes_clipped() {
        let d = one_hot(grid(2, 2, 8), 0, 0, [0.0, 0.0, 9.0, 0.0, 10.0, 10.0]).decode(0, 16, 16, 0.5);
        assert_eq!(d[0].bbox.x1, 0.0);
        assert_eq!(d[0].bbox.x2, 16.0);
    }
}
