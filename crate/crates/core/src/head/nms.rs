use crate::geometry::{iou, Detection};

/// Greedy non-maximum suppression applied independently per frame and class.
///
/// Detections below `confidence_threshold` are discarded first. Remaining
/// ones are visited in descending confidence (ties keep input order) and
/// kept unless they overlap an already kept box by IoU above
/// `iou_threshold`. Output is in visiting order.
pub fn nms(detections: &[Detection], confidence_threshold: f64, iou_threshold: f64) -> Vec<Detection> {
    let mut order: Vec<&Detection> = detections.iter().filter(|d| d.confidence >= confidence_threshold).collect();
    order.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    let mut kept: Vec<Detection> = Vec::new();
    for d in order {
        let suppressed = kept.iter().any(|k| {
            k.bbox.frame_index == d.bbox.frame_index
                && k.class_id == d.class_id
                && iou(&k.bbox, &d.bbox) > iou_threshold
        });
        if !suppressed {
            kept.push(*d);
        }
    }
    kept
}
