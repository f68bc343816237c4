use crate::geometry::{iou, Detection, GroundTruth};

/// Outcome for one detection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchedDetection {
    /// Position in the input slice.
    pub index: usize,
    pub confidence: f64,
    pub frame_index: usize,
    pub class_id: usize,
    /// Matched ground truth (position in the input slice), if any.
    pub gt: Option<usize>,
}

impl MatchedDetection {
    pub fn is_tp(&self) -> bool {
        self.gt.is_some()
    }
}

/// Detections in descending confidence (ties keep input order) with their
/// match, plus which ground truths were found.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MatchResult {
    pub detections: Vec<MatchedDetection>,
    pub gt_matched: Vec<bool>,
}

impl MatchResult {
    pub fn true_positives(&self) -> usize {
        self.detections.iter().filter(|d| d.is_tp()).count()
    }

    pub fn false_positives(&self) -> usize {
        self.detections.len() - self.true_positives()
    }

    pub fn total_gt(&self) -> usize {
        self.gt_matched.len()
    }

    /// Combine results of disjoint sets of frames, keeping the global
    /// confidence order.
    pub fn merge(parts: impl IntoIterator<Item = MatchResult>) -> MatchResult {
        let mut out = MatchResult::default();
        for p in parts {
            out.detections.extend(p.detections);
            out.gt_matched.extend(p.gt_matched);
        }
        out.detections.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
        out
    }

    /// Restrict to one class.
    pub fn for_class(&self, class_id: usize, gts: &[GroundTruth]) -> MatchResult {
        MatchResult {
            detections: self.detections.iter().filter(|d| d.class_id == class_id).copied().collect(),
            gt_matched: self
                .gt_matched
                .iter()
                .zip(gts)
                .filter(|(_, g)| g.class_id == class_id)
                .map(|(&m, _)| m)
                .collect(),
        }
    }
}

/// Greedy matching: in descending confidence, each detection takes the
/// unmatched ground truth of the same frame and class with the highest IoU,
/// provided that IoU reaches `iou_threshold`.
pub fn match_detections(detections: &[Detection], gts: &[GroundTruth], iou_threshold: f64) -> MatchResult {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| detections[b].confidence.total_cmp(&detections[a].confidence));
    let mut taken = vec![false; gts.len()];
    let mut out = Vec::with_capacity(detections.len());
    for i in order {
        let d = &detections[i];
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in gts.iter().enumerate() {
            if taken[j] || g.bbox.frame_index != d.bbox.frame_index || g.class_id != d.class_id {
                continue;
            }
            let o = iou(&d.bbox, &g.bbox);
            if o >= iou_threshold && best.is_none_or(|(_, b)| o > b) {
                best = Some((j, o));
            }
        }
        if let Some((j, _)) = best {
            taken[j] = true;
        }
        out.push(MatchedDetection {
            index: i,
            confidence: d.confidence,
            frame_index: d.bbox.frame_index,
            class_id: d.class_id,
            gt: best.map(|(j, _)| j),
        });
    }
    MatchResult { detections: out, gt_matched: taken }
}
