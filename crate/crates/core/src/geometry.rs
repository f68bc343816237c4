//! Boxes, detections and box geometry.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Axis-aligned box in pixel coordinates, corner form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub frame_index: usize,
}

impl BBox {
    /// Validated constructor: finite coordinates and positive width and height.
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64, frame_index: usize) -> Result<Self> {
        let b = Self { x1, y1, x2, y2, frame_index };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x1, self.y1, self.x2, self.y2].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidBox(format!("non-finite coordinates in {self:?}")));
        }
        if self.x2 <= self.x1 || self.y2 <= self.y1 {
            return Err(Error::InvalidBox(format!("({}, {}, {}, {}) has no area", self.x1, self.y1, self.x2, self.y2)));
        }
        Ok(())
    }

    pub fn from_center_form(cx: f64, cy: f64, w: f64, h: f64, frame_index: usize) -> Result<Self> {
        Self::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0, frame_index)
    }

    /// `(cx, cy, w, h)`.
    pub fn to_center_form(&self) -> (f64, f64, f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0, self.x2 - self.x1, self.y2 - self.y1)
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1).max(0.0) * (self.y2 - self.y1).max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    /// Clip to `[0, width] x [0, height]`. Fails when nothing of the box remains.
    pub fn clamp_to_frame(&self, width: u32, height: u32) -> Result<Self> {
        let (w, h) = (width as f64, height as f64);
        let c = Self {
            x1: self.x1.clamp(0.0, w),
            y1: self.y1.clamp(0.0, h),
            x2: self.x2.clamp(0.0, w),
            y2: self.y2.clamp(0.0, h),
            frame_index: self.frame_index,
        };
        if c.x2 <= c.x1 || c.y2 <= c.y1 {
            return Err(Error::BoxOutsideFrame { x1: self.x1, y1: self.y1, x2: self.x2, y2: self.y2, width, height });
        }
        Ok(c)
    }

    pub fn scaled(&self, sx: f64, sy: f64) -> Self {
        Self { x1: self.x1 * sx, y1: self.y1 * sy, x2: self.x2 * sx, y2: self.y2 * sy, ..*self }
    }

    fn same_coords(&self, other: &BBox) -> bool {
        self.x1 == other.x1 && self.y1 == other.y1 && self.x2 == other.x2 && self.y2 == other.y2
    }
}

/// Intersection over union. Identical boxes give exactly 1; a degenerate box
/// overlaps nothing else.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    if a.same_coords(b) {
        return 1.0;
    }
    let (aa, ab) = (a.area(), b.area());
    if aa <= 0.0 || ab <= 0.0 {
        return 0.0;
    }
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    (inter / (aa + ab - inter)).clamp(0.0, 1.0)
}

/// A scored prediction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub confidence: f64,
    pub class_id: usize,
}

impl Detection {
    pub fn new(bbox: BBox, confidence: f64, class_id: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::InvalidBox(format!("confidence {confidence} outside [0, 1]")));
        }
        Ok(Self { bbox, confidence, class_id })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub bbox: BBox,
    pub class_id: usize,
}

/// Per-video metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub video_id: String,
    pub frame_count: usize,
    pub width: u32,
    pub height: u32,
    pub fps: f64,
}

impl VideoMeta {
    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::Config(format!("video {}: fps must be positive", self.video_id)));
        }
        if self.frame_count == 0 {
            return Err(Error::Config(format!("video {}: needs at least one frame", self.video_id)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config(format!("video {}: empty resolution", self.video_id)));
        }
        Ok(())
    }
}
