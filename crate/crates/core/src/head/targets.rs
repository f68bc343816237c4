use super::GridGeometry;
use crate::geometry::GroundTruth;

/// Training targets for a stack of frames at one scale. Per-box arrays are
/// `[frames, rows, cols, boxes, k]` flattened row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetMap {
    pub geometry: GridGeometry,
    pub frames: usize,
    /// 1 where a box slot is responsible for an object, `k = 1`.
    pub mask: Vec<f64>,
    /// Cell-relative center offsets in `[0, 1]`, `k = 2`.
    pub xy: Vec<f64>,
    /// Width and height in stride units, `k = 2`.
    pub wh: Vec<f64>,
    /// One-hot class targets, `k = classes`.
    pub cls: Vec<f64>,
    /// Objects that lost their cell to a larger one.
    pub collisions: usize,
}

impl TargetMap {
    pub fn empty(geometry: GridGeometry, frames: usize) -> Self {
        let slots = frames * geometry.cells() * geometry.boxes;
        Self {
            geometry,
            frames,
            mask: vec![0.0; slots],
            xy: vec![0.0; slots * 2],
            wh: vec![0.0; slots * 2],
            cls: vec![0.0; slots * geometry.classes],
            collisions: 0,
        }
    }

    /// Leading shape `[frames, rows, cols, boxes]`.
    pub fn slot_shape(&self, k: usize) -> [usize; 5] {
        let g = self.geometry;
        [self.frames, g.rows, g.cols, g.boxes, k]
    }

    pub fn positives(&self) -> usize {
        self.mask.iter().filter(|&&m| m > 0.0).count()
    }
}

/// Put each object in the cell containing its center. When more objects
/// land in a cell than it has box slots, the largest ones win.
pub fn assign_targets(frames: &[Vec<GroundTruth>], geometry: GridGeometry) -> TargetMap {
    let mut t = TargetMap::empty(geometry, frames.len());
    let g = geometry;
    let s = g.stride as f64;
    for (f, gts) in frames.iter().enumerate() {
        let mut per_cell: Vec<Vec<&GroundTruth>> = vec![Vec::new(); g.cells()];
        for gt in gts {
            let (cx, cy) = gt.bbox.center();
            let col = ((cx / s).floor().max(0.0) as usize).min(g.cols - 1);
            let row = ((cy / s).floor().max(0.0) as usize).min(g.rows - 1);
            per_cell[row * g.cols + col].push(gt);
        }
        for (cell, mut objs) in per_cell.into_iter().enumerate() {
            if objs.is_empty() {
                continue;
            }
            objs.sort_by(|a, b| b.bbox.area().total_cmp(&a.bbox.area()));
            t.collisions += objs.len().saturating_sub(g.boxes);
            let (row, col) = (cell / g.cols, cell % g.cols);
            for (slot, gt) in objs.into_iter().take(g.boxes).enumerate() {
                let i = (f * g.cells() + cell) * g.boxes + slot;
                let (cx, cy, w, h) = gt.bbox.to_center_form();
                t.mask[i] = 1.0;
                t.xy[2 * i] = (cx / s - col as f64).clamp(0.0, 1.0);
                t.xy[2 * i + 1] = (cy / s - row as f64).clamp(0.0, 1.0);
                t.wh[2 * i] = w / s;
                t.wh[2 * i + 1] = h / s;
                if gt.class_id < g.classes {
                    t.cls[i * g.classes + gt.class_id] = 1.0;
                }
            }
        }
    }
    t
}
