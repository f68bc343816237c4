//! Clip augmentation that can keep one parameter set across all frames.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{Clip, Frame};
use crate::geometry::{BBox, GroundTruth};

pub type Mat3 = [[f64; 3]; 3];

pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
const FILL: f32 = 0.5;

/// Strengths are symmetric half-widths: a strength `s` draws from `[-s, s]`
/// (or `[1 - s, 1 + s]` for scale factors).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub enabled: bool,
    pub consistent: bool,
    /// Chance that each transform family is picked for a clip.
    pub apply_probability: f64,
    pub perspective: f64,
    pub translate: f64,
    pub scale: f64,
    pub degrees: f64,
    pub max_cutouts: usize,
    /// Largest cutout as a fraction of the frame area.
    pub cutout_area: f64,
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub flip_probability: f64,
    /// Boxes smaller than this after warping are dropped (px²).
    pub min_box_area: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            consistent: true,
            apply_probability: 0.5,
            perspective: 0.001,
            translate: 0.1,
            scale: 0.2,
            degrees: 0.0,
            max_cutouts: 2,
            cutout_area: 0.05,
            brightness: 0.3,
            contrast: 0.3,
            saturation: 0.3,
            flip_probability: 0.5,
            min_box_area: 4.0,
        }
    }
}

impl AugmentConfig {
    /// Every strength zero: sampling always yields identity parameters.
    pub fn identity() -> Self {
        Self {
            perspective: 0.0,
            translate: 0.0,
            scale: 0.0,
            degrees: 0.0,
            max_cutouts: 0,
            cutout_area: 0.0,
            brightness: 0.0,
            contrast: 0.0,
            saturation: 0.0,
            flip_probability: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        let strengths = [
            self.perspective,
            self.translate,
            self.scale,
            self.degrees,
            self.cutout_area,
            self.brightness,
            self.contrast,
            self.saturation,
            self.min_box_area,
        ];
        if strengths.iter().any(|s| !(*s >= 0.0)) {
            return Err(crate::Error::Config("augmentation strengths must be non-negative".into()));
        }
        if self.scale >= 1.0 || self.brightness >= 1.0 || self.contrast >= 1.0 || self.saturation > 1.0 {
            return Err(crate::Error::Config("scale factors must stay positive".into()));
        }
        for p in [self.apply_probability, self.flip_probability, self.cutout_area] {
            if !(0.0..=1.0).contains(&p) {
                return Err(crate::Error::Config(format!("probability {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Frame-relative rectangle, coordinates in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    /// Pixel-space homography applied after the optional flip.
    pub perspective: Mat3,
    pub cutout_rects: Vec<Rect>,
    /// `(brightness, contrast, saturation)` multipliers.
    pub color_jitter: (f64, f64, f64),
    pub flip_horizontal: bool,
}

impl AugmentParams {
    pub fn identity() -> Self {
        Self { perspective: IDENTITY, cutout_rects: Vec::new(), color_jitter: (1.0, 1.0, 1.0), flip_horizontal: false }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }

    /// Full source-to-destination map for a frame `width` pixels wide.
    pub fn matrix(&self, width: u32) -> Mat3 {
        if self.flip_horizontal {
            let flip = [[-1.0, 0.0, width as f64], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
            mat_mul(&self.perspective, &flip)
        } else {
            self.perspective
        }
    }
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn det(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub fn invert(m: &Mat3) -> Option<Mat3> {
    let d = det(m);
    if d.abs() < 1e-12 || !d.is_finite() {
        return None;
    }
    let c = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    Some([
        [c(1, 2, 1, 2) / d, -c(0, 2, 1, 2) / d, c(0, 1, 1, 2) / d],
        [-c(1, 2, 0, 2) / d, c(0, 2, 0, 2) / d, -c(0, 1, 0, 2) / d],
        [c(1, 2, 0, 1) / d, -c(0, 2, 0, 1) / d, c(0, 1, 0, 1) / d],
    ])
}

#[inline]
pub fn project(m: &Mat3, x: f64, y: f64) -> (f64, f64) {
    let w = m[2][0] * x + m[2][1] * y + m[2][2];
    ((m[0][0] * x + m[0][1] * y + m[0][2]) / w, (m[1][0] * x + m[1][1] * y + m[1][2]) / w)
}

fn sym(rng: &mut impl Rng, s: f64) -> f64 {
    if s > 0.0 {
        rng.random_range(-s..=s)
    } else {
        0.0
    }
}

/// Draw one parameter set for a `width` x `height` frame.
pub fn sample_params(cfg: &AugmentConfig, width: u32, height: u32, rng: &mut impl Rng) -> AugmentParams {
    let mut p = AugmentParams::identity();
    let (w, h) = (width as f64, height as f64);

    if rng.random_bool(cfg.apply_probability) {
        // centered, normalized coordinates: u = (x - w/2) / l
        let l = w.max(h);
        let to_norm = [[1.0 / l, 0.0, -w / (2.0 * l)], [0.0, 1.0 / l, -h / (2.0 * l)], [0.0, 0.0, 1.0]];
        let from_norm = [[l, 0.0, w / 2.0], [0.0, l, h / 2.0], [0.0, 0.0, 1.0]];
        let proj = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [sym(rng, cfg.perspective), sym(rng, cfg.perspective), 1.0]];
        let angle = sym(rng, cfg.degrees).to_radians();
        let s = 1.0 + sym(rng, cfg.scale);
        let (sn, cs) = angle.sin_cos();
        let rot = [[s * cs, -s * sn, 0.0], [s * sn, s * cs, 0.0], [0.0, 0.0, 1.0]];
        let shift = [[1.0, 0.0, sym(rng, cfg.translate)], [0.0, 1.0, sym(rng, cfg.translate)], [0.0, 0.0, 1.0]];
        let m = mat_mul(&shift, &mat_mul(&rot, &proj));
        let m = mat_mul(&from_norm, &mat_mul(&m, &to_norm));
        if m != IDENTITY && invert(&m).is_some() {
            p.perspective = m;
        }
    }

    if cfg.max_cutouts > 0 && cfg.cutout_area > 0.0 && rng.random_bool(cfg.apply_probability) {
        let n = rng.random_range(1..=cfg.max_cutouts);
        for _ in 0..n {
            let area = rng.random_range(0.0..=cfg.cutout_area);
            let aspect: f64 = rng.random_range(0.5..=2.0);
            let rw = (area * aspect).sqrt().min(1.0);
            let rh = (area / aspect).sqrt().min(1.0);
            let x1 = rng.random_range(0.0..=1.0 - rw);
            let y1 = rng.random_range(0.0..=1.0 - rh);
            if rw > 0.0 && rh > 0.0 {
                p.cutout_rects.push(Rect { x1, y1, x2: x1 + rw, y2: y1 + rh });
            }
        }
    }

    if rng.random_bool(cfg.apply_probability) {
        p.color_jitter = (1.0 + sym(rng, cfg.brightness), 1.0 + sym(rng, cfg.contrast), 1.0 + sym(rng, cfg.saturation));
    }

    p.flip_horizontal = cfg.flip_probability > 0.0 && rng.random_bool(cfg.flip_probability);
    p
}

/// Warp with bilinear sampling at pixel centers; uncovered pixels are gray.
pub fn warp_frame(frame: &Frame, m: &Mat3) -> Frame {
    if *m == IDENTITY {
        return frame.clone();
    }
    let inv = invert(m).expect("augmentation homography must be invertible");
    let (w, h) = (frame.width(), frame.height());
    Frame::from_pixel_fn(w, h, |x, y| {
        let (sx, sy) = project(&inv, x as f64 + 0.5, y as f64 + 0.5);
        bilinear(frame, sx - 0.5, sy - 0.5)
    })
}

fn bilinear(frame: &Frame, x: f64, y: f64) -> [f32; 3] {
    let (w, h) = (frame.width() as i64, frame.height() as i64);
    if !(x > -1.0 && y > -1.0 && x < w as f64 && y < h as f64) {
        return [FILL; 3];
    }
    let (x0, y0) = (x.floor() as i64, y.floor() as i64);
    let (fx, fy) = ((x - x0 as f64) as f32, (y - y0 as f64) as f32);
    let at = |xi: i64, yi: i64| {
        if xi < 0 || yi < 0 || xi >= w || yi >= h {
            [FILL; 3]
        } else {
            frame.pixel(xi as u32, yi as u32)
        }
    };
    let (a, b, c, d) = (at(x0, y0), at(x0 + 1, y0), at(x0, y0 + 1), at(x0 + 1, y0 + 1));
    std::array::from_fn(|k| (a[k] * (1.0 - fx) + b[k] * fx) * (1.0 - fy) + (c[k] * (1.0 - fx) + d[k] * fx) * fy)
}

fn color_jitter(frame: &mut Frame, (b, c, s): (f64, f64, f64)) {
    if (b, c, s) == (1.0, 1.0, 1.0) {
        return;
    }
    let (b, c, s) = (b as f32, c as f32, s as f32);
    for px in frame.data_mut().chunks_exact_mut(3) {
        let gray = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
        for v in px.iter_mut() {
            let sat = gray + (*v - gray) * s;
            *v = (((sat * b) - 0.5) * c + 0.5).clamp(0.0, 1.0);
        }
    }
}

fn cutout(frame: &mut Frame, rects: &[Rect]) {
    let (w, h) = (frame.width() as f64, frame.height() as f64);
    for r in rects {
        let x0 = (r.x1 * w).round() as u32;
        let x1 = ((r.x2 * w).round() as u32).min(frame.width());
        let y0 = (r.y1 * h).round() as u32;
        let y1 = ((r.y2 * h).round() as u32).min(frame.height());
        for y in y0..y1 {
            for x in x0..x1 {
                frame.set_pixel(x, y, [FILL; 3]);
            }
        }
    }
}

/// Warp a box and take the axis-aligned hull, clamped to the frame. `None`
/// when less than `min_area` remains.
pub fn warp_box(b: &BBox, m: &Mat3, width: u32, height: u32, min_area: f64) -> Option<BBox> {
    let corners = [(b.x1, b.y1), (b.x2, b.y1), (b.x1, b.y2), (b.x2, b.y2)].map(|(x, y)| project(m, x, y));
    let hull = BBox {
        x1: corners.iter().map(|c| c.0).fold(f64::INFINITY, f64::min),
        y1: corners.iter().map(|c| c.1).fold(f64::INFINITY, f64::min),
        x2: corners.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max),
        y2: corners.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max),
        frame_index: b.frame_index,
    };
    let clamped = hull.clamp_to_frame(width, height).ok()?;
    (clamped.area() >= min_area && clamped.validate().is_ok()).then_some(clamped)
}

/// Apply one parameter set to a single frame and its boxes. Returns the
/// number of boxes dropped.
pub fn apply_frame(
    frame: &Frame,
    boxes: &[GroundTruth],
    params: &AugmentParams,
    min_box_area: f64,
) -> (Frame, Vec<GroundTruth>, usize) {
    let m = params.matrix(frame.width());
    let mut out = warp_frame(frame, &m);
    color_jitter(&mut out, params.color_jitter);
    cutout(&mut out, &params.cutout_rects);
    let kept: Vec<GroundTruth> = if m == IDENTITY {
        boxes.to_vec()
    } else {
        boxes
            .iter()
            .filter_map(|g| {
                warp_box(&g.bbox, &m, frame.width(), frame.height(), min_box_area)
                    .map(|bbox| GroundTruth { bbox, ..*g })
            })
            .collect()
    };
    let dropped = boxes.len() - kept.len();
    (out, kept, dropped)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Augmented {
    pub clip: Clip,
    /// Parameters used on each frame.
    pub params: Vec<AugmentParams>,
    pub dropped_boxes: usize,
}

/// Apply `params` to every frame of the clip.
pub fn apply(clip: &Clip, params: &AugmentParams, min_box_area: f64) -> Augmented {
    apply_per_frame(clip, vec![params.clone(); clip.tau()], min_box_area)
}

fn apply_per_frame(clip: &Clip, params: Vec<AugmentParams>, min_box_area: f64) -> Augmented {
    let mut out = clip.clone();
    let mut dropped = 0;
    for (t, p) in params.iter().enumerate() {
        let (f, b, d) = apply_frame(&clip.frames[t], &clip.annotations[t], p, min_box_area);
        out.frames[t] = f;
        out.annotations[t] = b;
        dropped += d;
    }
    if dropped > 0 {
        log::debug!("augmentation dropped {dropped} boxes in {}", clip.meta.video_id);
    }
    Augmented { clip: out, params, dropped_boxes: dropped }
}

/// Consistent mode draws one parameter set for the clip; otherwise each
/// frame gets its own draw.
pub fn augment_clip(clip: &Clip, cfg: &AugmentConfig, rng: &mut impl Rng) -> Augmented {
    if !cfg.enabled {
        return Augmented { clip: clip.clone(), params: vec![AugmentParams::identity(); clip.tau()], dropped_boxes: 0 };
    }
    let (w, h) = (clip.meta.width, clip.meta.height);
    let params = if cfg.consistent {
        vec![sample_params(cfg, w, h, rng); clip.tau()]
    } else {
        (0..clip.tau()).map(|_| sample_params(cfg, w, h, rng)).collect()
    };
    apply_per_frame(clip, params, cfg.min_box_area)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::dataio::synthetic::{scene, SyntheticConfig};
    use crate::dataio::{render_video, window_indices};

    fn clip() -> Clip {
        let cfg = SyntheticConfig {
            num_videos: 1,
            frames_per_video: 4,
            resolution: (64, 80),
            target_size_range: ((6.0, 6.0), (10.0, 8.0)),
            blur_probability: 0.0,
            occlusion_probability: 0.0,
            seed: 3,
            ..Default::default()
        };
        Clip::from_indices(&render_video(&cfg, 0).unwrap(), &window_indices(0, 3, 4))
    }

    fn gt(x1: f64, y1: f64, x2: f64, y2: f64) -> GroundTruth {
        GroundTruth { bbox: BBox::new(x1, y1, x2, y2, 0).unwrap(), class_id: 0 }
    }

    #[test]
    fn zero_strengths_give_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = AugmentConfig { apply_probability: 1.0, ..AugmentConfig::identity() };
        for _ in 0..50 {
            assert!(sample_params(&cfg, 64, 64, &mut rng).is_identity());
        }
    }

    #[test]
    fn fixed_seed_same_params() {
        let cfg = AugmentConfig::default();
        let a = sample_params(&cfg, 64, 48, &mut ChaCha8Rng::seed_from_u64(4));
        let b = sample_params(&cfg, 64, 48, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a, b);
    }

    #[test]
    fn samples_stay_in_range() {
        let cfg = AugmentConfig {
            apply_probability: 1.0,
            perspective: 0.001,
            translate: 0.0,
            scale: 0.0,
            ..AugmentConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (w, h) = (64u32, 64u32);
        for _ in 0..1000 {
            let p = sample_params(&cfg, w, h, &mut rng);
            let (b, c, s) = p.color_jitter;
            assert!((0.7..=1.3).contains(&b) && (0.7..=1.3).contains(&c) && (0.7..=1.3).contains(&s));
            assert!((1..=2).contains(&p.cutout_rects.len()));
            for r in &p.cutout_rects {
                assert!(r.x1 >= 0.0 && r.y1 >= 0.0 && r.x2 <= 1.0 + 1e-12 && r.y2 <= 1.0 + 1e-12);
                assert!((r.x2 - r.x1) * (r.y2 - r.y1) <= 0.05 + 1e-12);
            }
            // undo the pixel normalization to recover the projective terms
            let l = w.max(h) as f64;
            let m = p.perspective;
            let norm = m[2][2] + m[2][0] * (w as f64 / 2.0) + m[2][1] * (h as f64 / 2.0);
            let (px, py) = (m[2][0] * l / norm, m[2][1] * l / norm);
            assert!(px.abs() <= 0.001 + 1e-12 && py.abs() <= 0.001 + 1e-12, "{px} {py}");
            assert!(invert(&m).is_some());
        }
    }

    #[test]
    fn identity_params_leave_clip_unchanged() {
        let c = clip();
        let out = apply(&c, &AugmentParams::identity(), 4.0);
        assert_eq!(out.clip, c);
        assert_eq!(out.dropped_boxes, 0);
    }

    #[test]
    fn disabled_config_is_identity() {
        let c = clip();
        let cfg = AugmentConfig { enabled: false, ..AugmentConfig::default() };
        assert_eq!(augment_clip(&c, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).clip, c);
        let ident = AugmentConfig { apply_probability: 1.0, ..AugmentConfig::identity() };
        assert_eq!(augment_clip(&c, &ident, &mut ChaCha8Rng::seed_from_u64(0)).clip, c);
    }

    #[test]
    fn flip_mirrors_boxes_and_pixels() {
        let f = Frame::from_pixel_fn(10, 4, |x, y| [x as f32 / 10.0, y as f32 / 4.0, 0.0]);
        let p = AugmentParams { flip_horizontal: true, ..AugmentParams::identity() };
        let (out, boxes, dropped) = apply_frame(&f, &[gt(1.0, 1.0, 4.0, 3.0)], &p, 0.0);
        assert_eq!(dropped, 0);
        assert_eq!(boxes[0].bbox, BBox::new(6.0, 1.0, 9.0, 3.0, 0).unwrap());
        for y in 0..4 {
            for x in 0..10 {
                assert_eq!(out.pixel(x, y), f.pixel(9 - x, y));
            }
        }
    }

    #[test]
    fn translation_shifts_boxes_exactly() {
        let (dx, dy) = (3.0, -2.0);
        let p = AugmentParams {
            perspective: [[1.0, 0.0, dx], [0.0, 1.0, dy], [0.0, 0.0, 1.0]],
            ..AugmentParams::identity()
        };
        let boxes = [gt(10.0, 10.0, 20.0, 18.0), gt(30.5, 22.25, 41.0, 30.0)];
        let f = Frame::filled(64, 48, 0.2);
        let (out, moved, _) = apply_frame(&f, &boxes, &p, 4.0);
        for (a, b) in boxes.iter().zip(&moved) {
            assert_eq!(b.bbox, BBox::new(a.bbox.x1 + dx, a.bbox.y1 + dy, a.bbox.x2 + dx, a.bbox.y2 + dy, 0).unwrap());
        }
        // revealed border is filled, interior is the shifted constant
        assert_eq!(out.pixel(0, 10), [FILL; 3]);
        assert_eq!(out.pixel(20, 20), [0.2; 3]);
    }

    #[test]
    fn boxes_pushed_outside_are_dropped() {
        let p = AugmentParams {
            perspective: [[1.0, 0.0, 100.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            ..AugmentParams::identity()
        };
        let (_, kept, dropped) = apply_frame(&Frame::filled(64, 64, 0.0), &[gt(1.0, 1.0, 5.0, 5.0)], &p, 4.0);
        assert!(kept.is_empty());
        assert_eq!(dropped, 1);
    }

    #[test]
    fn cutout_keeps_boxes() {
        let p = AugmentParams {
            cutout_rects: vec![Rect { x1: 0.0, y1: 0.0, x2: 0.5, y2: 0.5 }],
            ..AugmentParams::identity()
        };
        let (out, kept, _) = apply_frame(&Frame::filled(8, 8, 0.0), &[gt(1.0, 1.0, 3.0, 3.0)], &p, 4.0);
        assert_eq!(kept.len(), 1);
        assert_eq!(out.pixel(1, 1), [FILL; 3]);
        assert_eq!(out.pixel(6, 6), [0.0; 3]);
    }

    #[test]
    fn consistent_mode_shares_params() {
        let c = clip();
        let cfg = AugmentConfig { apply_probability: 1.0, ..AugmentConfig::default() };
        let out = augment_clip(&c, &cfg, &mut ChaCha8Rng::seed_from_u64(5));
        assert!(out.params.iter().all(|p| *p == out.params[0]));
        assert!(!out.params[0].is_identity());
    }

    #[test]
    fn inconsistent_mode_varies_params() {
        let c = clip();
        let cfg = AugmentConfig { apply_probability: 1.0, consistent: false, ..AugmentConfig::default() };
        let out = augment_clip(&c, &cfg, &mut ChaCha8Rng::seed_from_u64(5));
        assert!(out.params.iter().any(|p| *p != out.params[0]));
    }

    mod props {
        use proptest::prelude::*;

        use super::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn consistent_clips_share_params(seed in any::<u64>(), p in 0.0f64..=1.0) {
                let cfg = AugmentConfig { apply_probability: p, ..AugmentConfig::default() };
                let out = augment_clip(&clip(), &cfg, &mut ChaCha8Rng::seed_from_u64(seed));
                prop_assert!(out.params.iter().all(|q| *q == out.params[0]));
            }

            #[test]
            fn sampled_warps_are_invertible(seed in any::<u64>()) {
                let cfg = AugmentConfig { apply_probability: 1.0, degrees: 10.0, ..AugmentConfig::default() };
                let m = sample_params(&cfg, 80, 64, &mut ChaCha8Rng::seed_from_u64(seed)).matrix(80);
                let p = mat_mul(&m, &invert(&m).unwrap());
                for (row, id) in p.iter().zip(&IDENTITY) {
                    for (a, b) in row.iter().zip(id) {
                        prop_assert!((a - b).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn inverse_is_inverse() {
        let m = [[1.1, 0.05, 3.0], [-0.02, 0.95, -1.0], [1e-4, -2e-4, 1.0]];
        let p = mat_mul(&m, &invert(&m).unwrap());
        for i in 0..3 {
            for j in 0..3 {
                assert!((p[i][j] - IDENTITY[i][j]).abs() < 1e-12);
            }
        }
    }

    /// Warping the rendered frame and locating the target agrees with the
    /// warped annotation.
    #[test]
    fn box_transform_commutes_with_frame_warp() {
        let cfg = SyntheticConfig {
            num_videos: 1,
            frames_per_video: 1,
            resolution: (64, 64),
            target_size_range: ((7.0, 7.0), (10.0, 9.0)),
            targets_per_video: (1, 1),
            blur_probability: 0.0,
            occlusion_probability: 0.0,
            seed: 11,
            ..Default::default()
        };
        let sc = scene(&cfg, 0);
        let (with, without) = (sc.render_layers(0, true), sc.render_layers(0, false));
        let box0 = sc.annotations(0)[0];
        let aug = AugmentConfig {
            apply_probability: 1.0,
            scale: 0.1,
            translate: 0.05,
            degrees: 5.0,
            ..AugmentConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut checked = 0;
        for _ in 0..20 {
            let p = AugmentParams {
                cutout_rects: vec![],
                color_jitter: (1.0, 1.0, 1.0),
                ..sample_params(&aug, 64, 64, &mut rng)
            };
            let Some(b) = warp_box(&box0.bbox, &p.matrix(64), 64, 64, 4.0) else { continue };
            if b.x1 <= 0.0 || b.y1 <= 0.0 || b.x2 >= 64.0 || b.y2 >= 64.0 {
                continue;
            }
            let m = p.matrix(64);
            let (a, z) = (warp_frame(&with, &m), warp_frame(&without, &m));
            let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
            for y in 0..64 {
                for x in 0..64 {
                    let d: f64 = (0..3).map(|c| (a.pixel(x, y)[c] - z.pixel(x, y)[c]).abs() as f64).sum();
                    sw += d;
                    sx += d * (x as f64 + 0.5);
                    sy += d * (y as f64 + 0.5);
                }
            }
            let (cx, cy) = b.center();
            assert!((sx / sw - cx).hypot(sy / sw - cy) <= 1.0);
            checked += 1;
        }
        assert!(checked >= 5);
    }
}
