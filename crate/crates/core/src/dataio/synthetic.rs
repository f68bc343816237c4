//! Deterministic synthetic drone videos.
//!
//! A textured sky drifts under global affine ego-motion while small elliptical
//! targets follow linear plus sinusoidal paths. Optional effects: motion blur,
//! occlusion gaps (target hidden and unannotated), blinks (target faint but
//! still annotated), and static distractor blobs that move with the
//! background and are never annotated.

use std::f64::consts::TAU;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::index::{frame_file_name, DatasetIndex, IndexEntry, Split};
use super::{write_annotations, Annotations, Frame, Video};
use crate::geometry::{BBox, GroundTruth, VideoMeta};
use crate::{Error, Result};

const SUPERSAMPLE: usize = 4;
const BLUR_TAPS: [f64; 5] = [-0.4, -0.2, 0.0, 0.2, 0.4];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub num_videos: usize,
    pub frames_per_video: usize,
    /// `(height, width)` in pixels.
    pub resolution: (u32, u32),
    /// `((min_w, min_h), (max_w, max_h))` in pixels.
    pub target_size_range: ((f64, f64), (f64, f64)),
    /// Background drift speed, pixels per frame.
    pub ego_motion_amplitude: f64,
    pub blur_probability: f64,
    /// Per-frame chance that a visible target starts an occlusion gap.
    pub occlusion_probability: f64,
    pub seed: u64,
    /// Inclusive range of targets per video.
    pub targets_per_video: (usize, usize),
    /// Target speed range, pixels per frame.
    pub target_speed_range: (f64, f64),
    /// Inclusive range of occlusion gap lengths in frames.
    pub occlusion_gap: (usize, usize),
    pub blink_probability: f64,
    /// Target opacity on blink frames; 0 makes the target vanish while staying labelled.
    pub blink_strength: f64,
    pub distractors: usize,
    pub fps: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        // targets between roughly 0.05% and 0.5% of a 320x320 frame
        Self {
            num_videos: 20,
            frames_per_video: 60,
            resolution: (320, 320),
            target_size_range: ((8.0, 6.0), (26.0, 20.0)),
            ego_motion_amplitude: 1.0,
            blur_probability: 0.1,
            occlusion_probability: 0.02,
            seed: 0,
            targets_per_video: (1, 2),
            target_speed_range: (1.0, 4.0),
            occlusion_gap: (2, 6),
            blink_probability: 0.0,
            blink_strength: 0.3,
            distractors: 0,
            fps: 30.0,
            val_fraction: 0.0,
            test_fraction: 0.2,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let ((wmin, hmin), (wmax, hmax)) = self.target_size_range;
        let (h, w) = self.resolution;
        if self.num_videos == 0 || self.frames_per_video == 0 || h == 0 || w == 0 {
            return bad("synthetic dataset needs videos, frames and a resolution".into());
        }
        if !(wmin > 0.0 && hmin > 0.0 && wmin <= wmax && hmin <= hmax) {
            return bad(format!("target size range {:?} must be positive and ordered", self.target_size_range));
        }
        if wmax > w as f64 || hmax > h as f64 {
            return bad(format!("targets up to {wmax}x{hmax} do not fit a {w}x{h} frame"));
        }
        for (name, p) in [
            ("blur_probability", self.blur_probability),
            ("occlusion_probability", self.occlusion_probability),
            ("blink_probability", self.blink_probability),
            ("blink_strength", self.blink_strength),
            ("val_fraction", self.val_fraction),
            ("test_fraction", self.test_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} outside [0, 1]"));
            }
        }
        if self.val_fraction + self.test_fraction > 1.0 {
            return bad("val_fraction + test_fraction exceeds 1".into());
        }
        let (smin, smax) = self.target_speed_range;
        if !(smin >= 0.0 && smin <= smax) || self.ego_motion_amplitude < 0.0 {
            return bad("speeds must be non-negative and ordered".into());
        }
        let (tmin, tmax) = self.targets_per_video;
        let (gmin, gmax) = self.occlusion_gap;
        if tmin > tmax || gmin == 0 || gmin > gmax {
            return bad("targets_per_video and occlusion_gap ranges must be ordered and gaps positive".into());
        }
        if !(self.fps > 0.0) {
            return bad("fps must be positive".into());
        }
        Ok(())
    }

    fn split_of(&self, video: usize) -> Split {
        let n = self.num_videos as f64;
        let n_test = (self.test_fraction * n).round() as usize;
        let n_val = (self.val_fraction * n).round() as usize;
        let n_train = self.num_videos.saturating_sub(n_test + n_val);
        if video < n_train {
            Split::Train
        } else if video < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        }
    }
}

#[derive(Clone, Debug)]
struct Wave {
    kx: f64,
    ky: f64,
    phase: f64,
    amp: f64,
}

#[derive(Clone, Debug)]
struct Blob {
    w: f64,
    h: f64,
    color: [f64; 3],
}

#[derive(Clone, Debug)]
struct Axis {
    p0: f64,
    v: f64,
    amp: f64,
    omega: f64,
    phase: f64,
    lo: f64,
    hi: f64,
}

impl Axis {
    fn at(&self, t: f64) -> f64 {
        fold(self.p0 + self.v * t + self.amp * (self.omega * t + self.phase).sin(), self.lo, self.hi)
    }
}

/// Reflect `p` back into `[lo, hi]`.
fn fold(p: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    if span <= 0.0 {
        return lo;
    }
    let r = (p - lo).rem_euclid(2.0 * span);
    lo + if r > span { 2.0 * span - r } else { r }
}

#[derive(Clone, Debug)]
struct Target {
    blob: Blob,
    x: Axis,
    y: Axis,
    hidden: Vec<bool>,
    blink: Vec<bool>,
    blink_strength: f64,
}

/// Everything random about one video, drawn up front so rendering is pure.
#[derive(Clone, Debug)]
pub struct Scene {
    width: u32,
    height: u32,
    frames: usize,
    base: [f64; 3],
    waves: Vec<Wave>,
    drift: (f64, f64),
    sway: (f64, f64, f64),
    rotation_rate: f64,
    targets: Vec<Target>,
    distractors: Vec<(Blob, (f64, f64))>,
    blur: Vec<bool>,
}

fn sample_blob(cfg: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Blob {
    let ((wmin, hmin), (wmax, hmax)) = cfg.target_size_range;
    let gray = rng.random_range(0.05..0.3);
    let tint = [rng.random_range(-0.04..0.04), rng.random_range(-0.04..0.04), rng.random_range(-0.04..0.04)];
    Blob {
        w: rng.random_range(wmin..=wmax),
        h: rng.random_range(hmin..=hmax),
        color: [gray + tint[0], gray + tint[1], gray + tint[2]],
    }
}

impl Scene {
    pub fn sample(cfg: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Scene {
        let (height, width) = cfg.resolution;
        let (wf, hf) = (width as f64, height as f64);
        let n = cfg.frames_per_video;
        let sky = rng.random_range(0.55..0.8);
        let base = [sky - 0.08, sky - 0.02, sky + 0.06].map(|v: f64| v.clamp(0.0, 1.0));
        let waves = (0..5)
            .map(|_| {
                let freq = rng.random_range(0.01..0.08);
                let angle = rng.random_range(0.0..TAU);
                Wave {
                    kx: freq * angle.cos(),
                    ky: freq * angle.sin(),
                    phase: rng.random_range(0.0..TAU),
                    amp: rng.random_range(0.01..0.035),
                }
            })
            .collect();
        let heading = rng.random_range(0.0..TAU);
        let drift = (cfg.ego_motion_amplitude * heading.cos(), cfg.ego_motion_amplitude * heading.sin());
        let sway = (
            cfg.ego_motion_amplitude * rng.random_range(0.0..3.0),
            rng.random_range(0.05..0.2),
            rng.random_range(0.0..TAU),
        );
        let rotation_rate = rng.random_range(-1e-3..1e-3) * cfg.ego_motion_amplitude.min(1.0);

        let count = rng.random_range(cfg.targets_per_video.0..=cfg.targets_per_video.1);
        let targets = (0..count)
            .map(|_| {
                let blob = sample_blob(cfg, rng);
                let speed = rng.random_range(cfg.target_speed_range.0..=cfg.target_speed_range.1);
                let dir = rng.random_range(0.0..TAU);
                let axis = |dim: f64, half: f64, v: f64, rng: &mut ChaCha8Rng| Axis {
                    p0: rng.random_range(half..=dim - half),
                    v,
                    amp: rng.random_range(0.0..0.08) * dim,
                    omega: rng.random_range(0.03..0.15),
                    phase: rng.random_range(0.0..TAU),
                    lo: half,
                    hi: dim - half,
                };
                let x = axis(wf, blob.w / 2.0, speed * dir.cos(), rng);
                let y = axis(hf, blob.h / 2.0, speed * dir.sin(), rng);
                let mut hidden = vec![false; n];
                let mut t = 0;
                while t < n {
                    if rng.random_bool(cfg.occlusion_probability) {
                        let len = rng.random_range(cfg.occlusion_gap.0..=cfg.occlusion_gap.1);
                        hidden[t..(t + len).min(n)].fill(true);
                        t += len + 1;
                    } else {
                        t += 1;
                    }
                }
                let blink = (0..n).map(|_| rng.random_bool(cfg.blink_probability)).collect();
                Target { blob, x, y, hidden, blink, blink_strength: cfg.blink_strength }
            })
            .collect();
        let distractors = (0..cfg.distractors)
            .map(|_| {
                let blob = sample_blob(cfg, rng);
                let p = (
                    rng.random_range(blob.w..=wf - blob.w.min(wf / 2.0)),
                    rng.random_range(blob.h..=hf - blob.h.min(hf / 2.0)),
                );
                (blob, p)
            })
            .collect();
        let blur = (0..n).map(|_| rng.random_bool(cfg.blur_probability)).collect();
        Scene { width, height, frames: n, base, waves, drift, sway, rotation_rate, targets, distractors, blur }
    }

    /// Camera offset and rotation at time `t`.
    fn camera(&self, t: f64) -> (f64, f64, f64) {
        let (amp, omega, phase) = self.sway;
        let s = amp * (omega * t + phase).sin();
        (self.drift.0 * t + s, self.drift.1 * t + 0.5 * s, self.rotation_rate * t)
    }

    /// Screen point to world point.
    fn to_world(&self, cam: (f64, f64, f64), x: f64, y: f64) -> (f64, f64) {
        let (cx, cy) = (self.width as f64 / 2.0, self.height as f64 / 2.0);
        let (s, c) = cam.2.sin_cos();
        let (dx, dy) = (x - cx, y - cy);
        (cx + c * dx - s * dy + cam.0, cy + s * dx + c * dy + cam.1)
    }

    fn to_screen(&self, cam: (f64, f64, f64), wx: f64, wy: f64) -> (f64, f64) {
        let (cx, cy) = (self.width as f64 / 2.0, self.height as f64 / 2.0);
        let (s, c) = cam.2.sin_cos();
        let (dx, dy) = (wx - cam.0 - cx, wy - cam.1 - cy);
        (cx + c * dx + s * dy, cy - s * dx + c * dy)
    }

    fn background(&self, wx: f64, wy: f64) -> [f64; 3] {
        let mut v = 0.0;
        for w in &self.waves {
            v += w.amp * (TAU * (w.kx * wx + w.ky * wy) + w.phase).sin();
        }
        self.base.map(|b| b + v)
    }

    pub fn target_center(&self, target: usize, t: usize) -> (f64, f64) {
        let tg = &self.targets[target];
        (tg.x.at(t as f64), tg.y.at(t as f64))
    }

    pub fn annotations(&self, t: usize) -> Vec<GroundTruth> {
        self.targets
            .iter()
            .enumerate()
            .filter(|(_, tg)| !tg.hidden[t])
            .map(|(i, tg)| {
                let (cx, cy) = self.target_center(i, t);
                let bbox = BBox::from_center_form(cx, cy, tg.blob.w, tg.blob.h, t).expect("sizes are positive");
                GroundTruth { bbox, class_id: 0 }
            })
            .collect()
    }

    pub fn render(&self, t: usize) -> Frame {
        self.render_layers(t, true)
    }

    /// Render frame `t`, optionally without the annotated targets.
    pub fn render_layers(&self, t: usize, with_targets: bool) -> Frame {
        let (w, h) = (self.width as usize, self.height as usize);
        let tf = t as f64;
        let cam = self.camera(tf);
        let mut px = vec![[0.0f64; 3]; w * h];
        for y in 0..h {
            for x in 0..w {
                let (wx, wy) = self.to_world(cam, x as f64 + 0.5, y as f64 + 0.5);
                px[y * w + x] = self.background(wx, wy);
            }
        }
        let taps: &[f64] = if self.blur[t] { &BLUR_TAPS } else { &[0.0] };
        for (blob, (wx, wy)) in &self.distractors {
            let centers: Vec<_> = taps.iter().map(|&d| self.to_screen(self.camera(tf + d), *wx, *wy)).collect();
            self.composite(&mut px, blob, &centers, 1.0);
        }
        if with_targets {
            for tg in self.targets.iter().filter(|tg| !tg.hidden[t]) {
                let centers: Vec<_> = taps.iter().map(|&d| (tg.x.at(tf + d), tg.y.at(tf + d))).collect();
                let strength = if tg.blink[t] { tg.blink_strength } else { 1.0 };
                self.composite(&mut px, &tg.blob, &centers, strength);
            }
        }
        Frame::new(self.width, self.height, px.iter().flat_map(|p| p.map(|v| v.clamp(0.0, 1.0) as f32)).collect())
            .expect("buffer sized from the scene")
    }

    /// Alpha-blend an anti-aliased ellipse averaged over `centers`.
    fn composite(&self, px: &mut [[f64; 3]], blob: &Blob, centers: &[(f64, f64)], strength: f64) {
        let (w, h) = (self.width as i64, self.height as i64);
        let (ax, ay) = (blob.w / 2.0, blob.h / 2.0);
        let x0 = centers.iter().map(|c| c.0 - ax).fold(f64::INFINITY, f64::min).floor() as i64;
        let x1 = centers.iter().map(|c| c.0 + ax).fold(f64::NEG_INFINITY, f64::max).ceil() as i64;
        let y0 = centers.iter().map(|c| c.1 - ay).fold(f64::INFINITY, f64::min).floor() as i64;
        let y1 = centers.iter().map(|c| c.1 + ay).fold(f64::NEG_INFINITY, f64::max).ceil() as i64;
        let step = 1.0 / SUPERSAMPLE as f64;
        let per_pixel = (SUPERSAMPLE * SUPERSAMPLE * centers.len()) as f64;
        for y in y0.max(0)..y1.min(h) {
            for x in x0.max(0)..x1.min(w) {
                let mut hits = 0usize;
                for &(cx, cy) in centers {
                    for sy in 0..SUPERSAMPLE {
                        let dy = (y as f64 + (sy as f64 + 0.5) * step - cy) / ay;
                        for sx in 0..SUPERSAMPLE {
                            let dx = (x as f64 + (sx as f64 + 0.5) * step - cx) / ax;
                            if dx * dx + dy * dy <= 1.0 {
                                hits += 1;
                            }
                        }
                    }
                }
                if hits > 0 {
                    let a = strength * hits as f64 / per_pixel;
                    let p = &mut px[(y * w + x) as usize];
                    for (v, c) in p.iter_mut().zip(blob.color) {
                        *v = *v * (1.0 - a) + c * a;
                    }
                }
            }
        }
    }
}

fn video_rng(cfg: &SyntheticConfig, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    rng
}

pub fn video_id(index: usize) -> String {
    format!("vid_{index:04}")
}

pub fn scene(cfg: &SyntheticConfig, index: usize) -> Scene {
    Scene::sample(cfg, &mut video_rng(cfg, index))
}

/// Render video `index` in memory.
pub fn render_video(cfg: &SyntheticConfig, index: usize) -> Result<Video> {
    cfg.validate()?;
    let sc = scene(cfg, index);
    let (height, width) = cfg.resolution;
    let meta = VideoMeta { video_id: video_id(index), frame_count: cfg.frames_per_video, width, height, fps: cfg.fps };
    let frames = (0..sc.frames).map(|t| sc.render(t)).collect();
    let annotations = Annotations { frames: (0..sc.frames).map(|t| sc.annotations(t)).collect(), ..Default::default() };
    Ok(Video { meta, frames, annotations })
}

/// Render the split `split` of the dataset in memory.
pub fn render_split(cfg: &SyntheticConfig, split: Split) -> Result<Vec<Video>> {
    (0..cfg.num_videos).filter(|&i| cfg.split_of(i) == split).map(|i| render_video(cfg, i)).collect()
}

/// Write the dataset under `out_dir`: `videos/<id>/frame_*.png`,
/// `annotations/<id>.csv` and `index.json`.
pub fn generate_synthetic(cfg: &SyntheticConfig, out_dir: &Path) -> Result<DatasetIndex> {
    cfg.validate()?;
    let mkdir = |p: &Path| std::fs::create_dir_all(p).map_err(|e| Error::io(format!("create {}", p.display()), e));
    mkdir(&out_dir.join("annotations"))?;
    let mut entries = Vec::with_capacity(cfg.num_videos);
    for i in 0..cfg.num_videos {
        let video = render_video(cfg, i)?;
        let id = video.meta.video_id.clone();
        let rel_dir = Path::new("videos").join(&id);
        mkdir(&out_dir.join(&rel_dir))?;
        for (t, f) in video.frames.iter().enumerate() {
            f.save_png(&out_dir.join(&rel_dir).join(frame_file_name(t)))?;
        }
        let rel_ann = Path::new("annotations").join(format!("{id}.csv"));
        write_annotations(&out_dir.join(&rel_ann), &video.annotations.frames)?;
        entries.push(IndexEntry {
            video_id: id,
            path: rel_dir,
            annotation_path: rel_ann,
            meta: video.meta,
            split: cfg.split_of(i),
        });
    }
    let index = DatasetIndex { root: out_dir.to_path_buf(), entries };
    index.save()?;
    Ok(index)
}
