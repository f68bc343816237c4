use rand::Rng;

use super::{Annotations, Frame};
use crate::geometry::{GroundTruth, VideoMeta};
use crate::{Error, Result};

/// A fully loaded video.
#[derive(Clone, Debug)]
pub struct Video {
    pub meta: VideoMeta,
    pub frames: Vec<Frame>,
    pub annotations: Annotations,
}

/// `tau` frames fed to the model together.
#[derive(Clone, Debug, PartialEq)]
pub struct Clip {
    pub frames: Vec<Frame>,
    pub frame_indices: Vec<usize>,
    pub annotations: Vec<Vec<GroundTruth>>,
    pub meta: VideoMeta,
}

impl Clip {
    pub fn tau(&self) -> usize {
        self.frames.len()
    }

    pub fn from_indices(video: &Video, indices: &[usize]) -> Clip {
        Clip {
            frames: indices.iter().map(|&i| video.frames[i].clone()).collect(),
            frame_indices: indices.to_vec(),
            annotations: indices.iter().map(|&i| video.annotations.frames[i].clone()).collect(),
            meta: video.meta.clone(),
        }
    }

    /// Resize every frame and scale boxes to match.
    pub fn resized(&self, width: u32, height: u32) -> Clip {
        let (sx, sy) = (width as f64 / self.meta.width as f64, height as f64 / self.meta.height as f64);
        Clip {
            frames: self.frames.iter().map(|f| f.resize(width, height)).collect(),
            frame_indices: self.frame_indices.clone(),
            annotations: self
                .annotations
                .iter()
                .map(|g| g.iter().map(|g| GroundTruth { bbox: g.bbox.scaled(sx, sy), ..*g }).collect())
                .collect(),
            meta: VideoMeta { width, height, ..self.meta.clone() },
        }
    }
}

/// `tau` consecutive indices starting at `start`, replicating the last frame
/// past the end of the video.
pub fn window_indices(start: usize, tau: usize, frame_count: usize) -> Vec<usize> {
    (start..start + tau).map(|i| i.min(frame_count - 1)).collect()
}

/// Random training clip that contains at least one annotated frame, with the
/// start position uniform over all such positions.
pub fn sample_train_clip(video: &Video, tau: usize, rng: &mut impl Rng) -> Result<Clip> {
    assert!(tau >= 1, "tau must be positive");
    let n = video.meta.frame_count.min(video.frames.len());
    let annotated: Vec<usize> = video.annotations.annotated_frames().filter(|&i| i < n).collect();
    if annotated.is_empty() {
        return Err(Error::NoAnnotatedFrames(video.meta.video_id.clone()));
    }
    let last_start = n.saturating_sub(tau);
    // starts s with some annotated index in [s, s + tau)
    let valid: Vec<usize> = (0..=last_start)
        .filter(|&s| {
            let p = annotated.partition_point(|&a| a < s);
            p < annotated.len() && annotated[p] < s + tau
        })
        .collect();
    let start = valid[rng.random_range(0..valid.len())];
    Ok(Clip::from_indices(video, &window_indices(start, tau, n)))
}

/// Non-overlapping windows covering `0..frame_count`; the last one is padded
/// by repeating the final frame.
pub fn sliding_windows(frame_count: usize, tau: usize) -> Vec<Vec<usize>> {
    assert!(tau >= 1, "tau must be positive");
    (0..frame_count).step_by(tau).map(|s| window_indices(s, tau, frame_count)).collect()
}
