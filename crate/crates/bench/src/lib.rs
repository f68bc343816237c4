//! Shared inputs for the criterion benches.

use aerodet::geometry::{BBox, Detection, GroundTruth};
use aerodet::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` random detections on one frame of a `side` x `side` image.
pub fn random_detections(n: usize, side: f64, seed: u64) -> Vec<Detection> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let (x, y) = (rng.random_range(0.0..side - 20.0), rng.random_range(0.0..side - 20.0));
            let (w, h) = (rng.random_range(4.0..20.0), rng.random_range(4.0..20.0));
            Detection {
                bbox: BBox { x1: x, y1: y, x2: x + w, y2: y + h, frame_index: rng.random_range(0..4) },
                confidence: rng.random_range(0.0..1.0),
                class_id: 0,
            }
        })
        .collect()
}

pub fn random_ground_truth(n: usize, side: f64, seed: u64) -> Vec<GroundTruth> {
    random_detections(n, side, seed).into_iter().map(|d| GroundTruth { bbox: d.bbox, class_id: 0 }).collect()
}

/// Deterministic `[frames, 3, side, side]` input.
pub fn frames(frames: usize, side: usize) -> Tensor<f32> {
    let n = frames * 3 * side * side;
    Tensor::from_vec(&[frames, 3, side, side], (0..n).map(|i| ((i * 7919) % 251) as f32 / 251.0 - 0.5).collect())
}
