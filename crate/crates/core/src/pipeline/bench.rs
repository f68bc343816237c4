use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::train::frames_tensor;
use crate::dataio::Frame;
use crate::head::nms;
use crate::model::Detector;
use crate::nn::ParamSet;
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FpsReport {
    pub resolution: usize,
    pub frames: usize,
    /// Frames per second of each trial.
    pub trials: Vec<f64>,
    pub median: f64,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// End-to-end throughput (forward, decode, NMS) on synthetic frames at
/// `resolution`. One warmup window precedes the timed trials.
pub fn benchmark_fps(
    detector: &Detector,
    params: &ParamSet<f32>,
    resolution: usize,
    num_frames: usize,
    trials: usize,
) -> Result<FpsReport> {
    crate::backbone::check_divisible(resolution, resolution, crate::backbone::MAX_STRIDE)?;
    assert!(num_frames > 0 && trials > 0, "need at least one frame and one trial");
    let tau = detector.tau();
    let r = resolution as u32;
    let frames: Vec<Frame> = (0..tau)
        .map(|t| Frame::from_pixel_fn(r, r, |x, y| [((x + y + t as u32) % 17) as f32 / 17.0, 0.5, 0.25]))
        .collect();
    let input = frames_tensor(&frames);
    let run_window = || -> Result<usize> {
        let preds = detector.predict(params, input.clone())?;
        let mut kept = 0;
        for (i, scales) in preds.iter().enumerate() {
            let dets: Vec<_> = scales.iter().flat_map(|p| p.decode(i, r, r, 0.001)).collect();
            kept += nms(&dets, 0.001, 0.6).len();
        }
        Ok(kept)
    };
    run_window()?;
    let windows = num_frames.div_ceil(tau);
    let mut fps = Vec::with_capacity(trials);
    for _ in 0..trials {
        let start = Instant::now();
        for _ in 0..windows {
            std::hint::black_box(run_window()?);
        }
        fps.push((windows * tau) as f64 / start.elapsed().as_secs_f64());
    }
    Ok(FpsReport { resolution, frames: windows * tau, median: median(&fps), trials: fps })
}
