use crate::{Error, Result};

/// False positives per processed frame.
pub fn fppi(false_positives: usize, frames: usize) -> Result<f64> {
    if frames == 0 {
        return Err(Error::NoFrames);
    }
    Ok(false_positives as f64 / frames as f64)
}

/// Frames a continuous detection must span: `window_seconds * fps`, rounded up.
pub fn encounter_threshold_frames(fps: f64, window_seconds: f64) -> usize {
    // tolerate representation error in products like 3 * 29.97
    (window_seconds * fps - 1e-9).ceil().max(0.0) as usize
}

/// Whether one flight is detected continuously for `window_seconds`.
///
/// `hits` lists the evaluated frames of the flight as `(frame_index, hit)`
/// in increasing frame order. Entries are consecutive when their indices
/// differ by exactly `eval_stride`. A run of consecutive hits starting at
/// frame `a` and ending at frame `b` spans `b - a + 1` frames.
pub fn flight_detected(hits: &[(usize, bool)], fps: f64, window_seconds: f64, eval_stride: usize) -> bool {
    let need = encounter_threshold_frames(fps, window_seconds);
    let mut start: Option<usize> = None;
    let mut prev: Option<usize> = None;
    for &(f, hit) in hits {
        if !hit {
            start = None;
        } else {
            if start.is_none() || prev.is_none_or(|p| f != p + eval_stride) {
                start = Some(f);
            }
            if f - start.expect("run started") + 1 >= need {
                return true;
            }
        }
        prev = Some(f);
    }
    false
}

/// Fraction of flights detected continuously for `window_seconds`; 0 when
/// there are no flights.
pub fn encounter_rate(flights: &[Vec<(usize, bool)>], fps: f64, window_seconds: f64, eval_stride: usize) -> f64 {
    assert!(fps > 0.0, "frame rate must be positive");
    if flights.is_empty() {
        return 0.0;
    }
    let hit = flights.iter().filter(|f| flight_detected(f, fps, window_seconds, eval_stride)).count();
    hit as f64 / flights.len() as f64
}
